from __future__ import annotations

import json
import subprocess
import sys

import numpy as np
import pytest

from stefan_cascade.cli import UsageError, load_scenario, main, parse_scenario

WELL = {"kind": "piecewise1d", "breaks": [0.0, 0.3], "values": [0.0, -2.0, 0.0]}
DISK = {
    "gamma": 1.0,
    "u": -1.0,
    "initial": {"kind": "ball", "radius": 1.0},
    "v0": 1.0,
    "grid": {"box": [-2.3, 2.3, -2.3, 2.3], "h": 0.02},
}


def _write(tmp_path, doc, name="s.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc) if not isinstance(doc, str) else doc)
    return str(path)


def _planar(u, v0=1.0, **extra):
    return {"gamma": 1.0, "dimension": 1, "u": u, "initial": {"kind": "half_line", "end": 0.0}, "v0": v0, **extra}


def test_round_trip_is_byte_stable():
    sc = parse_scenario(_planar(WELL, tolerances={"tv": 0.1}, eps_ladder=[1e-2, 1e-3]))
    text = sc.dumps()
    again = parse_scenario(json.loads(text))
    assert again.dumps() == text
    assert again.digest == sc.digest
    assert parse_scenario(json.loads(parse_scenario(DISK).dumps())).dumps() == parse_scenario(DISK).dumps()


@pytest.mark.parametrize(
    "doc",
    [
        {**DISK, "colour": 1},
        {**DISK, "initial": {"kind": "ball", "radius": 1.0, "speed": 2}},
        {**DISK, "grid": {"box": [0, 1, 0, 1], "dx": 0.1}},
        {**DISK, "tolerances": {"fuzz": 0.1}},
        {**DISK, "u": {"kind": "constant", "value": 1.0, "extra": 0}},
        {k: v for k, v in DISK.items() if k != "v0"},
        {**DISK, "eps_ladder": [1e-3, 1e-2]},
        {**DISK, "eps_ladder": [0.0]},
        {**DISK, "gamma": "one"},
        {**DISK, "seed": 1.5},
        {**DISK, "grid": {"box": [1, 0, 0, 1]}},
        [],
    ],
)
def test_bad_documents_are_rejected(doc):
    with pytest.raises(UsageError):
        parse_scenario(doc)


def test_usage_errors_exit_2(tmp_path, capsys, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(["solve", "--scenario", _write(tmp_path, "")]) == 2
    assert main(["solve", "--scenario", str(tmp_path / "missing.json")]) == 2
    assert main(["solve", "--scenario", _write(tmp_path, {**DISK, "colour": 1})]) == 2
    assert main(["solve", "--scenario", _write(tmp_path, DISK), "--solver", "eikonal"]) == 2
    assert main(["solve", "--scenario", _write(tmp_path, DISK), "--grid-h", "-1"]) == 2
    assert main(["jump-size", "--scenario", _write(tmp_path, DISK)]) == 2
    assert main(["bogus"]) == 2
    assert "error" in capsys.readouterr().err
    # rejected commands write nothing, not even the default output directory
    assert not (tmp_path / "out").exists()


@pytest.mark.parametrize("u, want", [(0.0, 0.0), (WELL, 0.6), (-1.0, "inf")])
def test_jump_size(tmp_path, capsys, u, want):
    assert main(["jump-size", "--scenario", _write(tmp_path, _planar(u))]) == 0
    got = json.loads(capsys.readouterr().out)["jump"]
    if want == "inf":
        assert got == "inf"
    else:
        assert got == pytest.approx(want, abs=1e-8)


def test_solve_closed_form(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["solve", "--scenario", _write(tmp_path, DISK), "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["r_star"] == pytest.approx(2.0, abs=1e-9)
    for name in ("w.csv", "w.pgm", "ledger.json", "summary.json", "report.json"):
        assert (out / name).exists()
    assert "PASS perimeter_bound" in capsys.readouterr().out


def test_solve_planar_ode(tmp_path):
    out = tmp_path / "out"
    doc = _planar(0.0, grid={"box": [-0.02, 1.1], "h": 0.01})
    assert main(["solve", "--scenario", _write(tmp_path, doc), "--solver", "ode1d", "--out", str(out)]) == 0
    rows = (out / "w.csv").read_text().splitlines()
    assert rows[0] == "coordinate,w,V"
    assert json.loads((out / "summary.json").read_text())["x_star"] == pytest.approx(1.0, abs=1e-6)


def test_solve_fronttrack_on_a_lattice_mask(tmp_path):
    h = 0.02
    n = int(2.4 / h)
    c = (np.arange(n) + 0.5) * h - 1.2
    X, Y = np.meshgrid(c, c, indexing="ij")
    mask = (np.hypot(X, Y) < 0.4 * (1 + 0.3 * np.cos(3 * np.arctan2(Y, X)))).astype(int).tolist()
    doc = {
        "gamma": 1.0,
        "u": -0.5,
        "initial": {"kind": "lattice_mask", "mask": mask, "origin": [-1.2, -1.2], "h": h},
        "v0": 0.5,
        "eps_ladder": [1e-2],
        "grid": {"box": [-1.2, 1.2, -1.2, 1.2], "h": h},
    }
    out = tmp_path / "ft"
    assert main(["solve", "--scenario", _write(tmp_path, doc), "--solver", "fronttrack", "--out", str(out)]) == 0
    for name in ("w.csv", "w.pgm", "ledger.json", "summary.json", "report.json"):
        assert (out / name).exists()
    assert json.loads((out / "summary.json").read_text())["backend"] in ("compiled", "python")
    assert json.loads((out / "report.json").read_text())["passed"]


def test_solve_eikonal_with_a_cost_field(tmp_path):
    out = tmp_path / "ek"
    doc = {**DISK, "cost": {"kind": "constant", "value": 1.0}}
    assert main(["solve", "--scenario", _write(tmp_path, doc), "--solver", "eikonal", "--out", str(out)]) == 0
    assert json.loads((out / "summary.json").read_text())["max_w"] > 1.0


def test_verify_exit_codes(tmp_path):
    # the 2% oracle tolerance needs a fine enough grid: at h = 0.02 fast marching is 4% off
    doc = {**DISK, "cap": 0.4, "grid": {"box": [-1.6, 1.6, -1.6, 1.6], "h": 0.01}}
    report = tmp_path / "r.json"
    assert main(["verify", "--scenario", _write(tmp_path, doc), "--out", str(report)]) == 0
    first = report.read_bytes()
    assert json.loads(first)["passed"]
    assert main(["verify", "--scenario", _write(tmp_path, doc), "--out", str(report)]) == 0
    assert report.read_bytes() == first
    strict = {**doc, "tolerances": {"perimeter": 0.0, "perimeter_cells": 0.0, "oracle": 0.0}}
    assert main(["verify", "--scenario", _write(tmp_path, strict), "--out", str(tmp_path / "strict")]) == 1
    assert (tmp_path / "strict" / "report.json").exists()


def test_sweep_smoke(tmp_path, capsys):
    # without initial speed the limit is the physical jump; with V0 = 1 it is where int (1+u) = 1
    for v0, want in ((0.0, 0.6), (1.0, 1.6)):
        doc = _planar(WELL, v0, eps_ladder=[1e-3, 1e-4, 1e-5])
        assert main(["sweep", "--scenario", _write(tmp_path, doc), "--out", str(tmp_path / "sw")]) == 0
        got = json.loads(capsys.readouterr().out)
        assert got["converged"] and got["extrapolated"] == pytest.approx(want, abs=1e-3)
    assert (tmp_path / "sw" / "sweep.json").exists()


def test_seed_override_changes_the_report(tmp_path):
    path = _write(tmp_path, DISK)
    assert load_scenario(path).seed == 0
    assert main(["solve", "--scenario", path, "--seed", "7", "--out", str(tmp_path / "o")]) == 0
    assert json.loads((tmp_path / "o" / "report.json").read_text())["seed"] == 7


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "stefan_cascade", "jump-size", "--scenario", _write(tmp_path, _planar(WELL))],
        capture_output=True,
        text=True,
        check=False,
    )
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["jump"] == pytest.approx(0.6, abs=1e-8)
