"""Command-line entry point: scenario files in, solutions and reports out.

Scenario files are JSON documents::

    {"gamma": 1.0, "dimension": 2,
     "u": {"kind": "constant", "value": -1.0},
     "initial": {"kind": "ball", "center": [0.0, 0.0], "radius": 1.0},
     "v0": 1.0, "cap": null, "eps_ladder": [0.001],
     "grid": {"box": [-2.2, 2.2, -2.2, 2.2], "h": 0.005}, "seed": 0}

Unknown keys are rejected at every level. The canonical form has sorted keys, every optional
key filled in and shortest round-trip floats, so parsing and re-serializing is byte-stable.

Exit codes: 0 success, 1 a verification check failed, 2 usage or parse error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import kernels
from .cascade1d import extrapolate_limit, integrate_fast_ode, solve_arrival_ode
from .closedform import OneInterfaceSolution, export_profile, jump_size_1d
from .domain import INF, Grid2, RegionSpec, ScalarField2, ScenarioSpec, field_from_json, rasterize
from .eikonal import CostField, fast_march
from .equilibrium import arrival_from_closed_form
from .fronttrack import ArrivalField, continuation_run, run
from .io import dumps, write_json, write_pgm
from .verify import (
    DEFAULT_TOLERANCES,
    VerificationReport,
    check_perimeter_bound,
    check_tv_bound,
    closed_form,
    default_grid,
    digest,
    exact_speed,
    oracle_equivalence,
    run_checks,
    symmetric_family,
)

__all__ = ["ScenarioFile", "UsageError", "parse_scenario", "load_scenario", "main"]

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
SOLVERS = ("closedform", "ode1d", "fronttrack", "eikonal")
DEFAULT_H = 5e-3
DEFAULT_EPS = 1e-3

_TOP_KEYS = {"gamma", "dimension", "u", "initial", "v0", "cap", "eps_ladder", "grid", "seed", "tolerances", "cost"}
_REQUIRED = {"gamma", "u", "initial", "v0"}
_FIELD_KEYS = {
    "constant": {"value"},
    "piecewise1d": {"breaks", "values"},
    "radial_piecewise": {"breaks", "values", "center"},
    "lattice": {"grid", "values"},
}
_REGION_KEYS = {
    "half_line": {"end"},
    "interval_complement": {"left", "right"},
    "ball": {"center", "radius"},
    "ball_complement": {"center", "radius"},
    "balls": {"centers", "radii"},
    "annulus_complement": {"center", "r_in", "r_out"},
    "lattice_mask": {"mask", "origin", "h"},
}
_GRID_KEYS = {"box", "h", "periodic_y"}


class UsageError(ValueError):
    """Bad scenario file, bad flags, or a solver that does not apply."""


@dataclass(frozen=True, eq=False)
class ScenarioFile:
    """A parsed scenario: the problem plus grid, continuation ladder, seed and tolerances."""

    spec: ScenarioSpec
    eps_ladder: tuple[float, ...] = (DEFAULT_EPS,)
    box: tuple[float, ...] | None = None
    h: float | None = None
    periodic_y: bool = False
    seed: int = 0
    tolerances: dict[str, float] = field(default_factory=dict)
    cost: Any = None

    @property
    def eps(self) -> float:
        """Smallest rung of the ladder, used for single runs."""
        return self.eps_ladder[-1]

    def grid(self, h: float | None = None) -> Grid2 | None:
        """Grid from the file, with ``h`` overriding the spacing; ``None`` when no box is given."""
        step = h if h is not None else self.h
        if self.box is None:
            return None
        step = DEFAULT_H if step is None else step
        if len(self.box) == 2:
            x0, x1 = self.box
            return Grid2((x0, 0.0), step, int(math.ceil((x1 - x0) / step)), 8, periodic_y=True)
        x0, x1, y0, y1 = self.box
        nx = int(math.ceil((x1 - x0) / step))
        ny = int(math.ceil((y1 - y0) / step))
        return Grid2((x0, y0), step, nx, ny, periodic_y=self.periodic_y)

    def to_json(self) -> dict[str, Any]:
        spec = self.spec
        grid: dict[str, Any] | None = None
        if self.box is not None or self.h is not None:
            grid = {"box": list(self.box) if self.box is not None else None, "h": self.h, "periodic_y": self.periodic_y}
        return {
            "gamma": spec.gamma,
            "dimension": spec.dimension,
            "u": spec.u.to_json(),
            "initial": spec.initial_region.to_json(),
            "v0": spec.v0.to_json(),
            "cap": None if math.isinf(spec.cap) else spec.cap,
            "eps_ladder": list(self.eps_ladder),
            "grid": grid,
            "seed": self.seed,
            "tolerances": dict(sorted(self.tolerances.items())),
            "cost": self.cost,
        }

    def dumps(self) -> str:
        return dumps(self.to_json())

    @property
    def digest(self) -> str:
        return digest(self.to_json())


def _need_keys(doc: dict[str, Any], allowed: set[str], where: str, required: set[str] | None = None) -> None:
    extra = set(doc) - allowed
    if extra:
        raise UsageError(f"unknown key(s) in {where}: {', '.join(sorted(extra))}")
    missing = (required or set()) - set(doc)
    if missing:
        raise UsageError(f"missing key(s) in {where}: {', '.join(sorted(missing))}")


def _number(x: Any, where: str) -> float:
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise UsageError(f"{where} must be a number")
    return float(x)


def _field(doc: Any, where: str) -> Any:
    if isinstance(doc, (int, float)) and not isinstance(doc, bool):
        return field_from_json(float(doc))
    if not isinstance(doc, dict) or "kind" not in doc:
        raise UsageError(f"{where} must be a number or an object with a 'kind'")
    kind = doc["kind"]
    if kind not in _FIELD_KEYS:
        raise UsageError(f"unknown {where} kind {kind!r}")
    _need_keys(doc, _FIELD_KEYS[kind] | {"kind"}, where, _FIELD_KEYS[kind] - {"center"})
    try:
        return field_from_json(doc)
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"bad {where}: {exc}") from exc


def _region(doc: Any) -> RegionSpec:
    if not isinstance(doc, dict) or "kind" not in doc:
        raise UsageError("initial must be an object with a 'kind'")
    kind = doc["kind"]
    if kind not in _REGION_KEYS:
        raise UsageError(f"unknown initial region kind {kind!r}")
    optional = {"center"} if kind in ("ball", "ball_complement", "annulus_complement") else set()
    _need_keys(doc, _REGION_KEYS[kind] | {"kind"}, "initial", _REGION_KEYS[kind] - optional)
    doc = dict(doc)
    if kind in ("ball", "ball_complement", "annulus_complement"):
        doc["center"] = [float(c) for c in doc.get("center", [0.0, 0.0])]
    for key in ("end", "left", "right", "radius", "r_in", "r_out", "h"):
        if key in doc:
            doc[key] = _number(doc[key], f"initial.{key}")
    try:
        return RegionSpec.from_json(doc)
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"bad initial region: {exc}") from exc


def parse_scenario(doc: Any) -> ScenarioFile:
    """Validate a decoded scenario document.

    Raises:
        UsageError: on unknown or missing keys, wrong types or an invalid problem.
    """
    if not isinstance(doc, dict):
        raise UsageError("scenario must be a JSON object")
    _need_keys(doc, _TOP_KEYS, "scenario", _REQUIRED)
    region = _region(doc["initial"])
    u = _field(doc["u"], "u")
    v0 = _field(doc["v0"], "v0")
    gamma = _number(doc["gamma"], "gamma")
    dim = doc.get("dimension")
    if dim is None:
        dim = 1 if region.planar else 2
    if isinstance(dim, bool) or not isinstance(dim, int):
        raise UsageError("dimension must be an integer")
    cap = doc.get("cap")
    cap = INF if cap is None else _number(cap, "cap")
    try:
        spec = ScenarioSpec(gamma, u, region, v0, cap=cap, dimension=dim)
    except ValueError as exc:
        raise UsageError(f"invalid scenario: {exc}") from exc
    ladder_doc = doc.get("eps_ladder", [DEFAULT_EPS])
    if not isinstance(ladder_doc, list) or not ladder_doc:
        raise UsageError("eps_ladder must be a nonempty list")
    ladder = tuple(_number(e, "eps_ladder entry") for e in ladder_doc)
    if any(not e > 0 for e in ladder):
        raise UsageError("eps_ladder entries must be positive")
    if any(b >= a for a, b in zip(ladder, ladder[1:])):
        raise UsageError("eps_ladder must be strictly decreasing")
    box = h = None
    periodic = False
    grid_doc = doc.get("grid")
    if grid_doc is not None:
        if not isinstance(grid_doc, dict):
            raise UsageError("grid must be an object")
        _need_keys(grid_doc, _GRID_KEYS, "grid")
        if grid_doc.get("box") is not None:
            box = tuple(_number(b, "grid.box entry") for b in grid_doc["box"])
            if len(box) not in (2, 4) or box[1] <= box[0] or (len(box) == 4 and box[3] <= box[2]):
                raise UsageError("grid.box must be [x0, x1] or [x0, x1, y0, y1] with increasing bounds")
        if grid_doc.get("h") is not None:
            h = _number(grid_doc["h"], "grid.h")
            if not h > 0:
                raise UsageError("grid.h must be positive")
        periodic = bool(grid_doc.get("periodic_y", False))
    seed = doc.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise UsageError("seed must be an integer")
    tol_doc = doc.get("tolerances") or {}
    if not isinstance(tol_doc, dict):
        raise UsageError("tolerances must be an object")
    _need_keys(tol_doc, set(DEFAULT_TOLERANCES), "tolerances")
    tolerances = {k: _number(v, f"tolerances.{k}") for k, v in tol_doc.items()}
    cost = doc.get("cost")
    if cost is not None and cost != "closed_form":
        _field(cost, "cost")
    return ScenarioFile(spec, ladder, box, h, periodic, seed, tolerances, cost)


def load_scenario(path: str | Path) -> ScenarioFile:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read scenario: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"scenario is not valid JSON: {exc}") from exc
    return parse_scenario(doc)


# --------------------------------------------------------------------------- commands


def _grid_for(sc: ScenarioFile, h: float | None) -> Grid2:
    grid = sc.grid(h)
    if grid is not None:
        return grid
    if symmetric_family(sc.spec) is None:
        raise UsageError("this geometry needs a grid box in the scenario")
    step = h if h is not None else (sc.h if sc.h is not None else DEFAULT_H)
    try:
        return default_grid(sc.spec, step)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _out_dir(out: str | None) -> Path:
    # created by the first write, so a rejected command leaves nothing behind
    return Path(out if out is not None else "out")


def _echo(obj: Any) -> None:
    sys.stdout.write(json.dumps(json.loads(dumps(obj)), sort_keys=True) + "\n")


def cmd_jump_size(sc: ScenarioFile, args: argparse.Namespace) -> int:
    spec = sc.spec
    if spec.dimension != 1 or spec.initial_region.kind != "half_line":
        raise UsageError("jump-size needs a 1D scenario with a half_line initial region")
    res = jump_size_1d(spec.u, float(spec.initial_region.params["end"]))
    _echo({"jump": res.value})
    return EXIT_OK


def _report(sc: ScenarioFile, checks: list[Any], grid: Grid2 | None) -> VerificationReport:
    return VerificationReport(checks, sc.digest, grid.to_json() if grid is not None else None, sc.seed)


def _write_field(out: Path, arrival: ArrivalField) -> None:
    arrival.to_csv(out / "w.csv")
    arrival.to_pgm(out / "w.pgm")


def _solve_exact(sc: ScenarioFile, solver: str, args: argparse.Namespace, out: Path) -> VerificationReport:
    spec = sc.spec
    fam = symmetric_family(spec)
    if solver == "ode1d":
        if fam != "one_interface":
            raise UsageError("ode1d solves a single planar interface (half_line region)")
        v0 = float(spec.boundary_v0(np.float64(spec.initial_region.params["end"])))
        if not v0 > 0:
            raise UsageError("ode1d needs a positive initial speed")
        sol: Any = solve_arrival_ode(spec.u, v0, float(spec.initial_region.params["end"]))
    else:
        if fam is None:
            raise UsageError("closedform needs one of the symmetric geometries")
        sol = closed_form(spec)
    grid = _grid_for(sc, args.grid_h)
    cap = spec.cap
    arrival = arrival_from_closed_form(sol, grid, cap, tuple(spec.initial_region.params.get("center", (0.0, 0.0))))
    if math.isfinite(cap):
        arrival = ArrivalField(ScalarField2(grid, np.where(arrival.values <= cap, arrival.values, INF)), cap)
    write_pgm(out / "w.pgm", np.minimum(arrival.values, cap), cap if math.isfinite(cap) else None)
    if isinstance(sol, OneInterfaceSolution):
        x = grid.x_centers()
        export_profile(out / "w.csv", x, sol.w(x), sol.v(x))
    else:
        arrival.to_csv(out / "w.csv")
    summary = sol.summary() if not isinstance(sol, OneInterfaceSolution) or solver == "closedform" else {
        "kind": "one_interface_ode", "x_star": sol.x_star if math.isfinite(sol.x_star) else "inf"}
    write_json(out / "summary.json", summary)
    write_json(out / "ledger.json", {"solver": solver, "locked_energy": summary.get("locked_energy")})
    checks = [
        check_perimeter_bound(arrival, spec, 0.0, sc.tolerances),
        check_tv_bound(arrival, spec, 0.0, tolerances=sc.tolerances),
    ]
    return _report(sc, checks, grid)


def _solve_fronttrack(sc: ScenarioFile, args: argparse.Namespace, out: Path) -> VerificationReport:
    grid = _grid_for(sc, args.grid_h)
    spec = sc.spec.with_(dimension=2)
    res = run(spec, grid, sc.eps)
    _write_field(out, res.arrival)
    write_json(out / "ledger.json", res.ledger.to_json())
    write_json(
        out / "summary.json",
        {
            "solver": "fronttrack",
            "eps": sc.eps,
            "t_end": res.front.t,
            "steps": res.front.steps,
            "B0": res.ledger.B0,
            "final_E": res.ledger.final_E,
            "first_topology_time": res.ledger.first_topology_time,
            "backend": kernels.BACKEND,
        },
    )
    return _report(sc, run_checks(res, spec, sc.eps, sc.tolerances), grid)


def _solve_eikonal(sc: ScenarioFile, args: argparse.Namespace, out: Path) -> VerificationReport:
    if sc.cost is None:
        raise UsageError("eikonal needs a cost source: set \"cost\" to \"closed_form\" or a field")
    grid = _grid_for(sc, args.grid_h)
    spec = sc.spec
    if sc.cost == "closed_form":
        if symmetric_family(spec) is None:
            raise UsageError("a closed-form cost needs one of the symmetric geometries")
        V = exact_speed(closed_form(spec), spec, grid)
        L = np.where(V > 0, 1.0 / np.maximum(V, 1e-300), -1.0 / spec.gamma)
    else:
        X, Y = grid.centers()
        L = np.asarray(field_from_json(sc.cost)(X, Y), dtype=float) * np.ones(grid.shape)
    try:
        cost = CostField(ScalarField2(grid, L))
    except ValueError as exc:
        raise UsageError(f"bad cost: {exc}") from exc
    w = fast_march(rasterize(spec.initial_region, grid), cost, subcell=True)
    cap = spec.cap
    vals = np.where(w.values <= cap, w.values, INF) if math.isfinite(cap) else w.values
    arrival = ArrivalField(ScalarField2(grid, vals), cap)
    _write_field(out, arrival)
    fin = np.isfinite(vals)
    write_json(out / "ledger.json", {"solver": "eikonal", "reached_cells": int(fin.sum())})
    write_json(out / "summary.json", {"solver": "eikonal", "max_w": float(vals[fin].max()) if fin.any() else 0.0})
    checks = [
        check_perimeter_bound(arrival, spec, sc.eps, sc.tolerances),
        check_tv_bound(arrival, spec, sc.eps, tolerances=sc.tolerances),
    ]
    return _report(sc, checks, grid)


def cmd_solve(sc: ScenarioFile, args: argparse.Namespace) -> int:
    solver = args.solver or ("closedform" if symmetric_family(sc.spec) is not None else "fronttrack")
    if solver not in SOLVERS:
        raise UsageError(f"unknown solver {solver!r}; choose from {', '.join(SOLVERS)}")
    out = _out_dir(args.out)
    if solver in ("closedform", "ode1d"):
        report = _solve_exact(sc, solver, args, out)
    elif solver == "fronttrack":
        report = _solve_fronttrack(sc, args, out)
    else:
        report = _solve_eikonal(sc, args, out)
    report.write(out / "report.json")
    _print_checks(report)
    return EXIT_OK if report.passed else EXIT_FAIL


def _print_checks(report: VerificationReport) -> None:
    for c in report.checks:
        sys.stdout.write(f"{c.status.upper():4s} {c.name}: value={c.value:.6g} bound={c.bound:.6g} tol={c.tolerance:g}\n")


def cmd_verify(sc: ScenarioFile, args: argparse.Namespace) -> int:
    spec = sc.spec
    grid = _grid_for(sc, args.grid_h)
    spec2 = spec.with_(dimension=2)
    res = run(spec2, grid, sc.eps)
    checks = run_checks(res, spec2, sc.eps, sc.tolerances)
    if symmetric_family(spec) is not None:
        checks += oracle_equivalence(spec, grid.h, sc.eps, seed=sc.seed, tolerances=sc.tolerances, grid=grid, ft_result=res)
    report = _report(sc, checks, grid)
    out = Path(args.out) if args.out is not None else Path("report.json")
    if out.suffix != ".json":
        out = out / "report.json"
    report.write(out)
    _print_checks(report)
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_sweep(sc: ScenarioFile, args: argparse.Namespace) -> int:
    spec = sc.spec
    out = _out_dir(args.out)
    solver = args.solver or ("ode1d" if symmetric_family(spec) == "one_interface" and spec.dimension == 1 else "fronttrack")
    if solver == "ode1d":
        if symmetric_family(spec) != "one_interface":
            raise UsageError("the ODE sweep needs a half_line initial region")
        a = float(spec.initial_region.params["end"])
        v0 = float(spec.boundary_v0(np.float64(a)))
        limits = [integrate_fast_ode(spec.u, a, e, v0=v0).limit for e in sc.eps_ladder]
        extrap, _, ok = extrapolate_limit(spec.u, a, sc.eps_ladder, v0=v0)
        doc: dict[str, Any] = {"solver": "ode1d", "eps": list(sc.eps_ladder), "limits": limits, "extrapolated": extrap, "converged": ok}
    elif solver == "fronttrack":
        grid = _grid_for(sc, args.grid_h)
        cont = continuation_run(spec.with_(dimension=2), grid, sc.eps_ladder)
        doc = {
            "solver": "fronttrack",
            "eps": list(sc.eps_ladder),
            "distances": cont.distances,
            "cauchy": cont.cauchy,
            "final_E": [r.ledger.final_E for r in cont.runs],
        }
    else:
        raise UsageError("sweep supports the ode1d and fronttrack solvers")
    write_json(out / "sweep.json", doc)
    _echo(doc)
    return EXIT_OK


COMMANDS = {"jump-size": cmd_jump_size, "solve": cmd_solve, "verify": cmd_verify, "sweep": cmd_sweep}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stefan-cascade", description="Physical jumps of the Stefan problem with surface tension.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--scenario", required=True, help="scenario JSON file")
        p.add_argument("--out", default=None, help="output directory (verify: report path)")
        p.add_argument("--solver", default=None, choices=SOLVERS)
        p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
        p.add_argument("--grid-h", type=float, default=None, help="override the grid spacing")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_USAGE
    try:
        sc = load_scenario(args.scenario)
        if args.seed is not None:
            sc = ScenarioFile(sc.spec, sc.eps_ladder, sc.box, sc.h, sc.periodic_y, args.seed, sc.tolerances, sc.cost)
        if args.grid_h is not None and not args.grid_h > 0:
            raise UsageError("--grid-h must be positive")
        return COMMANDS[args.command](sc, args)
    except UsageError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    raise SystemExit(main())
