"""Acceptance battery: ten end-to-end criteria at their stated tolerances.

Each test records one PASS/FAIL line through the ``criterion`` fixture; the lines are printed
together at the end of the pytest run. Expensive runs are shared through module fixtures.
"""

from __future__ import annotations

import math
import time

import numpy as np
import pytest

from stefan_cascade.cascade1d import extrapolate_limit, solve_arrival_ode
from stefan_cascade.closedform import jump_size_1d, solve_one_interface, solve_radial, solve_two_interface
from stefan_cascade.domain import Grid2, Piecewise1D, RegionSpec, ScenarioSpec
from stefan_cascade.equilibrium import (
    arrival_from_closed_form,
    build_from_solution,
    distributional_residuals,
    fixed_point_residual,
)
from stefan_cascade.fronttrack import run
from stefan_cascade.verify import (
    check_admissibility,
    check_perimeter_bound,
    check_tv_bound,
    default_grid,
    oracle_equivalence,
)

EPS = 1e-3
LN2 = math.log(2.0)


def _timed(fn, *args, **kw):
    t0 = time.perf_counter()
    out = fn(*args, **kw)
    return out, time.perf_counter() - t0


def _row_profile(values: np.ndarray, grid: Grid2, x: float) -> float:
    """Linear interpolation of the first grid row at abscissa ``x``."""
    row = np.where(np.isfinite(values[:, 0]), values[:, 0], np.nan)
    return float(np.interp(x, grid.x_centers(), row))


def _bilinear(values: np.ndarray, grid: Grid2, x: float, y: float) -> float:
    fx = (x - grid.origin[0]) / grid.h - 0.5
    fy = (y - grid.origin[1]) / grid.h - 0.5
    i, j = int(math.floor(fx)), int(math.floor(fy))
    a, b = fx - i, fy - j
    v = values[i : i + 2, j : j + 2]
    return float((1 - a) * (1 - b) * v[0, 0] + a * (1 - b) * v[1, 0] + (1 - a) * b * v[0, 1] + a * b * v[1, 1])


# --------------------------------------------------------------------------- shared runs


def _suite() -> list[tuple[str, ScenarioSpec, Grid2]]:
    h = 5e-3
    out = [
        ("disk", ScenarioSpec.radial(True, -1.0, 1.0, 1.0, 1.0), Grid2.covering((-2.2, 2.2, -2.2, 2.2), h)),
        (
            "two merging disks",
            ScenarioSpec(1.0, -1.0, RegionSpec.balls([(-0.6, 0.0), (0.6, 0.0)], [0.4, 0.4]), 1.0),
            Grid2.covering((-1.8, 1.8, -1.2, 1.2), h),
        ),
        (
            "annulus complement",
            ScenarioSpec(1.0, -0.5, RegionSpec.annulus_complement(0.3, 1.0), 0.5),
            Grid2.covering((-1.2, 1.2, -1.2, 1.2), h),
        ),
    ]
    g = Grid2.covering((-1.2, 1.2, -1.2, 1.2), h)
    X, Y = g.centers()
    blob = np.hypot(X, Y) < 0.4 * (1 + 0.3 * np.cos(3 * np.arctan2(Y, X)))
    out.append(("lattice blob", ScenarioSpec(1.0, -0.5, RegionSpec.lattice(blob, g.origin, h), 0.5), g))
    out.append(
        (
            "strip",
            ScenarioSpec.two_interface(0.0, 0.6, 0.6, 1.0, 0.0, 1.0, dimension=2),
            Grid2((-0.1, 0.0), h, 240, 8, periodic_y=True),
        )
    )
    return out


@pytest.fixture(scope="module")
def suite_runs():
    return [(name, spec, run(spec, g, EPS)) for name, spec, g in _suite()]


@pytest.fixture(scope="module")
def family_runs():
    """Front-tracking runs of the four symmetric families at h = 5e-3."""
    specs = {
        "one_interface": ScenarioSpec.one_interface(0.0, 1.0, 1.0, 0.0),
        "two_interface": ScenarioSpec.two_interface(0.0, 0.6, 0.6, 1.0, 0.0, 1.0),
        "radial_growing": ScenarioSpec.radial(True, -1.0, 1.0, 1.0, 1.0),
        "radial_shrinking": ScenarioSpec.radial(False, -1.0, 1.0, 1.0, 1.0),
    }
    out = {}
    for name, spec in specs.items():
        g = default_grid(spec, 5e-3)
        res, secs = _timed(run, spec.with_(dimension=2), g, EPS)
        out[name] = (spec, g, res, secs)
    return out


# --------------------------------------------------------------------------- criteria


def test_criterion_01_one_interface_planar(criterion):
    spec = ScenarioSpec.one_interface(0.0, 1.0, 1.0, 0.0)
    t0 = time.perf_counter()
    sol = solve_one_interface(spec)
    ode = solve_arrival_ode(spec.u, 1.0)
    e_star = abs(sol.x_star - 1.0)
    e_cf = abs(float(sol.w(0.5)) - LN2)
    e_ode = abs(float(ode.w(np.array([0.5]))[0]) - LN2)
    g = default_grid(spec, 1e-3)
    res = run(spec.with_(dimension=2), g, EPS)
    e_ft = abs(_row_profile(res.arrival.values, g, 0.5) - LN2)
    secs = time.perf_counter() - t0
    ok = e_star <= 1e-9 and e_cf <= 1e-8 and e_ode <= 1e-8 and e_ft <= 2e-3 and secs < 5.0
    criterion(
        1,
        ok,
        f"x*-1={e_star:.1e} (1e-9); w(0.5) err closed form {e_cf:.1e}, arrival ODE {e_ode:.1e} (1e-8), "
        f"fronttrack h=1e-3 {e_ft:.2e} (2e-3); {secs:.2f}s (<5s)",
    )
    assert ok


def test_criterion_02_jump_size_law(criterion):
    u = Piecewise1D((0.0, 0.3), (0.0, -2.0, 0.0))
    t0 = time.perf_counter()
    jump = jump_size_1d(u).value
    limit, rungs, converged = extrapolate_limit(u, 0.0)
    secs = time.perf_counter() - t0
    e_bis, e_ode = abs(jump - 0.6), abs(limit - 0.6)
    ok = e_bis <= 1e-8 and e_ode <= 1e-3 and converged and secs < 1.0
    criterion(2, ok, f"bisection err {e_bis:.1e} (1e-8); extrapolated fast ODE err {e_ode:.1e} (1e-3); {secs:.2f}s (<1s)")
    assert ok


def test_criterion_03_radial_growing(criterion):
    spec = ScenarioSpec.radial(True, -1.0, 1.0, 1.0, 1.0)
    sol = solve_radial(spec)
    e_r = abs(sol.r_star - 2.0)
    want = 2 * LN2 - 0.5
    e_w = abs(float(sol.w(1.5)) - want)
    g = default_grid(spec, 5e-3)
    res, secs = _timed(run, spec, g, EPS)
    checks = {c.name: c for c in oracle_equivalence(spec, grid=g, ft_result=res)}
    r_ft = checks["oracle_extent_fronttrack"].value
    angles = np.linspace(0, 2 * math.pi, 16, endpoint=False)
    w_ft = np.mean([_bilinear(res.arrival.values, g, 1.5 * math.cos(a), 1.5 * math.sin(a)) for a in angles])
    rel_w = abs(w_ft - want) / want
    ok = e_r <= 1e-9 and e_w <= 1e-8 and r_ft <= 0.01 and rel_w <= 0.02 and secs < 60
    criterion(
        3,
        ok,
        f"R*-2={e_r:.1e} (1e-9), w(1.5) err {e_w:.1e} (1e-8); fronttrack R* rel {r_ft:.2e} (1%), "
        f"w(1.5) rel {rel_w:.2e} (2%); {secs:.1f}s (<60s)",
    )
    assert ok


def test_criterion_04_two_interface_lock_in(criterion, family_runs):
    spec, g, res, secs = family_runs["two_interface"]
    sol = solve_two_interface(spec)
    e_cf = abs(sol.locked_energy - 2.2)
    E = res.ledger.final_E / g.height
    rel = abs(E - 2.2) / 2.2
    ok = e_cf <= 1e-8 and rel <= 0.02 and secs < 60
    criterion(4, ok, f"locked energy closed form err {e_cf:.1e} (1e-8); fronttrack final E {E:.4f} rel {rel:.2e} (2%); {secs:.1f}s (<60s)")
    assert ok


def test_criterion_05_shrinking_disk(criterion, family_runs):
    spec, g, res, secs = family_runs["radial_shrinking"]
    sol = solve_radial(spec)
    want = 2 * LN2 - 1
    e_cf = abs(sol.t_vanish - want)
    rel_t = abs(res.front.t - want) / want
    locked = res.ledger.final_E / (2 * math.pi)
    rel_e = abs(locked - 2.0) / 2.0
    ok = e_cf <= 1e-8 and rel_t <= 0.02 and rel_e <= 0.02
    criterion(5, ok, f"t_vanish quadrature err {e_cf:.1e} (1e-8); fronttrack t rel {rel_t:.2e}, locked energy {locked:.4f} rel {rel_e:.2e} (2%)")
    assert ok


def test_criterion_06_perimeter_bound(criterion, suite_runs):
    rows = []
    for name, spec, res in suite_runs:
        c = check_perimeter_bound(res.arrival, spec, EPS)
        rows.append((name, c))
    bad = [n for n, c in rows if c.failed]
    worst = max(c.details.get("max_relative_excess", -math.inf) for _, c in rows if c.status != "skip")
    criterion(
        6,
        not bad,
        f"{len(rows) - len(bad)}/{len(rows)} scenarios within 2% + 4h*boundary cells; "
        f"largest relative excess {worst:+.2e}" + (f"; violations: {', '.join(bad)}" if bad else ""),
    )
    assert not bad


def test_criterion_07_tv_bound(criterion, suite_runs):
    rows = [(name, check_tv_bound(res.arrival, spec, EPS)) for name, spec, res in suite_runs]
    bad = [n for n, c in rows if c.failed]
    ratio = max(c.value / c.bound for _, c in rows)
    criterion(7, not bad, f"{len(rows) - len(bad)}/{len(rows)} scenarios within 1.05x; largest TV/bound {ratio:.3f}")
    assert not bad


def _equilibrium_residuals(h: float, n_paths: int) -> tuple[float, float]:
    spec = ScenarioSpec.one_interface(0.0, 1.0, 1.0, 0.0, dimension=2)
    g = Grid2((-0.02 - h / 2, 0.0), h, int(1.06 / h), 8, periodic_y=True)
    w = arrival_from_closed_form(solve_one_interface(spec.with_(dimension=1, v0=1.0 + EPS)), g, cap=3.0)
    r1 = fixed_point_residual(build_from_solution(w, spec, EPS, n_paths=n_paths))
    spec = ScenarioSpec.radial(True, -1.0, 1.0, 1.0, 1.0)
    n = int(1.4 / h)
    g = Grid2((0.0, 0.0), h, n, n)
    w = arrival_from_closed_form(solve_radial(spec.with_(v0=1.0 + EPS)), g, cap=0.5)
    r2 = fixed_point_residual(build_from_solution(w, spec, EPS, n_paths=n_paths))
    return r1, r2


def test_criterion_08_equilibrium_fixed_point(criterion):
    t0 = time.perf_counter()
    a1, a2 = _equilibrium_residuals(1e-3, 10_000)
    b1, b2 = _equilibrium_residuals(5e-4, 40_000)
    secs = time.perf_counter() - t0
    ok = max(a1, a2) <= 5e-2 and max(b1, b2) <= 2.5e-2 and b1 <= a1 and b2 <= a2 and secs < 120
    criterion(
        8,
        ok,
        f"residual h=1e-3/1e4 paths: planar {a1:.2e}, radial {a2:.2e} (5e-2); "
        f"h=5e-4/4e4 paths: planar {b1:.2e}, radial {b2:.2e} (2.5e-2); {secs:.1f}s (<120s)",
    )
    assert ok


def test_criterion_09_admissibility(criterion, family_runs, suite_runs):
    runs = [(name, res) for name, (_, _, res, _) in family_runs.items()] + [(n, r) for n, _, r in suite_runs]
    rows = [(name, check_admissibility(res.ledger)) for name, res in runs]
    bad = [n for n, c in rows if c.failed]
    sup_pre = max(c.details["sup_E_before_topology"] for _, c in rows)
    inf_e = min(c.details["inf_E"] for _, c in rows)
    criterion(
        9,
        not bad,
        f"{len(rows) - len(bad)}/{len(rows)} runs; max sup E/B0 before topology {sup_pre:+.2e}, "
        f"min E/B0 {inf_e:+.2e} (2%)",
    )
    assert not bad


def test_criterion_10_distributional_residual(criterion):
    h = 1e-3
    spec = ScenarioSpec.one_interface(0.0, 1.0, 1.0, 0.0, dimension=2)
    g = Grid2((-0.02 - h / 2, 0.0), h, int(1.06 / h), 8, periodic_y=True)
    w = arrival_from_closed_form(solve_one_interface(spec.with_(dimension=1, v0=1.0 + EPS)), g, cap=3.0)
    state = build_from_solution(w, spec, EPS, n_paths=10_000)
    r = distributional_residuals(state, n_tests=20, seed=0)
    ok = len(r) == 20 and bool((r <= 0.05).all())
    criterion(10, ok, f"{int((r <= 0.05).sum())}/20 bump tests within 5%; largest {r.max():.2e}")
    assert ok
