"""Certification of computed cascades: perimeter and total-variation bounds, energy checks and
cross-solver agreement, collected into a machine-readable report.

Every check carries its measured value, the bound it is compared with and the tolerance used,
so a report can be re-judged without rerunning anything.
"""

from __future__ import annotations

import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping

import numpy as np
from numpy.typing import NDArray

from .cascade1d import integrate_fast_ode, solve_arrival_ode
from .closedform import (
    OneInterfaceSolution,
    RadialSolution,
    TwoInterfaceSolution,
    solve_one_interface,
    solve_radial,
    solve_two_interface,
)
from .domain import Grid2, ScalarField2, ScenarioSpec, boundary_integral, interface_segments, perimeter, rasterize
from .eikonal import CostField, fast_march
from .fronttrack import ArrivalField, EnergyLedger, RunResult, run, sublevel_mask
from .io import dumps, write_json

__all__ = [
    "PASS",
    "FAIL",
    "SKIP",
    "DEFAULT_TOLERANCES",
    "Check",
    "VerificationReport",
    "check_perimeter_bound",
    "check_tv_bound",
    "check_energy_balance",
    "check_admissibility",
    "run_checks",
    "oracle_equivalence",
    "symmetric_family",
    "closed_form",
    "default_grid",
    "lattice_tv",
    "digest",
    "exact_speed",
]

PASS, FAIL, SKIP = "pass", "fail", "skip"

DEFAULT_TOLERANCES: dict[str, float] = {
    "perimeter": 0.02,
    "perimeter_cells": 4.0,
    "tv": 0.05,
    "energy": 0.02,
    "oracle": 0.02,
    "oracle_1d": 1e-6,
}

#: rows of the periodic strip used to embed planar problems in 2D
STRIP_ROWS = 8
#: fraction of the jump extent sampled by the probe points
PROBE_RANGE = (0.1, 0.8)
#: cost used where the exact speed has vanished (cells that are never reached)
UNREACHABLE_COST = 1e8


@dataclass(frozen=True)
class Check:
    """One certified statement.

    ``value`` is compared with ``bound`` under ``tolerance``; how exactly is spelled out in
    ``source`` and ``details``.
    """

    name: str
    status: str
    value: float
    bound: float
    tolerance: float
    source: str
    details: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.status not in (PASS, FAIL, SKIP):
            raise ValueError(f"unknown check status {self.status!r}")

    @property
    def failed(self) -> bool:
        return self.status == FAIL

    def to_json(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "status": self.status,
            "value": self.value,
            "bound": self.bound,
            "tolerance": self.tolerance,
            "source": self.source,
            "details": self.details,
        }


@dataclass(frozen=True)
class VerificationReport:
    checks: list[Check]
    scenario_digest: str
    grid: dict[str, Any] | None
    seed: int

    @property
    def passed(self) -> bool:
        """True when no check failed (skips are allowed)."""
        return not any(c.failed for c in self.checks)

    def to_json(self) -> dict[str, Any]:
        return {
            "passed": self.passed,
            "scenario_digest": self.scenario_digest,
            "grid": self.grid,
            "seed": self.seed,
            "checks": [c.to_json() for c in self.checks],
        }

    def write(self, path: str | Path) -> None:
        write_json(path, self.to_json())


def digest(doc: Any) -> str:
    """SHA-256 of the canonical JSON form of ``doc``."""
    return hashlib.sha256(dumps(doc).encode("utf-8")).hexdigest()


def _tol(tolerances: Mapping[str, float] | None, key: str) -> float:
    if tolerances is not None and key in tolerances:
        return float(tolerances[key])
    return DEFAULT_TOLERANCES[key]


# --------------------------------------------------------------------------- bounds


def _touches_edge(mask: NDArray[np.bool_], grid: Grid2) -> bool:
    edge = mask[0, :].any() or mask[-1, :].any()
    if not grid.periodic_y:
        edge = edge or mask[:, 0].any() or mask[:, -1].any()
    return bool(edge)


def _u_on(spec: ScenarioSpec, grid: Grid2) -> NDArray[np.float64]:
    X, Y = grid.centers()
    return np.asarray(spec.u(X, Y), dtype=float) * np.ones(grid.shape)


def check_perimeter_bound(
    w: ArrivalField,
    spec: ScenarioSpec,
    eps: float,
    tolerances: Mapping[str, float] | None = None,
    n_levels: int = 10,
) -> Check:
    """``gamma |dD_t| <= int (gamma + V0 + eps) dH - int_{D_t minus solid} (1 + u)`` on a ladder of ``t``.

    ``D_t = {w <= t}`` for ``n_levels`` equally spaced ``t`` from 0 to the largest finite arrival
    time (the last set is the whole jump set). Each level passes when the left side is at most
    ``rhs (1 + tol) + cells * h * n_boundary`` with ``n_boundary`` the number of interface cells
    of the initial solid. ``value`` and ``bound`` are taken at the level with the least slack;
    ``details`` also records the largest relative excess ``(lhs - rhs) / rhs``.

    Skipped when the jump set reaches a non-periodic box edge, since the volume term is then
    truncated by the box.
    """
    grid = w.grid
    rel = _tol(tolerances, "perimeter")
    cells = _tol(tolerances, "perimeter_cells")
    source = "perimeter of the jump set is bounded by the boundary energy minus the absorbed energy"
    initial = rasterize(spec.initial_region, grid)
    wv = np.asarray(w.values, dtype=float)
    fin = np.isfinite(wv)
    reached = fin & ~initial.inside
    if _touches_edge(reached, grid):
        return Check("perimeter_bound", SKIP, math.nan, math.nan, rel, source, {"reason": "jump set reaches the box edge"})
    g = spec.gamma
    B0 = boundary_integral(initial, lambda x, y: g + spec.boundary_v0(x, y) + eps)
    n_boundary = len(interface_segments(initial.phi(), grid))
    slack_cells = cells * grid.h * n_boundary
    one_u = 1.0 + _u_on(spec, grid)
    top = float(wv[fin].max()) if fin.any() else 0.0
    levels = np.linspace(0.0, top, max(n_levels, 1)) if top > 0 else np.zeros(1)
    rows = []
    for t in levels:
        mask = sublevel_mask(wv, float(t), initial, grid)
        absorbed = float(one_u[mask.inside & ~initial.inside].sum() * grid.h**2)
        lhs = perimeter(mask)
        rhs = (B0 - absorbed) / g
        allowed = rhs * (1.0 + rel) + slack_cells
        rows.append((float(t), lhs, rhs, allowed))
    worst = max(rows, key=lambda r: r[1] - r[3])
    excess = max((r[1] - r[2]) / abs(r[2]) if r[2] != 0 else math.inf for r in rows)
    ok = all(r[1] <= r[3] for r in rows)
    details = {
        "levels": [r[0] for r in rows],
        "perimeter": [r[1] for r in rows],
        "rhs": [r[2] for r in rows],
        "allowed": [r[3] for r in rows],
        "cell_slack": slack_cells,
        "max_relative_excess": excess,
        "final_slack": rows[-1][2] - rows[-1][1],
    }
    return Check("perimeter_bound", PASS if ok else FAIL, worst[1], worst[3], rel, source, details)


def lattice_tv(values: NDArray[np.float64], grid: Grid2) -> float:
    """``sum |difference between neighbouring cells| * h`` (anisotropic lattice total variation)."""
    v = np.asarray(values, dtype=float)
    tv = np.abs(np.diff(v, axis=0)).sum() + np.abs(np.diff(v, axis=1)).sum()
    if grid.periodic_y:
        tv += np.abs(v[:, 0] - v[:, -1]).sum()
    return float(tv * grid.h)


def check_tv_bound(
    w: ArrivalField,
    spec: ScenarioSpec,
    eps: float,
    T: float | None = None,
    tolerances: Mapping[str, float] | None = None,
) -> Check:
    """``TV(w ^ T) <= (T / gamma) (2 kappa + int (1+u)^-)`` within the relative tolerance.

    ``kappa`` is the boundary energy ``int (gamma + V0 + eps) dH`` plus ``int (1+u)^-`` over the
    jump set; the trailing ``int (1+u)^-`` is over the liquid part of the box. ``T`` defaults to
    the field's cap, or to the largest finite arrival time when uncapped. Unreached cells count
    as ``T``.
    """
    grid = w.grid
    tol = _tol(tolerances, "tv")
    source = "total variation of the capped arrival time is bounded by the cap times the energy"
    wv = np.asarray(w.values, dtype=float)
    fin = np.isfinite(wv)
    if T is None:
        T = w.cap if math.isfinite(w.cap) else (float(wv[fin].max()) if fin.any() else 0.0)
    T = float(T)
    capped = np.minimum(np.where(fin, wv, T), T)
    tv = lattice_tv(capped, grid)
    initial = rasterize(spec.initial_region, grid)
    g = spec.gamma
    B0 = boundary_integral(initial, lambda x, y: g + spec.boundary_v0(x, y) + eps)
    neg = np.maximum(-(1.0 + _u_on(spec, grid)), 0.0)
    kappa = B0 + float(neg[fin & ~initial.inside].sum() * grid.h**2)
    bound = T / g * (2.0 * kappa + spec.negative_part_integral(grid))
    status = PASS if tv <= bound * (1.0 + tol) else FAIL
    return Check("tv_bound", status, tv, bound, tol, source, {"T": T, "kappa": kappa})


def check_energy_balance(ledger: EnergyLedger, tolerances: Mapping[str, float] | None = None) -> Check:
    """``|B0 - B - absorbed - locked - escaped| <= tol * B0`` at every record."""
    tol = _tol(tolerances, "energy")
    err = float(ledger.balance_error().max() / ledger.B0) if len(ledger.times) else 0.0
    return Check(
        "energy_balance",
        PASS if err <= tol else FAIL,
        err,
        0.0,
        tol,
        "boundary energy lost equals energy absorbed by the melt plus energy locked in the solid",
        {"B0": ledger.B0},
    )


def check_admissibility(ledger: EnergyLedger, tolerances: Mapping[str, float] | None = None) -> Check:
    """Excess energy is nonnegative, and vanishes before the first arrest or collision.

    ``value`` is ``max(sup E before the first topology event, -inf E) / B0``; the check also
    fails when ``E`` drops by more than the tolerance between records.
    """
    tol = _tol(tolerances, "energy")
    E = ledger.E / ledger.B0 if len(ledger.times) else np.zeros(1)
    t = np.asarray(ledger.times) if len(ledger.times) else np.zeros(1)
    pre = E[t < ledger.first_topology_time]
    sup_pre = float(pre.max()) if len(pre) else 0.0
    inf_all = float(E.min())
    drop = float((np.maximum.accumulate(E) - E).max())
    value = max(sup_pre, -inf_all)
    ok = value <= tol and drop <= tol
    return Check(
        "admissibility",
        PASS if ok else FAIL,
        value,
        0.0,
        tol,
        "excess energy is a nonnegative measure and the minimal solution creates none before topology changes",
        {
            "sup_E_before_topology": sup_pre,
            "inf_E": inf_all,
            "max_drop": drop,
            "first_topology_time": ledger.first_topology_time,
            "final_E": ledger.final_E / ledger.B0 if len(ledger.times) else 0.0,
        },
    )


def run_checks(
    result: RunResult,
    spec: ScenarioSpec,
    eps: float,
    tolerances: Mapping[str, float] | None = None,
) -> list[Check]:
    """The battery attached to every front-tracking run, evaluated concurrently."""
    jobs: list[Callable[[], Check]] = [
        lambda: check_perimeter_bound(result.arrival, spec, eps, tolerances),
        lambda: check_tv_bound(result.arrival, spec, eps, tolerances=tolerances),
        lambda: check_energy_balance(result.ledger, tolerances),
        lambda: check_admissibility(result.ledger, tolerances),
    ]
    with ThreadPoolExecutor(max_workers=len(jobs)) as pool:
        return list(pool.map(lambda job: job(), jobs))


# --------------------------------------------------------------------------- symmetric families


def symmetric_family(spec: ScenarioSpec) -> str | None:
    """``one_interface``, ``two_interface``, ``radial_growing``, ``radial_shrinking`` or ``None``."""
    return {
        "half_line": "one_interface",
        "interval_complement": "two_interface",
        "ball": "radial_growing",
        "ball_complement": "radial_shrinking",
    }.get(spec.initial_region.kind)


def closed_form(spec: ScenarioSpec) -> OneInterfaceSolution | TwoInterfaceSolution | RadialSolution:
    """Exact solution for a symmetric family."""
    fam = symmetric_family(spec)
    if fam == "one_interface":
        return solve_one_interface(spec)
    if fam == "two_interface":
        return solve_two_interface(spec)
    if fam is not None:
        return solve_radial(spec)
    raise ValueError(f"no closed form for region kind {spec.initial_region.kind!r}")


def _planar_reach(sol: OneInterfaceSolution, cap: float) -> float:
    """Distance covered by the front by time ``cap`` (its full extent when uncapped)."""
    if math.isfinite(cap):
        return min(sol.x_star, sol.front(cap) - sol.origin)
    if math.isfinite(sol.x_star):
        return sol.x_star
    raise ValueError("the front never stops; set a cap to bound the domain")


def _radial_reach(sol: RadialSolution, cap: float) -> float:
    """Radius reached by a growing ball by time ``cap``; the initial radius when shrinking."""
    if sol.direction == "shrinking":
        return sol.r0
    if math.isfinite(cap):
        top = sol.r_star if math.isfinite(sol.r_star) else 100.0 * sol.r0
        r = np.linspace(sol.r0, top, 4001)
        wr = sol.w(r)
        return float(r[np.searchsorted(wr, cap)] if (wr > cap).any() else r[-1])
    if math.isfinite(sol.r_star):
        return sol.r_star
    raise ValueError("the ball grows forever; set a cap to bound the domain")


def default_grid(spec: ScenarioSpec, h: float) -> Grid2:
    """A box that holds the exact jump set of a symmetric family with a small margin.

    Planar families become periodic strips of a few rows.
    """
    sol = closed_form(spec)
    if isinstance(sol, OneInterfaceSolution):
        reach = _planar_reach(sol, spec.cap)
        lo = sol.origin - 0.02 * max(reach, 1.0)
        nx = int(math.ceil((sol.origin + 1.06 * reach - lo) / h))
        return Grid2((lo - h / 2, 0.0), h, nx, STRIP_ROWS, periodic_y=True)
    if isinstance(sol, TwoInterfaceSolution):
        gap = sol.b - sol.a
        lo = sol.a - 0.1 * gap
        nx = int(math.ceil(1.2 * gap / h))
        return Grid2((lo, 0.0), h, nx, STRIP_ROWS, periodic_y=True)
    cx, cy = spec.initial_region.params.get("center", (0.0, 0.0))
    half = 1.1 * _radial_reach(sol, spec.cap)
    return Grid2.covering((cx - half, cx + half, cy - half, cy + half), h)


def _exact_on(sol: Any, spec: ScenarioSpec, pts: NDArray[np.float64]) -> NDArray[np.float64]:
    if isinstance(sol, RadialSolution):
        c = spec.initial_region.params.get("center", (0.0, 0.0))
        return sol.w_xy(pts[:, 0], pts[:, 1], tuple(c))
    return sol.w(pts[:, 0])


def exact_speed(sol: Any, spec: ScenarioSpec, grid: Grid2) -> NDArray[np.float64]:
    """Speed ``V`` of the exact front through each cell centre (``<= 0`` where never reached)."""
    X, Y = grid.centers()
    if isinstance(sol, RadialSolution):
        c = spec.initial_region.params.get("center", (0.0, 0.0))
        R = np.hypot(X - c[0], Y - c[1])
        table = np.linspace(0.0, float(R.max()), int(math.ceil(R.max() / (grid.h / 4))) + 2)
        vt = sol.speed(np.maximum(table, 1e-12))
        lo, hi = (sol.r0, sol.r_star) if sol.direction == "growing" else (sol.r_star, sol.r0)
        vt = np.where((table >= lo) & (table <= hi), vt, 0.0)
        return np.interp(R, table, vt)
    x = grid.x_centers()
    if isinstance(sol, TwoInterfaceSolution):
        left = sol.left.v(x)
        right = sol.right.branch.speed(sol.b - x)
        v = np.where(sol.w0(x) <= sol.w1(x), left, right)
        v = np.where((x > sol.a) & (x < sol.b), v, 0.0)
    else:
        v = np.where(x > sol.origin, sol.v(x), 0.0)
        if math.isfinite(sol.x_star):
            v = np.where(x < sol.origin + sol.x_star, v, 0.0)
    return np.repeat(v[:, None], grid.ny, axis=1)


def _probe_points(sol: Any, spec: ScenarioSpec, n: int, rng: np.random.Generator) -> NDArray[np.float64]:
    s = rng.uniform(PROBE_RANGE[0], PROBE_RANGE[1], n)
    if isinstance(sol, OneInterfaceSolution):
        reach = _planar_reach(sol, spec.cap)
        return np.stack([sol.origin + s * reach, rng.uniform(0.0, 1.0, n)], axis=1)
    if isinstance(sol, TwoInterfaceSolution):
        # probe each side only up to where its front arrives first
        split = sol.x_meet if sol.x_meet is not None else 0.5 * (sol.a + sol.b)
        left = rng.uniform(size=n) < 0.5
        x = np.where(left, sol.a + s * (split - sol.a), sol.b - s * (sol.b - split))
        return np.stack([x, rng.uniform(0.0, 1.0, n)], axis=1)
    c = np.asarray(spec.initial_region.params.get("center", (0.0, 0.0)), dtype=float)
    reach = _radial_reach(sol, spec.cap)
    r = sol.r0 + s * (reach - sol.r0) if sol.direction == "growing" else sol.r0 * (1.0 - s)
    th = rng.uniform(0.0, 2 * math.pi, n)
    return c + np.stack([r * np.cos(th), r * np.sin(th)], axis=1)


def _sample(values: NDArray[np.float64], grid: Grid2, pts: NDArray[np.float64]) -> NDArray[np.float64]:
    """Bilinear interpolation between cell centres (periodic in ``y`` when the grid is)."""
    fx = (pts[:, 0] - grid.origin[0]) / grid.h - 0.5
    fy = (pts[:, 1] - grid.origin[1]) / grid.h - 0.5
    i0 = np.clip(np.floor(fx).astype(int), 0, grid.nx - 2)
    tx = np.clip(fx - i0, 0.0, 1.0)
    j0 = np.floor(fy).astype(int)
    ty = fy - j0
    if grid.periodic_y:
        j0, j1 = np.mod(j0, grid.ny), np.mod(j0 + 1, grid.ny)
    else:
        j0 = np.clip(j0, 0, grid.ny - 2)
        j1 = j0 + 1
        ty = np.clip(fy - j0, 0.0, 1.0)
    v = values
    return (
        (1 - tx) * (1 - ty) * v[i0, j0]
        + tx * (1 - ty) * v[i0 + 1, j0]
        + (1 - tx) * ty * v[i0, j1]
        + tx * ty * v[i0 + 1, j1]
    )


def _compare(name: str, source: str, got: NDArray[np.float64], want: NDArray[np.float64], tol: float, extra: dict[str, Any] | None = None) -> Check:
    err = np.abs(got - want) / np.maximum(np.abs(want), 1e-300)
    value = float(np.max(err)) if len(err) else 0.0
    if not np.isfinite(value):
        value = math.inf
    details = {"n_probes": int(len(err)), "mean_relative_error": float(np.mean(err)) if len(err) else 0.0}
    details.update(extra or {})
    return Check(name, PASS if value <= tol else FAIL, value, 0.0, tol, source, details)


def _rel_check(name: str, source: str, got: float, want: float, tol: float) -> Check:
    if math.isinf(want) and math.isinf(got):
        err = 0.0
    else:
        err = abs(got - want) / abs(want) if want != 0 else abs(got)
    return Check(name, PASS if err <= tol else FAIL, err, 0.0, tol, source, {"measured": got, "exact": want})


def _ft_extent(sol: Any, spec: ScenarioSpec, arrival: ArrivalField) -> float:
    """Reach of the computed jump set in the coordinate the closed form reports."""
    grid = arrival.grid
    initial = rasterize(spec.initial_region, grid)
    reached = np.isfinite(arrival.values) | initial.inside
    if isinstance(sol, OneInterfaceSolution):
        cols = reached.all(axis=1)
        x = grid.x_centers()
        # last fully reached column, plus half a cell
        return float(x[cols].max() + grid.h / 2 - sol.origin)
    area = float(reached.sum() * grid.h**2)
    if sol.direction == "growing":
        return math.sqrt(area / math.pi)
    hole = float((~reached).sum() * grid.h**2)
    return math.sqrt(hole / math.pi)


def oracle_equivalence(
    spec: ScenarioSpec,
    h: float = 5e-3,
    eps: float = 1e-3,
    n_probes: int = 100,
    seed: int = 0,
    tolerances: Mapping[str, float] | None = None,
    grid: Grid2 | None = None,
    ft_result: RunResult | None = None,
) -> list[Check]:
    """Cross-compare the closed form with the 1D solvers, front tracking and fast marching.

    Arrival times are compared at ``n_probes`` random points inside the jump set (between 10%
    and 80% of its reach from the initial solid, where ``w`` is bounded). The 2D solvers must
    agree with the closed form to the ``oracle`` tolerance, the 1D solvers to ``oracle_1d``.
    Extents, vanishing times and locked energies are compared where the family has them. With a
    finite cap only probes reached by the cap count, extents are taken at the cap, and events
    after the cap are not compared.

    Raises:
        ValueError: for a scenario outside the four symmetric families.
    """
    fam = symmetric_family(spec)
    if fam is None:
        raise ValueError("oracle equivalence needs one of the symmetric families")
    sol = closed_form(spec)
    tol2 = _tol(tolerances, "oracle")
    tol1 = _tol(tolerances, "oracle_1d")
    rng = np.random.default_rng(seed)
    pts = _probe_points(sol, spec, n_probes, rng)
    exact = _exact_on(sol, spec, pts)
    cap = spec.cap
    if math.isfinite(cap):
        # a capped run only knows the front up to the cap
        keep = exact <= cap
        pts, exact = pts[keep], exact[keep]
    src_1d = "closed-form minimal solution against the arrival-time ODE and the fast ODE"
    src_2d = "closed-form minimal solution against the general 2D solvers"
    checks: list[Check] = []

    if isinstance(sol, OneInterfaceSolution):
        ode = solve_arrival_ode(spec.u, sol.v0, sol.origin)
        checks.append(_compare("oracle_ode1d", src_1d, ode.w(pts[:, 0]), exact, tol1))
        start = 1e-9 * max(1.0, abs(sol.origin))
        trace = integrate_fast_ode(spec.u, sol.origin, start, v0=sol.v0)
        # the trace starts ``start`` ahead of the solid, which shifts its clock by about start / V0
        shift = start / sol.v0 if sol.v0 > 0 else 0.0
        checks.append(_compare("oracle_fast_ode", src_1d, trace.arrival(pts[:, 0]) + shift, exact, tol1))
        checks.append(_rel_check("oracle_extent_ode1d", src_1d, ode.x_star, sol.x_star, tol1))
    else:
        checks.append(Check("oracle_ode1d", SKIP, math.nan, 0.0, tol1, src_1d, {"reason": "1D solvers cover a single planar interface"}))

    if grid is None:
        grid = default_grid(spec, h)
    spec2 = spec.with_(dimension=2)
    if ft_result is None:
        ft_result = run(spec2, grid, eps)
    arrival = ft_result.arrival
    checks.append(_compare("oracle_fronttrack", src_2d, _sample(np.where(np.isfinite(arrival.values), arrival.values, np.nan), grid, pts), exact, tol2))

    # fast marching with the exact cost 1/V
    V = exact_speed(sol, spec, grid)
    L = np.where(V > 0, 1.0 / np.maximum(V, 1e-300), UNREACHABLE_COST)
    L = np.minimum(L, UNREACHABLE_COST)
    initial = rasterize(spec.initial_region, grid)
    wfm = fast_march(initial, CostField(ScalarField2(grid, L)), subcell=True).values
    checks.append(_compare("oracle_eikonal", src_2d, _sample(wfm, grid, pts), exact, tol2))

    if isinstance(sol, OneInterfaceSolution):
        if math.isfinite(sol.x_star) or math.isfinite(cap):
            checks.append(_rel_check("oracle_extent_fronttrack", src_2d, _ft_extent(sol, spec, arrival), _planar_reach(sol, cap), tol2))
    elif isinstance(sol, TwoInterfaceSolution):
        width = grid.height
        if sol.locked_energy is not None and sol.t_star <= cap:
            checks.append(_rel_check("oracle_locked_energy", src_2d, ft_result.ledger.final_E / width, sol.locked_energy + 2 * eps, tol2))
            checks.append(_rel_check("oracle_t_star", src_2d, ft_result.front.t, sol.t_star, tol2))
    else:
        if sol.direction == "growing":
            checks.append(_rel_check("oracle_extent_fronttrack", src_2d, _ft_extent(sol, spec, arrival), _radial_reach(sol, cap), tol2))
        elif sol.t_vanish is not None and sol.t_vanish <= cap:
            checks.append(_rel_check("oracle_t_vanish", src_2d, ft_result.front.t, sol.t_vanish, tol2))
        if sol.direction == "growing":
            arrested = not math.isfinite(cap)
        else:
            arrested = sol.t_vanish is not None and sol.t_vanish <= cap
        if sol.locked_energy is not None and sol.d == 2 and arrested:
            locked = ft_result.ledger.final_E / (2 * math.pi)
            checks.append(_rel_check("oracle_locked_energy", src_2d, locked, sol.locked_energy + eps * sol.r0, tol2))
    return checks

