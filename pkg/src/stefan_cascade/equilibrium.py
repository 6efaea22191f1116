"""Particle-ensemble representation of a computed cascade.

A solution ``w`` is turned into a weighted ensemble of characteristic tubes. Tubes are traced
backwards in time (ascending ``w``) from the initial boundary, with weight ``(gamma + V0 + eps)``
per unit length, and from cells where ``1 + u < 0``, with weight ``(1+u)^-`` per unit area. A
tube's weight decays at rate ``(1+u)^+ / (V + gamma)`` per unit length, which is how the energy
flux ``(V + gamma) ds`` along a front element is absorbed by the melt. Whatever is left when the
tube stops (at the cap, at an arrest or on a collision ridge) is locked energy.

In forward time the decay is the birth measure ``mu`` plus those atoms, and the start points are
the death measure ``nu`` (``pi`` on the boundary). The occupation density ``q`` then satisfies
``kappa q = V + gamma``, so the fixed point ``L = 1 / (kappa q - gamma)`` can be checked cell by
cell against ``L = |grad w|``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any, Sequence

import numpy as np
from numpy.typing import NDArray
from scipy import ndimage

from . import kernels
from .closedform import OneInterfaceSolution, RadialSolution, TwoInterfaceSolution
from .domain import INF, Grid2, RegionMask, ScalarField2, ScenarioSpec, interface_segments, rasterize
from .eikonal import CharacteristicPath, CostField, gradient
from .fronttrack import ArrivalField

__all__ = [
    "InconsistentFieldError",
    "OpenConstraintError",
    "WeightedPoints",
    "EquilibriumState",
    "ExcessMeasure",
    "BoundaryReport",
    "arrival_from_closed_form",
    "build_from_solution",
    "trivial_state",
    "fixed_point_residual",
    "excess_measure",
    "check_boundary_condition",
    "distributional_residuals",
    "telescoping_errors",
    "occupation_floor_violation",
    "default_window",
]

TRAPPED_LIMIT = 0.05
CONSISTENCY_SAMPLES = 2000
WINDOW_LENGTH = 1.2e-2
FULL_WINDOW = 0.75
EDGE_BAND = 3


class InconsistentFieldError(ValueError):
    """Too much weight sits on characteristics that never reach the initial solid."""


class OpenConstraintError(ValueError):
    """The boundary inflation ``eps`` must be strictly positive."""


@dataclass(frozen=True, eq=False)
class WeightedPoints:
    """Point masses with the arrival time at each point."""

    xy: NDArray[np.float64]
    weight: NDArray[np.float64]
    w: NDArray[np.float64]

    @property
    def total(self) -> float:
        return float(self.weight.sum())

    def __len__(self) -> int:
        return len(self.weight)

    @classmethod
    def empty(cls) -> WeightedPoints:
        return cls(np.zeros((0, 2)), np.zeros(0), np.zeros(0))

    @classmethod
    def concat(cls, parts: Sequence[WeightedPoints]) -> WeightedPoints:
        parts = [p for p in parts if len(p)]
        if not parts:
            return cls.empty()
        return cls(
            np.concatenate([p.xy for p in parts]),
            np.concatenate([p.weight for p in parts]),
            np.concatenate([p.w for p in parts]),
        )


@dataclass(frozen=True, eq=False)
class EquilibriumState:
    """Discrete equilibrium: normaliser, ensemble, cost, occupation and the three measures.

    Measures are probability-normalised like the ensemble; multiply by ``kappa`` for energies.
    ``kill`` holds the per-cell decay of tube weight (the diffuse part of ``mu``) and ``atoms``
    the weight left at tube ends (its atomic part). ``nu`` is the union of ``pi`` (boundary
    starts) and the interior starts.
    """

    spec: ScenarioSpec
    eps: float
    kappa: float
    cap: float
    w: ScalarField2
    L: CostField
    q: ScalarField2
    q_window: ScalarField2
    core: NDArray[np.bool_]
    reliable: NDArray[np.bool_]
    swept: NDArray[np.bool_]
    initial: RegionMask
    kill: NDArray[np.float64]
    atoms: WeightedPoints
    nu_interior: WeightedPoints
    pi: WeightedPoints
    seg_index: NDArray[np.intp]
    seg_target: NDArray[np.float64]
    seg_lengths: NDArray[np.float64]
    entered: NDArray[np.bool_]
    escaped: float
    trapped_fraction: float
    path_status: NDArray[np.int8]
    path_cost: NDArray[np.float64]
    path_end_w: NDArray[np.float64]
    path_start_w: NDArray[np.float64]
    ensemble: list[CharacteristicPath] = field(default_factory=list)
    n_paths: int = 0
    seed: int = 0
    window: int = 0

    @property
    def grid(self) -> Grid2:
        return self.w.grid

    @property
    def mu(self) -> WeightedPoints:
        """Birth measure: diffuse decay at cell centres plus the atoms."""
        idx = np.nonzero(self.kill > 0)
        X, Y = self.grid.centers()
        diffuse = WeightedPoints(
            np.stack([X[idx], Y[idx]], axis=1), self.kill[idx], np.minimum(self.w.values[idx], self.cap)
        )
        return WeightedPoints.concat([diffuse, self.atoms])

    @property
    def nu(self) -> WeightedPoints:
        return WeightedPoints.concat([self.pi, self.nu_interior])

    def with_cost(self, values: NDArray[np.float64]) -> EquilibriumState:
        """Copy with a replaced cost field (used to probe the fixed-point detector)."""
        return replace(self, L=CostField(ScalarField2(self.grid, np.asarray(values, dtype=float))))

    def summary(self) -> dict[str, Any]:
        return {
            "kappa": self.kappa,
            "cap": self.cap,
            "eps": self.eps,
            "n_paths": self.n_paths,
            "seed": self.seed,
            "window": self.window,
            "trapped_fraction": self.trapped_fraction,
            "escaped": self.escaped,
            "locked_atoms": self.kappa * self.atoms.total,
            "fixed_point_residual": fixed_point_residual(self),
        }


@dataclass(frozen=True, eq=False)
class ExcessMeasure:
    """Excess energy ``kappa mu - kappa nu - (1+u) dx`` on the swept region plus atoms."""

    density: NDArray[np.float64]
    atoms: WeightedPoints
    times: NDArray[np.float64]
    E: NDArray[np.float64]
    kappa: float

    @property
    def final(self) -> float:
        return float(self.E[-1]) if len(self.E) else 0.0

    def admissible(self, tol: float = 0.02) -> bool:
        """``E >= -tol kappa`` and nondecreasing within ``tol kappa``."""
        slack = tol * self.kappa
        if (self.E < -slack).any():
            return False
        drops = np.maximum.accumulate(self.E) - self.E
        return bool((drops <= slack).all())

    def E_at(self, t: float) -> float:
        k = int(np.searchsorted(self.times, t, side="right")) - 1
        return float(self.E[max(k, 0)])

    def to_json(self) -> dict[str, Any]:
        return {
            "kappa": self.kappa,
            "times": self.times.tolist(),
            "E": self.E.tolist(),
            "atoms": self.kappa * self.atoms.total,
            "density_total": float(self.density.sum()),
        }


@dataclass(frozen=True)
class BoundaryReport:
    """Boundary mass per segment versus ``(gamma + V0 + eps)`` times its length."""

    deviation: float
    measured: NDArray[np.float64]
    target: NDArray[np.float64]

    @property
    def passed(self) -> bool:
        return self.deviation <= 0.05


# --------------------------------------------------------------------------- closed forms on grids


def arrival_from_closed_form(
    solution: OneInterfaceSolution | TwoInterfaceSolution | RadialSolution,
    grid: Grid2,
    cap: float = INF,
    center: tuple[float, float] = (0.0, 0.0),
) -> ArrivalField:
    """Sample an exact arrival time onto cell centres.

    Planar solutions depend on ``x`` only and are evaluated column by column. Radial ones go
    through a table with spacing ``h / 20`` and linear interpolation.
    """
    X, Y = grid.centers()
    if isinstance(solution, RadialSolution):
        R = np.hypot(X - center[0], Y - center[1])
        table = np.linspace(0.0, float(R.max()), int(math.ceil(R.max() / (grid.h / 20.0))) + 2)
        wt = solution.w(table)
        fin = np.isfinite(wt)
        vals = np.full(R.shape, INF)
        if solution.direction == "growing":
            last = table[fin][-1]
            ok = R <= last
        else:
            first = table[fin][0]
            ok = R >= first
        vals[ok] = np.interp(R[ok], table[fin], wt[fin])
    else:
        col = solution.w(grid.x_centers())
        vals = np.repeat(col[:, None], grid.ny, axis=1)
    return ArrivalField(ScalarField2(grid, vals), cap)


# --------------------------------------------------------------------------- construction


def default_window(h: float) -> int:
    """Reach (in cells) of the averaging window: about ``1.2e-2`` in physical length."""
    return max(1, int(round(WINDOW_LENGTH / h)))


def _shift(a: NDArray[Any], di: int, dj: int, periodic_y: bool, fill: Any) -> NDArray[Any]:
    out = np.full_like(a, fill)
    nx, ny = a.shape
    src_i = slice(max(0, -di), nx - max(0, di))
    dst_i = slice(max(0, di), nx - max(0, -di))
    if periodic_y:
        out[dst_i, :] = np.roll(a[src_i, :], dj, axis=1)
        return out
    src_j = slice(max(0, -dj), ny - max(0, dj))
    dst_j = slice(max(0, dj), ny - max(0, -dj))
    out[dst_i, dst_j] = a[src_i, src_j]
    return out


def _erode(mask: NDArray[np.bool_], periodic_y: bool) -> NDArray[np.bool_]:
    out = mask.copy()
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di or dj:
                out &= _shift(mask, di, dj, periodic_y, False)
    return out


def _edge_band(grid: Grid2, width: int) -> NDArray[np.bool_]:
    """Cells within ``width`` cells of a non-periodic grid edge, where one-sided gradients bend tubes."""
    band = np.zeros(grid.shape, dtype=bool)
    band[:width, :] = True
    band[-width:, :] = True
    if not grid.periodic_y:
        band[:, :width] = True
        band[:, -width:] = True
    return band


def _window_fit(
    values: NDArray[np.float64], support: NDArray[np.bool_], m: int, periodic_y: bool
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Weighted local linear least-squares fit over support cells, evaluated at each cell.

    The weight is a quadratic B-spline (three passes of a box of width ``2p + 1`` with
    ``p = ceil(m / 3)``), so its reach is about ``m`` cells. A plain mean is biased where the
    window is cut off by the edge of the support and the field has a slope; the linear fit is
    not. The smooth weight suppresses the aliasing between tube spacing and cell size that a flat
    window passes through. Falls back to the weighted mean where the design is singular.

    Returns the fit and the fraction of the window weight that falls on support cells.
    """
    p = max(1, int(math.ceil(m / 3)))
    size = 2 * p + 1
    pad = 3 * p if periodic_y else 0
    nx, ny = values.shape
    s = support.astype(float)
    f = np.where(support, values, 0.0)
    if pad:
        s = np.pad(s, ((0, 0), (pad, pad)), mode="wrap")
        f = np.pad(f, ((0, 0), (pad, pad)), mode="wrap")
    X = np.arange(nx, dtype=float)[:, None] * np.ones((1, s.shape[1]))
    Y = np.arange(-pad, ny + pad, dtype=float)[None, :] * np.ones((nx, 1))
    X -= nx / 2
    Y -= ny / 2

    def smooth(a: NDArray[np.float64]) -> NDArray[np.float64]:
        for axis in (0, 1):
            for _ in range(3):
                a = ndimage.uniform_filter1d(a, size, axis=axis, mode="constant")
        return a

    S0, SX, SY = smooth(s), smooth(s * X), smooth(s * Y)
    SXX, SYY, SXY = smooth(s * X * X), smooth(s * Y * Y), smooth(s * X * Y)
    F0, FX, FY = smooth(f), smooth(f * X), smooth(f * Y)
    # central moments about each cell
    Sx = SX - X * S0
    Sy = SY - Y * S0
    Sxx = SXX - 2 * X * SX + X * X * S0
    Syy = SYY - 2 * Y * SY + Y * Y * S0
    Sxy = SXY - X * SY - Y * SX + X * Y * S0
    Fx = FX - X * F0
    Fy = FY - Y * F0
    if pad:
        crop = (slice(None), slice(pad, pad + ny))
        S0, Sx, Sy, Sxx, Syy, Sxy, F0, Fx, Fy = (a[crop] for a in (S0, Sx, Sy, Sxx, Syy, Sxy, F0, Fx, Fy))
    A = np.stack(
        [np.stack([S0, Sx, Sy], -1), np.stack([Sx, Sxx, Sxy], -1), np.stack([Sy, Sxy, Syy], -1)], -2
    )
    rhs = np.stack([F0, Fx, Fy], -1)
    out = np.zeros(values.shape)
    sel = support & (S0 > 1e-12)
    det = np.zeros(values.shape)
    det[sel] = np.linalg.det(A[sel])
    good = sel & (det > 1e-6 * S0**3 * p**4)
    if good.any():
        out[good] = np.linalg.solve(A[good], rhs[good][..., None])[..., 0, 0]
    fall = sel & ~good
    out[fall] = F0[fall] / S0[fall]
    # the box passes are normalised, so S0 is already the covered fraction
    return out, S0


def _boundary_starts(
    spec: ScenarioSpec, initial: RegionMask, eps: float, n_paths: int
) -> tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.intp], NDArray[np.float64], NDArray[np.float64]]:
    """Stratified boundary seeds with exact per-segment weights ``(gamma + V0 + eps) * length``."""
    grid = initial.grid
    segs = interface_segments(initial.phi(), grid)
    if len(segs) == 0:
        z = np.zeros(0)
        return np.zeros((0, 2)), z, np.zeros(0, dtype=np.intp), z, z
    mid = segs.midpoints
    lens = segs.lengths
    keep = lens > 0
    a, b, mid, lens = segs.p0[keep], segs.p1[keep], mid[keep], lens[keep]
    dens = spec.gamma + spec.boundary_v0(mid[:, 0], mid[:, 1]) + eps
    target = dens * lens
    share = target / target.sum()
    k = np.maximum(1, np.round(share * n_paths)).astype(np.intp)
    seg_index = np.repeat(np.arange(len(k)), k)
    start = np.concatenate([np.zeros(1, dtype=np.intp), np.cumsum(k)[:-1]])
    frac = (np.arange(len(seg_index)) - start[seg_index] + 0.5) / k[seg_index]
    pts = a[seg_index] + frac[:, None] * (b[seg_index] - a[seg_index])
    weights = target[seg_index] / k[seg_index]
    return pts, weights, seg_index, target, lens


def _interior_starts(
    grid: Grid2, density: NDArray[np.float64], n_paths: int, rng: np.random.Generator
) -> tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.intp]]:
    """Systematic sample of cells proportional to ``density * h^2`` with a jittered position."""
    flat = (density * grid.h**2).reshape(-1)
    total = float(flat.sum())
    if total <= 0 or n_paths <= 0:
        return np.zeros((0, 2)), np.zeros(0), np.zeros(0, dtype=np.intp)
    cells = np.nonzero(flat > 0)[0]
    if len(cells) <= n_paths:
        chosen = cells
        weights = flat[cells]
    else:
        cum = np.cumsum(flat[cells])
        marks = (np.arange(n_paths) + rng.uniform()) * (total / n_paths)
        chosen = cells[np.minimum(np.searchsorted(cum, marks, side="right"), len(cells) - 1)]
        weights = np.full(n_paths, total / n_paths)
    i, j = np.unravel_index(chosen, grid.shape)
    jitter = rng.uniform(-0.45, 0.45, size=(len(chosen), 2)) * grid.h
    pts = np.stack([grid.origin[0] + (i + 0.5) * grid.h, grid.origin[1] + (j + 0.5) * grid.h], axis=1) + jitter
    return pts, weights, chosen


def _trace(
    grid: Grid2,
    wv: NDArray[np.float64],
    gx: NDArray[np.float64],
    gy: NDArray[np.float64],
    stop: NDArray[np.uint8],
    hazard: NDArray[np.float64],
    cost: NDArray[np.float64],
    starts: NDArray[np.float64],
    weights: NDArray[np.float64],
    direction: float,
    w_stop: float,
    occ: NDArray[np.float64],
    kill: NDArray[np.float64],
    record: bool,
) -> tuple[Any, ...]:
    h = grid.h
    step = 0.5 * h
    max_steps = int(4 * (grid.nx + grid.ny) * h / step) + 10
    return kernels.trace_batch(
        wv,
        gx,
        gy,
        stop,
        hazard,
        cost,
        np.ascontiguousarray(starts, dtype=float).reshape(-1, 2),
        np.ascontiguousarray(weights, dtype=float),
        direction,
        step,
        max_steps,
        w_stop,
        grid.origin[0],
        grid.origin[1],
        h,
        grid.periodic_y,
        occ,
        kill,
        record,
    )


def _consistency(
    grid: Grid2,
    wv: NDArray[np.float64],
    gx: NDArray[np.float64],
    gy: NDArray[np.float64],
    initial: RegionMask,
    swept: NDArray[np.bool_],
    rng: np.random.Generator,
) -> float:
    """Fraction of descents from swept cells that get stuck before reaching the solid."""
    cells = np.nonzero(swept.reshape(-1))[0]
    if len(cells) == 0:
        return 0.0
    if len(cells) > CONSISTENCY_SAMPLES:
        stride = len(cells) / CONSISTENCY_SAMPLES
        cells = cells[(np.arange(CONSISTENCY_SAMPLES) * stride + rng.uniform() * stride).astype(np.intp)]
    i, j = np.unravel_index(cells, grid.shape)
    starts = np.stack([grid.origin[0] + (i + 0.5) * grid.h, grid.origin[1] + (j + 0.5) * grid.h], axis=1)
    zeros = np.zeros(grid.shape)
    res = _trace(
        grid,
        wv,
        gx,
        gy,
        np.ascontiguousarray(initial.inside, dtype=np.uint8),
        zeros,
        zeros,
        starts,
        np.ones(len(starts)),
        -1.0,
        INF,
        np.zeros(grid.shape),
        np.zeros(grid.shape),
        False,
    )
    status = res[3]
    stuck = (status == kernels.STATUS_REVERSAL) | (status == kernels.STATUS_STAGNANT) | (status == kernels.STATUS_MAX_STEPS)
    return float(stuck.mean())


def build_from_solution(
    w: ArrivalField,
    spec: ScenarioSpec,
    eps: float,
    n_paths: int = 10_000,
    seed: int = 0,
    cap: float | None = None,
    window: int | None = None,
    keep_paths: int = 64,
) -> EquilibriumState:
    """Build the discrete equilibrium induced by an arrival field.

    Args:
        w: Arrival field on a 2D grid (from fronttrack, eikonal or a sampled closed form).
        spec: Scenario the field solves.
        eps: Boundary inflation; must be positive.
        n_paths: Approximate number of tubes, split between boundary and interior seeds in
            proportion to their weight.
        seed: Seed for the interior sample and the consistency probe.
        cap: Time cap ``T``; defaults to ``w.cap`` or, if that is infinite, to no cap.
        window: Half-width of the occupation averaging window in cells.
        keep_paths: Number of tubes whose polylines are kept in ``ensemble``.

    Raises:
        OpenConstraintError: if ``eps <= 0``.
        InconsistentFieldError: if more than 5% of descents from swept cells get stuck.
    """
    if not eps > 0:
        raise OpenConstraintError("open constraint: the boundary speed must be inflated by eps > 0")
    grid = w.grid
    h = grid.h
    rng = np.random.default_rng(seed)
    T = w.cap if cap is None else float(cap)
    T = INF if T is None else T
    initial = rasterize(spec.initial_region, grid)
    wv = np.ascontiguousarray(np.asarray(w.values, dtype=float))
    fin = np.isfinite(wv)
    swept = fin & (wv <= T) & ~initial.inside
    gx, gy = gradient(wv, grid, exclude=initial.inside)
    Lcell = np.hypot(gx, gy)
    X, Y = grid.centers()
    u = np.asarray(spec.u(X, Y), dtype=float) * np.ones(grid.shape)
    plus = np.maximum(1.0 + u, 0.0)
    minus = np.maximum(-(1.0 + u), 0.0)
    gam = spec.gamma
    hazard = np.where(swept, plus * Lcell / (1.0 + gam * Lcell), 0.0)
    cost = np.where(swept, Lcell, 0.0)
    Lvals = np.where(swept & (Lcell > 0), Lcell, -1.0 / gam)

    b_total = 0.0
    pts_b, w_b, seg_index, target, seg_len = _boundary_starts(spec, initial, eps, 1)
    b_total = float(target.sum())
    i_total = float((minus * swept).sum() * h**2)
    kappa = b_total + i_total
    if kappa <= 0:
        raise ValueError("the initial solid has no boundary and the melt absorbs nothing")
    n_b = max(1, int(round(n_paths * b_total / kappa))) if b_total > 0 else 0
    n_i = max(0, n_paths - n_b) if i_total > 0 else 0
    pts_b, w_b, seg_index, target, seg_len = _boundary_starts(spec, initial, eps, n_b)
    pts_i, w_i, _ = _interior_starts(grid, minus * swept, n_i, rng)
    starts = np.concatenate([pts_b, pts_i])
    weights = np.concatenate([w_b, w_i]) / kappa
    n_bnd = len(pts_b)

    gxc, gyc = np.ascontiguousarray(gx), np.ascontiguousarray(gy)
    stop = np.zeros(grid.shape, dtype=np.uint8)
    occ = np.zeros(grid.shape)
    kill = np.zeros(grid.shape)
    hz = np.ascontiguousarray(hazard)
    cst = np.ascontiguousarray(cost)
    k = min(keep_paths, len(starts))
    parts = []
    if k:
        parts.append(_trace(grid, wv, gxc, gyc, stop, hz, cst, starts[:k], weights[:k], 1.0, T, occ, kill, True))
    if len(starts) > k:
        parts.append(_trace(grid, wv, gxc, gyc, stop, hz, cst, starts[k:], weights[k:], 1.0, T, occ, kill, False))
    end_xy = np.concatenate([p[0] for p in parts])
    end_w = np.concatenate([p[1] for p in parts])
    left = np.concatenate([p[2] for p in parts])
    status = np.concatenate([p[3] for p in parts]).astype(np.int8)
    length = np.concatenate([p[4] for p in parts])
    path_cost = np.concatenate([p[5] for p in parts])

    out = status == kernels.STATUS_OUTSIDE
    escaped = float(left[out].sum())
    atom_sel = ~out & (left > 0)
    atoms = WeightedPoints(end_xy[atom_sel], left[atom_sel], np.minimum(end_w[atom_sel], T))
    entered = length > 0
    start_w = np.zeros(len(starts))
    pi = WeightedPoints(pts_b, weights[:n_bnd], start_w[:n_bnd])
    nu_int = WeightedPoints(pts_i, weights[n_bnd:], _cell_values(grid, wv, pts_i))
    start_w[n_bnd:] = nu_int.w

    ensemble: list[CharacteristicPath] = []
    if k:
        for r, poly in enumerate(parts[0][6]):
            P = np.asarray(poly, dtype=float)[::-1]
            ctg = _cell_values(grid, np.minimum(wv, T), P)
            theta = float(length[r]) if r < n_bnd else INF
            ensemble.append(
                CharacteristicPath(P, ctg, theta, float(length[r]), _status_name(int(status[r])), float(path_cost[r]), float(weights[r]))
            )

    q = occ / h**2
    core = _erode(swept, grid.periodic_y) & ~_edge_band(grid, EDGE_BAND)
    m = default_window(h) if window is None else int(window)
    if m > 0:
        q_win, fill = _window_fit(q, core, m, grid.periodic_y)
        # the estimate is only trusted where most of the window lies in the support
        reliable = core & (fill >= FULL_WINDOW)
    else:
        q_win, reliable = np.where(core, q, 0.0), core
    trapped = _consistency(grid, wv, gxc, gyc, initial, swept, rng)
    if trapped > TRAPPED_LIMIT:
        raise InconsistentFieldError(f"inconsistent field: {trapped:.1%} of descents never reach the initial solid")
    return EquilibriumState(
        spec=spec,
        eps=float(eps),
        kappa=kappa,
        cap=T,
        w=ScalarField2(grid, wv),
        L=CostField(ScalarField2(grid, Lvals)),
        q=ScalarField2(grid, q),
        q_window=ScalarField2(grid, q_win),
        core=core,
        reliable=reliable,
        swept=swept,
        initial=initial,
        kill=kill,
        atoms=atoms,
        nu_interior=nu_int,
        pi=pi,
        seg_index=seg_index,
        seg_target=target,
        seg_lengths=seg_len,
        entered=entered[:n_bnd],
        escaped=escaped,
        trapped_fraction=trapped,
        path_status=status,
        path_cost=path_cost,
        path_end_w=end_w,
        path_start_w=start_w,
        ensemble=ensemble,
        n_paths=len(starts),
        seed=seed,
        window=m,
    )


def _status_name(code: int) -> str:
    return {
        kernels.STATUS_MASK: "reached",
        kernels.STATUS_CAP: "cap",
        kernels.STATUS_REVERSAL: "ridge",
        kernels.STATUS_STAGNANT: "trapped",
        kernels.STATUS_OUTSIDE: "outside",
        kernels.STATUS_MAX_STEPS: "max_steps",
    }[code]


def _cell_values(grid: Grid2, values: NDArray[np.float64], pts: NDArray[np.float64]) -> NDArray[np.float64]:
    if len(pts) == 0:
        return np.zeros(0)
    i, j, _ = grid.locate(pts[:, 0], pts[:, 1])
    return np.asarray(values[i, j], dtype=float)


def trivial_state(spec: ScenarioSpec, grid: Grid2, eps: float) -> EquilibriumState:
    """All particles born and killed on the boundary at once; ``L = -1/gamma`` everywhere."""
    if not eps > 0:
        raise OpenConstraintError("open constraint: the boundary speed must be inflated by eps > 0")
    initial = rasterize(spec.initial_region, grid)
    pts, wts, seg_index, target, lens = _boundary_starts(spec, initial, eps, max(1, len(interface_segments(initial.phi(), grid))))
    kappa = float(target.sum())
    if kappa <= 0:
        raise ValueError("the initial solid has no boundary")
    zeros = np.zeros(grid.shape)
    wv = np.where(initial.inside, 0.0, INF)
    pi = WeightedPoints(pts, wts / kappa, np.zeros(len(pts)))
    none = np.zeros(grid.shape, dtype=bool)
    return EquilibriumState(
        spec=spec,
        eps=float(eps),
        kappa=kappa,
        cap=0.0,
        w=ScalarField2(grid, wv),
        L=CostField(ScalarField2(grid, np.full(grid.shape, -1.0 / spec.gamma))),
        q=ScalarField2(grid, zeros),
        q_window=ScalarField2(grid, zeros),
        core=none,
        reliable=none,
        swept=none,
        initial=initial,
        kill=zeros.copy(),
        atoms=WeightedPoints(pts, wts / kappa, np.zeros(len(pts))),
        nu_interior=WeightedPoints.empty(),
        pi=pi,
        seg_index=seg_index,
        seg_target=target,
        seg_lengths=lens,
        entered=np.ones(len(pts), dtype=bool),
        escaped=0.0,
        trapped_fraction=0.0,
        path_status=np.full(len(pts), kernels.STATUS_CAP, dtype=np.int8),
        path_cost=np.zeros(len(pts)),
        path_end_w=np.zeros(len(pts)),
        path_start_w=np.zeros(len(pts)),
        n_paths=len(pts),
    )


# --------------------------------------------------------------------------- checks


def fixed_point_residual(state: EquilibriumState, delta: float = 0.05) -> float:
    """``sup |L - 1/(kappa q - gamma)| / (|L| + 1)`` over cells with ``q > (1 + delta) gamma / kappa``.

    ``q`` is the window-fitted occupation density, and only cells where that estimate is reliable
    (interior of the swept region, window mostly inside it) take part. Returns ``0`` when no
    cell qualifies.
    """
    gam = state.spec.gamma
    kq = state.kappa * state.q_window.values
    sel = state.reliable & (kq > gam * (1.0 + delta))
    if not sel.any():
        return 0.0
    L = state.L.L.values[sel]
    pred = 1.0 / (kq[sel] - gam)
    return float(np.max(np.abs(L - pred) / (np.abs(L) + 1.0)))


def excess_measure(state: EquilibriumState, spec: ScenarioSpec | None = None, n_times: int = 21) -> ExcessMeasure:
    """Per-cell excess density, locked atoms and the cumulative ``E(t) = e({w <= t})``.

    Energies are in absolute units (``kappa`` times the probability measures).
    """
    spec = state.spec if spec is None else spec
    grid = state.grid
    X, Y = grid.centers()
    u = np.asarray(spec.u(X, Y), dtype=float) * np.ones(grid.shape)
    k = state.kappa
    nu_cells = np.zeros(grid.shape)
    if len(state.nu_interior):
        i, j, _ = grid.locate(state.nu_interior.xy[:, 0], state.nu_interior.xy[:, 1])
        np.add.at(nu_cells, (i, j), state.nu_interior.weight)
    density = np.where(state.swept, k * state.kill - k * nu_cells - (1.0 + u) * grid.h**2, 0.0)
    atoms = WeightedPoints(state.atoms.xy, k * state.atoms.weight, state.atoms.w)
    wv = state.w.values
    top = state.cap if math.isfinite(state.cap) else (float(wv[state.swept].max()) if state.swept.any() else 0.0)
    times = np.linspace(0.0, top, n_times)
    order = np.argsort(wv[state.swept], kind="stable")
    wsorted = wv[state.swept][order]
    csum = np.concatenate([[0.0], np.cumsum(density[state.swept][order])])
    aorder = np.argsort(atoms.w, kind="stable")
    asorted = atoms.w[aorder]
    acsum = np.concatenate([[0.0], np.cumsum(atoms.weight[aorder])])
    E = np.empty(n_times)
    for n, t in enumerate(times):
        E[n] = csum[np.searchsorted(wsorted, t, side="right")] + acsum[np.searchsorted(asorted, t, side="right")]
    # everything left, including atoms at the cap, counts at the final time
    E[-1] = float(density.sum() + atoms.total)
    return ExcessMeasure(density, atoms, times, E, k)


def check_boundary_condition(state: EquilibriumState, spec: ScenarioSpec | None = None, eps: float | None = None) -> BoundaryReport:
    """Compare ``kappa * pi`` per boundary segment with ``(gamma + V0 + eps) * length``.

    Only tubes that actually leave the boundary count, so immediate stops show up as deficits.

    Raises:
        OpenConstraintError: if ``eps <= 0``.
    """
    spec = state.spec if spec is None else spec
    eps = state.eps if eps is None else eps
    if not eps > 0:
        raise OpenConstraintError("open constraint: the boundary speed must be inflated by eps > 0")
    if len(state.seg_target) == 0:
        return BoundaryReport(0.0, np.zeros(0), np.zeros(0))
    measured = np.zeros(len(state.seg_target))
    np.add.at(measured, state.seg_index, state.kappa * state.pi.weight * state.entered)
    segs = interface_segments(state.initial.phi(), state.grid)
    keep = segs.lengths > 0
    mid = segs.midpoints[keep]
    target = (spec.gamma + spec.boundary_v0(mid[:, 0], mid[:, 1]) + eps) * segs.lengths[keep]
    dev = float(np.max(np.abs(measured - target) / target))
    return BoundaryReport(dev, measured, target)


def _bump(
    grid: Grid2, center: NDArray[np.float64], radius: float
) -> tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.float64]]:
    """Smooth bump ``exp(1 - 1/(1 - rho^2))`` and its gradient, summed over periodic images."""
    X, Y = grid.centers()
    phi = np.zeros(grid.shape)
    gx = np.zeros(grid.shape)
    gy = np.zeros(grid.shape)
    shifts = [0.0]
    if grid.periodic_y:
        n = int(math.ceil(radius / grid.height)) + 1
        shifts = [k * grid.height for k in range(-n, n + 1)]
    for s in shifts:
        dx = X - center[0]
        dy = Y - center[1] + s
        rho2 = (dx * dx + dy * dy) / radius**2
        inside = rho2 < 1.0
        if not inside.any():
            continue
        f = np.zeros(grid.shape)
        den = 1.0 - rho2[inside]
        f[inside] = np.exp(1.0 - 1.0 / den)
        c = np.zeros(grid.shape)
        c[inside] = -2.0 * f[inside] / den**2 / radius**2
        phi += f
        gx += c * dx
        gy += c * dy
    return phi, gx, gy


def _distance_inside(mask: NDArray[np.bool_], grid: Grid2) -> NDArray[np.float64]:
    if grid.periodic_y:
        tiled = np.concatenate([mask, mask, mask], axis=1)
        d = ndimage.distance_transform_edt(tiled)[:, grid.ny : 2 * grid.ny]
    else:
        d = ndimage.distance_transform_edt(np.pad(mask, 1))[1:-1, 1:-1]
    return d * grid.h


def distributional_residuals(
    state: EquilibriumState, n_tests: int = 20, seed: int = 0, min_cells: int = 10
) -> NDArray[np.float64]:
    """Relative weak-form residuals for random bumps inside the swept region.

    For each bump ``phi`` returns ``|int grad phi . X dx - kappa int phi d(mu - nu)| / ||phi||`` with
    ``X = grad w / |grad w|^2 + gamma grad w / |grad w|``. The scale ``||phi||`` is
    ``int |phi| |1+u| dx``, or ``int |grad phi . X| dx`` where ``1 + u`` vanishes on the support.
    """
    grid = state.grid
    rng = np.random.default_rng(seed)
    gam = state.spec.gamma
    wv = np.where(state.swept, state.w.values, INF)
    gx, gy = gradient(wv, grid, exclude=state.initial.inside)
    gn = np.hypot(gx, gy)
    ok = state.swept & (gn > 0)
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = np.where(ok, 1.0 / gn**2 + gam / gn, 0.0)
    Xx, Xy = gx * scale, gy * scale
    X, Y = grid.centers()
    u = np.asarray(state.spec.u(X, Y), dtype=float) * np.ones(grid.shape)
    dist = _distance_inside(state.core, grid)
    cand = np.nonzero(dist >= min_cells * grid.h)
    if len(cand[0]) == 0:
        raise ValueError("the swept region is too thin for interior test functions")
    k = state.kappa
    nu_cells = np.zeros(grid.shape)
    if len(state.nu_interior):
        i, j, _ = grid.locate(state.nu_interior.xy[:, 0], state.nu_interior.xy[:, 1])
        np.add.at(nu_cells, (i, j), state.nu_interior.weight)
    out = np.empty(n_tests)
    area = grid.h**2
    for n in range(n_tests):
        pick = int(rng.integers(len(cand[0])))
        ci, cj = cand[0][pick], cand[1][pick]
        c = np.array([X[ci, cj], Y[ci, cj]])
        radius = float(rng.uniform(0.3, 0.9)) * float(dist[ci, cj])
        radius = max(radius, 0.5 * min_cells * grid.h)
        phi, px, py = _bump(grid, c, radius)
        A = float(((px * Xx + py * Xy) * area).sum())
        B = k * float((phi * state.kill).sum()) - k * float((phi * nu_cells).sum())
        if len(state.atoms):
            B += k * float((_cell_values(grid, phi, state.atoms.xy) * state.atoms.weight).sum())
        norm = float((np.abs(phi) * np.abs(1.0 + u) * area).sum())
        if norm <= 0:
            norm = float((np.abs(px * Xx + py * Xy) * area).sum())
        out[n] = abs(A - B) / norm if norm > 0 else 0.0
    return out


def telescoping_errors(state: EquilibriumState) -> NDArray[np.float64]:
    """Relative mismatch between ``int L^+`` along each tube and the rise of ``w`` along it."""
    rise = state.path_end_w - state.path_start_w
    sel = np.isfinite(rise) & (rise > 0) & (state.path_status != kernels.STATUS_OUTSIDE)
    return np.abs(state.path_cost[sel] - rise[sel]) / rise[sel]


def occupation_floor_violation(state: EquilibriumState, tol: float = 0.05) -> float:
    """Fraction of occupied reliable cells with ``kappa q < (1 - tol) gamma``."""
    kq = state.kappa * state.q_window.values
    occ = state.reliable & (state.q_window.values > 0)
    if not occ.any():
        return 0.0
    return float((kq[occ] < (1.0 - tol) * state.spec.gamma).mean())
