"""Lagrangian front tracking of the cascade on a lattice.

Each marker carries the flux ``F = (V + gamma) * ds`` of the front element it represents, where
``ds`` is half the length of its two adjacent segments. Moving the element by ``V dt`` along the
normal absorbs ``(1 + u) V ds dt`` of it, and the speed is read back as ``V = F / ds - gamma``.
For a smooth front this is the acceleration law ``dV/dt = -V [(1 + u) + H (V + gamma)]``, with the
curvature entering through the change of ``ds``; written this way the boundary energy
``B = sum F`` balances the swept volume exactly, step by step.

Markers whose speed drops below a floor are arrested, and markers that run into another part of
the front are killed. Both lock their remaining flux into the excess-energy ledger.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, NamedTuple, Sequence

import numpy as np
from numpy.typing import NDArray
from scipy import ndimage
from scipy.spatial import cKDTree

from . import kernels
from .domain import (
    INF,
    Grid2,
    RegionMask,
    ScalarField2,
    ScenarioSpec,
    extract_contours,
    rasterize,
)

__all__ = [
    "CFLError",
    "Marker",
    "Chain",
    "Front",
    "ArrivalField",
    "EnergyLedger",
    "Snapshot",
    "RunResult",
    "ContinuationResult",
    "initialize_front",
    "stable_dt",
    "step",
    "run",
    "continuation_run",
    "sublevel_mask",
]

CFL_SAFETY = 0.4
# flux/spacing coupling behaves like a wave with speed sqrt(V (V + gamma))
WAVE_SAFETY = 0.6
SPACING = 1.5
MIN_SPACING = 0.75
INSERT_SPACING = 2.0
FLOOR_FACTOR = 1e-4
MIN_LOOP = 5


class CFLError(ValueError):
    """The requested step exceeds the stability bound; raised before anything moves."""


@dataclass(frozen=True)
class Marker:
    """Read-only view of one marker."""

    position: tuple[float, float]
    V: float
    H: float
    alive: bool
    arrest_time: float | None


@dataclass(eq=False)
class Chain:
    """Ordered markers of one front component.

    ``wrap`` closes the chain: the successor of the last marker is ``P[0] + wrap``. Loops have a
    zero wrap, bands across a periodic strip wrap by the strip height. Open chains end on the
    grid boundary.
    """

    P: NDArray[np.float64]
    F: NDArray[np.float64]
    alive: NDArray[np.bool_]
    arrest: NDArray[np.float64]
    normal_at_death: NDArray[np.float64]
    wrap: NDArray[np.float64]
    closed: bool
    cid: int

    def __len__(self) -> int:
        return len(self.P)


class _Geom(NamedTuple):
    Pp: NDArray[np.float64]
    Pn: NDArray[np.float64]
    ell: NDArray[np.float64]
    ds: NDArray[np.float64]
    normal: NDArray[np.float64]
    H: NDArray[np.float64]


def _shift(a: NDArray[Any], k: int) -> NDArray[Any]:
    """``np.roll(a, k, axis=0)`` for ``k = +-1`` without the generic overhead."""
    if k == 1:
        return np.concatenate((a[-1:], a[:-1]))
    return np.concatenate((a[1:], a[:1]))


def _geometry(P: NDArray[np.float64], wrap: NDArray[np.float64], closed: bool) -> _Geom:
    n = len(P)
    Pn = _shift(P, -1)
    Pp = _shift(P, 1)
    if closed:
        Pn[-1] = Pn[-1] + wrap
        Pp[0] = Pp[0] - wrap
    else:
        Pn[-1] = P[-1]
        Pp[0] = P[0]
    seg = Pn - P
    ell = np.hypot(seg[:, 0], seg[:, 1])
    ell_prev = _shift(ell, 1)
    if not closed:
        ell_prev[0] = 0.0
    ds = 0.5 * (ell + ell_prev)
    tang = Pn - Pp
    tn = np.hypot(tang[:, 0], tang[:, 1])
    tn = np.where(tn > 0, tn, 1.0)
    tang = tang / tn[:, None]
    normal = np.stack([tang[:, 1], -tang[:, 0]], axis=1)
    a = P - Pp
    b = Pn - P
    cross = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
    den = ell_prev * ell * np.hypot(*(Pn - Pp).T)
    with np.errstate(divide="ignore", invalid="ignore"):
        H = np.where(den > 0, 2.0 * cross / den, 0.0)
    if n < 3:
        H = np.zeros(n)
    return _Geom(Pp, Pn, ell, ds, normal, H)


@dataclass(frozen=True, eq=False)
class ArrivalField:
    """First-touch times on the lattice: ``0`` on the initial solid, ``inf`` where never swept."""

    w: ScalarField2
    cap: float = INF

    @property
    def grid(self) -> Grid2:
        return self.w.grid

    @property
    def values(self) -> NDArray[np.float64]:
        return self.w.values

    def capped(self) -> NDArray[np.float64]:
        return np.minimum(self.w.values, self.cap) if math.isfinite(self.cap) else self.w.values

    def to_csv(self, path: str | Path) -> None:
        from .io import write_csv

        X, Y = self.grid.centers()
        rows = zip(X.ravel(), Y.ravel(), self.w.values.ravel())
        write_csv(path, ["x", "y", "w"], rows)

    def to_pgm(self, path: str | Path) -> None:
        from .io import write_pgm

        cap = self.cap if math.isfinite(self.cap) else None
        write_pgm(path, np.minimum(self.w.values, self.cap), cap)


@dataclass(eq=False)
class EnergyLedger:
    """Time series of the boundary energy and its sinks.

    ``E = B0 - B - volumetric`` is the cumulative excess. It equals the locked energy
    (arrests plus collisions) up to the discretization error measured by :meth:`balance_error`.
    """

    B0: float
    times: list[float] = field(default_factory=list)
    boundary: list[float] = field(default_factory=list)
    volumetric: list[float] = field(default_factory=list)
    locked_arrest: list[float] = field(default_factory=list)
    locked_collision: list[float] = field(default_factory=list)
    escaped: list[float] = field(default_factory=list)
    alive: list[int] = field(default_factory=list)
    first_topology_time: float = INF
    tol_energy: float = 0.02

    def record(self, t: float, B: float, vol: float, la: float, lc: float, esc: float, n_alive: int) -> None:
        self.times.append(t)
        self.boundary.append(B)
        self.volumetric.append(vol)
        self.locked_arrest.append(la)
        self.locked_collision.append(lc)
        self.escaped.append(esc)
        self.alive.append(n_alive)

    @property
    def E(self) -> NDArray[np.float64]:
        return self.B0 - np.asarray(self.boundary) - np.asarray(self.volumetric)

    @property
    def locked(self) -> NDArray[np.float64]:
        return np.asarray(self.locked_arrest) + np.asarray(self.locked_collision)

    @property
    def final_E(self) -> float:
        return float(self.E[-1])

    def E_at(self, t: float) -> float:
        k = int(np.searchsorted(np.asarray(self.times), t, side="right")) - 1
        return float(self.E[max(k, 0)])

    def balance_error(self) -> NDArray[np.float64]:
        """``|B0 - B - volumetric - locked - escaped|`` per record."""
        return np.abs(self.E - self.locked - np.asarray(self.escaped))

    def admissible(self) -> bool:
        tol = self.tol_energy * self.B0
        E = self.E
        return bool((E >= -tol).all() and (np.diff(E) >= -tol).all()) if len(E) else True

    def to_json(self) -> dict[str, Any]:
        return {
            "B0": self.B0,
            "t": list(self.times),
            "boundary_energy": list(self.boundary),
            "volumetric": list(self.volumetric),
            "locked_arrest": list(self.locked_arrest),
            "locked_collision": list(self.locked_collision),
            "escaped": list(self.escaped),
            "E": self.E.tolist(),
            "first_topology_time": self.first_topology_time,
            "tol_energy": self.tol_energy,
        }


@dataclass(eq=False)
class Front:
    """Mutable state of a run: marker chains, clock, arrival times and ledger."""

    chains: list[Chain]
    t: float
    w: NDArray[np.float64]
    grid: Grid2
    initial: RegionMask
    gamma: float
    v_floor: float
    ledger: EnergyLedger
    volumetric: float = 0.0
    locked_arrest: float = 0.0
    locked_collision: float = 0.0
    escaped: float = 0.0
    steps: int = 0
    u_cells: NDArray[np.float64] | None = None

    @property
    def loops(self) -> list[list[Marker]]:
        return [self.markers(c) for c in self.chains]

    def markers(self, chain: Chain) -> list[Marker]:
        g = _geometry(chain.P, chain.wrap, chain.closed)
        V = np.where(chain.alive, chain.F / np.where(g.ds > 0, g.ds, 1.0) - self.gamma, 0.0)
        return [
            Marker(
                (float(p[0]), float(p[1])),
                float(max(v, 0.0)),
                float(hh),
                bool(a),
                None if math.isnan(at) else float(at),
            )
            for p, v, hh, a, at in zip(chain.P, V, g.H, chain.alive, chain.arrest)
        ]

    @property
    def n_alive(self) -> int:
        return int(sum(int(c.alive.sum()) for c in self.chains))

    @property
    def boundary_energy(self) -> float:
        return float(sum(float(c.F[c.alive].sum()) for c in self.chains))

    @property
    def swept(self) -> RegionMask:
        """Cells reached by time ``t`` outside the initial solid."""
        return RegionMask(self.grid, np.isfinite(self.w) & (self.w <= self.t) & ~self.initial.inside)

    def arrival(self, cap: float = INF) -> ArrivalField:
        return ArrivalField(ScalarField2(self.grid, self.w), cap)


def _resample_closed(points: NDArray[np.float64], wrap: NDArray[np.float64], spacing: float) -> NDArray[np.float64]:
    pts = np.vstack([points, points[:1] + wrap])
    seg = np.hypot(*np.diff(pts, axis=0).T)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    total = s[-1]
    n = max(MIN_LOOP + 1, int(math.ceil(total / spacing)))
    targets = np.arange(n) * total / n
    return np.stack([np.interp(targets, s, pts[:, 0]), np.interp(targets, s, pts[:, 1])], axis=1)


def _resample_open(points: NDArray[np.float64], spacing: float) -> NDArray[np.float64]:
    seg = np.hypot(*np.diff(points, axis=0).T)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    total = s[-1]
    n = max(2, int(math.ceil(total / spacing)) + 1)
    targets = np.linspace(0.0, total, n)
    return np.stack([np.interp(targets, s, points[:, 0]), np.interp(targets, s, points[:, 1])], axis=1)


def _wrap_xy(grid: Grid2, P: NDArray[np.float64]) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    return P[:, 0], grid.wrap_y(P[:, 1])


def _project_to_level(spec: ScenarioSpec, grid: Grid2, P: NDArray[np.float64]) -> NDArray[np.float64]:
    """Newton steps onto the zero set of the region's level function (moves capped at ``h/2``)."""
    region = spec.initial_region
    d = 1e-6 * grid.h
    for _ in range(3):
        x, y = _wrap_xy(grid, P)
        phi = np.asarray(region.level(x, y), dtype=float)
        gx = (np.asarray(region.level(x + d, y)) - np.asarray(region.level(x - d, y))) / (2 * d)
        gy = (np.asarray(region.level(x, y + d)) - np.asarray(region.level(x, y - d))) / (2 * d)
        g2 = gx * gx + gy * gy
        ok = g2 > 1e-12
        step = np.where(ok, phi / np.where(ok, g2, 1.0), 0.0)
        move = np.stack([step * gx, step * gy], axis=1)
        norm = np.hypot(move[:, 0], move[:, 1])
        move *= np.minimum(1.0, 0.5 * grid.h / np.maximum(norm, 1e-300))[:, None]
        P = P - move
    return P


def initialize_front(spec: ScenarioSpec, grid: Grid2, eps: float) -> Front:
    """Seed markers on the contour of the initial solid with speed ``V0 + eps``.

    Markers are spaced about ``1.5 h`` apart. For regions with a level function they are then
    projected onto its zero set, which removes the contour's interpolation error from the
    initial curvature. Raises ``ValueError`` when the region has no boundary inside the grid.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    mask = rasterize(spec.initial_region, grid)
    contours = [c for c in extract_contours(mask.phi(), grid) if len(c.points) >= 2]
    if not contours:
        raise ValueError("initial region has an empty boundary on this grid")
    h = grid.h
    chains: list[Chain] = []
    v0_max = 0.0
    for k, c in enumerate(contours):
        wrap = np.asarray(c.wrap, dtype=float)
        if c.closed:
            P = _resample_closed(c.points, wrap, SPACING * h)
        else:
            P = _resample_open(c.points, SPACING * h)
        if spec.initial_region.kind != "lattice_mask":
            P = _project_to_level(spec, grid, P)
        x, y = _wrap_xy(grid, P)
        V = np.asarray(spec.boundary_v0(x, y), dtype=float) + eps
        v0_max = max(v0_max, float(V.max()) - eps)
        g = _geometry(P, wrap, c.closed)
        F = (V + spec.gamma) * g.ds
        n = len(P)
        chains.append(Chain(P, F, np.ones(n, bool), np.full(n, np.nan), np.zeros((n, 2)), wrap, c.closed, k))
    w = np.where(mask.inside, 0.0, INF)
    B0 = float(sum(c.F.sum() for c in chains))
    ledger = EnergyLedger(B0)
    X, Y = grid.centers()
    u_cells = np.asarray(spec.u(X, Y), dtype=float) * np.ones(grid.shape)
    front = Front(chains, 0.0, w, grid, mask, spec.gamma, FLOOR_FACTOR * (v0_max + eps), ledger, u_cells=u_cells)
    ledger.record(0.0, B0, 0.0, 0.0, 0.0, 0.0, front.n_alive)
    return front


def _speeds(front: Front, chain: Chain, g: _Geom) -> NDArray[np.float64]:
    return _flux_speed(chain.F, chain.alive, chain.closed, g.ds, front.gamma)


def _flux_speed(
    F: NDArray[np.float64], alive: NDArray[np.bool_], closed: bool, ds: NDArray[np.float64], gamma: float
) -> NDArray[np.float64]:
    # flux density over a (1, 2, 1) stencil of live neighbours damps marker-scale oscillations
    a = alive.astype(float)
    F = F * a
    ds = ds * a
    num = 2.0 * F
    den = 2.0 * ds
    if len(F) >= 3:
        Fl, Fr = _shift(F, 1), _shift(F, -1)
        dl, dr = _shift(ds, 1), _shift(ds, -1)
        if not closed:
            Fl[0] = Fr[-1] = dl[0] = dr[-1] = 0.0
        num = num + Fl + Fr
        den = den + dl + dr
    den = np.where(den > 0, den, 1.0)
    return np.where(alive, num / den - gamma, 0.0)


def _rhs(
    front: Front, spec: ScenarioSpec, c: Chain, P: NDArray[np.float64], F: NDArray[np.float64]
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Marker velocity and flux loss ``-(1+u) V ds`` at state ``(P, F)``."""
    g = _geometry(P, c.wrap, c.closed)
    V = np.maximum(_flux_speed(F, c.alive, c.closed, g.ds, front.gamma), 0.0)
    x, y = _wrap_xy(front.grid, P)
    u = np.asarray(spec.u(x, y), dtype=float) * np.ones(len(P))
    dP = V[:, None] * g.normal
    dF = np.where(c.alive, -(1.0 + u) * V * g.ds, 0.0)
    return dP, dF


def stable_dt(front: Front, spec: ScenarioSpec) -> float:
    """Largest safe step over live markers.

    ``min(0.4 h / max V, 0.4 / max |(1+u) + H (V + gamma)|, 0.6 min ds / max sqrt(V (V + gamma)))``.
    """
    vmax = 0.0
    rmax = 0.0
    wave = INF
    for c in front.chains:
        if not c.alive.any():
            continue
        g = _geometry(c.P, c.wrap, c.closed)
        V = np.maximum(_speeds(front, c, g), 0.0)
        x, y = _wrap_xy(front.grid, c.P)
        u = np.asarray(spec.u(x, y), dtype=float) * np.ones(len(c.P))
        r = np.abs((1.0 + u) + g.H * (V + front.gamma))
        vmax = max(vmax, float(V[c.alive].max()))
        rmax = max(rmax, float(r[c.alive].max()))
        c2 = float((V * (V + front.gamma))[c.alive].max())
        if c2 > 0:
            wave = min(wave, float(g.ds[c.alive].min()) / np.sqrt(c2))
    a = front.grid.h / vmax if vmax > 0 else INF
    b = 1.0 / rmax if rmax > 0 else INF
    return min(CFL_SAFETY * min(a, b), WAVE_SAFETY * wave)


def _stamp(front: Front, tri: list[NDArray[np.float64]], tt: list[NDArray[np.float64]]) -> None:
    if not tri:
        return
    T = np.ascontiguousarray(np.concatenate(tri))
    TT = np.ascontiguousarray(np.concatenate(tt))
    g = front.grid
    new = kernels.stamp_triangles(front.w, T, TT, g.origin[0], g.origin[1], g.h, g.periodic_y)
    if len(new):
        front.volumetric += float((1.0 + front.u_cells.reshape(-1)[new]).sum() * g.h**2)


def _fill_disks(front: Front, centers: NDArray[np.float64], radii: NDArray[np.float64], t: float) -> None:
    """Give every unswept cell center within the disks the time ``t``."""
    g = front.grid
    if len(centers) == 0:
        return
    r_cells = int(math.ceil(float(radii.max()) / g.h)) + 1
    ci = np.floor((centers[:, 0] - g.origin[0]) / g.h).astype(np.int64)
    cj = np.floor((centers[:, 1] - g.origin[1]) / g.h).astype(np.int64)
    flat = front.w.reshape(-1)
    hits: list[NDArray[np.int64]] = []
    for di in range(-r_cells, r_cells + 1):
        for dj in range(-r_cells, r_cells + 1):
            ii = ci + di
            jj = cj + dj
            px = g.origin[0] + (ii + 0.5) * g.h
            py = g.origin[1] + (jj + 0.5) * g.h
            ok = np.hypot(px - centers[:, 0], py - centers[:, 1]) <= radii
            ok &= (ii >= 0) & (ii < g.nx)
            if g.periodic_y:
                jj = np.mod(jj, g.ny)
            else:
                ok &= (jj >= 0) & (jj < g.ny)
            if ok.any():
                hits.append(ii[ok] * g.ny + jj[ok])
    if not hits:
        return
    idx = np.unique(np.concatenate(hits))
    idx = idx[np.isinf(flat[idx])]
    flat[idx] = t
    front.volumetric += float((1.0 + front.u_cells.reshape(-1)[idx]).sum() * g.h**2)


def _fill_polygon(front: Front, P: NDArray[np.float64], t: float) -> None:
    """Give unswept cell centers inside the closed polygon ``P`` the time ``t``."""
    g = front.grid
    lo = P.min(axis=0)
    hi = P.max(axis=0)
    i0 = max(int(math.floor((lo[0] - g.origin[0]) / g.h)), 0)
    i1 = min(int(math.ceil((hi[0] - g.origin[0]) / g.h)), g.nx - 1)
    j0 = int(math.floor((lo[1] - g.origin[1]) / g.h))
    j1 = int(math.ceil((hi[1] - g.origin[1]) / g.h))
    if not g.periodic_y:
        j0, j1 = max(j0, 0), min(j1, g.ny - 1)
    if i1 < i0 or j1 < j0:
        return
    ii, jj = np.meshgrid(np.arange(i0, i1 + 1), np.arange(j0, j1 + 1), indexing="ij")
    px = g.origin[0] + (ii.ravel() + 0.5) * g.h
    py = g.origin[1] + (jj.ravel() + 0.5) * g.h
    inside = np.zeros(px.size, dtype=bool)
    Q = np.vstack([P, P[:1]])
    for (x0, y0), (x1, y1) in zip(Q[:-1], Q[1:]):
        crosses = (y0 > py) != (y1 > py)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = x0 + (py - y0) * (x1 - x0) / (y1 - y0)
        inside ^= crosses & (px < xint)
    jw = np.mod(jj.ravel(), g.ny) if g.periodic_y else jj.ravel()
    idx = ii.ravel()[inside] * g.ny + jw[inside]
    flat = front.w.reshape(-1)
    idx = np.unique(idx)
    idx = idx[np.isinf(flat[idx])]
    flat[idx] = t
    front.volumetric += float((1.0 + front.u_cells.reshape(-1)[idx]).sum() * g.h**2)


def _kill(front: Front, chain: Chain, sel: NDArray[np.bool_], t: float, normal: NDArray[np.float64], reason: str) -> None:
    sel = sel & chain.alive
    if not sel.any():
        return
    lost = float(chain.F[sel].sum())
    if reason == "arrest":
        front.locked_arrest += lost
    elif reason == "collision":
        front.locked_collision += lost
    else:
        front.escaped += lost
    chain.alive[sel] = False
    chain.arrest[sel] = t
    chain.normal_at_death[sel] = normal[sel]
    front.ledger.first_topology_time = min(front.ledger.first_topology_time, t)


def _point_segment_distance(p: NDArray[np.float64], a: NDArray[np.float64], b: NDArray[np.float64]) -> NDArray[np.float64]:
    ab = b - a
    den = np.einsum("ij,ij->i", ab, ab)
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(den > 0, np.einsum("ij,ij->i", p - a, ab) / den, 0.0)
    s = np.clip(s, 0.0, 1.0)
    q = a + s[:, None] * ab
    return np.hypot(*(p - q).T)


def _collisions(front: Front, geoms: list[_Geom], t: float) -> None:
    """Kill facing markers of different front parts that came within one cell of each other."""
    g = front.grid
    h = g.h
    chains = front.chains
    P_all = np.concatenate([c.P for c in chains])
    if len(P_all) < 2:
        return
    N_all = np.concatenate([np.where(c.alive[:, None], gm.normal, c.normal_at_death) for c, gm in zip(chains, geoms)])
    Pp_all = np.concatenate([gm.Pp for gm in geoms])
    Pn_all = np.concatenate([gm.Pn for gm in geoms])
    alive_all = np.concatenate([c.alive for c in chains])
    cid = np.concatenate([np.full(len(c), k) for k, c in enumerate(chains)])
    idx = np.concatenate([np.arange(len(c)) for c in chains])
    size = np.concatenate([np.full(len(c), len(c)) for c in chains])
    closed = np.concatenate([np.full(len(c), c.closed) for c in chains])
    x = P_all[:, 0]
    y = P_all[:, 1]
    if g.periodic_y:
        xs = x - x.min()
        box = [max(2.0 * (xs.max() + 4 * h), 1.0), g.height]
        data = np.stack([xs, np.mod(y - g.origin[1], g.height)], axis=1)
        data[:, 1] = np.where(data[:, 1] >= g.height, 0.0, data[:, 1])
        tree = cKDTree(data, boxsize=box)
    else:
        data = P_all
        tree = cKDTree(data)
    pairs = tree.query_pairs(2.5 * h, output_type="ndarray")
    if len(pairs) == 0:
        return
    a, b = pairs[:, 0], pairs[:, 1]
    keep = alive_all[a] | alive_all[b]
    same = cid[a] == cid[b]
    gap = np.abs(idx[a] - idx[b])
    gap = np.where(closed[a], np.minimum(gap, size[a] - gap), gap)
    keep &= ~(same & (gap <= 3))
    keep &= np.einsum("ij,ij->i", N_all[a], N_all[b]) < -0.3
    a, b = a[keep], b[keep]
    if len(a) == 0:
        return
    rel = P_all[b] - P_all[a]
    if g.periodic_y:
        rel[:, 1] -= np.round(rel[:, 1] / g.height) * g.height
    # distance from marker a to the polyline around b, and vice versa
    zero = np.zeros_like(rel)
    d_ab = np.minimum(
        _point_segment_distance(zero, rel + (Pp_all[b] - P_all[b]), rel),
        _point_segment_distance(zero, rel, rel + (Pn_all[b] - P_all[b])),
    )
    d_ba = np.minimum(
        _point_segment_distance(zero, -rel + (Pp_all[a] - P_all[a]), -rel),
        _point_segment_distance(zero, -rel, -rel + (Pn_all[a] - P_all[a])),
    )
    d = np.minimum(d_ab, d_ba)
    # facing each other: b lies ahead of a along a's normal (and vice versa)
    ahead = (np.einsum("ij,ij->i", rel, N_all[a]) > -0.25 * h) & (np.einsum("ij,ij->i", -rel, N_all[b]) > -0.25 * h)
    hit = (d < h) & ahead
    if not hit.any():
        return
    a, b, rel = a[hit], b[hit], rel[hit]
    dead = np.zeros(len(P_all), dtype=bool)
    dead[a] = True
    dead[b] = True
    mids = P_all[a] + 0.5 * rel
    radii = np.maximum(0.5 * np.hypot(*rel.T), 0.5 * h) + 0.5 * h
    offsets = np.cumsum([0] + [len(c) for c in chains])
    for k, c in enumerate(chains):
        sel = dead[offsets[k] : offsets[k + 1]]
        _kill(front, c, sel, t, geoms[k].normal, "collision")
    _fill_disks(front, mids, radii, t)


def _resample_chain(front: Front, c: Chain) -> Chain:
    """Insert markers on long live segments and drop crowded ones, conserving ``sum F``."""
    h = front.grid.h
    gam = front.gamma
    g = _geometry(c.P, c.wrap, c.closed)
    n = len(c.P)
    nxt = (np.arange(n) + 1) % n
    live_seg = c.alive & c.alive[nxt]
    if not c.closed:
        live_seg[-1] = False
    long_seg = live_seg & (g.ell > INSERT_SPACING * h)
    if long_seg.any():
        V = _speeds(front, c, g)
        k = np.nonzero(long_seg)[0]
        ell = g.ell[k]
        Vn = 0.5 * (V[k] + V[nxt[k]])
        F = c.F.copy()
        np.subtract.at(F, k, (V[k] + gam) * ell / 4.0)
        np.subtract.at(F, nxt[k], (V[nxt[k]] + gam) * ell / 4.0)
        Fn = (Vn + gam) * ell / 2.0
        mid = 0.5 * (c.P[k] + g.Pn[k])
        P = np.insert(c.P, k + 1, mid, axis=0)
        F = np.insert(F, k + 1, Fn)
        alive = np.insert(c.alive, k + 1, True)
        arrest = np.insert(c.arrest, k + 1, np.nan)
        nd = np.insert(c.normal_at_death, k + 1, np.zeros((len(k), 2)), axis=0)
        c = Chain(P, F, alive, arrest, nd, c.wrap, c.closed, c.cid)
        g = _geometry(c.P, c.wrap, c.closed)
        n = len(c.P)
        nxt = (np.arange(n) + 1) % n
    if int(c.alive.sum()) <= 2 * MIN_LOOP:
        return c
    prv = (np.arange(n) - 1) % n
    short = (g.ell < MIN_SPACING * h) & c.alive & c.alive[nxt] & c.alive[(nxt + 1) % n]
    if not c.closed:
        short[-2:] = False
    cand = np.nonzero(short)[0]
    if cand.size == 0:
        return c
    # drop marker nxt[k]; skip candidates whose neighbourhoods overlap
    drop: list[int] = []
    taken = np.zeros(n, dtype=bool)
    for k in cand:
        r = nxt[k]
        if taken[k] or taken[r] or taken[nxt[r]] or taken[prv[k]]:
            continue
        drop.append(r)
        taken[k] = taken[r] = taken[nxt[r]] = True
    if not drop:
        return c
    d = np.asarray(drop)
    # the sliver between a dropped vertex and the new chord may lie ahead of the front
    tri = np.hstack([g.Pp[d], c.P[d], g.Pn[d]])
    _stamp(front, [tri], [np.full((len(d), 3), front.t)])
    F = c.F.copy()
    np.add.at(F, prv[d], 0.5 * F[d])
    np.add.at(F, nxt[d], 0.5 * F[d])
    keep = np.ones(n, dtype=bool)
    keep[d] = False
    return Chain(c.P[keep], F[keep], c.alive[keep], c.arrest[keep], c.normal_at_death[keep], c.wrap, c.closed, c.cid)


def step(front: Front, spec: ScenarioSpec, dt: float, bound: float | None = None) -> Front:
    """Advance all live markers by one explicit step of length ``dt``.

    Raises :class:`CFLError` before touching the state when ``dt`` exceeds :func:`stable_dt`.
    ``bound`` passes an already computed :func:`stable_dt` for the current state.
    """
    if not dt > 0:
        raise ValueError("time step must be positive")
    if bound is None:
        bound = stable_dt(front, spec)
    if dt > bound * (1.0 + 1e-9):
        raise CFLError(f"time step {dt:.3e} exceeds the stability bound {bound:.3e}")
    grid = front.grid
    t0 = front.t
    t1 = t0 + dt
    tri: list[NDArray[np.float64]] = []
    tt: list[NDArray[np.float64]] = []
    geoms: list[_Geom] = []
    for c in front.chains:
        g = _geometry(c.P, c.wrap, c.closed)
        if not c.alive.any():
            geoms.append(g)
            continue
        # three-stage strong-stability-preserving Runge-Kutta keeps the spacing/speed oscillation damped
        k1P, k1F = _rhs(front, spec, c, c.P, c.F)
        P1, F1 = c.P + dt * k1P, c.F + dt * k1F
        k2P, k2F = _rhs(front, spec, c, P1, F1)
        P2, F2 = 0.75 * c.P + 0.25 * (P1 + dt * k2P), 0.75 * c.F + 0.25 * (F1 + dt * k2F)
        k3P, k3F = _rhs(front, spec, c, P2, F2)
        P_new = c.P / 3.0 + 2.0 / 3.0 * (P2 + dt * k3P)
        F = np.where(c.alive, c.F / 3.0 + 2.0 / 3.0 * (F2 + dt * k3F), c.F)
        P_new = np.where(c.alive[:, None], P_new, c.P)
        g_new = _geometry(P_new, c.wrap, c.closed)
        # swept quads (old segment -> new segment) split into two triangles each
        n = len(c.P)
        seg = np.arange(n if c.closed else n - 1)
        nx_ = (seg + 1) % n
        moved = c.alive[seg] | c.alive[nx_]
        seg, nx_ = seg[moved], nx_[moved]
        A = c.P[seg]
        B = g.Pn[seg]
        D = P_new[seg]
        C = g_new.Pn[seg]
        tri.append(np.concatenate([np.hstack([A, B, C]), np.hstack([A, C, D])]))
        m = len(seg)
        tt.append(
            np.concatenate(
                [
                    np.tile([t0, t0, t1], (m, 1)),
                    np.tile([t0, t1, t1], (m, 1)),
                ]
            )
        )
        c.P = P_new
        c.F = F
        geoms.append(g_new)
    _stamp(front, tri, tt)
    front.t = t1
    # arrests and markers leaving the grid
    for c, g in zip(front.chains, geoms):
        if not c.alive.any():
            continue
        V = _speeds(front, c, g)
        _kill(front, c, c.alive & (V <= front.v_floor), t1, g.normal, "arrest")
        fi = (c.P[:, 0] - grid.origin[0]) / grid.h
        out = (fi < 0) | (fi >= grid.nx)
        if not grid.periodic_y:
            fj = (c.P[:, 1] - grid.origin[1]) / grid.h
            out |= (fj < 0) | (fj >= grid.ny)
        _kill(front, c, out, t1, g.normal, "escaped")
    _collisions(front, geoms, t1)
    # collapse of tiny loops
    for c in front.chains:
        if c.closed and c.alive.any() and (int(c.alive.sum()) < MIN_LOOP or len(c) < MIN_LOOP):
            g = _geometry(c.P, c.wrap, c.closed)
            if not c.wrap.any():
                _fill_polygon(front, c.P, t1)
            _kill(front, c, c.alive.copy(), t1, g.normal, "collision")
    front.chains = [_resample_chain(front, c) if c.alive.any() else c for c in front.chains]
    front.steps += 1
    front.ledger.record(
        t1,
        front.boundary_energy,
        front.volumetric,
        front.locked_arrest,
        front.locked_collision,
        front.escaped,
        front.n_alive,
    )
    return front


@dataclass(frozen=True, eq=False)
class Snapshot:
    """Aggregate ``D_t`` (initial solid plus everything reached by ``t``)."""

    t: float
    mask: RegionMask


class RunResult(NamedTuple):
    arrival: ArrivalField
    ledger: EnergyLedger
    snapshots: list[Snapshot]
    front: Front


def _reached_level(reached: NDArray[np.bool_], grid: Grid2) -> NDArray[np.float64]:
    """Approximate signed distance to the edge of ``reached`` (negative inside).

    The indicator is blurred with a one-cell Gaussian; across a straight edge the blurred value
    falls through 1/2 with slope ``1 / (sigma sqrt(2 pi))``, which converts it to a distance.
    This gives the arrest and never-reached boundaries a sub-cell position.
    """
    mode = ["nearest", "wrap" if grid.periodic_y else "nearest"]
    s = ndimage.gaussian_filter(reached.astype(float), sigma=1.0, mode=mode, truncate=3.0)
    return (0.5 - s) * math.sqrt(2.0 * math.pi) * grid.h


def sublevel_mask(w: NDArray[np.float64], t: float, initial: RegionMask, grid: Grid2) -> RegionMask:
    """``{w <= t}`` with a distance-like sub-cell level for contouring.

    Outside the initial solid the level is the larger of ``(w - t) / |grad w|`` and the level of
    the reached set ``{w < inf}``, whose edge carries no arrival-time information. Inside the
    initial solid it is the solid's own level (or ``-h/2`` for lattice masks).
    """
    from .eikonal import gradient

    w = np.asarray(w, dtype=float)
    fin = np.isfinite(w)
    gx, gy = gradient(w, grid, exclude=initial.inside)
    gn = np.hypot(gx, gy)
    gn = np.where(gn > 0, gn, 1.0)
    edge = _reached_level(fin | initial.inside, grid)
    lv = np.where(fin, np.maximum((w - t) / gn, edge), np.maximum(edge, 0.0))
    tiny = 1e-6 * grid.h
    inside = initial.inside | (fin & (w <= t))
    # the level must agree with the cell classification
    lv = np.where(inside, np.minimum(lv, -tiny), np.maximum(lv, tiny))
    base = initial.level if initial.level is not None else np.where(initial.inside, -0.5 * grid.h, 0.5 * grid.h)
    lv = np.where(initial.inside, np.minimum(base, 0.0), lv)
    return RegionMask(grid, inside, lv)


def run(
    spec: ScenarioSpec,
    grid: Grid2,
    eps: float,
    cap: float | None = None,
    snapshot_times: Sequence[float] | None = None,
    n_snapshots: int = 10,
    max_steps: int = 1_000_000,
) -> RunResult:
    """Integrate until every marker is dead or the clock reaches the cap.

    Returns the arrival field (``w`` on cells reached by the cap, ``inf`` elsewhere), the ledger
    and nested snapshots of the aggregate. Admissibility of the ledger is asserted.
    """
    T = spec.cap if cap is None else cap
    T = INF if T is None else float(T)
    front = initialize_front(spec, grid, eps)
    while front.n_alive and front.t < T and front.steps < max_steps:
        bound = stable_dt(front, spec)
        dt = min(bound, T - front.t)
        if not dt > 0:
            break
        step(front, spec, dt, bound)
    arrival = front.arrival(T)
    end = front.t
    if snapshot_times is None:
        snapshot_times = list(np.linspace(0.0, end, n_snapshots)) if end > 0 else [0.0]
    snaps = [Snapshot(float(s), sublevel_mask(front.w, float(s), front.initial, grid)) for s in snapshot_times]
    ledger = front.ledger
    if not ledger.admissible():
        raise AssertionError("energy ledger violates admissibility (E < -tol or decreasing)")
    return RunResult(arrival, ledger, snaps, front)


class ContinuationResult(NamedTuple):
    arrival: ArrivalField
    distances: list[float]
    cauchy: bool
    runs: list[RunResult]


def continuation_run(
    spec: ScenarioSpec,
    grid: Grid2,
    eps_ladder: Sequence[float],
    cap: float | None = None,
) -> ContinuationResult:
    """Run a decreasing ``eps`` ladder and report L1 distances between consecutive capped fields.

    The distance is ``sum |w_k ^ T - w_{k+1} ^ T| h^2`` with unreached cells counted at ``T``
    (at the largest finite value when uncapped). The ladder is flagged non-Cauchy when the
    distances fail to decrease.
    """
    eps_ladder = list(eps_ladder)
    if any(b >= a for a, b in zip(eps_ladder, eps_ladder[1:])):
        raise ValueError("eps ladder must be strictly decreasing")
    runs = [run(spec, grid, e, cap) for e in eps_ladder]
    T = spec.cap if cap is None else cap
    fields = []
    for r in runs:
        w = r.arrival.values
        top = T if T is not None and math.isfinite(T) else None
        fields.append(w if top is None else np.minimum(w, top))
    if T is None or not math.isfinite(T):
        top = max(float(f[np.isfinite(f)].max()) for f in fields)
        fields = [np.where(np.isfinite(f), np.minimum(f, top), top) for f in fields]
    dist = [float(np.abs(a - b).sum() * grid.h**2) for a, b in zip(fields, fields[1:])]
    cauchy = all(d2 <= d1 * 1.05 + 1e-12 for d1, d2 in zip(dist, dist[1:]))
    return ContinuationResult(runs[-1].arrival, dist, cauchy, runs)
