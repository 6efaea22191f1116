"""Value-function solver ``w^L(x) = inf over unit-speed paths of int L^+`` and its characteristics.

``fast_march`` solves ``|grad w| = L^+`` with ``w = 0`` on the initial solid by first-order
upwind fast marching. ``trace_characteristic`` descends the solution along
``-grad w / |grad w|`` back to the solid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

from . import kernels
from .domain import INF, Grid2, RegionMask, ScalarField2

__all__ = [
    "CostField",
    "CharacteristicPath",
    "fast_march",
    "gradient",
    "trace_characteristic",
    "t_projection",
]


@dataclass(frozen=True, eq=False)
class CostField:
    """Running cost ``L`` on the lattice. Only ``L^+`` is paid; negative values cost nothing."""

    L: ScalarField2

    def __post_init__(self) -> None:
        if not np.isfinite(self.L.values).all():
            raise ValueError("cost must be finite")
        if (self.L.values == 0).any():
            raise ValueError("cost must not vanish; use a negative value for free cells")

    @classmethod
    def from_values(cls, grid: Grid2, values: NDArray[np.float64]) -> CostField:
        return cls(ScalarField2(grid, values))

    @property
    def grid(self) -> Grid2:
        return self.L.grid

    @property
    def positive(self) -> NDArray[np.float64]:
        return np.maximum(self.L.values, 0.0)


def fast_march(mask: RegionMask, L: CostField, subcell: bool = False) -> ScalarField2:
    """Upwind fast-marching solution of ``|grad w| = L^+``, ``w = 0`` on ``mask``.

    With ``subcell`` and a mask that carries a distance-like level, the first layer of cells
    outside the mask is seeded with ``level * L^+`` instead of being reached by a full cell step.
    This removes the half-cell offset of the staircase boundary.
    """
    grid = L.grid
    if not isinstance(mask.grid, Grid2) or mask.grid.shape != grid.shape:
        raise ValueError("mask and cost live on different grids")
    if not mask.inside.any():
        raise ValueError("fast marching needs a nonempty initial mask")
    cost = np.ascontiguousarray(L.positive, dtype=float)
    frozen = mask.inside.copy()
    start = np.zeros(grid.shape)
    if subcell and mask.level is not None:
        inside = mask.inside
        near = np.zeros_like(inside)
        near[1:, :] |= inside[:-1, :]
        near[:-1, :] |= inside[1:, :]
        if grid.periodic_y:
            near |= np.roll(inside, 1, axis=1) | np.roll(inside, -1, axis=1)
        else:
            near[:, 1:] |= inside[:, :-1]
            near[:, :-1] |= inside[:, 1:]
        layer = near & ~inside
        start[layer] = np.clip(mask.level[layer], 0.0, grid.h) * cost[layer]
        frozen |= layer
    w = kernels.fast_march(cost, np.ascontiguousarray(frozen, dtype=np.uint8), grid.h, grid.periodic_y, start)
    return ScalarField2(grid, w)


def gradient(
    w: NDArray[np.float64],
    grid: Grid2,
    exclude: NDArray[np.bool_] | None = None,
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Cell-centered gradient of ``w``.

    Central differences where both neighbours are usable, one-sided otherwise. Infinite cells and
    cells in ``exclude`` (the initial solid, across which ``w`` has a kink) are not used as
    neighbours. Cells with no usable neighbour along an axis get a zero component.
    """
    w = np.asarray(w, dtype=float)
    ok = np.isfinite(w)
    use = ok if exclude is None else ok & ~exclude
    comps = []
    for axis in (0, 1):
        periodic = axis == 1 and grid.periodic_y
        if periodic:
            wp, wm = np.roll(w, -1, axis), np.roll(w, 1, axis)
            up, um = np.roll(use, -1, axis), np.roll(use, 1, axis)
        else:
            pad = [(0, 0), (0, 0)]
            pad[axis] = (1, 1)
            wpad = np.pad(np.where(ok, w, 0.0), pad)
            upad = np.pad(use, pad)
            sl_p = [slice(None), slice(None)]
            sl_m = [slice(None), slice(None)]
            sl_p[axis] = slice(2, None)
            sl_m[axis] = slice(None, -2)
            wp, wm = wpad[tuple(sl_p)], wpad[tuple(sl_m)]
            up, um = upad[tuple(sl_p)], upad[tuple(sl_m)]
        wc = np.where(ok, w, 0.0)
        wp = np.where(up, wp, 0.0)
        wm = np.where(um, wm, 0.0)
        fwd = (wp - wc) / grid.h
        bwd = (wc - wm) / grid.h
        g = np.where(up & um, 0.5 * (fwd + bwd), np.where(up, fwd, np.where(um, bwd, 0.0)))
        comps.append(np.where(ok, g, 0.0))
    return comps[0], comps[1]


@dataclass(frozen=True, eq=False)
class CharacteristicPath:
    """Descent polyline from ``points[0]`` to the initial solid.

    ``theta`` is the arc length at which the solid is reached (the path's exit parameter) and
    ``beta`` the kill parameter; for a plain descent ``beta = theta``.
    """

    points: NDArray[np.float64]
    cost_to_go: NDArray[np.float64]
    theta: float
    beta: float
    status: str
    cost: float
    weight: float = 1.0

    @property
    def trapped(self) -> bool:
        return self.status == "trapped"

    @property
    def length(self) -> float:
        return float(np.hypot(*np.diff(self.points, axis=0).T).sum()) if len(self.points) > 1 else 0.0


_STATUS_NAMES = {
    kernels.STATUS_MASK: "reached",
    kernels.STATUS_CAP: "cap",
    kernels.STATUS_REVERSAL: "trapped",
    kernels.STATUS_STAGNANT: "trapped",
    kernels.STATUS_OUTSIDE: "outside",
    kernels.STATUS_MAX_STEPS: "max_steps",
}


def _sample(values: NDArray[np.float64], grid: Grid2, pts: NDArray[np.float64]) -> NDArray[np.float64]:
    i, j, _ = grid.locate(pts[:, 0], pts[:, 1])
    return values[i, j]


def trace_characteristic(
    w: ScalarField2,
    start: Sequence[float],
    mask: RegionMask,
    L: CostField | None = None,
    step: float | None = None,
    max_steps: int | None = None,
) -> CharacteristicPath:
    """Descend ``w`` from ``start`` along the bilinearly interpolated gradient.

    The path is flagged ``trapped`` when the gradient vanishes (below ``1e-12``) outside the mask,
    or when the descent direction reverses, which is how ridges of ``w`` (collision sets) show up.
    A start sitting on a ridge, where the descent directions just either side disagree, is
    trapped immediately.
    """
    grid = w.grid
    h = grid.h
    step = 0.5 * h if step is None else step
    start_arr = np.asarray(start, dtype=float).reshape(1, 2)
    i, j, ok = grid.locate(start_arr[:, 0], start_arr[:, 1])
    if not ok[0] or not np.isfinite(w.values[i[0], j[0]]):
        raise ValueError("characteristics start from cells with finite w inside the grid")
    gx, gy = gradient(w.values, grid, exclude=mask.inside)
    wv = np.ascontiguousarray(w.values)
    cost = np.ascontiguousarray(L.positive if L is not None else np.hypot(gx, gy))
    if max_steps is None:
        max_steps = int(4 * (grid.nx + grid.ny) * h / step) + 10
    if _on_ridge(gx, gy, grid, start_arr[0]) and not mask.inside[i[0], j[0]]:
        wstart = float(wv[i[0], j[0]])
        return CharacteristicPath(start_arr.copy(), np.array([wstart]), 0.0, 0.0, "trapped", 0.0)
    occ = np.zeros(grid.shape)
    kill = np.zeros(grid.shape)
    end, end_w, _, status, length, cst, polys = kernels.trace_batch(
        wv,
        np.ascontiguousarray(gx),
        np.ascontiguousarray(gy),
        np.ascontiguousarray(mask.inside, dtype=np.uint8),
        np.zeros(grid.shape),
        cost,
        start_arr,
        np.ones(1),
        -1.0,
        step,
        max_steps,
        INF,
        grid.origin[0],
        grid.origin[1],
        h,
        grid.periodic_y,
        occ,
        kill,
        True,
    )
    pts = np.asarray(polys[0], dtype=float)
    ctg = _interp_w(wv, grid, pts)
    name = _STATUS_NAMES[int(status[0])]
    theta = float(length[0])
    return CharacteristicPath(pts, ctg, theta, theta, name, float(cst[0]))


def _on_ridge(gx: NDArray[np.float64], gy: NDArray[np.float64], grid: Grid2, p: NDArray[np.float64]) -> bool:
    h = grid.h
    g = _interp_grad(gx, gy, grid, p[None, :])[0]
    n = float(np.hypot(*g))
    if n < 1e-12:
        return True
    d = g / n
    probes = np.stack([p + 0.5 * h * d, p - 0.5 * h * d])
    gp = _interp_grad(gx, gy, grid, probes)
    return float(np.dot(gp[0], d)) < 0 or float(np.dot(gp[1], d)) < 0


def _interp_grad(gx: NDArray[np.float64], gy: NDArray[np.float64], grid: Grid2, pts: NDArray[np.float64]) -> NDArray[np.float64]:
    from ._kernels_py import _bilinear

    fi = (pts[:, 0] - grid.origin[0]) / grid.h
    fj = (pts[:, 1] - grid.origin[1]) / grid.h
    return np.stack([_bilinear(gx, fi, fj, grid.periodic_y), _bilinear(gy, fi, fj, grid.periodic_y)], axis=1)


def _interp_w(w: NDArray[np.float64], grid: Grid2, pts: NDArray[np.float64]) -> NDArray[np.float64]:
    from ._kernels_py import _bilinear, _sample_nearest

    fi = (pts[:, 0] - grid.origin[0]) / grid.h
    fj = (pts[:, 1] - grid.origin[1]) / grid.h
    fin = np.isfinite(w)
    lin = _bilinear(np.where(fin, w, 0.0), fi, fj, grid.periodic_y)
    share = _bilinear(fin.astype(float), fi, fj, grid.periodic_y)
    near, _, _ = _sample_nearest(w, np.clip(fi, 0, grid.nx - 1e-9), fj, grid.periodic_y)
    return np.where(share > 1 - 1e-12, lin, near)


def t_projection(w: ScalarField2, L: CostField, T: float, gamma: float) -> tuple[ScalarField2, CostField]:
    """Cap the cascade at time ``T``: ``(w ^ T, L_T)`` with ``L_T = L`` on ``{w <= T}``, ``-1/gamma`` beyond."""
    if not T > 0:
        raise ValueError("projection level must be positive")
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    capped = np.minimum(w.values, T)
    LT = np.where(w.values <= T, L.L.values, -1.0 / gamma)
    return ScalarField2(w.grid, capped), CostField(ScalarField2(w.grid, LT))


def cap_value(T: float) -> float:
    return INF if T is None or math.isinf(T) else float(T)
