"""Problem instances, lattices, regions and perimeter measurement.

Everything here is immutable after construction. Arrays on a :class:`Grid2` are indexed
``[i, j]`` with ``i`` along the first coordinate, and values sit at cell centers.
"""

from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from numpy.typing import NDArray

from .numerics import adaptive_simpson

__all__ = [
    "INF",
    "Grid1",
    "Grid2",
    "ScalarField2",
    "Field",
    "ConstantField",
    "Piecewise1D",
    "RadialPiecewise",
    "LatticeField",
    "CallableField",
    "field_from_json",
    "RegionSpec",
    "RegionMask",
    "ScenarioSpec",
    "Contour",
    "EmptyRasterization",
    "rasterize",
    "interface_segments",
    "extract_contours",
    "perimeter",
    "boundary_integral",
    "integral_1p",
    "radial_moment_1p",
]

#: Sentinel for "never reached". Compared as larger than every finite value.
INF = math.inf


class EmptyRasterization(ValueError):
    """Raised when a region has no cell center inside the grid."""


# --------------------------------------------------------------------------- grids


@dataclass(frozen=True)
class Grid1:
    """Uniform 1D lattice of ``n`` cells starting at ``origin``."""

    origin: float
    h: float
    n: int

    def __post_init__(self) -> None:
        if not self.h > 0:
            raise ValueError("grid spacing must be positive")
        if self.n < 2:
            raise ValueError("grid needs at least two cells")

    @property
    def shape(self) -> tuple[int]:
        return (self.n,)

    def centers(self) -> NDArray[np.float64]:
        return self.origin + (np.arange(self.n) + 0.5) * self.h


@dataclass(frozen=True)
class Grid2:
    """Uniform 2D lattice; ``origin`` is the lower-left corner of cell ``(0, 0)``.

    With ``periodic_y`` the second axis wraps, which is how planar (strip) geometries
    are embedded.
    """

    origin: tuple[float, float]
    h: float
    nx: int
    ny: int
    periodic_y: bool = False

    def __post_init__(self) -> None:
        if not self.h > 0:
            raise ValueError("grid spacing must be positive")
        if self.nx < 2 or self.ny < 2:
            raise ValueError("grid needs at least two cells per axis")
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @classmethod
    def covering(
        cls,
        box: tuple[float, float, float, float],
        h: float,
        periodic_y: bool = False,
    ) -> Grid2:
        """Grid whose cells tile ``[xmin, xmax] x [ymin, ymax]`` (rounded to whole cells)."""
        xmin, xmax, ymin, ymax = box
        nx = max(2, int(round((xmax - xmin) / h)))
        ny = max(2, int(round((ymax - ymin) / h)))
        return cls((xmin, ymin), h, nx, ny, periodic_y)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def width(self) -> float:
        return self.nx * self.h

    @property
    def height(self) -> float:
        return self.ny * self.h

    @property
    def box(self) -> tuple[float, float, float, float]:
        x0, y0 = self.origin
        return (x0, x0 + self.width, y0, y0 + self.height)

    def x_centers(self) -> NDArray[np.float64]:
        return self.origin[0] + (np.arange(self.nx) + 0.5) * self.h

    def y_centers(self) -> NDArray[np.float64]:
        return self.origin[1] + (np.arange(self.ny) + 0.5) * self.h

    def centers(self) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        return np.meshgrid(self.x_centers(), self.y_centers(), indexing="ij")

    def wrap_y(self, y: NDArray[np.float64]) -> NDArray[np.float64]:
        if not self.periodic_y:
            return y
        y0 = self.origin[1]
        return y0 + np.mod(np.asarray(y) - y0, self.height)

    def locate(self, x: Any, y: Any) -> tuple[NDArray[np.intp], NDArray[np.intp], NDArray[np.bool_]]:
        """Cell indices containing the points, plus a mask of points inside the grid."""
        x = np.asarray(x, dtype=float)
        y = self.wrap_y(np.asarray(y, dtype=float))
        fi = np.floor((x - self.origin[0]) / self.h)
        fj = np.floor((y - self.origin[1]) / self.h)
        if self.periodic_y:
            fj = np.mod(fj, self.ny)
        ok = (fi >= 0) & (fi < self.nx) & (fj >= 0) & (fj < self.ny)
        i = np.clip(fi, 0, self.nx - 1).astype(np.intp)
        j = np.clip(fj, 0, self.ny - 1).astype(np.intp)
        return i, j, ok

    def to_json(self) -> dict[str, Any]:
        return {
            "origin": list(self.origin),
            "h": self.h,
            "nx": self.nx,
            "ny": self.ny,
            "periodic_y": self.periodic_y,
        }


@dataclass(frozen=True, eq=False)
class ScalarField2:
    """Values on a :class:`Grid2`; ``+inf`` is the only allowed non-finite value."""

    grid: Grid2
    values: NDArray[np.float64]

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.shape:
            raise ValueError(f"field shape {v.shape} does not match grid {self.grid.shape}")
        if np.isnan(v).any():
            raise ValueError("field contains NaN")
        if np.isneginf(v).any():
            raise ValueError("field contains -inf")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def finite(self) -> NDArray[np.bool_]:
        return np.isfinite(self.values)

    def capped(self, cap: float) -> ScalarField2:
        return ScalarField2(self.grid, np.minimum(self.values, cap))

    def with_values(self, values: NDArray[np.float64]) -> ScalarField2:
        return ScalarField2(self.grid, values)


# --------------------------------------------------------------------------- fields


class Field:
    """A scalar function of position (supercooling ``u`` or initial speed ``V0``)."""

    def __call__(self, x: Any, y: Any = None) -> NDArray[np.float64]:
        raise NotImplementedError

    #: Kinks of the field along the first coordinate, probed by root searches.
    breakpoints: tuple[float, ...] = ()

    def to_json(self) -> dict[str, Any]:
        raise TypeError(f"{type(self).__name__} cannot be serialized")

    def minimum(self) -> float:
        """Lower bound of the field, when cheaply known."""
        return -math.inf


@dataclass(frozen=True)
class ConstantField(Field):
    value: float

    def __call__(self, x: Any, y: Any = None) -> NDArray[np.float64]:
        return np.full(np.shape(x), float(self.value))

    def to_json(self) -> dict[str, Any]:
        return {"kind": "constant", "value": self.value}

    def minimum(self) -> float:
        return float(self.value)


def _check_table(breaks: tuple[float, ...], values: tuple[float, ...]) -> None:
    if len(values) != len(breaks) + 1:
        raise ValueError("a piecewise table needs len(values) == len(breaks) + 1")
    if any(b1 <= b0 for b0, b1 in zip(breaks, breaks[1:])):
        raise ValueError("breakpoints must be strictly increasing")


@dataclass(frozen=True)
class Piecewise1D(Field):
    """Piecewise-constant function of the first coordinate.

    ``values[k]`` applies on ``[breaks[k-1], breaks[k])`` with the open ends extended.
    """

    breaks: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "breaks", tuple(float(b) for b in self.breaks))
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        _check_table(self.breaks, self.values)

    def __call__(self, x: Any, y: Any = None) -> NDArray[np.float64]:
        idx = np.searchsorted(np.asarray(self.breaks), np.asarray(x, dtype=float), side="right")
        return np.asarray(self.values)[idx]

    @property  # type: ignore[override]
    def breakpoints(self) -> tuple[float, ...]:
        return self.breaks

    def antiderivative(self, x: float) -> float:
        """``int_0^x u`` computed piece by piece."""
        return _piecewise_antiderivative(self.breaks, self.values, x, lambda a, b: b - a)

    def to_json(self) -> dict[str, Any]:
        return {"kind": "piecewise1d", "breaks": list(self.breaks), "values": list(self.values)}

    def minimum(self) -> float:
        return min(self.values)


def _piecewise_antiderivative(
    breaks: tuple[float, ...],
    values: tuple[float, ...],
    x: float,
    measure: Callable[[float, float], float],
) -> float:
    """Signed ``int_0^x`` of a piecewise-constant function against ``measure(a, b)``."""
    if x == 0:
        return 0.0
    lo, hi, sign = (0.0, x, 1.0) if x > 0 else (x, 0.0, -1.0)
    edges = [lo] + [b for b in breaks if lo < b < hi] + [hi]
    total = 0.0
    bk = np.asarray(breaks)
    for a, b in zip(edges[:-1], edges[1:]):
        v = values[int(np.searchsorted(bk, 0.5 * (a + b), side="right"))]
        total += v * measure(a, b)
    return sign * total


@dataclass(frozen=True)
class RadialPiecewise(Field):
    """Piecewise-constant function of the distance to ``center``."""

    breaks: tuple[float, ...]
    values: tuple[float, ...]
    center: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self) -> None:
        object.__setattr__(self, "breaks", tuple(float(b) for b in self.breaks))
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        _check_table(self.breaks, self.values)
        if self.breaks and self.breaks[0] < 0:
            raise ValueError("radial breakpoints must be nonnegative")

    def radius(self, x: Any, y: Any = None) -> NDArray[np.float64]:
        x = np.asarray(x, dtype=float)
        if y is None:
            return np.abs(x)
        return np.hypot(x - self.center[0], np.asarray(y, dtype=float) - self.center[1])

    def of_radius(self, r: Any) -> NDArray[np.float64]:
        idx = np.searchsorted(np.asarray(self.breaks), np.asarray(r, dtype=float), side="right")
        return np.asarray(self.values)[idx]

    def __call__(self, x: Any, y: Any = None) -> NDArray[np.float64]:
        return self.of_radius(self.radius(x, y))

    @property  # type: ignore[override]
    def breakpoints(self) -> tuple[float, ...]:
        return self.breaks

    def to_json(self) -> dict[str, Any]:
        return {
            "kind": "radial_piecewise",
            "breaks": list(self.breaks),
            "values": list(self.values),
            "center": list(self.center),
        }

    def minimum(self) -> float:
        return min(self.values)


@dataclass(frozen=True, eq=False)
class LatticeField(Field):
    """Sampled field, evaluated by nearest cell (clamped to the lattice)."""

    grid: Grid2
    values: NDArray[np.float64]

    def __call__(self, x: Any, y: Any = None) -> NDArray[np.float64]:
        if y is None:
            y = np.full(np.shape(x), self.grid.origin[1] + 0.5 * self.grid.h)
        i, j, _ = self.grid.locate(x, y)
        return np.asarray(self.values)[i, j]

    def to_json(self) -> dict[str, Any]:
        return {"kind": "lattice", "grid": self.grid.to_json(), "values": np.asarray(self.values).tolist()}

    def minimum(self) -> float:
        return float(np.min(self.values))


@dataclass(frozen=True, eq=False)
class CallableField(Field):
    """Wrap a vectorized Python callable ``fn(x)`` (1D / radial use) or ``fn(x, y)``."""

    fn: Callable[..., Any]
    planar: bool = False

    def __call__(self, x: Any, y: Any = None) -> NDArray[np.float64]:
        if self.planar and y is not None:
            return np.asarray(self.fn(x, y), dtype=float) * np.ones(np.shape(x))
        return np.asarray(self.fn(x), dtype=float) * np.ones(np.shape(x))


def as_field(value: Field | float | Callable[..., Any]) -> Field:
    if isinstance(value, Field):
        return value
    if callable(value):
        return CallableField(value)
    return ConstantField(float(value))


def field_from_json(doc: Any) -> Field:
    if isinstance(doc, (int, float)):
        return ConstantField(float(doc))
    kind = doc.get("kind")
    if kind == "constant":
        return ConstantField(float(doc["value"]))
    if kind == "piecewise1d":
        return Piecewise1D(tuple(doc["breaks"]), tuple(doc["values"]))
    if kind == "radial_piecewise":
        return RadialPiecewise(tuple(doc["breaks"]), tuple(doc["values"]), tuple(doc.get("center", (0.0, 0.0))))
    if kind == "lattice":
        g = doc["grid"]
        grid = Grid2(tuple(g["origin"]), g["h"], g["nx"], g["ny"], g.get("periodic_y", False))
        return LatticeField(grid, np.asarray(doc["values"], dtype=float))
    raise ValueError(f"unknown field kind {kind!r}")


def integral_1p(u: Field, a: float, b: float, rtol: float = 1e-12) -> float:
    """``int_a^b (1 + u(x)) dx`` along the first coordinate; exact for tables."""
    if isinstance(u, ConstantField):
        return (1.0 + u.value) * (b - a)
    if isinstance(u, Piecewise1D):
        return (b - a) + u.antiderivative(b) - u.antiderivative(a)
    return adaptive_simpson(lambda z: 1.0 + float(u(np.float64(z))), a, b, rtol=rtol)


def radial_moment_1p(u: Field, a: float, b: float, d: int, rtol: float = 1e-12) -> float:
    """``int_a^b (1 + u(z)) z^(d-1) dz`` for a radial field; exact for tables."""
    if d < 1:
        raise ValueError("dimension must be >= 1")

    def power(lo: float, hi: float) -> float:
        return (hi**d - lo**d) / d

    if isinstance(u, ConstantField):
        return (1.0 + u.value) * power(a, b)
    if isinstance(u, RadialPiecewise):
        return power(a, b) + _piecewise_antiderivative(u.breaks, u.values, b, power) - _piecewise_antiderivative(
            u.breaks, u.values, a, power
        )
    return adaptive_simpson(lambda z: (1.0 + float(u(np.float64(z)))) * z ** (d - 1), a, b, rtol=rtol)


# --------------------------------------------------------------------------- regions

_REGION_KINDS = (
    "half_line",
    "interval_complement",
    "ball",
    "ball_complement",
    "lattice_mask",
    "balls",
    "annulus_complement",
)


@dataclass(frozen=True, eq=False)
class RegionSpec:
    """Initial solid region. Geometry kinds expose a signed level (negative inside)."""

    kind: str
    params: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in _REGION_KINDS:
            raise ValueError(f"unknown region kind {self.kind!r}")
        p = self.params
        if self.kind in ("ball", "ball_complement") and not p.get("radius", 0) > 0:
            raise ValueError("ball radius must be positive")
        if self.kind == "balls" and not all(r > 0 for r in p.get("radii", [])):
            raise ValueError("ball radii must be positive")
        if self.kind == "interval_complement" and not p["left"] < p["right"]:
            raise ValueError("interval endpoints must be ordered")
        if self.kind == "annulus_complement" and not 0 < p["r_in"] < p["r_out"]:
            raise ValueError("annulus radii must satisfy 0 < r_in < r_out")
        if self.kind == "lattice_mask":
            mask = np.asarray(p["mask"], dtype=bool)
            if not mask.any() or mask.all():
                raise ValueError("lattice mask needs a nonzero, finite perimeter")

    # convenience constructors
    @classmethod
    def half_line(cls, end: float = 0.0) -> RegionSpec:
        return cls("half_line", {"end": end})

    @classmethod
    def interval_complement(cls, left: float = 0.0, right: float = 1.0) -> RegionSpec:
        return cls("interval_complement", {"left": left, "right": right})

    @classmethod
    def ball(cls, radius: float, center: tuple[float, float] = (0.0, 0.0)) -> RegionSpec:
        return cls("ball", {"center": list(center), "radius": radius})

    @classmethod
    def ball_complement(cls, radius: float, center: tuple[float, float] = (0.0, 0.0)) -> RegionSpec:
        return cls("ball_complement", {"center": list(center), "radius": radius})

    @classmethod
    def balls(cls, centers: list[tuple[float, float]], radii: list[float]) -> RegionSpec:
        return cls("balls", {"centers": [list(c) for c in centers], "radii": list(radii)})

    @classmethod
    def annulus_complement(cls, r_in: float, r_out: float, center: tuple[float, float] = (0.0, 0.0)) -> RegionSpec:
        return cls("annulus_complement", {"center": list(center), "r_in": r_in, "r_out": r_out})

    @classmethod
    def lattice(cls, mask: NDArray[np.bool_], origin: tuple[float, float], h: float) -> RegionSpec:
        return cls("lattice_mask", {"mask": np.asarray(mask, dtype=bool).astype(int).tolist(), "origin": list(origin), "h": h})

    @property
    def planar(self) -> bool:
        """True for regions that only depend on the first coordinate."""
        return self.kind in ("half_line", "interval_complement")

    def level(self, x: Any, y: Any = None) -> NDArray[np.float64] | None:
        """Signed level function, ``<= 0`` exactly on the (closed) region; ``None`` for lattices."""
        x = np.asarray(x, dtype=float)
        p = self.params
        if self.kind == "half_line":
            return x - p["end"]
        if self.kind == "interval_complement":
            return np.minimum(x - p["left"], p["right"] - x)
        if self.kind == "lattice_mask":
            return None
        if y is None:
            y = np.zeros_like(x)
        y = np.asarray(y, dtype=float)
        if self.kind == "ball":
            cx, cy = p["center"]
            return np.hypot(x - cx, y - cy) - p["radius"]
        if self.kind == "ball_complement":
            cx, cy = p["center"]
            return p["radius"] - np.hypot(x - cx, y - cy)
        if self.kind == "balls":
            out = np.full(np.broadcast(x, y).shape, np.inf)
            for (cx, cy), r in zip(p["centers"], p["radii"]):
                out = np.minimum(out, np.hypot(x - cx, y - cy) - r)
            return out
        if self.kind == "annulus_complement":
            cx, cy = p["center"]
            r = np.hypot(x - cx, y - cy)
            return np.minimum(r - p["r_in"], p["r_out"] - r)
        raise AssertionError(self.kind)

    def lattice_inside(self, x: Any, y: Any) -> NDArray[np.bool_]:
        p = self.params
        mask = np.asarray(p["mask"], dtype=bool)
        ox, oy = p["origin"]
        h = p["h"]
        fi = np.floor((np.asarray(x) - ox) / h).astype(int)
        fj = np.floor((np.asarray(y) - oy) / h).astype(int)
        ok = (fi >= 0) & (fi < mask.shape[0]) & (fj >= 0) & (fj < mask.shape[1])
        out = np.zeros(np.shape(x), dtype=bool)
        out[ok] = mask[fi[ok], fj[ok]]
        return out

    def to_json(self) -> dict[str, Any]:
        return {"kind": self.kind, **self.params}

    @classmethod
    def from_json(cls, doc: dict[str, Any]) -> RegionSpec:
        doc = dict(doc)
        kind = doc.pop("kind")
        return cls(kind, doc)


@dataclass(frozen=True, eq=False)
class RegionMask:
    """Boolean lattice region, optionally carrying the sub-cell level used for contouring."""

    grid: Grid1 | Grid2
    inside: NDArray[np.bool_]
    level: NDArray[np.float64] | None = None

    def __post_init__(self) -> None:
        inside = np.asarray(self.inside, dtype=bool).copy()
        if inside.shape != self.grid.shape:
            raise ValueError("mask shape does not match grid")
        inside.setflags(write=False)
        object.__setattr__(self, "inside", inside)
        if self.level is not None:
            lv = np.asarray(self.level, dtype=float).copy()
            if lv.shape != inside.shape:
                raise ValueError("level shape does not match grid")
            lv.setflags(write=False)
            object.__setattr__(self, "level", lv)

    def phi(self) -> NDArray[np.float64]:
        """Level used for contouring: the stored level, or ``+-0.5`` from the boolean mask."""
        if self.level is not None:
            return np.asarray(self.level)
        return np.where(self.inside, -0.5, 0.5)

    def complement(self) -> RegionMask:
        lv = None if self.level is None else -np.asarray(self.level)
        if lv is not None:
            # keep boundary cells (level exactly 0) on one side only
            lv = np.where(lv == 0, np.nextafter(0.0, 1.0), lv)
        return RegionMask(self.grid, ~self.inside, lv)

    @property
    def area(self) -> float:
        if isinstance(self.grid, Grid1):
            return float(self.inside.sum() * self.grid.h)
        return float(self.inside.sum() * self.grid.h**2)

    def union(self, other: RegionMask) -> RegionMask:
        lv = None
        if self.level is not None and other.level is not None:
            lv = np.minimum(self.level, other.level)
        return RegionMask(self.grid, self.inside | other.inside, lv)


def rasterize(region: RegionSpec, grid: Grid1 | Grid2) -> RegionMask:
    """Mark the cells whose centers lie in ``region``."""
    if isinstance(grid, Grid1):
        xs = grid.centers()
        if region.kind == "lattice_mask":
            raise ValueError("lattice masks need a 2D grid")
        level = region.level(xs)
        inside = level <= 0
    else:
        X, Y = grid.centers()
        if region.kind == "lattice_mask":
            inside = region.lattice_inside(X, Y)
            level = None
        else:
            level = region.level(X, Y)
            inside = level <= 0
    if not inside.any():
        raise EmptyRasterization("empty rasterization: region does not meet the grid")
    return RegionMask(grid, inside, level)


# --------------------------------------------------------------------------- contours


def _edge_fraction(p: NDArray[np.float64], q: NDArray[np.float64]) -> NDArray[np.float64]:
    with np.errstate(invalid="ignore", divide="ignore"):
        t = p / (p - q)
    t = np.where(np.isfinite(p) & np.isfinite(q), t, 0.5)
    return np.clip(np.nan_to_num(t, nan=0.5), 0.0, 1.0)


@dataclass(frozen=True, eq=False)
class Segments:
    """Interface pieces, oriented so the region lies on the left of ``p0 -> p1``."""

    p0: NDArray[np.float64]
    p1: NDArray[np.float64]
    k0: NDArray[np.int64]
    k1: NDArray[np.int64]

    @property
    def lengths(self) -> NDArray[np.float64]:
        return np.hypot(*(self.p1 - self.p0).T)

    @property
    def midpoints(self) -> NDArray[np.float64]:
        return 0.5 * (self.p0 + self.p1)

    def __len__(self) -> int:
        return len(self.p0)


def interface_segments(phi: NDArray[np.float64], grid: Grid2) -> Segments:
    """Marching-squares reconstruction of ``{phi <= 0}`` on the dual lattice.

    ``phi`` lives at cell centers; ``+inf`` entries are allowed and put the crossing at the
    midpoint of the edge. Saddles are resolved with the average of the four corners.
    """
    phi = np.asarray(phi, dtype=float)
    ny, h = grid.ny, grid.h
    if grid.periodic_y:
        a = phi
        b = np.roll(phi, -1, axis=0)
        d = np.roll(phi, -1, axis=1)
        c = np.roll(b, -1, axis=1)
        a, b, c, d = a[:-1], b[:-1], c[:-1], d[:-1]
    else:
        a, b, c, d = phi[:-1, :-1], phi[1:, :-1], phi[1:, 1:], phi[:-1, 1:]
    ia, ib, ic, idd = a <= 0, b <= 0, c <= 0, d <= 0
    case = ia.astype(np.int8) + 2 * ib + 4 * ic + 8 * idd
    si, sj = np.nonzero((case != 0) & (case != 15))
    if si.size == 0:
        empty = np.zeros((0, 2))
        return Segments(empty, empty, np.zeros(0, np.int64), np.zeros(0, np.int64))
    A, B, C, D = a[si, sj], b[si, sj], c[si, sj], d[si, sj]
    iA, iB, iC, iD = ia[si, sj], ib[si, sj], ic[si, sj], idd[si, sj]
    cs = case[si, sj]
    xa = grid.origin[0] + (si + 0.5) * h
    ya = grid.origin[1] + (sj + 0.5) * h
    # crossing points on the four edges: bottom (a-b), right (b-c), top (d-c), left (a-d)
    t0, t1, t2, t3 = _edge_fraction(A, B), _edge_fraction(B, C), _edge_fraction(D, C), _edge_fraction(A, D)
    E = np.empty((4, si.size, 2))
    E[0] = np.stack([xa + t0 * h, ya], axis=1)
    E[1] = np.stack([xa + h, ya + t1 * h], axis=1)
    E[2] = np.stack([xa + t2 * h, ya + h], axis=1)
    E[3] = np.stack([xa, ya + t3 * h], axis=1)
    # lattice-edge keys shared by neighbouring squares: 2*(i*ny + j) + (0 horizontal | 1 vertical)
    jw = (sj + 1) % ny
    K = np.empty((4, si.size), dtype=np.int64)
    K[0] = 2 * (si * ny + sj)
    K[1] = 2 * ((si + 1) * ny + sj) + 1
    K[2] = 2 * (si * ny + jw)
    K[3] = 2 * (si * ny + sj) + 1
    cross = np.stack([iA != iB, iB != iC, iD != iC, iA != iD])
    saddle = (cs == 5) | (cs == 10)
    corners = np.stack(
        [np.stack([xa, ya], 1), np.stack([xa + h, ya], 1), np.stack([xa + h, ya + h], 1), np.stack([xa, ya + h], 1)]
    )
    ins = np.stack([iA, iB, iC, iD]).astype(float)

    seg_e0: list[NDArray[np.intp]] = []
    seg_e1: list[NDArray[np.intp]] = []
    seg_rows: list[NDArray[np.intp]] = []
    seg_ref: list[NDArray[np.float64]] = []
    rows = np.arange(si.size)

    # regular squares: exactly two crossed edges
    reg = rows[~saddle]
    if reg.size:
        ce = cross[:, reg].T
        first = np.argmax(ce, axis=1)
        last = 3 - np.argmax(ce[:, ::-1], axis=1)
        n_in = ins[:, reg].sum(axis=0)
        n_out = 4.0 - n_in
        cin = np.einsum("kn,knd->nd", ins[:, reg], corners[:, reg]) / n_in[:, None]
        cout = np.einsum("kn,knd->nd", 1.0 - ins[:, reg], corners[:, reg]) / n_out[:, None]
        seg_e0.append(first)
        seg_e1.append(last)
        seg_rows.append(reg)
        seg_ref.append(cin - cout)
    # saddles: two segments each, pairing decided by the center average
    sad = rows[saddle]
    if sad.size:
        center_in = (A[sad] + B[sad] + C[sad] + D[sad]) / 4.0 <= 0
        ac_inside = cs[sad] == 5
        # cut around b and d when (a,c inside and center inside) or (b,d inside and center outside)
        around_bd = ac_inside == center_in
        pairs_bd = ((0, 1, 1), (2, 3, 3))  # (edge, edge, isolated corner)
        pairs_ac = ((3, 0, 0), (1, 2, 2))
        for pick, pairs in ((around_bd, pairs_bd), (~around_bd, pairs_ac)):
            sel = sad[pick]
            if not sel.size:
                continue
            for e0, e1, k in pairs:
                corner = corners[k, sel]
                mid = 0.5 * (E[e0, sel] + E[e1, sel])
                sign = np.where(ins[k, sel] > 0, 1.0, -1.0)
                seg_e0.append(np.full(sel.size, e0))
                seg_e1.append(np.full(sel.size, e1))
                seg_rows.append(sel)
                seg_ref.append(sign[:, None] * (corner - mid))
    e0 = np.concatenate(seg_e0)
    e1 = np.concatenate(seg_e1)
    r = np.concatenate(seg_rows)
    ref = np.concatenate(seg_ref)
    P = E[e0, r]
    Q = E[e1, r]
    kp = K[e0, r]
    kq = K[e1, r]
    dvec = Q - P
    left = dvec[:, 0] * ref[:, 1] - dvec[:, 1] * ref[:, 0]
    flip = left < 0
    P2 = np.where(flip[:, None], Q, P)
    Q2 = np.where(flip[:, None], P, Q)
    k0 = np.where(flip, kq, kp)
    k1 = np.where(flip, kp, kq)
    return Segments(P2, Q2, k0, k1)


@dataclass(frozen=True, eq=False)
class Contour:
    """Ordered interface polyline. ``wrap`` is the offset closing the chain.

    ``closed`` chains are loops (``wrap`` zero) or periodic bands (``wrap = (0, +-height)``);
    open chains end on the grid boundary.
    """

    points: NDArray[np.float64]
    wrap: tuple[float, float]
    closed: bool

    @property
    def length(self) -> float:
        pts = self.points
        seg = np.hypot(*np.diff(pts, axis=0).T).sum()
        if self.closed:
            last = pts[0] + np.asarray(self.wrap) - pts[-1]
            seg += float(np.hypot(*last))
        return float(seg)


def extract_contours(phi: NDArray[np.float64], grid: Grid2) -> list[Contour]:
    """Chain marching-squares segments into ordered contours (region on the left)."""
    segs = interface_segments(phi, grid)
    n = len(segs)
    if n == 0:
        return []
    start_of = {int(k): s for s, k in enumerate(segs.k0)}
    has_pred = set(int(k) for k in segs.k1)
    used = np.zeros(n, dtype=bool)
    H = grid.height

    def walk(s0: int) -> Contour:
        pts = []
        offset = np.zeros(2)
        s = s0
        closed = False
        while True:
            used[s] = True
            p = segs.p0[s] + offset
            if pts:
                gap = pts[-1][1] - p
                if grid.periodic_y and abs(gap[1]) > 0.5 * H:
                    shift = np.array([0.0, np.round(gap[1] / H) * H])
                    offset = offset + shift
                    p = p + shift
            end = segs.p1[s] + offset
            pts.append((p, end))
            nxt = start_of.get(int(segs.k1[s]))
            if nxt is None:
                break
            if nxt == s0:
                closed = True
                break
            if used[nxt]:
                break
            s = nxt
        points = np.array([p for p, _ in pts])
        wrap = (0.0, 0.0)
        if closed:
            gap = pts[-1][1] - segs.p0[s0]
            wrap = (0.0, float(np.round(gap[1] / H) * H)) if grid.periodic_y else (0.0, 0.0)
        else:
            points = np.vstack([points, pts[-1][1]])
        return Contour(points, wrap, closed)

    out = []
    # open chains first: start where no segment ends
    for s in range(n):
        if not used[s] and int(segs.k0[s]) not in has_pred:
            out.append(walk(s))
    for s in range(n):
        if not used[s]:
            out.append(walk(s))
    return out


def _segments_for(mask: RegionMask) -> Segments:
    if not isinstance(mask.grid, Grid2):
        raise TypeError("segment extraction needs a 2D grid")
    return interface_segments(mask.phi(), mask.grid)


def perimeter(mask: RegionMask) -> float:
    """Length of the marching-squares interface (number of transitions in 1D)."""
    if isinstance(mask.grid, Grid1):
        return float(np.count_nonzero(np.diff(mask.inside.astype(np.int8))))
    return float(_segments_for(mask).lengths.sum())


def boundary_integral(mask: RegionMask, f: Callable[..., Any] | float) -> float:
    """``int f dH^1`` over the interface: ``f`` at segment midpoints times segment length."""
    if isinstance(mask.grid, Grid1):
        g = mask.grid
        idx = np.nonzero(np.diff(mask.inside.astype(np.int8)))[0]
        pts = g.origin + (idx + 1) * g.h
        vals = np.asarray(f(pts) if callable(f) else np.full(pts.shape, float(f)))
        return float(vals.sum())
    segs = _segments_for(mask)
    if not callable(f):
        # same summation as ``perimeter`` so that f = 1 reproduces it bit for bit
        return float(f) * float(segs.lengths.sum())
    m = segs.midpoints
    vals = np.asarray(f(m[:, 0], m[:, 1]), dtype=float)
    return float(np.dot(vals, segs.lengths))


# --------------------------------------------------------------------------- scenario


@dataclass(frozen=True, eq=False)
class ScenarioSpec:
    """A full problem instance at one jump time."""

    gamma: float
    u: Field
    initial_region: RegionSpec
    v0: Field = field(default_factory=lambda: ConstantField(0.0))
    cap: float = INF
    dimension: int = 2

    def __post_init__(self) -> None:
        if not self.gamma > 0:
            raise ValueError("surface tension gamma must be positive")
        if self.dimension < 1:
            raise ValueError("dimension must be >= 1")
        object.__setattr__(self, "u", as_field(self.u))
        object.__setattr__(self, "v0", as_field(self.v0))
        if self.cap is None:
            object.__setattr__(self, "cap", INF)
        if not self.cap >= 0:
            raise ValueError("cap must be nonnegative")
        if self.v0.minimum() < 0 and not isinstance(self.v0, CallableField):
            raise ValueError("initial speed V0 must be nonnegative")

    def boundary_v0(self, x: Any, y: Any = None) -> NDArray[np.float64]:
        v = np.asarray(self.v0(x, y), dtype=float)
        if (v < 0).any():
            raise ValueError("initial speed V0 must be nonnegative")
        return v

    def negative_part_integral(self, grid: Grid2) -> float:
        """``int (1+u)^-`` over the liquid part of the grid box (cell-center quadrature)."""
        X, Y = grid.centers()
        inside = rasterize(self.initial_region, grid).inside
        neg = np.maximum(-(1.0 + np.asarray(self.u(X, Y))), 0.0)
        return float(neg[~inside].sum() * grid.h**2)

    def with_(self, **changes: Any) -> ScenarioSpec:
        kw = dict(
            gamma=self.gamma,
            u=self.u,
            initial_region=self.initial_region,
            v0=self.v0,
            cap=self.cap,
            dimension=self.dimension,
        )
        kw.update(changes)
        return ScenarioSpec(**kw)

    # convenience constructors for the symmetric families
    @classmethod
    def one_interface(cls, u: Any = 0.0, v0: Any = 1.0, gamma: float = 1.0, end: float = 0.0, **kw: Any) -> ScenarioSpec:
        return cls(gamma, as_field(u), RegionSpec.half_line(end), as_field(v0), dimension=kw.pop("dimension", 1), **kw)

    @classmethod
    def two_interface(
        cls,
        u: Any = 0.0,
        v0_left: float = 1.0,
        v0_right: float = 1.0,
        gamma: float = 1.0,
        left: float = 0.0,
        right: float = 1.0,
        **kw: Any,
    ) -> ScenarioSpec:
        v0 = Piecewise1D((0.5 * (left + right),), (v0_left, v0_right))
        return cls(gamma, as_field(u), RegionSpec.interval_complement(left, right), v0, dimension=kw.pop("dimension", 1), **kw)

    @classmethod
    def radial(
        cls,
        growing: bool = True,
        u: Any = -1.0,
        v0: float = 1.0,
        gamma: float = 1.0,
        r0: float = 1.0,
        dimension: int = 2,
        center: tuple[float, float] = (0.0, 0.0),
        **kw: Any,
    ) -> ScenarioSpec:
        region = RegionSpec.ball(r0, center) if growing else RegionSpec.ball_complement(r0, center)
        return cls(gamma, as_field(u), region, as_field(v0), dimension=dimension, **kw)
