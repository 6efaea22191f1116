"""Exact minimal solutions in the four symmetric geometries.

These are the oracles every other solver is checked against:

* one interface: solid ``(-inf, a]``, front moving right with speed ``V(x) = V0 - int_a^x (1+u)``;
* two interfaces: solid ``(-inf, a] U [b, inf)``, two fronts closing the liquid gap;
* growing ball and shrinking liquid ball in dimension ``d``.

Planar arrival times are exact for constant and piecewise-constant ``u`` (``V`` is linear on
each piece, so ``int 1/V`` is a logarithm) and adaptive-Simpson quadratures of ``1/V``
otherwise, as are the radial ones; the extents (``x*``, ``R*``,
``R_*``) are first crossings located by bisection.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, NamedTuple

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .domain import (
    INF,
    ConstantField,
    Field,
    Piecewise1D,
    ScenarioSpec,
    as_field,
    integral_1p,
    radial_moment_1p,
)
from .numerics import adaptive_simpson, bisect, first_crossing

__all__ = [
    "JumpResult",
    "OneInterfaceSolution",
    "TwoInterfaceSolution",
    "RadialSolution",
    "jump_size_1d",
    "solve_one_interface",
    "solve_two_interface",
    "solve_radial",
]

QUAD_RTOL = 1e-9
ROOT_TOL = 1e-12
#: relative distance kept from a blow-up endpoint when integrating 1/V
BLOWUP_GAP = 1e-8


class JumpResult(NamedTuple):
    value: float
    horizon_limited: bool = False


def jump_size_1d(
    u_bar: Field | float | Any,
    start: float = 0.0,
    horizon: float = 1e6,
    scale: float = 1.0,
) -> JumpResult:
    """Physical jump ``inf{z > 0 : -int_start^(start+z) u_bar < z}`` of a planar front.

    ``+inf`` is returned with ``horizon_limited=True`` when no crossing shows up before
    ``start + horizon*scale``.
    """
    u = as_field(u_bar)

    def g(z: float) -> float:
        # the condition -int u < z  <=>  int (1+u) > 0
        return integral_1p(u, start, start + z)

    z = first_crossing(
        g,
        0.0,
        scale=scale,
        horizon=horizon,
        tol=ROOT_TOL,
        breakpoints=np.asarray(u.breakpoints) - start if u.breakpoints else None,
    )
    if math.isinf(z):
        return JumpResult(INF, True)
    if z < 1e-10 * scale:
        z = 0.0
    return JumpResult(z, False)


# --------------------------------------------------------------------------- 1D branches


@dataclass(frozen=True, eq=False)
class _Branch:
    """One front leaving ``origin`` in direction ``sign`` with initial speed ``v0``."""

    u: Field
    v0: float
    origin: float
    sign: float
    limit: float  # farthest admissible distance (inf for a half-line)

    def swept_energy(self, dist: float) -> float:
        """``int (1+u)`` over the first ``dist`` units travelled."""
        a = self.origin
        b = self.origin + self.sign * dist
        return integral_1p(self.u, min(a, b), max(a, b))

    def speed(self, dist: Any) -> NDArray[np.float64]:
        d = np.atleast_1d(np.asarray(dist, dtype=float))
        return np.array([self.v0 - self.swept_energy(float(s)) for s in d]).reshape(np.shape(dist))

    def extent(self) -> float:
        """Distance travelled before the speed first drops below zero."""
        if self.v0 <= 0:
            return 0.0
        bps = None
        if self.u.breakpoints:
            bps = self.sign * (np.asarray(self.u.breakpoints) - self.origin)
            bps = bps[bps > 0]
        horizon = self.limit if math.isfinite(self.limit) else 1e6
        ext = first_crossing(
            lambda s: self.swept_energy(s) - self.v0,
            0.0,
            scale=1.0,
            horizon=horizon,
            tol=ROOT_TOL,
            breakpoints=bps,
        )
        return min(ext, self.limit)

    def arrival(self, dist: Any, extent: float) -> NDArray[np.float64]:
        d = np.asarray(dist, dtype=float)
        out = np.full(d.shape, INF)
        if self.v0 <= 0:
            out[d <= 0] = 0.0
            return out
        stop = extent * (1.0 - BLOWUP_GAP) if math.isfinite(extent) else INF
        ok = (d >= 0) & (d < stop)
        if extent >= self.limit:
            # the branch reaches the far end with positive speed
            ok = (d >= 0) & (d <= extent)
        flat = d[ok].ravel()
        if isinstance(self.u, (ConstantField, Piecewise1D)):
            out[ok] = self._exact_arrival(flat)
            out[d < 0] = 0.0
            return out
        order = np.argsort(flat, kind="stable")
        vals = np.empty_like(flat)
        acc, prev = 0.0, 0.0
        inv = lambda s: 1.0 / (self.v0 - self.swept_energy(s))  # noqa: E731
        for k in order:
            s = flat[k]
            if s > prev:
                acc += adaptive_simpson(inv, prev, s, rtol=QUAD_RTOL)
                prev = s
            vals[k] = acc
        out[ok] = vals
        out[d < 0] = 0.0
        return out

    def _exact_arrival(self, dist: NDArray[np.float64]) -> NDArray[np.float64]:
        """``int_0^dist ds / V(s)`` piece by piece for piecewise-constant ``u``."""
        top = float(dist.max()) if len(dist) else 0.0
        edges = [0.0]
        if self.u.breakpoints:
            bps = np.sort(self.sign * (np.asarray(self.u.breakpoints) - self.origin))
            edges += [float(b) for b in bps if b > 0.0]
        edges.append(max(top, edges[-1]) + 1.0)
        e = np.asarray(edges)
        mids = self.origin + self.sign * 0.5 * (e[:-1] + e[1:])
        c = 1.0 + np.asarray(self.u(mids), dtype=float) * np.ones(len(mids))
        lengths = np.diff(e)
        V = self.v0 - np.concatenate(([0.0], np.cumsum(c[:-1] * lengths[:-1])))
        T = np.concatenate(([0.0], np.cumsum(_piece_time(V[:-1], c[:-1], lengths[:-1]))))
        k = np.clip(np.searchsorted(e, dist, side="right") - 1, 0, len(c) - 1)
        return T[k] + _piece_time(V[k], c[k], dist - e[k])


def _piece_time(V: NDArray[np.float64], c: NDArray[np.float64], s: NDArray[np.float64]) -> NDArray[np.float64]:
    """``int_0^s dz / (V - c z)``, written with ``log1p`` so that small ``c`` stays accurate."""
    V, c, s = np.broadcast_arrays(np.asarray(V, float), np.asarray(c, float), np.asarray(s, float))
    x = c * s / V
    with np.errstate(divide="ignore", invalid="ignore"):
        lin = s / V
        log = -np.log1p(-x) / np.where(c != 0, c, 1.0)
    out = np.where(np.abs(x) < 1e-8, lin * (1.0 + 0.5 * x), log)
    return np.where(x >= 1.0, INF, out)


@dataclass(frozen=True, eq=False)
class OneInterfaceSolution:
    """Minimal solution for the half-line solid ``(-inf, a]``."""

    x_star: float
    origin: float
    v0: float
    branch: _Branch = field(repr=False)

    def w(self, x: ArrayLike) -> NDArray[np.float64]:
        """Arrival time; ``0`` on the solid, ``inf`` at and beyond ``origin + x_star``."""
        x = np.asarray(x, dtype=float)
        return self.branch.arrival(x - self.origin, self.x_star)

    def v(self, x: ArrayLike) -> NDArray[np.float64]:
        """Speed profile ``V0 - int (1+u)`` (meaningful on ``[a, a + x_star)``)."""
        return self.branch.speed(np.asarray(x, dtype=float) - self.origin)

    def front(self, t: float) -> float:
        """Front position ``Lambda_t`` (inverse of ``w``)."""
        if t <= 0 or self.v0 <= 0:
            return self.origin
        ext = self.x_star if math.isfinite(self.x_star) else 1e6
        if float(self.w(self.origin + ext * (1 - 1e-9))) <= t:
            return self.origin + ext
        return bisect(lambda s: float(self.w(self.origin + s)) - t, 0.0, ext * (1 - 1e-9), tol=1e-13) + self.origin

    def summary(self) -> dict[str, Any]:
        return {"kind": "one_interface", "x_star": _json_num(self.x_star), "t_star": "inf", "locked_energy": None}


@dataclass(frozen=True, eq=False)
class TwoInterfaceSolution:
    """Minimal solution for the solid ``(-inf, a] U [b, inf)``: ``w = min(w0, w1)``."""

    left: OneInterfaceSolution
    right: OneInterfaceSolution  # stored in reflected coordinates, see ``w1``
    a: float
    b: float
    x0_star: float
    x1_star: float
    t_star: float
    x_meet: float | None
    locked_energy: float | None

    def w0(self, x: ArrayLike) -> NDArray[np.float64]:
        x = np.asarray(x, dtype=float)
        out = self.left.w(x)
        out[x >= self.b] = 0.0
        return out

    def w1(self, x: ArrayLike) -> NDArray[np.float64]:
        x = np.asarray(x, dtype=float)
        out = self.right.branch.arrival(self.b - x, self.b - self.x1_star)
        out[x <= self.a] = 0.0
        return out

    def w(self, x: ArrayLike) -> NDArray[np.float64]:
        return np.minimum(self.w0(x), self.w1(x))

    def summary(self) -> dict[str, Any]:
        return {
            "kind": "two_interface",
            "x0_star": _json_num(self.x0_star),
            "x1_star": _json_num(self.x1_star),
            "t_star": _json_num(self.t_star),
            "locked_energy": self.locked_energy,
        }


@dataclass(frozen=True, eq=False)
class RadialSolution:
    """Minimal radial solution (growing solid ball or shrinking liquid ball)."""

    direction: str
    d: int
    r0: float
    r_star: float
    gamma: float
    v0: float
    u: Field = field(repr=False)
    locked_energy: float | None = None
    t_vanish: float | None = None
    certified: bool = True

    def denominator(self, r: float) -> float:
        """``r^(d-1) * V(r)``: the quantity whose zero ends the cascade."""
        g, v0, r0, d = self.gamma, self.v0, self.r0, self.d
        if self.direction == "growing":
            return (g + v0) * r0 ** (d - 1) - radial_moment_1p(self.u, r0, r, d) - g * r ** (d - 1)
        return (g + v0) * r0 ** (d - 1) - radial_moment_1p(self.u, r, r0, d) - g * r ** (d - 1)

    def speed(self, r: ArrayLike) -> NDArray[np.float64]:
        rr = np.atleast_1d(np.asarray(r, dtype=float))
        out = np.array([self.denominator(float(x)) / x ** (self.d - 1) if x > 0 else INF for x in rr])
        return out.reshape(np.shape(r))

    def w(self, r: ArrayLike) -> NDArray[np.float64]:
        """Arrival time as a function of the radius."""
        r = np.asarray(r, dtype=float)
        out = np.full(r.shape, INF)
        d = self.d
        integrand = lambda z: z ** (d - 1) / self.denominator(z)  # noqa: E731
        if self.direction == "growing":
            out[r <= self.r0] = 0.0
            if self.v0 <= 0:
                return out
            stop = self.r_star - BLOWUP_GAP * max(self.r_star - self.r0, 1.0) if math.isfinite(self.r_star) else INF
            ok = (r > self.r0) & (r < stop)
            pts = r[ok]
            order = np.argsort(pts, kind="stable")
            vals = np.empty_like(pts)
            acc, prev = 0.0, self.r0
            for k in order:
                if pts[k] > prev:
                    acc += adaptive_simpson(integrand, prev, pts[k], rtol=QUAD_RTOL)
                    prev = pts[k]
                vals[k] = acc
            out[ok] = vals
            return out
        out[r >= self.r0] = 0.0
        if self.v0 <= 0:
            return out
        if self.r_star > 0:
            stop = self.r_star + BLOWUP_GAP * self.r0
            ok = (r < self.r0) & (r > stop)
        else:
            ok = (r < self.r0) & (r >= 0)
        pts = r[ok]
        order = np.argsort(-pts, kind="stable")
        vals = np.empty_like(pts)
        acc, prev = 0.0, self.r0
        for k in order:
            if pts[k] < prev:
                acc += adaptive_simpson(integrand, pts[k], prev, rtol=QUAD_RTOL)
                prev = pts[k]
            vals[k] = acc
        out[ok] = vals
        return out

    def w_xy(self, x: ArrayLike, y: ArrayLike, center: tuple[float, float] = (0.0, 0.0)) -> NDArray[np.float64]:
        return self.w(np.hypot(np.asarray(x) - center[0], np.asarray(y) - center[1]))

    def summary(self) -> dict[str, Any]:
        return {
            "kind": f"radial_{self.direction}",
            "r_star": _json_num(self.r_star),
            "t_star": _json_num(self.t_vanish if self.t_vanish is not None else INF),
            "locked_energy": self.locked_energy,
            "certified": self.certified,
        }


def _json_num(x: float | None) -> Any:
    if x is None:
        return None
    return "inf" if math.isinf(x) else float(x)


def _scalar_v0(spec: ScenarioSpec, x: float, y: float = 0.0) -> float:
    return float(spec.boundary_v0(np.float64(x), np.float64(y)))


def solve_one_interface(spec: ScenarioSpec) -> OneInterfaceSolution:
    """Minimal solution for a half-line solid ``(-inf, a]``."""
    if spec.initial_region.kind != "half_line":
        raise ValueError("one-interface solver needs a half_line region")
    a = float(spec.initial_region.params["end"])
    v0 = _scalar_v0(spec, a)
    br = _Branch(spec.u, v0, a, 1.0, INF)
    return OneInterfaceSolution(br.extent(), a, v0, br)


def solve_two_interface(spec: ScenarioSpec) -> TwoInterfaceSolution:
    """Minimal solution for ``(-inf, a] U [b, inf)``: two fronts closing the gap ``(a, b)``."""
    if spec.initial_region.kind != "interval_complement":
        raise ValueError("two-interface solver needs an interval_complement region")
    a = float(spec.initial_region.params["left"])
    b = float(spec.initial_region.params["right"])
    gap = b - a
    v0a = _scalar_v0(spec, a)
    v0b = _scalar_v0(spec, b)
    left_br = _Branch(spec.u, v0a, a, 1.0, gap)
    right_br = _Branch(spec.u, v0b, b, -1.0, gap)
    ext0 = left_br.extent()
    ext1 = right_br.extent()
    x0 = a + ext0
    x1 = b - ext1
    left = OneInterfaceSolution(ext0, a, v0a, left_br)
    right = OneInterfaceSolution(ext1, b, v0b, right_br)
    sol_tmp = TwoInterfaceSolution(left, right, a, b, x0, x1, INF, None, None)
    if x0 > x1:
        # fronts meet where w0 == w1 inside (x1*, x0*)
        lo = max(x1, a)
        hi = min(x0, b)
        diff = lambda x: float(sol_tmp.w0(np.array([x]))[0] - sol_tmp.w1(np.array([x]))[0])  # noqa: E731
        eps = 1e-12 * gap
        lo_e, hi_e = lo + eps, hi - eps
        if diff(lo_e) > 0:
            xm = lo
        elif diff(hi_e) <= 0:
            xm = hi
        else:
            xm = bisect(diff, lo_e, hi_e, tol=1e-14)
        t_star = float(max(sol_tmp.w(np.array([xm]))[0], 0.0))
        locked = 2.0 * spec.gamma + v0a + v0b - integral_1p(spec.u, a, b)
        return TwoInterfaceSolution(left, right, a, b, x0, x1, t_star, xm, locked)
    return sol_tmp


def solve_radial(spec: ScenarioSpec) -> RadialSolution:
    """Minimal solution for a growing ball (``ball``) or shrinking liquid ball (``ball_complement``)."""
    kind = spec.initial_region.kind
    if kind not in ("ball", "ball_complement"):
        raise ValueError("radial solver needs a ball or ball_complement region")
    d = spec.dimension
    r0 = float(spec.initial_region.params["radius"])
    c = spec.initial_region.params.get("center", (0.0, 0.0))
    v0 = _scalar_v0(spec, c[0] + r0, c[1])
    u_rad = spec.u
    g = spec.gamma
    if kind == "ball":
        sol = RadialSolution("growing", d, r0, r0, g, v0, u_rad)
        if v0 <= 0:
            return sol
        bps = np.asarray(u_rad.breakpoints) - r0 if u_rad.breakpoints else None
        ext = first_crossing(lambda s: -sol.denominator(r0 + s), 0.0, scale=r0, horizon=1e6, tol=ROOT_TOL, breakpoints=bps)
        return RadialSolution("growing", d, r0, r0 + ext, g, v0, u_rad)
    sol = RadialSolution("shrinking", d, r0, r0, g, v0, u_rad)
    if v0 <= 0:
        return sol
    bps = r0 - np.asarray(u_rad.breakpoints) if u_rad.breakpoints else None
    ext = first_crossing(lambda s: -sol.denominator(r0 - s), 0.0, scale=r0, horizon=1.0, tol=ROOT_TOL, breakpoints=bps)
    r_star = max(r0 - ext, 0.0) if math.isfinite(ext) else 0.0
    locked = None
    t_vanish = None
    certified = True
    if r_star <= 1e-12 * r0:
        r_star = 0.0
        mass = radial_moment_1p(u_rad, 0.0, r0, d)
        if mass < (g + v0) * r0 ** (d - 1):
            locked = (g + v0) * r0 ** (d - 1) - mass
            probe = RadialSolution("shrinking", d, r0, 0.0, g, v0, u_rad, locked)
            t_vanish = float(probe.w(np.array([0.0]))[0])
    else:
        # the minimal-solution formula needs the arrival integral to diverge at R_*;
        # that happens iff the denominator actually vanishes there
        den = sol.denominator(r_star)
        certified = abs(den) <= 1e-6 * max(1.0, (g + v0) * r0 ** (d - 1))
    return RadialSolution("shrinking", d, r0, r_star, g, v0, u_rad, locked, t_vanish, certified)


# --------------------------------------------------------------------------- export


def export_profile(path: str | Path, coords: ArrayLike, w: ArrayLike, v: ArrayLike) -> None:
    """CSV with columns ``coordinate, w, V``."""
    from .io import atomic_write_text

    rows = ["coordinate,w,V"]
    for c, ww, vv in zip(np.asarray(coords), np.asarray(w), np.asarray(v)):
        rows.append(f"{float(c)!r},{_csv_num(ww)},{_csv_num(vv)}")
    atomic_write_text(path, "\n".join(rows) + "\n")


def _csv_num(x: float) -> str:
    x = float(x)
    return "inf" if math.isinf(x) else repr(x)


def export_summary(path: str | Path, summary: dict[str, Any]) -> None:
    from .io import atomic_write_text

    atomic_write_text(path, json.dumps(summary, sort_keys=True, indent=2) + "\n")

