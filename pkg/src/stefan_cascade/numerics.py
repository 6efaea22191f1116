"""Scalar quadrature and root bracketing used by the closed-form and 1D solvers."""

from __future__ import annotations

import math
from collections.abc import Callable

import numpy as np

__all__ = [
    "adaptive_simpson",
    "cumulative_simpson",
    "bisect",
    "first_crossing",
]


def _simpson(fa: float, fm: float, fb: float, a: float, b: float) -> float:
    return (b - a) * (fa + 4.0 * fm + fb) / 6.0


def adaptive_simpson(
    f: Callable[[float], float],
    a: float,
    b: float,
    rtol: float = 1e-9,
    atol: float = 1e-13,
    max_depth: int = 60,
) -> float:
    """Integrate ``f`` over ``[a, b]`` with adaptive Simpson refinement.

    The error estimate is the usual Richardson difference ``|S2 - S1| / 15``.
    Intervals are refined until that estimate falls below
    ``max(atol, rtol * scale)`` times the interval fraction. The scale starts from the coarse
    Simpson value and is replaced by the computed total whenever that total turns out much
    smaller, which happens near integrable blow-ups where the coarse value is far too large.
    """
    if b == a:
        return 0.0
    sign = 1.0
    if b < a:
        a, b = b, a
        sign = -1.0
    fa, fb = f(a), f(b)
    m = 0.5 * (a + b)
    fm = f(m)
    whole = _simpson(fa, fm, fb, a, b)
    width = b - a

    def refine(scale: float) -> float:
        total = 0.0
        stack = [(a, b, fa, fm, fb, whole, 0)]
        while stack:
            lo, hi, flo, fmid, fhi, s, depth = stack.pop()
            mid = 0.5 * (lo + hi)
            lm, rm = 0.5 * (lo + mid), 0.5 * (mid + hi)
            flm, frm = f(lm), f(rm)
            left = _simpson(flo, flm, fmid, lo, mid)
            right = _simpson(fmid, frm, fhi, mid, hi)
            delta = left + right - s
            tol = max(atol, rtol * scale) * (hi - lo) / width
            if depth >= max_depth or abs(delta) <= 15.0 * tol:
                total += left + right + delta / 15.0
            else:
                stack.append((lo, mid, flo, flm, fmid, left, depth + 1))
                stack.append((mid, hi, fmid, frm, fhi, right, depth + 1))
        return total

    scale = abs(whole)
    total = refine(scale)
    for _ in range(4):
        if abs(total) >= 0.5 * scale:
            break
        scale = abs(total)
        total = refine(scale)
    return sign * total


def cumulative_simpson(
    f: Callable[[float], float],
    start: float,
    points: np.ndarray,
    rtol: float = 1e-9,
) -> np.ndarray:
    """Return ``int_start^p f`` for every ``p`` in ``points`` (all ``>= start``).

    Points are visited in sorted order so each piece of the integral is computed once.
    """
    pts = np.asarray(points, dtype=float)
    flat = pts.ravel()
    order = np.argsort(flat, kind="stable")
    out = np.empty_like(flat)
    acc = 0.0
    prev = start
    for k in order:
        p = flat[k]
        if p > prev:
            acc += adaptive_simpson(f, prev, p, rtol=rtol)
            prev = p
        out[k] = acc
    return out.reshape(pts.shape)


def bisect(
    g: Callable[[float], float],
    lo: float,
    hi: float,
    tol: float = 1e-12,
    max_iter: int = 200,
) -> float:
    """Locate the boundary between ``g <= 0`` (at ``lo``) and ``g > 0`` (at ``hi``).

    Returns the right end of the final bracket, so the result always satisfies ``g > 0``
    up to ``tol``.
    """
    for _ in range(max_iter):
        if hi - lo <= tol * max(1.0, abs(lo), abs(hi)):
            break
        mid = 0.5 * (lo + hi)
        if g(mid) > 0.0:
            hi = mid
        else:
            lo = mid
    return hi


def first_crossing(
    g: Callable[[float], float],
    start: float,
    scale: float = 1.0,
    horizon: float = 1e6,
    tol: float = 1e-12,
    subdivisions: int = 32,
    breakpoints: np.ndarray | None = None,
) -> float:
    """Return ``inf{z > start : g(z) > 0}`` or ``inf`` if no crossing before ``start + horizon*scale``.

    The search walks a geometric ladder of offsets (factor 2, starting at ``1e-12*scale``),
    probing ``subdivisions`` points per rung, then bisects the first bracketing interval.
    Optional ``breakpoints`` (kinks of a piecewise function) are always probed so that short
    excursions between them are not skipped.
    """
    limit = start + horizon * scale
    probes = []
    z = 1e-12 * scale
    prev = 0.0
    while start + prev < limit:
        nxt = min(2.0 * z if prev > 0 else z, horizon * scale)
        probes.extend(np.linspace(prev, nxt, subdivisions + 1)[1:])
        prev = nxt
        z = nxt
        if nxt >= horizon * scale:
            break
    grid = start + np.asarray(probes)
    if breakpoints is not None and len(breakpoints):
        bp = np.asarray(breakpoints, dtype=float)
        bp = bp[(bp > start) & (bp < limit)]
        extra = np.concatenate([bp, np.nextafter(bp, np.inf)])
        grid = np.unique(np.concatenate([grid, extra]))
    lo = start
    for z in grid:
        if g(z) > 0.0:
            return bisect(g, lo, z, tol=tol)
        lo = z
    return math.inf
