"""Pure-Python implementations of the lattice kernels.

Signatures match the compiled module ``_kernels`` exactly; :mod:`.kernels` picks one at import.
"""

from __future__ import annotations

import heapq
import math

import numpy as np
from numpy.typing import NDArray

STATUS_MASK = 0
STATUS_CAP = 1
STATUS_REVERSAL = 2
STATUS_STAGNANT = 3
STATUS_OUTSIDE = 4
STATUS_MAX_STEPS = 5

GRAD_FLOOR = 1e-12


def fast_march(
    cost: NDArray[np.float64], frozen: NDArray[np.uint8], h: float, periodic_y: bool, start: NDArray[np.float64]
) -> NDArray[np.float64]:
    """First-order fast marching for ``|grad w| = cost`` with ``w = start`` on ``frozen``.

    ``cost`` must be nonnegative. Ties in the heap are broken first-in first-out, so
    zero-cost plateaus fill in breadth-first order at a constant value.
    """
    nx, ny = cost.shape
    w = np.full((nx, ny), np.inf)
    done = np.zeros((nx, ny), dtype=bool)
    heap: list[tuple[float, int, int, int]] = []
    seq = 0
    for i, j in zip(*np.nonzero(frozen)):
        w[i, j] = start[i, j]
        heap.append((float(start[i, j]), seq, int(i), int(j)))
        seq += 1
    heapq.heapify(heap)

    def neighbours(i: int, j: int):
        if i > 0:
            yield i - 1, j
        if i < nx - 1:
            yield i + 1, j
        if j > 0:
            yield i, j - 1
        elif periodic_y:
            yield i, ny - 1
        if j < ny - 1:
            yield i, j + 1
        elif periodic_y:
            yield i, 0

    def solve(i: int, j: int) -> float:
        a = math.inf
        if i > 0 and done[i - 1, j]:
            a = w[i - 1, j]
        if i < nx - 1 and done[i + 1, j]:
            a = min(a, w[i + 1, j])
        b = math.inf
        jm = j - 1 if j > 0 else (ny - 1 if periodic_y else -1)
        jp = j + 1 if j < ny - 1 else (0 if periodic_y else -1)
        if jm >= 0 and done[i, jm]:
            b = w[i, jm]
        if jp >= 0 and done[i, jp]:
            b = min(b, w[i, jp])
        f = cost[i, j] * h
        if math.isinf(a) or math.isinf(b) or abs(a - b) >= f:
            return min(a, b) + f
        return 0.5 * (a + b + math.sqrt(2.0 * f * f - (a - b) ** 2))

    while heap:
        val, _, i, j = heapq.heappop(heap)
        if done[i, j] or val > w[i, j]:
            continue
        done[i, j] = True
        for a, b in neighbours(i, j):
            if done[a, b]:
                continue
            cand = solve(a, b)
            if cand < w[a, b]:
                w[a, b] = cand
                heapq.heappush(heap, (cand, seq, a, b))
                seq += 1
    return w


def stamp_triangles(
    w: NDArray[np.float64],
    tri: NDArray[np.float64],
    tt: NDArray[np.float64],
    ox: float,
    oy: float,
    h: float,
    periodic_y: bool,
) -> NDArray[np.int64]:
    """Write linearly interpolated times into cell centers covered by triangles.

    ``tri[k] = (x0, y0, x1, y1, x2, y2)`` with vertex times ``tt[k]``. Each covered cell gets
    ``min(w, time)``; the flat indices of cells that were ``inf`` before are returned.
    """
    nx, ny = w.shape
    if len(tri) == 0:
        return np.zeros(0, dtype=np.int64)
    xs = tri[:, 0::2]
    ys = tri[:, 1::2]
    i_lo = np.ceil((xs.min(axis=1) - ox) / h - 0.5 - 1e-9).astype(np.int64)
    i_hi = np.floor((xs.max(axis=1) - ox) / h - 0.5 + 1e-9).astype(np.int64)
    j_lo = np.ceil((ys.min(axis=1) - oy) / h - 0.5 - 1e-9).astype(np.int64)
    j_hi = np.floor((ys.max(axis=1) - oy) / h - 0.5 + 1e-9).astype(np.int64)
    span_i = int(max(0, (i_hi - i_lo).max() + 1))
    span_j = int(max(0, (j_hi - j_lo).max() + 1))
    x0, y0, x1, y1, x2, y2 = tri.T
    det = (y1 - y2) * (x0 - x2) + (x2 - x1) * (y0 - y2)
    good = np.abs(det) > 1e-300
    new: list[NDArray[np.int64]] = []
    flat = w.reshape(-1)
    for di in range(span_i):
        for dj in range(span_j):
            ii = i_lo + di
            jj = j_lo + dj
            ok = good & (ii <= i_hi) & (jj <= j_hi) & (ii >= 0) & (ii < nx)
            if not periodic_y:
                ok &= (jj >= 0) & (jj < ny)
            if not ok.any():
                continue
            k = np.nonzero(ok)[0]
            px = ox + (ii[k] + 0.5) * h
            py = oy + (jj[k] + 0.5) * h
            l0 = ((y1[k] - y2[k]) * (px - x2[k]) + (x2[k] - x1[k]) * (py - y2[k])) / det[k]
            l1 = ((y2[k] - y0[k]) * (px - x2[k]) + (x0[k] - x2[k]) * (py - y2[k])) / det[k]
            l2 = 1.0 - l0 - l1
            tol = -1e-9
            inside = (l0 >= tol) & (l1 >= tol) & (l2 >= tol)
            if not inside.any():
                continue
            k = k[inside]
            t = (
                np.clip(l0[inside], 0, 1) * tt[k, 0]
                + np.clip(l1[inside], 0, 1) * tt[k, 1]
                + np.clip(l2[inside], 0, 1) * tt[k, 2]
            ) / (np.clip(l0[inside], 0, 1) + np.clip(l1[inside], 0, 1) + np.clip(l2[inside], 0, 1))
            jw = np.mod(jj[k], ny) if periodic_y else jj[k]
            idx = ii[k] * ny + jw
            # process in order so repeated cells keep the minimum
            order = np.lexsort((t, idx))
            idx, t = idx[order], t[order]
            first = np.ones(idx.size, dtype=bool)
            first[1:] = idx[1:] != idx[:-1]
            idx, t = idx[first], t[first]
            was_inf = np.isinf(flat[idx])
            upd = t < flat[idx]
            flat[idx[upd]] = t[upd]
            new.append(idx[was_inf & upd])
    if not new:
        return np.zeros(0, dtype=np.int64)
    return np.unique(np.concatenate(new))


def _sample_nearest(field: NDArray[np.float64], fi: NDArray[np.float64], fj: NDArray[np.float64], periodic_y: bool):
    nx, ny = field.shape
    i = np.clip(np.floor(fi).astype(np.int64), 0, nx - 1)
    j = np.floor(fj).astype(np.int64)
    j = np.mod(j, ny) if periodic_y else np.clip(j, 0, ny - 1)
    return field[i, j], i, j


def _bilinear(field: NDArray[np.float64], fi: NDArray[np.float64], fj: NDArray[np.float64], periodic_y: bool):
    """Bilinear interpolation of cell-center data at fractional cell coordinates."""
    nx, ny = field.shape
    gi = fi - 0.5
    gj = fj - 0.5
    i0 = np.floor(gi).astype(np.int64)
    j0 = np.floor(gj).astype(np.int64)
    ti = gi - i0
    tj = gj - j0
    i0c = np.clip(i0, 0, nx - 1)
    i1c = np.clip(i0 + 1, 0, nx - 1)
    if periodic_y:
        j0c = np.mod(j0, ny)
        j1c = np.mod(j0 + 1, ny)
    else:
        j0c = np.clip(j0, 0, ny - 1)
        j1c = np.clip(j0 + 1, 0, ny - 1)
    return (
        field[i0c, j0c] * (1 - ti) * (1 - tj)
        + field[i1c, j0c] * ti * (1 - tj)
        + field[i0c, j1c] * (1 - ti) * tj
        + field[i1c, j1c] * ti * tj
    )


def _deposit(out: NDArray[np.float64], x0, y0, x1, y1, weight, ox: float, oy: float, h: float, periodic_y: bool) -> None:
    """Add ``weight * (length inside cell)`` for straight segments shorter than one cell."""
    nx, ny = out.shape
    fx0 = (x0 - ox) / h
    fy0 = (y0 - oy) / h
    fx1 = (x1 - ox) / h
    fy1 = (y1 - oy) / h
    L = np.hypot(x1 - x0, y1 - y0)
    dx = fx1 - fx0
    dy = fy1 - fy0
    with np.errstate(divide="ignore", invalid="ignore"):
        gx = np.where(np.floor(fx1) != np.floor(fx0), (np.maximum(np.floor(fx0), np.floor(fx1)) - fx0) / dx, 2.0)
        gy = np.where(np.floor(fy1) != np.floor(fy0), (np.maximum(np.floor(fy0), np.floor(fy1)) - fy0) / dy, 2.0)
    gx = np.where(np.isfinite(gx), gx, 2.0)
    gy = np.where(np.isfinite(gy), gy, 2.0)
    a = np.minimum(gx, gy)
    b = np.maximum(gx, gy)
    cuts = [np.zeros_like(L), np.minimum(a, 1.0), np.minimum(b, 1.0), np.ones_like(L)]
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        frac = hi - lo
        sel = frac > 0
        if not sel.any():
            continue
        mid = 0.5 * (lo[sel] + hi[sel])
        mi = np.floor(fx0[sel] + mid * dx[sel]).astype(np.int64)
        mj = np.floor(fy0[sel] + mid * dy[sel]).astype(np.int64)
        if periodic_y:
            mj = np.mod(mj, ny)
        ok = (mi >= 0) & (mi < nx) & (mj >= 0) & (mj < ny)
        np.add.at(out, (mi[ok], mj[ok]), (weight[sel] * frac[sel] * L[sel])[ok])


def trace_batch(
    w: NDArray[np.float64],
    gx: NDArray[np.float64],
    gy: NDArray[np.float64],
    stop: NDArray[np.uint8],
    hazard: NDArray[np.float64],
    cost: NDArray[np.float64],
    starts: NDArray[np.float64],
    weights: NDArray[np.float64],
    direction: float,
    step: float,
    max_steps: int,
    w_stop: float,
    ox: float,
    oy: float,
    h: float,
    periodic_y: bool,
    occ: NDArray[np.float64],
    kill: NDArray[np.float64],
    record: bool,
):
    """Follow ``direction * grad w / |grad w|`` from each start with fixed step length.

    Descending paths (``direction = -1``) stop on entering a ``stop`` cell. Ascending paths stop
    when ``w`` reaches ``w_stop`` (or is infinite). Both stop when the interpolated gradient
    reverses against the previous heading (a ridge) or vanishes. Weights decay at rate
    ``hazard`` per unit length; ``occ`` gathers ``weight * length`` per cell (exact segment/cell
    intersections) and ``kill`` the weight lost in each cell.

    Returns ``(end_xy, end_w, weight_left, status, length, cost_integral, polylines)``.
    """
    nx, ny = w.shape
    n = len(starts)
    pos = np.array(starts, dtype=float).reshape(n, 2)
    W = np.array(weights, dtype=float)
    status = np.full(n, STATUS_MAX_STEPS, dtype=np.int8)
    length = np.zeros(n)
    cost_acc = np.zeros(n)
    heading = np.zeros((n, 2))
    active = np.ones(n, dtype=bool)
    end_w = np.zeros(n)
    polys: list[list[tuple[float, float]]] | None = [[(p[0], p[1])] for p in pos] if record else None
    wf = np.where(np.isfinite(w), w, np.inf)

    def locate(p):
        return (p[:, 0] - ox) / h, (p[:, 1] - oy) / h

    def outside(fi, fj):
        bad = (fi < 0) | (fi >= nx)
        if not periodic_y:
            bad |= (fj < 0) | (fj >= ny)
        return bad

    def w_at(fi, fj):
        near, _, _ = _sample_nearest(wf, fi, fj, periodic_y)
        lin = _bilinear(np.where(np.isfinite(wf), wf, 0.0), fi, fj, periodic_y)
        fin = _bilinear(np.isfinite(wf).astype(float), fi, fj, periodic_y)
        return np.where(fin > 1 - 1e-12, lin, near)

    fi, fj = locate(pos)
    bad = outside(fi, fj)
    status[bad] = STATUS_OUTSIDE
    active &= ~bad
    if direction < 0:
        inm = np.zeros(n, dtype=bool)
        sv, _, _ = _sample_nearest(stop.astype(float), fi, fj, periodic_y)
        inm[active] = sv[active] > 0
        status[inm] = STATUS_MASK
        active &= ~inm
    cur_w = w_at(fi, fj)
    end_w[:] = cur_w
    for it in range(max_steps):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        p = pos[idx]
        fi, fj = locate(p)
        g = np.stack([_bilinear(gx, fi, fj, periodic_y), _bilinear(gy, fi, fj, periodic_y)], axis=1)
        gn = np.hypot(g[:, 0], g[:, 1])
        stag = gn < GRAD_FLOOR
        d = direction * g / np.where(stag, 1.0, gn)[:, None]
        rev = (it > 0) & (np.einsum("ij,ij->i", d, heading[idx]) < 0)
        halt = stag | rev
        status[idx[stag]] = STATUS_STAGNANT
        status[idx[rev & ~stag]] = STATUS_REVERSAL
        active[idx[halt]] = False
        keep = ~halt
        idx, p, d = idx[keep], p[keep], d[keep]
        if idx.size == 0:
            break
        q = p + step * d
        qi, qj = locate(q)
        out = outside(qi, qj)
        frac = np.ones(idx.size)
        new_w = w_at(qi, qj)
        ended = np.zeros(idx.size, dtype=bool)
        code = np.full(idx.size, -1, dtype=np.int8)
        if direction > 0:
            reach = ~out & (new_w >= w_stop)
            w0 = cur_w[idx]
            with np.errstate(invalid="ignore", divide="ignore"):
                fr = np.where(np.isfinite(new_w), (w_stop - w0) / (new_w - w0), 0.5)
            frac = np.where(reach, np.clip(np.nan_to_num(fr, nan=0.5), 0.0, 1.0), frac)
            ended |= reach
            code[reach] = STATUS_CAP
        else:
            sv, _, _ = _sample_nearest(stop.astype(float), np.clip(qi, 0, nx - 1e-9), qj, periodic_y)
            hit = ~out & (sv > 0)
            ended |= hit
            code[hit] = STATUS_MASK
        frac = np.where(out, 0.0, frac)
        # a path that would leave the grid stays put, and so does its time
        new_w = np.where(out, cur_w[idx], new_w)
        ended |= out
        code[out] = STATUS_OUTSIDE
        qq = p + (step * frac)[:, None] * d
        seg = step * frac
        mid = 0.5 * (p + qq)
        mi, mj = locate(mid)
        hz, ci, cj = _sample_nearest(hazard, mi, mj, periodic_y)
        cst, _, _ = _sample_nearest(cost, mi, mj, periodic_y)
        W0 = W[idx]
        W1 = W0 * np.exp(-hz * seg)
        _deposit(occ, p[:, 0], p[:, 1], qq[:, 0], qq[:, 1], 0.5 * (W0 + W1), ox, oy, h, periodic_y)
        np.add.at(kill, (ci, cj), W0 - W1)
        W[idx] = W1
        length[idx] += seg
        cost_acc[idx] += cst * seg
        pos[idx] = qq
        heading[idx] = d
        cur_w[idx] = np.where(ended & (code == STATUS_CAP), w_stop, new_w)
        if polys is not None:
            for k, r in enumerate(idx):
                polys[r].append((qq[k, 0], qq[k, 1]))
        done = idx[ended]
        status[done] = code[ended]
        active[done] = False
    end_w[:] = cur_w
    return pos, end_w, W, status, length, cost_acc, polys
