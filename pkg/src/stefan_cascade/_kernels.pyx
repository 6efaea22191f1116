# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled lattice kernels; see ``_kernels_py`` for the reference semantics."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, floor, ceil, fabs, exp, INFINITY, isfinite, hypot
from libc.stdlib cimport malloc, free, realloc

cnp.import_array()

cdef enum:
    STATUS_MASK = 0
    STATUS_CAP = 1
    STATUS_REVERSAL = 2
    STATUS_STAGNANT = 3
    STATUS_OUTSIDE = 4
    STATUS_MAX_STEPS = 5

cdef double GRAD_FLOOR = 1e-12


# ----------------------------------------------------------------------------- binary heap

cdef struct Entry:
    double key
    long long seq
    Py_ssize_t idx


cdef inline bint _less(Entry a, Entry b) nogil:
    if a.key < b.key:
        return True
    if a.key > b.key:
        return False
    return a.seq < b.seq


cdef struct Heap:
    Entry* data
    Py_ssize_t size
    Py_ssize_t cap


cdef int _push(Heap* hp, Entry e) nogil:
    cdef Py_ssize_t i, parent
    cdef Entry* grown
    if hp.size == hp.cap:
        grown = <Entry*> realloc(hp.data, 2 * hp.cap * sizeof(Entry))
        if grown == NULL:
            return -1
        hp.data = grown
        hp.cap *= 2
    i = hp.size
    hp.size += 1
    while i > 0:
        parent = (i - 1) // 2
        if _less(e, hp.data[parent]):
            hp.data[i] = hp.data[parent]
            i = parent
        else:
            break
    hp.data[i] = e
    return 0


cdef Entry _pop(Heap* hp) nogil:
    cdef Entry top = hp.data[0]
    cdef Entry last
    cdef Py_ssize_t i = 0, c
    hp.size -= 1
    if hp.size > 0:
        last = hp.data[hp.size]
        while True:
            c = 2 * i + 1
            if c >= hp.size:
                break
            if c + 1 < hp.size and _less(hp.data[c + 1], hp.data[c]):
                c += 1
            if _less(hp.data[c], last):
                hp.data[i] = hp.data[c]
                i = c
            else:
                break
        hp.data[i] = last
    return top


cdef inline double _solve(double[:, ::1] w, unsigned char[:, ::1] done, const double[:, ::1] cost,
                          Py_ssize_t i, Py_ssize_t j, Py_ssize_t nx, Py_ssize_t ny,
                          bint periodic, double h) nogil:
    cdef double a = INFINITY, b = INFINITY, f, d
    cdef Py_ssize_t jm, jp
    if i > 0 and done[i - 1, j]:
        a = w[i - 1, j]
    if i < nx - 1 and done[i + 1, j] and w[i + 1, j] < a:
        a = w[i + 1, j]
    jm = j - 1 if j > 0 else (ny - 1 if periodic else -1)
    jp = j + 1 if j < ny - 1 else (0 if periodic else -1)
    if jm >= 0 and done[i, jm]:
        b = w[i, jm]
    if jp >= 0 and done[i, jp] and w[i, jp] < b:
        b = w[i, jp]
    f = cost[i, j] * h
    if a == INFINITY or b == INFINITY:
        return (a if a < b else b) + f
    d = a - b
    if fabs(d) >= f:
        return (a if a < b else b) + f
    return 0.5 * (a + b + sqrt(2.0 * f * f - d * d))


def fast_march(const double[:, ::1] cost, const unsigned char[:, ::1] frozen, double h, bint periodic_y,
               const double[:, ::1] start):
    cdef Py_ssize_t nx = cost.shape[0], ny = cost.shape[1]
    out = np.full((nx, ny), np.inf)
    cdef double[:, ::1] w = out
    done_arr = np.zeros((nx, ny), dtype=np.uint8)
    cdef unsigned char[:, ::1] done = done_arr
    cdef Heap hp
    cdef Entry e
    cdef long long seq = 0
    cdef Py_ssize_t i, j, k, a, b
    cdef Py_ssize_t ni[4]
    cdef Py_ssize_t nj[4]
    cdef int nn
    cdef double cand
    hp.cap = 1024
    hp.size = 0
    hp.data = <Entry*> malloc(hp.cap * sizeof(Entry))
    if hp.data == NULL:
        raise MemoryError()
    try:
        with nogil:
            for i in range(nx):
                for j in range(ny):
                    if frozen[i, j]:
                        w[i, j] = start[i, j]
                        e.key = start[i, j]
                        e.seq = seq
                        e.idx = i * ny + j
                        seq += 1
                        if _push(&hp, e) != 0:
                            break
            while hp.size > 0:
                e = _pop(&hp)
                i = e.idx // ny
                j = e.idx % ny
                if done[i, j] or e.key > w[i, j]:
                    continue
                done[i, j] = 1
                nn = 0
                if i > 0:
                    ni[nn] = i - 1; nj[nn] = j; nn += 1
                if i < nx - 1:
                    ni[nn] = i + 1; nj[nn] = j; nn += 1
                if j > 0:
                    ni[nn] = i; nj[nn] = j - 1; nn += 1
                elif periodic_y:
                    ni[nn] = i; nj[nn] = ny - 1; nn += 1
                if j < ny - 1:
                    ni[nn] = i; nj[nn] = j + 1; nn += 1
                elif periodic_y:
                    ni[nn] = i; nj[nn] = 0; nn += 1
                for k in range(nn):
                    a = ni[k]
                    b = nj[k]
                    if done[a, b]:
                        continue
                    cand = _solve(w, done, cost, a, b, nx, ny, periodic_y, h)
                    if cand < w[a, b]:
                        w[a, b] = cand
                        e.key = cand
                        e.seq = seq
                        e.idx = a * ny + b
                        seq += 1
                        if _push(&hp, e) != 0:
                            break
    finally:
        free(hp.data)
    return out


# ----------------------------------------------------------------------------- swept triangles

def stamp_triangles(double[:, ::1] w, const double[:, ::1] tri, const double[:, ::1] tt,
                    double ox, double oy, double h, bint periodic_y):
    cdef Py_ssize_t nx = w.shape[0], ny = w.shape[1], n = tri.shape[0]
    cdef Py_ssize_t k, i, j, jw, ilo, ihi, jlo, jhi, count = 0
    cdef double x0, y0, x1, y1, x2, y2, det, px, py, l0, l1, l2, s, t
    cdef double xmin, xmax, ymin, ymax
    buf = np.empty(max(16, 4 * n), dtype=np.int64)
    cdef long long[::1] nb = buf
    for k in range(n):
        x0 = tri[k, 0]; y0 = tri[k, 1]; x1 = tri[k, 2]; y1 = tri[k, 3]; x2 = tri[k, 4]; y2 = tri[k, 5]
        det = (y1 - y2) * (x0 - x2) + (x2 - x1) * (y0 - y2)
        if fabs(det) <= 1e-300:
            continue
        xmin = min(x0, min(x1, x2)); xmax = max(x0, max(x1, x2))
        ymin = min(y0, min(y1, y2)); ymax = max(y0, max(y1, y2))
        ilo = <Py_ssize_t> ceil((xmin - ox) / h - 0.5 - 1e-9)
        ihi = <Py_ssize_t> floor((xmax - ox) / h - 0.5 + 1e-9)
        jlo = <Py_ssize_t> ceil((ymin - oy) / h - 0.5 - 1e-9)
        jhi = <Py_ssize_t> floor((ymax - oy) / h - 0.5 + 1e-9)
        if ilo < 0:
            ilo = 0
        if ihi > nx - 1:
            ihi = nx - 1
        if not periodic_y:
            if jlo < 0:
                jlo = 0
            if jhi > ny - 1:
                jhi = ny - 1
        for i in range(ilo, ihi + 1):
            px = ox + (i + 0.5) * h
            for j in range(jlo, jhi + 1):
                py = oy + (j + 0.5) * h
                l0 = ((y1 - y2) * (px - x2) + (x2 - x1) * (py - y2)) / det
                l1 = ((y2 - y0) * (px - x2) + (x0 - x2) * (py - y2)) / det
                l2 = 1.0 - l0 - l1
                if l0 < -1e-9 or l1 < -1e-9 or l2 < -1e-9:
                    continue
                l0 = min(max(l0, 0.0), 1.0)
                l1 = min(max(l1, 0.0), 1.0)
                l2 = min(max(l2, 0.0), 1.0)
                s = l0 + l1 + l2
                t = (l0 * tt[k, 0] + l1 * tt[k, 1] + l2 * tt[k, 2]) / s
                jw = j % ny
                if jw < 0:
                    jw += ny
                if t < w[i, jw]:
                    if w[i, jw] == INFINITY:
                        if count == nb.shape[0]:
                            buf = np.concatenate([buf, np.empty_like(buf)])
                            nb = buf
                        nb[count] = i * ny + jw
                        count += 1
                    w[i, jw] = t
    return np.unique(buf[:count])


# ----------------------------------------------------------------------------- path tracing

cdef inline Py_ssize_t _wrapj(Py_ssize_t j, Py_ssize_t ny, bint periodic) nogil:
    if periodic:
        j = j % ny
        if j < 0:
            j += ny
        return j
    if j < 0:
        return 0
    if j > ny - 1:
        return ny - 1
    return j


cdef inline Py_ssize_t _clampi(Py_ssize_t i, Py_ssize_t nx) nogil:
    if i < 0:
        return 0
    if i > nx - 1:
        return nx - 1
    return i


cdef inline double _bilin(const double[:, ::1] f, double fi, double fj, Py_ssize_t nx, Py_ssize_t ny, bint periodic) nogil:
    cdef double gi = fi - 0.5, gj = fj - 0.5
    cdef Py_ssize_t i0 = <Py_ssize_t> floor(gi), j0 = <Py_ssize_t> floor(gj)
    cdef double ti = gi - i0, tj = gj - j0
    cdef Py_ssize_t a0 = _clampi(i0, nx), a1 = _clampi(i0 + 1, nx)
    cdef Py_ssize_t b0 = _wrapj(j0, ny, periodic), b1 = _wrapj(j0 + 1, ny, periodic)
    return (f[a0, b0] * (1 - ti) * (1 - tj) + f[a1, b0] * ti * (1 - tj)
            + f[a0, b1] * (1 - ti) * tj + f[a1, b1] * ti * tj)


cdef inline double _w_at(const double[:, ::1] w, double fi, double fj, Py_ssize_t nx, Py_ssize_t ny, bint periodic) nogil:
    cdef double gi = fi - 0.5, gj = fj - 0.5
    cdef Py_ssize_t i0 = <Py_ssize_t> floor(gi), j0 = <Py_ssize_t> floor(gj)
    cdef double ti = gi - i0, tj = gj - j0
    cdef Py_ssize_t a0 = _clampi(i0, nx), a1 = _clampi(i0 + 1, nx)
    cdef Py_ssize_t b0 = _wrapj(j0, ny, periodic), b1 = _wrapj(j0 + 1, ny, periodic)
    cdef double v00 = w[a0, b0], v10 = w[a1, b0], v01 = w[a0, b1], v11 = w[a1, b1]
    if isfinite(v00) and isfinite(v10) and isfinite(v01) and isfinite(v11):
        return v00 * (1 - ti) * (1 - tj) + v10 * ti * (1 - tj) + v01 * (1 - ti) * tj + v11 * ti * tj
    return w[_clampi(<Py_ssize_t> floor(fi), nx), _wrapj(<Py_ssize_t> floor(fj), ny, periodic)]


cdef inline bint _outside(double fi, double fj, Py_ssize_t nx, Py_ssize_t ny, bint periodic) nogil:
    if fi < 0 or fi >= nx:
        return True
    if not periodic and (fj < 0 or fj >= ny):
        return True
    return False


cdef void _deposit(double[:, ::1] out, double fx0, double fy0, double fx1, double fy1, double L,
                   double weight, Py_ssize_t nx, Py_ssize_t ny, bint periodic) nogil:
    # walk the cells crossed by the segment (Amanatides-Woo) and add weight * piece length
    cdef double dx = fx1 - fx0, dy = fy1 - fy0
    cdef Py_ssize_t ci = <Py_ssize_t> floor(fx0), cj = <Py_ssize_t> floor(fy0)
    cdef Py_ssize_t ei = <Py_ssize_t> floor(fx1), ej = <Py_ssize_t> floor(fy1)
    cdef int si = 1 if dx > 0 else -1
    cdef int sj = 1 if dy > 0 else -1
    cdef double tmx, tmy, tdx, tdy, t0 = 0.0, t1
    cdef Py_ssize_t jw
    cdef int guard = 0
    if dx != 0:
        tmx = ((ci + (1 if si > 0 else 0)) - fx0) / dx
        tdx = si / dx
    else:
        tmx = INFINITY
        tdx = INFINITY
    if dy != 0:
        tmy = ((cj + (1 if sj > 0 else 0)) - fy0) / dy
        tdy = sj / dy
    else:
        tmy = INFINITY
        tdy = INFINITY
    while guard < 64:
        guard += 1
        t1 = min(min(tmx, tmy), 1.0)
        if t1 > t0 and ci >= 0 and ci < nx:
            jw = cj
            if periodic:
                jw = cj % ny
                if jw < 0:
                    jw += ny
            if jw >= 0 and jw < ny:
                out[ci, jw] += weight * (t1 - t0) * L
        if t1 >= 1.0 or (ci == ei and cj == ej):
            break
        t0 = t1
        if tmx < tmy:
            ci += si
            tmx += tdx
        else:
            cj += sj
            tmy += tdy


def trace_batch(const double[:, ::1] w, const double[:, ::1] gx, const double[:, ::1] gy,
                const unsigned char[:, ::1] stop, const double[:, ::1] hazard, const double[:, ::1] cost,
                const double[:, ::1] starts, const double[::1] weights, double direction, double step,
                Py_ssize_t max_steps, double w_stop, double ox, double oy, double h, bint periodic_y,
                double[:, ::1] occ, double[:, ::1] kill, bint record):
    cdef Py_ssize_t nx = w.shape[0], ny = w.shape[1], n = starts.shape[0]
    end_arr = np.empty((n, 2))
    endw_arr = np.empty(n)
    wl_arr = np.empty(n)
    st_arr = np.full(n, STATUS_MAX_STEPS, dtype=np.int8)
    len_arr = np.zeros(n)
    cost_arr = np.zeros(n)
    cdef double[:, ::1] end = end_arr
    cdef double[::1] endw = endw_arr, wl = wl_arr, plen = len_arr, pcost = cost_arr
    cdef signed char[::1] status = st_arr
    cdef Py_ssize_t p, it, ci, cj, si, sj
    cdef double x, y, fi, fj, qx, qy, qi, qj, g0, g1, gn, dx, dy, hx, hy, cw, nw, frac, seg
    cdef double W0, W1, mx, my, hz
    cdef int code
    polys = [] if record else None
    for p in range(n):
        x = starts[p, 0]
        y = starts[p, 1]
        W0 = weights[p]
        fi = (x - ox) / h
        fj = (y - oy) / h
        poly = [(x, y)] if record else None
        code = STATUS_MAX_STEPS
        cw = _w_at(w, fi, fj, nx, ny, periodic_y) if not _outside(fi, fj, nx, ny, periodic_y) else INFINITY
        hx = 0.0
        hy = 0.0
        if _outside(fi, fj, nx, ny, periodic_y):
            code = STATUS_OUTSIDE
        elif direction < 0 and stop[_clampi(<Py_ssize_t> floor(fi), nx), _wrapj(<Py_ssize_t> floor(fj), ny, periodic_y)]:
            code = STATUS_MASK
        else:
            for it in range(max_steps):
                g0 = _bilin(gx, fi, fj, nx, ny, periodic_y)
                g1 = _bilin(gy, fi, fj, nx, ny, periodic_y)
                gn = hypot(g0, g1)
                if gn < GRAD_FLOOR:
                    code = STATUS_STAGNANT
                    break
                dx = direction * g0 / gn
                dy = direction * g1 / gn
                if it > 0 and dx * hx + dy * hy < 0:
                    code = STATUS_REVERSAL
                    break
                qx = x + step * dx
                qy = y + step * dy
                qi = (qx - ox) / h
                qj = (qy - oy) / h
                frac = 1.0
                code = -1
                if _outside(qi, qj, nx, ny, periodic_y):
                    frac = 0.0
                    code = STATUS_OUTSIDE
                    nw = cw
                else:
                    nw = _w_at(w, qi, qj, nx, ny, periodic_y)
                    if direction > 0:
                        if nw >= w_stop:
                            code = STATUS_CAP
                            if isfinite(nw) and nw != cw:
                                frac = (w_stop - cw) / (nw - cw)
                            else:
                                frac = 0.5
                            frac = min(max(frac, 0.0), 1.0)
                    elif stop[_clampi(<Py_ssize_t> floor(qi), nx), _wrapj(<Py_ssize_t> floor(qj), ny, periodic_y)]:
                        code = STATUS_MASK
                seg = step * frac
                qx = x + seg * dx
                qy = y + seg * dy
                qi = (qx - ox) / h
                qj = (qy - oy) / h
                mx = 0.5 * (fi + qi)
                my = 0.5 * (fj + qj)
                ci = _clampi(<Py_ssize_t> floor(mx), nx)
                cj = _wrapj(<Py_ssize_t> floor(my), ny, periodic_y)
                hz = hazard[ci, cj]
                W1 = W0 * exp(-hz * seg)
                if seg > 0:
                    _deposit(occ, fi, fj, qi, qj, seg, 0.5 * (W0 + W1), nx, ny, periodic_y)
                    kill[ci, cj] += W0 - W1
                    pcost[p] += cost[ci, cj] * seg
                    plen[p] += seg
                W0 = W1
                x = qx
                y = qy
                fi = qi
                fj = qj
                hx = dx
                hy = dy
                if code == STATUS_CAP:
                    cw = w_stop
                else:
                    cw = nw
                if record:
                    poly.append((x, y))
                if code >= 0:
                    break
                code = STATUS_MAX_STEPS
        end[p, 0] = x
        end[p, 1] = y
        endw[p] = cw
        wl[p] = W0
        status[p] = code
        if record:
            polys.append(poly)
    return end_arr, endw_arr, wl_arr, st_arr, len_arr, cost_arr, polys
