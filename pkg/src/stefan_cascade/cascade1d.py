"""Fast-time-scale solvers for the planar cascade.

``integrate_fast_ode`` follows the front position ``x(t)`` through

    x' = v0 - int_lam^x (1 + u_bar),    x(0) = lam + eps,

whose limit as ``t -> inf`` is the post-jump front. With ``v0 = 0`` the unperturbed start is a
fixed point, so the limit is taken along a decreasing ``eps`` ladder.
``solve_arrival_ode`` integrates ``(1/w')' = -(1+u)`` for the arrival time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .closedform import OneInterfaceSolution, _Branch
from .domain import INF, Field, as_field, integral_1p

__all__ = [
    "FastOdeTrace",
    "integrate_fast_ode",
    "extrapolate_limit",
    "solve_arrival_ode",
]

LOCAL_TOL = 1e-12
STALL_SPEED = 1e-12


@dataclass(frozen=True, eq=False)
class FastOdeTrace:
    """Accepted RK4 steps of the fast ODE plus the extracted limit."""

    times: NDArray[np.float64]
    positions: NDArray[np.float64]
    slopes: NDArray[np.float64]
    limit: float
    converged: bool
    blew_up: bool = False
    lam: float = 0.0
    eps: float = 0.0

    def position(self, t: ArrayLike) -> NDArray[np.float64]:
        """Cubic Hermite dense output between accepted steps."""
        t = np.asarray(t, dtype=float)
        ts, xs, fs = self.times, self.positions, self.slopes
        k = np.clip(np.searchsorted(ts, t, side="right") - 1, 0, len(ts) - 2)
        h = ts[k + 1] - ts[k]
        s = np.clip((t - ts[k]) / h, 0.0, 1.0)
        h00 = 2 * s**3 - 3 * s**2 + 1
        h10 = s**3 - 2 * s**2 + s
        h01 = -2 * s**3 + 3 * s**2
        h11 = s**3 - s**2
        out = h00 * xs[k] + h10 * h * fs[k] + h01 * xs[k + 1] + h11 * h * fs[k + 1]
        return np.where(t >= ts[-1], xs[-1], out)

    def arrival(self, x: ArrayLike) -> NDArray[np.float64]:
        """``inf{t : x(t) >= x}`` by inverting the dense output; ``inf`` past the reach."""
        x = np.asarray(x, dtype=float)
        out = np.full(x.shape, INF)
        xs = self.positions
        flat_x, flat_o = x.ravel(), out.ravel()
        for n, target in enumerate(flat_x):
            if target <= xs[0]:
                flat_o[n] = self.times[0] if target > self.lam else 0.0
                continue
            if target > xs.max():
                continue
            k = int(np.argmax(xs >= target))
            lo, hi = self.times[k - 1], self.times[k]
            for _ in range(100):
                mid = 0.5 * (lo + hi)
                if self.position(mid) >= target:
                    hi = mid
                else:
                    lo = mid
                if hi - lo <= 1e-15 * max(1.0, hi):
                    break
            flat_o[n] = hi
        return flat_o.reshape(x.shape)

    def to_csv(self, path: str | Path) -> None:
        from .io import write_csv

        write_csv(path, ["t", "x1"], zip(self.times, self.positions))


def integrate_fast_ode(
    u_bar: Field | float | Any,
    lambda0: float,
    eps: float,
    t_end: float = 1e3,
    v0: float = 0.0,
    horizon: float | None = None,
    scale: float = 1.0,
    local_tol: float = LOCAL_TOL,
    max_steps: int = 200_000,
) -> FastOdeTrace:
    """Classical RK4 with step-doubling error control on the fast ODE.

    Args:
        u_bar: supercooling profile along the line.
        lambda0: pre-jump front position ``Lambda_{s-}``.
        eps: start offset; must be positive.
        t_end: fast-time budget. Hitting it without stalling marks the trace unconverged.
        v0: initial speed added to the right-hand side (0 for the pure jump law).
        horizon: blow-up threshold on ``x - lambda0``; defaults to ``1e6 * scale``.
    """
    if not eps > 0:
        raise ValueError("eps must be positive; the unperturbed start is a fixed point")
    u = as_field(u_bar)
    horizon = 1e6 * scale if horizon is None else horizon

    def rhs(x: float) -> float:
        return v0 - integral_1p(u, lambda0, x)

    t, x = 0.0, lambda0 + eps
    f = rhs(x)
    ts, xs, fs = [t], [x], [f]
    dt = min(0.1, 0.1 * eps / max(abs(f), 1e-300)) if f != 0 else 0.1
    dt = max(dt, 1e-12)
    converged = blew_up = False

    def rk4(x0: float, f0: float, h: float) -> float:
        k1 = f0
        k2 = rhs(x0 + 0.5 * h * k1)
        k3 = rhs(x0 + 0.5 * h * k2)
        k4 = rhs(x0 + h * k3)
        return x0 + h * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0

    for _ in range(max_steps):
        if abs(f) < STALL_SPEED:
            converged = True
            break
        if t >= t_end:
            break
        if x - lambda0 > horizon:
            blew_up = True
            break
        h = min(dt, t_end - t)
        full = rk4(x, f, h)
        half = rk4(x, f, 0.5 * h)
        two = rk4(half, rhs(half), 0.5 * h)
        err = abs(two - full) / 15.0
        tol = local_tol * max(eps, abs(x - lambda0))
        if err <= tol or h <= 1e-14:
            t += h
            x = two + (two - full) / 15.0
            f = rhs(x)
            ts.append(t)
            xs.append(x)
            fs.append(f)
            grow = 4.0 if err == 0 else min(4.0, 0.9 * (tol / err) ** 0.2)
            dt = h * max(grow, 0.2)
        else:
            dt = h * max(0.2, 0.9 * (tol / err) ** 0.2)
    limit = INF if blew_up else x
    return FastOdeTrace(
        np.array(ts), np.array(xs), np.array(fs), limit, converged or blew_up, blew_up, lambda0, eps
    )


def extrapolate_limit(
    u_bar: Field | float | Any,
    lambda0: float = 0.0,
    eps_ladder: Sequence[float] = (1e-3, 1e-4, 1e-5),
    **kw: Any,
) -> tuple[float, list[float], bool]:
    """Run the ladder and extrapolate the limit to ``eps = 0``.

    The limit depends on ``eps`` linearly to leading order, so a Richardson step on the two
    smallest rungs is used. Returns ``(extrapolated, per-rung limits, all converged)``.
    """
    limits: list[float] = []
    ok = True
    for eps in eps_ladder:
        tr = integrate_fast_ode(u_bar, lambda0, eps, **kw)
        limits.append(tr.limit)
        ok = ok and tr.converged
    if any(math.isinf(v) for v in limits[-2:]):
        return INF, limits, ok
    if len(limits) == 1:
        return limits[0], limits, ok
    e1, e2 = eps_ladder[-2], eps_ladder[-1]
    l1, l2 = limits[-2], limits[-1]
    extrap = l2 + (l2 - l1) * e2 / (e1 - e2)
    return extrap, limits, ok


def solve_arrival_ode(u: Field | float | Any, v0: float, origin: float = 0.0) -> OneInterfaceSolution:
    """Arrival time from ``(1/w')' = -(1+u)``, ``w(origin) = 0``, ``w'(origin) = 1/v0``.

    The speed ``V = 1/w'`` integrates exactly to ``V0 - int (1+u)``; ``w`` follows by quadrature.
    """
    if not v0 > 0:
        raise ValueError("solve_arrival_ode needs v0 > 0")
    br = _Branch(as_field(u), float(v0), float(origin), 1.0, INF)
    return OneInterfaceSolution(br.extent(), float(origin), float(v0), br)
