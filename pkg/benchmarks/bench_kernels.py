"""Time the compiled kernels against the pure-Python fallback.

Each kernel is called directly from both modules on the same inputs, then a full front-tracking
run is timed in a subprocess per backend (the backend is fixed at import). Usage::

    python3 benchmarks/bench_kernels.py [--h 0.01] [--repeat 3]
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import time
from typing import Callable

import numpy as np

from stefan_cascade import _kernels_py

try:
    from stefan_cascade import _kernels as compiled
except ImportError:
    compiled = None

RUN_SNIPPET = """
import time
from stefan_cascade.domain import Grid2, ScenarioSpec
from stefan_cascade.fronttrack import run
spec = ScenarioSpec.radial(True, -1.0, 1.0, 1.0, 1.0)
g = Grid2.covering((-2.2, 2.2, -2.2, 2.2), {h})
t = time.perf_counter()
run(spec, g, 1e-3)
print(time.perf_counter() - t)
"""


def best_of(fn: Callable[[], object], repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def kernel_cases(h: float) -> dict[str, Callable[[object], object]]:
    n = int(round(2.0 / h))
    c = (np.arange(n) + 0.5) * h - 1.0
    X, Y = np.meshgrid(c, c, indexing="ij")
    R = np.hypot(X, Y)
    cost = np.ascontiguousarray(1.0 + 0.3 * np.sin(3 * X) * np.cos(2 * Y))
    frozen = np.ascontiguousarray((R < 0.2).astype(np.uint8))
    start = np.zeros((n, n))
    rng = np.random.default_rng(0)
    centers = rng.uniform(-0.9, 0.9, (4000, 2))
    tri = np.ascontiguousarray(np.tile(centers, 3) + rng.uniform(-2 * h, 2 * h, (4000, 6)))
    tt = np.ascontiguousarray(rng.uniform(0.0, 1.0, (4000, 3)))
    w = np.ascontiguousarray(R)
    gx, gy = (np.ascontiguousarray(a) for a in np.gradient(w, h))
    stop = frozen
    hazard = np.zeros((n, n))
    starts = np.ascontiguousarray(rng.uniform(-0.9, 0.9, (2000, 2)))
    weights = np.ones(2000)

    def fm(mod):
        return mod.fast_march(cost, frozen, h, False, start)

    def stamp(mod):
        return mod.stamp_triangles(np.full((n, n), np.inf), tri, tt, -1.0, -1.0, h, False)

    def trace(mod):
        occ, kill = np.zeros((n, n)), np.zeros((n, n))
        return mod.trace_batch(
            w, gx, gy, stop, hazard, cost, starts, weights, -1.0, 0.5 * h, 10 * n, 0.0,
            -1.0, -1.0, h, False, occ, kill, False,
        )

    return {"fast_march": fm, "stamp_triangles": stamp, "trace_batch": trace}


def run_time(h: float, pure: bool) -> float:
    env = dict(os.environ)
    env["STEFAN_CASCADE_PURE"] = "1" if pure else "0"
    proc = subprocess.run(
        [sys.executable, "-c", RUN_SNIPPET.format(h=h)], env=env, capture_output=True, text=True, check=True
    )
    return float(proc.stdout.strip())


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--h", type=float, default=0.01, help="grid spacing")
    parser.add_argument("--repeat", type=int, default=3, help="best of this many calls")
    args = parser.parse_args()
    if compiled is None:
        print("compiled extension not built; nothing to compare")
        return 1
    print(f"{'kernel':<18}{'compiled [s]':>14}{'python [s]':>14}{'speedup':>10}")
    for name, fn in kernel_cases(args.h).items():
        tc = best_of(lambda: fn(compiled), args.repeat)
        tp = best_of(lambda: fn(_kernels_py), args.repeat)
        print(f"{name:<18}{tc:>14.4f}{tp:>14.4f}{tp / tc:>10.1f}")
    tc, tp = run_time(args.h, False), run_time(args.h, True)
    print(f"{'fronttrack run':<18}{tc:>14.4f}{tp:>14.4f}{tp / tc:>10.1f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
