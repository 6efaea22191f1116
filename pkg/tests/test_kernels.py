from __future__ import annotations

import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import example, given
from hypothesis import strategies as st

from stefan_cascade import _kernels_py, kernels

compiled = pytest.importorskip("stefan_cascade._kernels")


def _cost(seed: int, nx: int, ny: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    c = rng.uniform(0.5, 2.0, (nx, ny))
    c[rng.uniform(size=(nx, ny)) < 0.05] = 0.0
    return np.ascontiguousarray(c)


def _seeds(seed: int, nx: int, ny: int) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed + 1)
    frozen = np.zeros((nx, ny), dtype=np.uint8)
    frozen[rng.integers(0, nx, 3), rng.integers(0, ny, 3)] = 1
    start = np.ascontiguousarray(rng.uniform(0.0, 0.1, (nx, ny)))
    return frozen, start


@given(seed=st.integers(0, 10_000), periodic=st.booleans())
def test_fast_march_parity(seed, periodic):
    nx, ny = 23, 17
    cost = _cost(seed, nx, ny)
    frozen, start = _seeds(seed, nx, ny)
    a = compiled.fast_march(cost, frozen, 0.1, periodic, start)
    b = _kernels_py.fast_march(cost, frozen, 0.1, periodic, start)
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-14)


@given(seed=st.integers(0, 10_000), periodic=st.booleans())
def test_stamp_triangles_parity(seed, periodic):
    rng = np.random.default_rng(seed)
    nx, ny, h = 20, 16, 0.1
    tri = np.ascontiguousarray(rng.uniform(-0.2, 2.2, (12, 6)))
    tt = np.ascontiguousarray(rng.uniform(0.0, 1.0, (12, 3)))
    w0 = np.full((nx, ny), np.inf)
    w0[rng.uniform(size=(nx, ny)) < 0.2] = 0.5
    wa, wb = w0.copy(), w0.copy()
    na = compiled.stamp_triangles(wa, tri, tt, 0.0, 0.0, h, periodic)
    nb = _kernels_py.stamp_triangles(wb, tri, tt, 0.0, 0.0, h, periodic)
    np.testing.assert_allclose(wa, wb, rtol=1e-12, atol=1e-14)
    np.testing.assert_array_equal(np.sort(np.asarray(na)), np.sort(np.asarray(nb)))


@given(seed=st.integers(0, 10_000), direction=st.sampled_from([-1.0, 1.0]))
@example(seed=32, direction=1.0)  # a path stopped at the grid edge keeps the time of its last point
def test_trace_batch_parity(seed, direction):
    rng = np.random.default_rng(seed)
    nx, ny, h = 30, 30, 0.05
    c = (np.arange(nx) + 0.5) * h - 0.75
    X, Y = np.meshgrid(c, c, indexing="ij")
    w = np.ascontiguousarray(np.hypot(X, Y) * (1.0 + 0.2 * np.sin(3 * X + rng.uniform(0, 6))))
    gx, gy = np.gradient(w, h)
    gx, gy = np.ascontiguousarray(gx), np.ascontiguousarray(gy)
    stop = np.ascontiguousarray((np.hypot(X, Y) < 0.15).astype(np.uint8))
    hazard = np.ascontiguousarray(rng.uniform(0.0, 0.5, (nx, ny)))
    cost = np.ascontiguousarray(rng.uniform(0.5, 1.5, (nx, ny)))
    starts = np.ascontiguousarray(rng.uniform(-0.5, 0.5, (20, 2)))
    weights = np.ascontiguousarray(rng.uniform(0.5, 1.0, 20))
    out = []
    for mod in (compiled, _kernels_py):
        occ, kill = np.zeros((nx, ny)), np.zeros((nx, ny))
        res = mod.trace_batch(
            w, gx, gy, stop, hazard, cost, starts, weights, direction, 0.5 * h, 400, 0.6,
            -0.75, -0.75, h, False, occ, kill, True,
        )
        out.append((res, occ, kill))
    (ra, oa, ka), (rb, ob, kb) = out
    np.testing.assert_array_equal(np.asarray(ra[3]), np.asarray(rb[3]))
    for k in (0, 1, 2, 4, 5):
        np.testing.assert_allclose(np.asarray(ra[k]), np.asarray(rb[k]), rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose(oa, ob, rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose(ka, kb, rtol=1e-9, atol=1e-12)
    for pa, pb in zip(ra[6], rb[6]):
        np.testing.assert_allclose(np.asarray(pa), np.asarray(pb), rtol=1e-9, atol=1e-12)


def _backend_in_subprocess(env_value: str | None) -> str:
    env = dict(os.environ)
    env.pop("STEFAN_CASCADE_PURE", None)
    if env_value is not None:
        env["STEFAN_CASCADE_PURE"] = env_value
    proc = subprocess.run(
        [sys.executable, "-c", "from stefan_cascade import kernels; print(kernels.BACKEND)"],
        env=env,
        capture_output=True,
        text=True,
        check=True,
    )
    return proc.stdout.strip()


def test_backend_selection():
    assert _backend_in_subprocess(None) == "compiled"
    assert _backend_in_subprocess("0") == "compiled"
    assert _backend_in_subprocess("1") == "python"


def test_active_backend_matches_environment():
    forced = os.environ.get("STEFAN_CASCADE_PURE", "") not in ("", "0")
    assert kernels.BACKEND == ("python" if forced else "compiled")
    assert kernels.fast_march is kernels.backend.fast_march
