from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from stefan_cascade.domain import EmptyRasterization, Grid2, RegionSpec, ScenarioSpec
from stefan_cascade.fronttrack import (
    CFLError,
    continuation_run,
    initialize_front,
    run,
    stable_dt,
    step,
)
from stefan_cascade.io import read_pgm

EPS = 1e-3


def _strip(h: float, length: float, rows: int = 8, left: float = -0.02) -> Grid2:
    return Grid2((left - h / 2, 0.0), h, int(round((length - left) / h)), rows, periodic_y=True)


def test_initialize_disk():
    front = initialize_front(ScenarioSpec.radial(True, -1.0, 1.0), Grid2.covering((-2, 2, -2, 2), 0.01), EPS)
    assert len(front.chains) == 1
    markers = front.loops[0]
    # spacing 1.5 h on a circle of length 2 pi
    assert abs(len(markers) - 2 * math.pi / 0.015) <= 2
    V = np.array([m.V for m in markers])
    H = np.array([m.H for m in markers])
    np.testing.assert_allclose(V, 1.0 + EPS, rtol=1e-9)
    assert np.abs(H - 1.0).max() <= 5e-2


def test_initialize_strip_is_flat():
    spec = ScenarioSpec.one_interface(0.0, 1.0, 1.0, 0.0, dimension=2)
    front = initialize_front(spec, _strip(0.01, 1.1), EPS)
    H = np.array([m.H for loop in front.loops for m in loop])
    assert np.abs(H).max() <= 1e-3


def test_initialize_needs_a_boundary():
    spec = ScenarioSpec(1.0, -1.0, RegionSpec.ball(0.2, (5.0, 5.0)), 1.0)
    with pytest.raises(ValueError):
        initialize_front(spec, Grid2.covering((-1, 1, -1, 1), 0.05), EPS)
    with pytest.raises(EmptyRasterization):
        initialize_front(spec, Grid2.covering((-1, 1, -1, 1), 0.05), EPS)
    with pytest.raises(ValueError):
        initialize_front(ScenarioSpec.radial(True, -1.0, 1.0), Grid2.covering((-2, 2, -2, 2), 0.05), 0.0)


def test_flat_front_without_supercooling_moves_uniformly():
    h = 0.01
    spec = ScenarioSpec.one_interface(-1.0, 1.0, 1.0, 0.0, dimension=2)
    front = initialize_front(spec, _strip(h, 1.5), EPS)
    x0 = front.chains[0].P[:, 0].copy()
    dt = 0.5 * stable_dt(front, spec)
    for _ in range(10):
        step(front, spec, dt)
    np.testing.assert_allclose(front.chains[0].P[:, 0], x0 + 10 * dt * (1.0 + EPS), rtol=0, atol=1e-12)
    V = np.array([m.V for m in front.loops[0]])
    np.testing.assert_allclose(V, 1.0 + EPS, rtol=1e-12)


def test_flat_front_speed_follows_swept_energy():
    h = 1e-3
    spec = ScenarioSpec.one_interface(0.0, 1.0, 1.0, 0.0, dimension=2)
    front = initialize_front(spec, _strip(h, 1.06), EPS)
    worst = 0.0
    while front.n_alive and front.t < 5.0:
        step(front, spec, stable_dt(front, spec))
        c = front.chains[0]
        if not c.alive.any():
            break
        x = float(c.P[c.alive, 0].mean())
        if x > 0.95:
            break
        V = np.array([m.V for m in front.markers(c)])[c.alive].mean()
        worst = max(worst, abs(V - (1.0 + EPS - x)))
    assert worst <= 1e-3


def test_step_rejects_unstable_dt():
    spec = ScenarioSpec.radial(True, -1.0, 1.0)
    front = initialize_front(spec, Grid2.covering((-2, 2, -2, 2), 0.02), EPS)
    before = front.chains[0].P.copy()
    with pytest.raises(CFLError):
        step(front, spec, 10 * stable_dt(front, spec))
    np.testing.assert_array_equal(front.chains[0].P, before)
    assert front.t == 0.0


def test_zero_cap_is_no_motion():
    spec = ScenarioSpec.radial(True, -1.0, 1.0)
    g = Grid2.covering((-2, 2, -2, 2), 0.02)
    res = run(spec, g, EPS, cap=0.0)
    X, Y = g.centers()
    inside = np.hypot(X, Y) <= 1.0
    w = res.arrival.values
    assert (w[inside] == 0).all() and np.isinf(w[~inside]).all()
    assert res.ledger.final_E == 0.0


@pytest.fixture(scope="module")
def blob_run():
    h = 0.01
    g = Grid2.covering((-1.2, 1.2, -1.2, 1.2), h)
    X, Y = g.centers()
    blob = np.hypot(X, Y) < 0.4 * (1 + 0.3 * np.cos(3 * np.arctan2(Y, X)))
    spec = ScenarioSpec(1.0, -0.5, RegionSpec.lattice(blob, g.origin, h), 0.5)
    return spec, run(spec, g, EPS, n_snapshots=12)


def test_snapshots_are_nested(blob_run):
    _, res = blob_run
    snaps = res.snapshots
    assert len(snaps) == 12
    for a, b in zip(snaps, snaps[1:]):
        assert a.t <= b.t
        assert not (a.mask.inside & ~b.mask.inside).any()


def test_energy_ledger(blob_run):
    _, res = blob_run
    L = res.ledger
    assert (L.balance_error() <= 0.02 * L.B0).all()
    assert L.admissible()
    assert len(L.times) == len(L.E)


def test_artifacts(tmp_path, blob_run):
    _, res = blob_run
    res.arrival.to_csv(tmp_path / "w.csv")
    res.arrival.to_pgm(tmp_path / "w.pgm")
    img = read_pgm(tmp_path / "w.pgm")
    assert img.shape[0] * img.shape[1] == res.arrival.values.size
    rows = (tmp_path / "w.csv").read_text().splitlines()
    assert len(rows) >= res.arrival.values.shape[0]


@given(s=st.floats(0.0, 1.0), d=st.floats(0.0, 1.0))
def test_sublevel_masks_nested(blob_run, s, d):
    from stefan_cascade.fronttrack import sublevel_mask

    _, res = blob_run
    front = res.front
    top = float(front.w[np.isfinite(front.w)].max())
    a = sublevel_mask(front.w, s * top, front.initial, front.grid)
    b = sublevel_mask(front.w, (s + d * (1 - s)) * top, front.initial, front.grid)
    assert not (a.inside & ~b.inside).any()


def test_continuation_unsupercooled_profile_is_eps_shift():
    spec = ScenarioSpec.one_interface(-1.0, 1.0, 1.0, 0.0, dimension=2)
    g = _strip(0.01, 1.0)
    ladder = [3e-2, 1e-2, 3e-3]
    res = continuation_run(spec, g, ladder, cap=0.8)
    area = g.width * g.height
    for (e1, e2), d in zip(zip(ladder, ladder[1:]), res.distances):
        # w = x / (1 + eps) differs by at most (e1 - e2) T per unit area
        assert d <= 1.5 * (e1 - e2) * 0.8 * area
    assert res.cauchy


def test_continuation_without_initial_speed_collapses():
    spec = ScenarioSpec.one_interface(0.0, 0.0, 1.0, 0.0, dimension=2)
    g = _strip(0.005, 0.3)
    res = continuation_run(spec, g, [4e-2, 2e-2, 1e-2])
    reach = [float(g.x_centers()[np.isfinite(r.arrival.values[:, 0])].max()) for r in res.runs]
    assert reach[0] > reach[1] > reach[2]
    assert reach[2] <= 0.02


def test_continuation_radial_growing():
    spec = ScenarioSpec.radial(True, -1.0, 1.0, 1.0, 1.0)
    g = Grid2.covering((-2.3, 2.3, -2.3, 2.3), 0.01)
    T = 0.5
    res = continuation_run(spec, g, [3e-2, 1e-2], cap=T)
    area = g.width * g.height
    assert res.distances[0] <= 5 * 3e-2 * T * area


def test_ladder_must_decrease():
    spec = ScenarioSpec.radial(True, -1.0, 1.0)
    with pytest.raises(ValueError):
        continuation_run(spec, Grid2.covering((-2, 2, -2, 2), 0.05), [1e-3, 1e-2])
