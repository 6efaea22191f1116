from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from stefan_cascade.closedform import solve_one_interface, solve_radial, solve_two_interface
from stefan_cascade.domain import Grid2, RegionMask, RegionSpec, ScalarField2, ScenarioSpec, rasterize
from stefan_cascade.eikonal import CostField, fast_march, gradient, t_projection, trace_characteristic
from stefan_cascade.equilibrium import arrival_from_closed_form


def _const(grid: Grid2, c: float) -> CostField:
    return CostField.from_values(grid, np.full(grid.shape, c))


def _strip(h: float, length: float = 1.0, rows: int = 8) -> Grid2:
    # cell edges on x = 0, so the half-plane boundary lies on lattice lines
    return Grid2((-0.05, 0.0), h, int(round((length + 0.05) / h)), rows, periodic_y=True)


def test_half_plane_unit_cost_exact():
    g = Grid2((-0.5, -0.5), 0.01, 150, 40)
    X, _ = g.centers()
    mask = RegionMask(g, X < 0)
    w = fast_march(mask, _const(g, 1.0)).values
    want = np.maximum(X, 0.0) + 0.5 * g.h * (X > 0)
    np.testing.assert_allclose(w, want, atol=1e-12)


def test_half_plane_subcell_exact():
    g = Grid2((-0.5, -0.5), 0.01, 150, 40)
    X, _ = g.centers()
    m = rasterize(RegionSpec.half_line(0.0), g)
    w = fast_march(m, _const(g, 1.0), subcell=True).values
    np.testing.assert_allclose(w, np.maximum(X, 0.0), atol=1e-12)


def test_scaled_distance_from_disk():
    h = 0.01
    g = Grid2.covering((-2, 2, -2, 2), h)
    X, Y = g.centers()
    m = rasterize(RegionSpec.ball(1.0), g)
    w = fast_march(m, _const(g, 2.0)).values
    want = 2 * np.maximum(np.hypot(X, Y) - 1, 0.0)
    ring = np.hypot(X, Y) < 1.9
    assert np.abs(w - want)[ring].max() <= 2 * 2 * h
    ws = fast_march(m, _const(g, 2.0), subcell=True).values
    assert np.abs(ws - want)[ring].max() <= 2 * h


def test_log_profile_strip():
    h = 1e-3
    g = _strip(h)
    X, _ = g.centers()
    L = np.where(X < 1.0, 1.0 / np.maximum(1.0 - X, 1e-12), 1e8)
    m = rasterize(RegionSpec.half_line(0.0), g)
    w = fast_march(m, CostField.from_values(g, L), subcell=True).values
    sel = (X > 0) & (X <= 0.8)
    assert np.abs(w[sel] + np.log(1 - X[sel])).max() < 5e-3


def test_cost_validation():
    g = Grid2((0, 0), 0.1, 4, 4)
    with pytest.raises(ValueError):
        CostField.from_values(g, np.zeros(g.shape))
    with pytest.raises(ValueError):
        CostField.from_values(g, np.full(g.shape, np.inf))


def _radial_field(h: float):
    spec = ScenarioSpec.radial(True, -1.0, 1.0, 1.0, 1.0)
    g = Grid2.covering((-2.2, 2.2, -2.2, 2.2), h)
    w = arrival_from_closed_form(solve_radial(spec), g)
    return spec, g, ScalarField2(g, w.values), rasterize(spec.initial_region, g)


def test_radial_characteristic_is_radial():
    spec, g, w, mask = _radial_field(0.01)
    for ang in (0.3, 1.7, 4.0):
        p = 1.5 * np.array([math.cos(ang), math.sin(ang)])
        path = trace_characteristic(w, p, mask)
        assert path.status == "reached"
        pts = path.points
        # distance to the ray through p
        d = np.abs(pts[:, 0] * p[1] - pts[:, 1] * p[0]) / 1.5
        assert d.max() <= g.h
        assert np.hypot(*pts[-1]) <= 1.0 + g.h


def test_planar_characteristic_cost():
    h = 2e-3
    spec = ScenarioSpec.one_interface(0.0, 1.0, 1.0, 0.0)
    g = _strip(h)
    sol = solve_one_interface(spec)
    w = arrival_from_closed_form(sol, g, cap=5.0)
    X, _ = g.centers()
    L = np.where(X < 1.0, 1.0 / np.maximum(1.0 - X, 1e-12), 1e8)
    path = trace_characteristic(
        ScalarField2(g, w.values), (0.6, 0.01), rasterize(spec.initial_region, g), CostField.from_values(g, L)
    )
    assert path.status == "reached"
    assert np.abs(np.diff(path.points[:, 1])).max() < 1e-9
    assert path.cost == pytest.approx(float(sol.w(0.6)), rel=0.05)


def test_lock_in_point_is_trapped():
    spec = ScenarioSpec.two_interface(0.0, 0.6, 0.6, 1.0, 0.0, 1.0, dimension=2)
    h = 2e-3
    g = Grid2((-0.05, 0.0), h, int(1.1 / h), 8, periodic_y=True)
    sol = solve_two_interface(spec)
    w = arrival_from_closed_form(sol, g)
    path = trace_characteristic(ScalarField2(g, w.values), (sol.x_meet, 0.005), rasterize(spec.initial_region, g))
    assert path.trapped


def test_projection_examples():
    spec = ScenarioSpec.one_interface(0.0, 1.0, 1.0, 0.0)
    g = _strip(5e-3)
    X, _ = g.centers()
    w = ScalarField2(g, arrival_from_closed_form(solve_one_interface(spec), g).values)
    L = CostField.from_values(g, np.where(X < 1.0, 1.0 / np.maximum(1.0 - X, 1e-12), 1e8))
    big, Lbig = t_projection(w, L, 1e9, 1.0)
    np.testing.assert_array_equal(np.where(np.isfinite(w.values), big.values, 0), np.where(np.isfinite(w.values), w.values, 0))
    np.testing.assert_array_equal(Lbig.L.values[np.isfinite(w.values)], L.L.values[np.isfinite(w.values)])
    capped, LT = t_projection(w, L, 0.5, 1.0)
    assert capped.values.max() == 0.5
    edge = 1 - math.exp(-0.5)
    np.testing.assert_array_equal(LT.L.values[X > edge + g.h] == -1.0, True)
    np.testing.assert_array_equal(LT.L.values[(X < edge - g.h) & (X > 0)] > 0, True)


@given(T=st.floats(0.05, 3.0), frac=st.floats(0.05, 0.95))
def test_projection_tower(T, frac):
    rng = np.random.default_rng(0)
    g = Grid2((0, 0), 0.1, 12, 9)
    wv = rng.uniform(0, 4, g.shape)
    wv[rng.uniform(size=g.shape) < 0.1] = np.inf
    w = ScalarField2(g, wv)
    L = CostField.from_values(g, rng.uniform(0.5, 2.0, g.shape))
    t = frac * T
    once = t_projection(w, L, T, 1.0)
    again = t_projection(*once, T, 1.0)
    np.testing.assert_array_equal(again[0].values, once[0].values)
    np.testing.assert_array_equal(again[1].L.values, once[1].L.values)
    two = t_projection(*once, t, 1.0)
    one = t_projection(w, L, t, 1.0)
    np.testing.assert_array_equal(two[0].values, one[0].values)
    np.testing.assert_array_equal(two[1].L.values, one[1].L.values)


def _random_cost(seed: int, g: Grid2) -> np.ndarray:
    rng = np.random.default_rng(seed)
    X, Y = g.centers()
    c = 1.0 + 0.5 * np.sin(3 * X + rng.uniform(0, 6)) * np.cos(2 * Y + rng.uniform(0, 6))
    return c


@given(seed=st.integers(0, 10_000))
def test_triangle_inequality(seed):
    h = 0.02
    g = Grid2.covering((-1, 1, -1, 1), h)
    c = _random_cost(seed, g)
    w = fast_march(rasterize(RegionSpec.ball(0.2), g), CostField.from_values(g, c)).values
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-0.95, 0.95, (1000, 2, 2))
    for x, y in pts:
        n = 32
        s = (np.arange(n) + 0.5) / n
        seg = x[None, :] + s[:, None] * (y - x)[None, :]
        i, j, _ = g.locate(seg[:, 0], seg[:, 1])
        cost = c[i, j].sum() * np.hypot(*(y - x)) / n
        ix, jx, _ = g.locate(x[0:1], x[1:2])
        iy, jy, _ = g.locate(y[0:1], y[1:2])
        assert w[ix[0], jx[0]] <= w[iy[0], jy[0]] + cost + 4 * h * c.max()


@given(seed=st.integers(0, 10_000))
def test_gradient_matches_cost(seed):
    h = 0.01
    g = Grid2.covering((-1, 1, -1, 1), h)
    X, Y = g.centers()
    rng = np.random.default_rng(seed)
    # smooth, slowly varying cost around a disk: no shocks outside a thin ring
    c = 1.0 + 0.3 * np.tanh(X + rng.uniform(-0.5, 0.5))
    m = rasterize(RegionSpec.ball(0.3), g)
    w = fast_march(m, CostField.from_values(g, c), subcell=True).values
    gx, gy = gradient(w, g, exclude=m.inside)
    r = np.hypot(X, Y)
    sel = (r > 0.4) & (r < 0.8)
    ratio = np.hypot(gx, gy)[sel] / c[sel]
    assert np.abs(ratio - 1).max() <= 2 * h


@given(s=st.floats(0, 2), dt=st.floats(0, 2))
def test_sublevel_sets_nested(s, dt):
    g = Grid2.covering((-1, 1, -1, 1), 0.02)
    w = fast_march(rasterize(RegionSpec.ball(0.2), g), CostField.from_values(g, _random_cost(1, g))).values
    a, b = w <= s, w <= s + dt
    assert not (a & ~b).any()
