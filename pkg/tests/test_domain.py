from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from stefan_cascade.domain import (
    ConstantField,
    EmptyRasterization,
    Grid1,
    Grid2,
    Piecewise1D,
    RadialPiecewise,
    RegionMask,
    RegionSpec,
    ScenarioSpec,
    boundary_integral,
    field_from_json,
    integral_1p,
    perimeter,
    radial_moment_1p,
    rasterize,
)


def _box_mask(grid: Grid2, x0: float, x1: float, y0: float, y1: float) -> np.ndarray:
    X, Y = grid.centers()
    return (X > x0) & (X < x1) & (Y > y0) & (Y < y1)


def test_disk_area():
    g = Grid2.covering((-2, 2, -2, 2), 0.01)
    m = rasterize(RegionSpec.ball(1.0), g)
    assert abs(m.area - math.pi) / math.pi < 0.01


def test_half_line_1d_exact():
    g = Grid1(-1.0, 0.01, 200)
    m = rasterize(RegionSpec.half_line(0.0), g)
    np.testing.assert_array_equal(m.inside, g.centers() <= 0)


def test_ball_outside_box_raises():
    g = Grid2.covering((-1, 1, -1, 1), 0.05)
    with pytest.raises(EmptyRasterization):
        rasterize(RegionSpec.ball(0.3, (5.0, 5.0)), g)


def test_lattice_square_perimeter():
    # marching squares cuts each of the four corners by h (1 - sqrt(2)/2)
    h = 0.01
    g = Grid2((-1.0, -1.0), h, 200, 200)
    m = RegionMask(g, _box_mask(g, -0.5, 0.5, -0.5, 0.5))
    corner = 4 * h * (1 - math.sqrt(2) / 2)
    assert perimeter(m) == pytest.approx(4.0 - corner, abs=1e-12)


def test_disjoint_squares_add():
    h = 0.01
    g = Grid2((-1.0, -1.0), h, 200, 200)
    a = _box_mask(g, -0.9, -0.4, -0.9, -0.4)
    b = _box_mask(g, 0.2, 0.7, 0.1, 0.6)
    total = perimeter(RegionMask(g, a | b))
    assert total == pytest.approx(perimeter(RegionMask(g, a)) + perimeter(RegionMask(g, b)), abs=1e-12)
    assert abs(total - 4.0) < 8 * h * (1 - math.sqrt(2) / 2) + 1e-12


def test_disk_perimeter_against_richardson():
    vals = {}
    for h in (0.02, 0.01, 0.005):
        vals[h] = perimeter(rasterize(RegionSpec.ball(1.0), Grid2.covering((-2, 2, -2, 2), h)))
    extrap = vals[0.005] + (vals[0.005] - vals[0.01]) / 3.0
    assert abs(extrap - 2 * math.pi) / (2 * math.pi) < 1e-4
    assert abs(vals[0.005] - 2 * math.pi) / (2 * math.pi) < 5e-3


def test_boundary_integral_examples():
    g = Grid2.covering((-2, 2, -2, 2), 0.005)
    m = rasterize(RegionSpec.ball(1.0), g)
    assert boundary_integral(m, 1.0) == perimeter(m)
    assert abs(boundary_integral(m, 1.0 + 1.0) - 4 * math.pi) / (4 * math.pi) < 5e-3
    assert abs(boundary_integral(m, lambda x, y: x)) < 1e-2 * perimeter(m)


@given(
    r=st.floats(0.2, 0.8),
    cx=st.floats(-0.3, 0.3),
    cy=st.floats(-0.3, 0.3),
)
def test_perimeter_of_complement(r, cx, cy):
    g = Grid2.covering((-1.2, 1.2, -1.2, 1.2), 0.02)
    m = rasterize(RegionSpec.ball(r, (cx, cy)), g)
    assert perimeter(m.complement()) == pytest.approx(perimeter(m), rel=1e-12)
    assert boundary_integral(m, 1.0) == pytest.approx(perimeter(m), rel=1e-12)


@given(r=st.floats(0.3, 0.9))
def test_perimeter_converges_under_refinement(r):
    exact = 2 * math.pi * r
    prev = None
    for h in (0.04, 0.02, 0.01):
        g = Grid2.covering((-1, 1, -1, 1), h)
        m = rasterize(RegionSpec.ball(r), g)
        err = abs(perimeter(m) - exact)
        n_cells = int(perimeter(m) / h)
        if prev is not None:
            assert err <= prev + 2 * h * n_cells * 1e-3
        prev = err
    assert prev < 1e-3


@given(
    breaks=st.lists(st.floats(-2, 2), min_size=1, max_size=4, unique=True),
    vals=st.lists(st.floats(-3, 3), min_size=5, max_size=5),
    a=st.floats(-3, 3),
    b=st.floats(-3, 3),
)
def test_piecewise_integral_matches_quadrature(breaks, vals, a, b):
    breaks = sorted(breaks)
    u = Piecewise1D(tuple(breaks), tuple(vals[: len(breaks) + 1]))
    xs = np.linspace(a, b, 200_001)
    num = np.trapezoid(1.0 + u(xs), xs)
    assert integral_1p(u, a, b) == pytest.approx(num, abs=1e-3 * (1 + abs(b - a)))


def test_radial_moment_exact_for_constant():
    u = ConstantField(-0.5)
    # int_1^2 (1 - 0.5) r dr = 0.75
    assert radial_moment_1p(u, 1.0, 2.0, 2) == pytest.approx(0.75, rel=1e-12)
    r = RadialPiecewise((1.0,), (0.0, -1.0))
    assert radial_moment_1p(r, 0.0, 2.0, 2) == pytest.approx(0.5, rel=1e-12)


def test_field_json_round_trip():
    for f in (ConstantField(-1.0), Piecewise1D((0.0, 0.3), (0.0, -2.0, 0.0)), RadialPiecewise((1.0,), (0.0, -1.0))):
        again = field_from_json(f.to_json())
        assert again.to_json() == f.to_json()


def test_scenario_validation():
    with pytest.raises(ValueError):
        ScenarioSpec(0.0, 0.0, RegionSpec.half_line(), 1.0)
    with pytest.raises(ValueError):
        ScenarioSpec(1.0, 0.0, RegionSpec.half_line(), -1.0)
    with pytest.raises(ValueError):
        RegionSpec.ball(-1.0)
    with pytest.raises(ValueError):
        RegionSpec.interval_complement(1.0, 0.0)
    with pytest.raises(ValueError):
        Piecewise1D((1.0, 0.0), (0.0, 1.0, 2.0))
    with pytest.raises(ValueError):
        Grid2((0, 0), 0.0, 4, 4)


def test_lattice_region_needs_2d_grid():
    g = Grid2((0.0, 0.0), 0.1, 10, 10)
    m = np.zeros(g.shape, bool)
    m[3:6, 3:6] = True
    spec = RegionSpec.lattice(m, g.origin, g.h)
    np.testing.assert_array_equal(rasterize(spec, g).inside, m)
    with pytest.raises(ValueError):
        rasterize(spec, Grid1(0.0, 0.1, 10))
