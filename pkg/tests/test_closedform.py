from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from stefan_cascade.closedform import (
    export_profile,
    export_summary,
    jump_size_1d,
    solve_one_interface,
    solve_radial,
    solve_two_interface,
)
from stefan_cascade.domain import ConstantField, Piecewise1D, RadialPiecewise, ScenarioSpec, integral_1p

LN2 = math.log(2.0)

pieces = st.tuples(
    st.floats(0.05, 0.6),  # first break
    st.floats(0.05, 0.6),  # gap to the second break
    st.lists(st.floats(-1.5, 0.8), min_size=3, max_size=3),
)


def _table(p) -> Piecewise1D:
    b1, gap, vals = p
    return Piecewise1D((b1, b1 + gap), tuple(vals))


# --------------------------------------------------------------------------- jump size


def test_jump_size_examples():
    assert jump_size_1d(0.0).value == 0.0
    r = jump_size_1d(-1.0)
    assert math.isinf(r.value) and r.horizon_limited
    assert jump_size_1d(Piecewise1D((0.0, 0.3), (0.0, -2.0, 0.0))).value == pytest.approx(0.6, abs=1e-8)


def test_jump_size_against_dense_scan():
    u = Piecewise1D((0.0, 0.3), (0.0, -2.0, 0.0))
    z = np.arange(1, 2_000_001) * 1e-6
    g = np.cumsum(1.0 + u(z - 0.5e-6)) * 1e-6
    first = z[np.argmax(g > 1e-9)]
    assert jump_size_1d(u).value == pytest.approx(first, abs=2e-6)


@given(a=st.floats(0.05, 2.0), depth=st.floats(1.2, 4.0))
def test_jump_size_single_well(a, depth):
    # u = -depth on [0, a]: int (1+u) = (1-depth) a + (z - a) > 0 past z = depth a
    u = Piecewise1D((0.0, a), (0.0, -depth, 0.0))
    assert jump_size_1d(u).value == pytest.approx(depth * a, rel=1e-9)


# --------------------------------------------------------------------------- one interface


def test_one_interface_examples():
    sol = solve_one_interface(ScenarioSpec.one_interface(0.0, 1.0))
    assert abs(sol.x_star - 1.0) < 1e-9
    assert abs(float(sol.w(0.5)) - LN2) < 1e-8
    sol = solve_one_interface(ScenarioSpec.one_interface(-1.0, 1.0))
    assert math.isinf(sol.x_star)
    xs = np.linspace(0.1, 5.0, 7)
    np.testing.assert_allclose(sol.w(xs), xs, rtol=1e-12)
    sol = solve_one_interface(ScenarioSpec.one_interface(0.0, 0.0))
    assert np.isinf(sol.w(np.array([0.1, 0.5]))).all()


def test_one_interface_front_inverts_w():
    sol = solve_one_interface(ScenarioSpec.one_interface(0.0, 1.0))
    for x in (0.1, 0.5, 0.9):
        assert sol.front(float(sol.w(x))) == pytest.approx(x, abs=1e-9)


@given(p=pieces, v0=st.floats(0.2, 2.0))
def test_speed_consistency(p, v0):
    u = _table(p)
    sol = solve_one_interface(ScenarioSpec.one_interface(u, v0))
    top = sol.x_star if math.isfinite(sol.x_star) else 3.0
    xs = np.linspace(0.02 * top, 0.9 * top, 1000)
    h = 1e-6 * top
    # drop derivative samples straddling a breakpoint of the table
    xs = xs[np.min(np.abs(xs[:, None] - np.asarray(u.breaks)[None, :]), axis=1) > 2 * h]
    wp = (sol.w(xs + h) - sol.w(xs - h)) / (2 * h)
    want = np.array([v0 - integral_1p(u, 0.0, x) for x in xs])
    np.testing.assert_allclose(1.0 / wp, want, rtol=1e-6)


@given(p=pieces, v0=st.floats(0.2, 1.5), dv=st.floats(0.01, 1.0))
def test_monotone_in_initial_speed(p, v0, dv):
    u = _table(p)
    lo = solve_one_interface(ScenarioSpec.one_interface(u, v0))
    hi = solve_one_interface(ScenarioSpec.one_interface(u, v0 + dv))
    assert hi.x_star >= lo.x_star
    top = lo.x_star if math.isfinite(lo.x_star) else 3.0
    xs = np.linspace(0.01, 0.95, 40) * top
    assert (hi.w(xs) <= lo.w(xs) * (1 + 1e-12)).all()


@given(x=st.floats(0.01, 0.45))
def test_positive_supercooling_branch(x):
    # u = 1, V0 = 1: V = 1 - 2x, w = -ln(1 - 2x) / 2
    sol = solve_one_interface(ScenarioSpec.one_interface(1.0, 1.0))
    assert sol.x_star == pytest.approx(0.5, abs=1e-9)
    assert float(sol.w(x)) == pytest.approx(-0.5 * math.log(1 - 2 * x), rel=1e-9)


# --------------------------------------------------------------------------- two interfaces


def test_two_interface_no_lock_in():
    sol = solve_two_interface(ScenarioSpec.two_interface(0.0, 0.3, 0.3))
    assert sol.x0_star == pytest.approx(0.3, abs=1e-9)
    assert sol.x1_star == pytest.approx(0.7, abs=1e-9)
    assert sol.locked_energy is None
    assert np.isinf(sol.w(np.array([0.35, 0.5, 0.65]))).all()


def test_two_interface_lock_in():
    sol = solve_two_interface(ScenarioSpec.two_interface(0.0, 0.6, 0.6, 1.0))
    assert sol.x0_star == pytest.approx(0.6, abs=1e-9)
    assert sol.x1_star == pytest.approx(0.4, abs=1e-9)
    assert sol.locked_energy == pytest.approx(2.2, abs=1e-8)
    assert sol.x_meet == pytest.approx(0.5, abs=1e-9)
    # t_star = w0(1/2) = -ln(1 - 0.5/0.6)
    assert sol.t_star == pytest.approx(-math.log(1 - 0.5 / 0.6), rel=1e-9)


def test_two_interface_one_side_dead():
    sol = solve_two_interface(ScenarioSpec.two_interface(-1.0, 1.0, 0.0))
    xs = np.linspace(0.05, 0.95, 9)
    np.testing.assert_allclose(sol.w(xs), xs, rtol=1e-12)
    assert math.isinf(sol.t_star)


@given(
    vals=st.lists(st.floats(-1.0, 0.5), min_size=3, max_size=3),
    b=st.floats(0.2, 0.8),
    v0a=st.floats(0.1, 1.2),
    v0b=st.floats(0.1, 1.2),
)
def test_two_interface_mirror(vals, b, v0a, v0b):
    u = Piecewise1D((b,), tuple(vals[:2]))
    mirrored = Piecewise1D((1.0 - b,), tuple(vals[:2][::-1]))
    s1 = solve_two_interface(ScenarioSpec.two_interface(u, v0a, v0b))
    s2 = solve_two_interface(ScenarioSpec.two_interface(mirrored, v0b, v0a))
    xs = np.linspace(0.01, 0.99, 57)
    xs = xs[np.abs(xs - 0.5) > 1e-3]
    w1, w2 = s1.w(xs), s2.w(1.0 - xs)
    fin = np.isfinite(w1)
    np.testing.assert_array_equal(fin, np.isfinite(w2))
    np.testing.assert_allclose(w1[fin], w2[fin], rtol=1e-9, atol=1e-12)


# --------------------------------------------------------------------------- radial


def test_radial_growing():
    sol = solve_radial(ScenarioSpec.radial(True, -1.0, 1.0, 1.0, 1.0))
    assert abs(sol.r_star - 2.0) < 1e-9
    assert abs(float(sol.w(1.5)) - (2 * LN2 - 0.5)) < 1e-8
    # antiderivative -r - 2 ln(2 - r) anchored at r = 1
    rs = np.linspace(1.05, 1.95, 19)
    want = -rs - 2 * np.log(2 - rs) + 1.0
    np.testing.assert_allclose(sol.w(rs), want, rtol=1e-9)


def test_radial_growing_without_initial_speed():
    sol = solve_radial(ScenarioSpec.radial(True, -1.0, 0.0))
    assert np.isinf(sol.w(np.array([1.2, 1.8]))).all()


def test_radial_shrinking():
    sol = solve_radial(ScenarioSpec.radial(False, -1.0, 1.0, 1.0, 1.0))
    assert sol.r_star == 0.0
    assert sol.locked_energy == pytest.approx(2.0, abs=1e-12)
    assert sol.t_vanish == pytest.approx(2 * LN2 - 1, abs=1e-8)
    assert sol.certified


def test_radial_dimension_one_matches_planar():
    u = Piecewise1D((1.4,), (0.3, -0.2))
    rad = solve_radial(ScenarioSpec.radial(True, RadialPiecewise((1.4,), (0.3, -0.2)), 0.9, 1.0, 1.0, dimension=1))
    lin = solve_one_interface(ScenarioSpec.one_interface(u, 0.9, end=1.0))
    assert rad.r_star == pytest.approx(1.0 + lin.x_star, abs=1e-9)
    rs = np.linspace(1.0, rad.r_star, 102)[1:-1]
    np.testing.assert_allclose(rad.w(rs), lin.w(rs), rtol=1e-9, atol=1e-12)


def test_constant_field_radial_moment_reduces():
    # sanity: the growing denominator for d = 2, u = -1 is 2 - r
    sol = solve_radial(ScenarioSpec.radial(True, ConstantField(-1.0), 1.0))
    for r in (1.0, 1.3, 1.9):
        assert sol.denominator(r) == pytest.approx(2.0 - r, abs=1e-12)


def test_exports(tmp_path):
    sol = solve_one_interface(ScenarioSpec.one_interface(0.0, 1.0))
    xs = np.array([0.0, 0.5, 1.0])
    export_profile(tmp_path / "p.csv", xs, sol.w(xs), sol.v(xs))
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert lines[0] == "coordinate,w,V" and lines[-1].split(",")[1] == "inf"
    export_summary(tmp_path / "s.json", sol.summary())
    assert '"x_star"' in (tmp_path / "s.json").read_text()
