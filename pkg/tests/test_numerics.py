import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from stefan_cascade.numerics import adaptive_simpson, bisect, cumulative_simpson, first_crossing


def test_simpson_polynomial_is_exact():
    assert adaptive_simpson(lambda x: 3 * x**2 - x + 2, -1.0, 2.0) == pytest.approx(9.0 - 1.5 + 6.0, rel=1e-13)


def test_simpson_log_singular_tail():
    # int_0^{1-1e-8} dx / (1 - x) = -ln(1e-8)
    got = adaptive_simpson(lambda x: 1.0 / (1.0 - x), 0.0, 1.0 - 1e-8)
    assert got == pytest.approx(-math.log(1e-8), rel=1e-9)


def test_simpson_reversed_interval_changes_sign():
    assert adaptive_simpson(math.exp, 1.0, 0.0) == pytest.approx(-(math.e - 1.0), rel=1e-12)


@given(st.floats(0.1, 5.0), st.floats(0.1, 5.0))
def test_simpson_matches_exp_antiderivative(a, length):
    b = a + length
    assert adaptive_simpson(math.exp, a, b) == pytest.approx(math.exp(b) - math.exp(a), rel=1e-9)


def test_cumulative_simpson_unsorted_points():
    pts = np.array([0.7, 0.2, 0.5, 0.2])
    got = cumulative_simpson(lambda x: 2 * x, 0.0, pts)
    assert np.allclose(got, pts**2, rtol=1e-12)


def test_bisect_returns_positive_side():
    root = bisect(lambda x: x - math.sqrt(2), 0.0, 2.0, tol=1e-14)
    assert root == pytest.approx(math.sqrt(2), abs=1e-13)
    assert root - math.sqrt(2) >= -1e-15


@given(st.floats(1e-3, 1e3))
def test_first_crossing_finds_linear_root(c):
    z = first_crossing(lambda z: z - c, 0.0, scale=1.0, tol=1e-13)
    assert z == pytest.approx(c, rel=1e-10)


def test_first_crossing_none_before_horizon():
    assert math.isinf(first_crossing(lambda z: -1.0, 0.0, horizon=10.0))


def test_first_crossing_short_excursion_seen_through_breakpoints():
    # positive only on a tiny interval that a coarse ladder would step over
    g = lambda z: 1.0 if 3.0001 < z < 3.0002 else -1.0  # noqa: E731
    z = first_crossing(g, 0.0, breakpoints=np.array([3.0001, 3.0002]), tol=1e-14)
    assert z == pytest.approx(3.0001, abs=1e-9)
