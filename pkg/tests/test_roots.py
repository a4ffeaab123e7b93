import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from afpo.roots import RootError, bisect_increasing, grow_bracket, newton_bracketed


def test_bisect_square_root():
    assert bisect_increasing(lambda x: x * x, 2.0) == pytest.approx(math.sqrt(2), abs=1e-12)


def test_bisect_grows_bracket():
    assert bisect_increasing(lambda x: x, 1e6) == pytest.approx(1e6, rel=1e-12)


def test_bisect_unreachable_target_returns_upper():
    assert bisect_increasing(lambda x: min(x, 1.0), 5.0, upper=3.0) == pytest.approx(3.0)


def test_bisect_no_bracket():
    with pytest.raises(RootError):
        bisect_increasing(lambda x: 0.0, 1.0)


def _cubic(targets):
    def g(x, idx):
        return x**3 + x - targets[idx], 3 * x**2 + 1

    return g


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e4, 1e4), min_size=1, max_size=30))
def test_newton_solves_monotone_cubics(values):
    t = np.array(values)
    g = _cubic(t)
    lo, hi, ok = grow_bracket(g, np.zeros(t.size))
    assert ok.all()
    x = newton_bracketed(g, lo, hi)
    assert np.allclose(x**3 + x, t, rtol=1e-13, atol=1e-12)


def test_newton_survives_bad_derivative():
    # derivative reported as zero everywhere forces pure bisection
    def g(x, idx):
        return np.tanh(x - 0.3), np.zeros_like(x)

    x = newton_bracketed(g, np.array([-5.0]), np.array([5.0]))
    assert x[0] == pytest.approx(0.3, abs=1e-14)


def test_newton_budget_exhausted():
    def g(x, idx):
        return x - 0.123456789, np.zeros_like(x)

    with pytest.raises(RootError):
        newton_bracketed(g, np.array([0.0]), np.array([1.0]), max_iter=5)


def test_grow_bracket_reports_failure():
    def g(x, idx):
        return np.full_like(x, -1.0), np.zeros_like(x)

    _, _, ok = grow_bracket(g, np.zeros(2), limit=16)
    assert not ok.any()
