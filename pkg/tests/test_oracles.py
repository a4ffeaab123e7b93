import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from afpo import CRRA, LatticeDistribution, Participant, Pool, iterate
from afpo.oracles import InfeasibleError, proportional_rule, two_crra_solution, uniform_rule
from afpo.stochorder import pushforward_cdf

from pools import cp4_pool


def small_S():
    return LatticeDistribution(1.0, [0.2, 0.5, 0.3])


def test_uniform_rule():
    assert uniform_rule(4)(8.0)[:, 0] == pytest.approx([2, 2, 2, 2])
    assert uniform_rule(1)(np.array([3.0, 5.0]))[0] == pytest.approx([3, 5])
    with pytest.raises(ValueError):
        uniform_rule(0)


def test_proportional_rule():
    rule = proportional_rule([1.0, 3.0])
    assert rule.slopes == pytest.approx([0.25, 0.75])
    pool = cp4_pool()
    slopes = proportional_rule(pool).slopes
    assert math.fsum(slopes) == pytest.approx(1.0, abs=1e-15)
    assert slopes == pytest.approx(pool.means / pool.means.sum())
    with pytest.raises(InfeasibleError):
        proportional_rule([0.0, 0.0])


def scan_root(S, target):
    """Independent oracle: dense scan of the scalar equation, then secant refinement."""
    s, p = S.support, S.pmf
    f = lambda a: np.sum(p * (np.sqrt(a * s + a * a / 4) - a / 2)) - target  # noqa: E731
    grid = np.logspace(-6, 6, 200001)
    vals = np.array([f(a) for a in grid[::100]])
    k = int(np.argmax(vals > 0)) * 100
    lo, hi = grid[max(k - 100, 0)], grid[k]
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if f(mid) < 0 else (lo, mid)
    return 0.5 * (lo + hi)


def test_scalar_matches_scan():
    S = small_S()
    sol = two_crra_solution(1.0, S, S.mean() / 2)
    assert sol.a == pytest.approx(scan_root(S, S.mean() / 2), rel=1e-10)


def test_scalar_limits():
    S = small_S()
    assert two_crra_solution(1.0, S, 1e-9).a < 1e-6
    assert two_crra_solution(1.0, S, S.mean() * (1 - 1e-9)).a > 1e6
    for bad in (0.0, S.mean(), -1.0, 2 * S.mean()):
        with pytest.raises(InfeasibleError):
            two_crra_solution(1.0, S, bad)


@settings(max_examples=100, deadline=None)
@given(sigma=st.floats(0.1, 5.0), frac=st.floats(0.01, 0.99), s=st.floats(0, 100))
def test_solution_invariants(sigma, frac, s):
    S = small_S()
    sol = two_crra_solution(sigma, S, frac * S.mean())
    a1, a2 = sol.alpha_tilde
    assert a1 + a2 == pytest.approx(1.0, abs=1e-15)
    assert a1 == pytest.approx(sol.a**sigma / (1 + sol.a**sigma), rel=1e-12)
    assert sol.h1(s) + sol.h2(s) == pytest.approx(s, abs=1e-12 * max(1, s))
    h2 = math.sqrt(sol.a * s + sol.a**2 / 4) - sol.a / 2
    assert sol.h2(s) == pytest.approx(h2, rel=1e-9, abs=1e-12)


def test_h2_concave_h1_convex():
    S = LatticeDistribution(1.0, np.full(30, 1 / 30))
    sol = two_crra_solution(1.3, S, 0.4 * S.mean())
    s = np.arange(60.0)
    assert np.all(np.diff(sol.h2(s), 2) < 0) and np.all(np.diff(sol.h1(s), 2) > 0)
    assert np.all(np.diff(sol.h2(s)) > 0) and np.all(np.diff(sol.h1(s)) > 0)


@settings(max_examples=20, deadline=None)
@given(sigma=st.floats(0.5, 3.0), seed=st.integers(0, 2**31))
def test_solver_matches_closed_form(sigma, seed):
    rng = np.random.default_rng(seed)
    laws = [LatticeDistribution(1.0, rng.dirichlet(np.ones(int(rng.integers(2, 7))))) for _ in range(2)]
    pool = Pool([Participant("a", laws[0], CRRA(sigma)), Participant("b", laws[1], CRRA(2 * sigma))])
    rule, rep = iterate(pool)
    sol = two_crra_solution(sigma, pool.S, laws[1].mean())
    assert np.abs(rule.alpha - sol.alpha_tilde).max() <= 1e-8
    ref = np.vstack([sol.h1(rule.grid), sol.h2(rule.grid)])
    assert np.abs(rule.h - ref).max() <= 1e-6 * pool.S.max_support()


def test_pushforward_formulas_match_solver():
    rng = np.random.default_rng(5)
    laws = [LatticeDistribution(1.0, rng.dirichlet(np.ones(6))) for _ in range(2)]
    pool = Pool([Participant("a", laws[0], CRRA(1.0)), Participant("b", laws[1], CRRA(2.0))])
    rule, _ = iterate(pool)
    sol = two_crra_solution(1.0, pool.S, laws[1].mean())
    for i, formula in ((0, sol.h1_cdf), (1, sol.h2_cdf)):
        cdf = pushforward_cdf(rule.h[i], pool.S)
        assert np.allclose(cdf.values, formula(cdf.grid, pool.S), atol=1e-12)
        mid = 0.5 * (cdf.grid[1:] + cdf.grid[:-1])
        assert np.allclose(cdf(mid), formula(mid, pool.S), atol=1e-12)
