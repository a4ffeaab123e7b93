"""Closed-form sharing rules used as ground truth for the iterative solver."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit

from .dist import LatticeDistribution
from .pool import Pool

__all__ = [
    "InfeasibleError",
    "TwoCrraSolution",
    "uniform_rule",
    "proportional_rule",
    "two_crra_solution",
]


class InfeasibleError(ValueError):
    """No sharing rule satisfies the requested constraints."""


def uniform_rule(n: int) -> Callable[[np.ndarray], np.ndarray]:
    """Equal split ``h_i(s) = s / n``; rows of the result are participants."""
    if n < 1:
        raise ValueError("n must be at least 1")

    def rule(s):
        s = np.atleast_1d(np.asarray(s, dtype=np.float64))
        return np.tile(s / n, (n, 1))

    return rule


def proportional_rule(pool: Pool | Sequence[float]) -> Callable[[np.ndarray], np.ndarray]:
    """Linear rule ``h_i(s) = E[X_i] / E[S] * s``.

    Accepts a :class:`Pool` or the participants' mean losses directly.
    """
    means = pool.means if isinstance(pool, Pool) else np.asarray(pool, dtype=np.float64)
    total = math.fsum(means)
    if not total > 0:
        raise InfeasibleError("E[S] = 0: the pool has no loss to share")
    slopes = means / total

    def rule(s):
        s = np.atleast_1d(np.asarray(s, dtype=np.float64))
        return slopes[:, None] * s[None, :]

    rule.slopes = slopes
    return rule


@dataclass(frozen=True)
class TwoCrraSolution:
    """Two CRRA participants with ``sigma_2 = 2 * sigma_1``.

    The fair optimum is governed by one scalar ``a``: participant 2 pays
    ``sqrt(a s + a**2 / 4) - a / 2`` (concave) and participant 1 the rest.
    """

    a: float
    sigma1: float

    @property
    def alpha_tilde(self) -> tuple[float, float]:
        # a^s / (1 + a^s) and 1 / (1 + a^s), overflow-free
        t = self.sigma1 * math.log(self.a)
        return float(expit(t)), float(expit(-t))

    def h2(self, s):
        s = np.asarray(s, dtype=np.float64)
        return s / (np.sqrt(s / self.a + 0.25) + 0.5)

    def h1(self, s):
        s = np.asarray(s, dtype=np.float64)
        return s - self.h2(s)

    def h2_cdf(self, z, S: LatticeDistribution):
        """``P(h2(S) <= z) = F_S(z**2 / a + z)``."""
        return _lattice_cdf(S, np.asarray(z, dtype=np.float64) ** 2 / self.a + z)

    def h1_cdf(self, z, S: LatticeDistribution):
        """``P(h1(S) <= z) = F_S(z + sqrt(a z))``.

        From ``s - h2(s) = z``, i.e. ``(s - z)**2 = a z``.
        """
        z = np.asarray(z, dtype=np.float64)
        return _lattice_cdf(S, z + np.sqrt(self.a * z))


def _lattice_cdf(S: LatticeDistribution, x: np.ndarray) -> np.ndarray:
    # tiny relative slack so points landing on a lattice node count it
    k = np.floor(x / S.step * (1 + 1e-12) + 1e-12).astype(np.int64)
    F = S.cdf()
    out = np.where(k < 0, 0.0, F[np.clip(k, 0, S.k_max)])
    return out


def two_crra_solution(sigma1: float, S: LatticeDistribution, EX2: float) -> TwoCrraSolution:
    """Solve ``E[sqrt(a S + a**2/4) - a/2] = E[X_2]`` for ``a`` on the lattice law of ``S``.

    The left side increases from 0 (``a -> 0``) to ``E[S]`` (``a -> inf``), so
    the root is bracketed in ``log a`` and refined to a residual of 1e-12.
    """
    if not sigma1 > 0:
        raise ValueError("sigma1 must be positive")
    ES = S.mean()
    if not 0 < EX2 < ES:
        raise InfeasibleError(f"E[X2]={EX2} must lie strictly inside (0, E[S]={ES})")
    s, p = S.support, S.pmf

    def f(log_a):
        a = math.exp(log_a)
        return float(np.sum(p * s / (np.sqrt(s / a + 0.25) + 0.5))) - EX2

    lo, hi = -1.0, 1.0
    while f(lo) > 0:
        lo *= 2.0
        if lo < -700:
            raise InfeasibleError("E[X2] too small to bracket a")
    while f(hi) < 0:
        hi *= 2.0
        if hi > 700:
            raise InfeasibleError("E[X2] too close to E[S] to bracket a")
    log_a = brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    if abs(f(log_a)) > 1e-12 * max(1.0, EX2):
        raise InfeasibleError(f"scalar equation residual {f(log_a):.3e} above tolerance")
    return TwoCrraSolution(a=math.exp(log_a), sigma1=float(sigma1))
