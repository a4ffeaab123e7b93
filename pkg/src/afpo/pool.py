"""Participants, pools and the summed inverse-marginal kernels the solver uses."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import expit

from .dist import LatticeDistribution, aggregate
from .preferences import CRRA, DisutilityModel, ExponentialType

__all__ = ["PoolError", "Participant", "Pool"]

# elements per temporary matrix in the grouped kernels
_BLOCK = 1 << 21


class PoolError(ValueError):
    """Pool that violates the model's standing assumptions."""


@dataclass(frozen=True)
class Participant:
    name: str
    loss: LatticeDistribution
    preference: DisutilityModel

    @property
    def mean(self) -> float:
        return self.loss.mean()

    @property
    def max_loss(self) -> float:
        return self.loss.max_support()

    @property
    def inada_compliant(self) -> bool:
        return self.preference.inada_compliant_for(self.max_loss)


class Pool:
    """Independent participants sharing the aggregate loss ``S``.

    Losses must share one lattice step, be non-degenerate, and have
    ``E[X_i] < max[X_i]``.  ``S`` is aggregated once on construction unless
    an already computed law is passed in.
    """

    def __init__(
        self,
        participants: Sequence[Participant],
        aggregate_law: LatticeDistribution | None = None,
    ):
        participants = list(participants)
        if len(participants) < 2:
            raise PoolError(f"a pool needs at least 2 participants, got {len(participants)}")
        for p in participants:
            if p.loss.variance() <= 0:
                raise PoolError(f"participant {p.name!r} has a degenerate (constant) loss")
            if not p.mean < p.max_loss:
                raise PoolError(f"participant {p.name!r}: E[X] >= max[X]")
        self.participants = participants
        self.S = aggregate([p.loss for p in participants]) if aggregate_law is None else aggregate_law
        self.means = np.array([p.mean for p in participants])
        self.max_losses = np.array([p.max_loss for p in participants])
        self._group()

    # -- basic views --------------------------------------------------------------
    @property
    def n(self) -> int:
        return len(self.participants)

    @property
    def names(self) -> list[str]:
        return [p.name for p in self.participants]

    @property
    def step(self) -> float:
        return self.S.step

    @property
    def grid(self) -> np.ndarray:
        return self.S.support

    @property
    def preferences(self) -> list[DisutilityModel]:
        return [p.preference for p in self.participants]

    def effective_indices(self) -> np.ndarray:
        """Lattice indices carrying positive probability under ``S``."""
        return np.flatnonzero(self.S.pmf > 0)

    @property
    def inverse_bound_total(self) -> float:
        return float(sum(m.inverse_bound for m in self.preferences))

    # -- grouped kernels ----------------------------------------------------------
    def _group(self):
        crra, exp, other = [], [], []
        for i, m in enumerate(self.preferences):
            if type(m) is CRRA:
                crra.append(i)
            elif type(m) is ExponentialType:
                exp.append(i)
            else:
                other.append(i)
        self._crra = np.array(crra, dtype=int)
        self._sigma = np.array([self.preferences[i].sigma for i in crra])
        self._exp = np.array(exp, dtype=int)
        self._gamma = np.array([self.preferences[i].gamma for i in exp])
        self._other = other

    def inverse_sum(self, u: np.ndarray, log_alpha: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """``F(u) = sum_i I_i(exp(u) / alpha_i)`` and ``dF/du`` at each level ``u``."""
        u = np.asarray(u, dtype=np.float64)
        total = np.zeros_like(u)
        slope = np.zeros_like(u)
        for idx, params, kernel in self._matrix_groups():
            if not idx.size:
                continue
            w = log_alpha[idx]
            rows = max(1, _BLOCK // idx.size)
            for start in range(0, u.size, rows):
                sl = slice(start, start + rows)
                value, der = kernel(u[sl, None] - w[None, :], params[None, :])
                total[sl] += value.sum(axis=1)
                slope[sl] += der.sum(axis=1)
        for i in self._other:
            value, der = self.preferences[i].inverse_marginal_log(u - log_alpha[i])
            total += value
            slope += der
        return total, slope

    def inverse_each(self, u: np.ndarray, log_alpha: np.ndarray) -> np.ndarray:
        """Matrix ``h[i, k] = I_i(exp(u_k) / alpha_i)``."""
        u = np.asarray(u, dtype=np.float64)
        out = np.empty((self.n, u.size))
        for i, m in enumerate(self.preferences):
            out[i] = m.inverse_marginal_log(u - log_alpha[i])[0]
        return out

    def fairness_moments(
        self, u: np.ndarray, pmf: np.ndarray, log_alpha: np.ndarray, idx: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray]:
        """``E[I_i(J(S)/alpha_i)]`` and ``E[d/du I_i]`` for participants ``idx``.

        ``u`` holds ``log J`` at the lattice points whose probabilities are
        ``pmf``.  Sums run along contiguous rows (pairwise summation).
        """
        idx = np.asarray(idx, dtype=int)
        means = np.empty(idx.size)
        slopes = np.empty(idx.size)
        pos = {i: k for k, i in enumerate(idx)}
        for gidx, params, kernel in self._matrix_groups():
            members = np.array([i for i in gidx if i in pos], dtype=int)
            if not members.size:
                continue
            par = params[np.searchsorted(gidx, members)]
            rows = max(1, _BLOCK // max(u.size, 1))
            for start in range(0, members.size, rows):
                sub = members[start : start + rows]
                value, der = kernel(u[None, :] - log_alpha[sub][:, None], par[start : start + rows, None])
                out = [pos[i] for i in sub]
                means[out] = np.sum(value * pmf[None, :], axis=1)
                slopes[out] = np.sum(der * pmf[None, :], axis=1)
        for i in self._other:
            if i in pos:
                value, der = self.preferences[i].inverse_marginal_log(u - log_alpha[i])
                means[pos[i]] = np.sum(value * pmf)
                slopes[pos[i]] = np.sum(der * pmf)
        return means, slopes

    def _matrix_groups(self):
        return (
            (self._crra, self._sigma, _crra_kernel),
            (self._exp, self._gamma, _exp_kernel),
        )


def _crra_kernel(x: np.ndarray, sigma: np.ndarray):
    value = np.exp(x / sigma)
    return value, value / sigma


def _exp_kernel(x: np.ndarray, gamma: np.ndarray):
    return gamma * np.logaddexp(0.0, x), gamma * expit(x)
