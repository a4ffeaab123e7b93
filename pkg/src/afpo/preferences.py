"""Disutility models: marginal disutility, its inverse and risk tolerance.

The solver works with multiplier levels on a log scale, so every model
exposes ``inverse_marginal_log(u)`` returning ``I(exp(u))`` together with its
derivative with respect to ``u``.  That keeps exponential-type models finite
far beyond the range where ``exp(s / gamma)`` overflows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import special

from .roots import bisect_increasing

__all__ = [
    "DomainError",
    "DisutilityModel",
    "CRRA",
    "ExponentialType",
    "CustomModel",
    "marginal",
    "inverse_marginal",
    "risk_tolerance",
]


class DomainError(ValueError):
    """Argument outside the model's domain."""


@dataclass(frozen=True)
class DisutilityModel:
    """Base class; concrete families override the vectorised kernels."""

    domain_bound: float = field(default=math.inf, kw_only=True)

    family = "abstract"

    # -- kernels -------------------------------------------------------------
    def _vprime(self, s: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _vsecond(self, s: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _inverse(self, z: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def inverse_marginal_log(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """``I(e**u)`` and ``d/du I(e**u)``; ``u = -inf`` maps to ``(0, 0)``."""
        z = np.exp(u)
        value = self._inverse(z)
        with np.errstate(divide="ignore", invalid="ignore"):
            slope = np.where((z > 0) & np.isfinite(z), z / self._vsecond(value), 0.0)
        return value, slope

    @property
    def inverse_bound(self) -> float:
        """Supremum of the image of ``I`` (``inf`` if unbounded)."""
        return math.inf

    def _lower_inada(self) -> bool:
        return float(self._vprime(np.array([0.0]))[0]) == 0.0

    def inada_compliant_for(self, max_loss: float) -> bool:
        """``v'(0) = 0`` and the image of ``I`` lies in ``[0, max_loss)``."""
        return self._lower_inada() and self.inverse_bound <= max_loss

    @property
    def inada_compliant(self) -> bool:
        return self.inada_compliant_for(self.domain_bound)

    # -- public scalar/array API ---------------------------------------------
    def _check_domain(self, s):
        s = np.asarray(s, dtype=np.float64)
        if np.any(s < 0) or np.any(s >= self.domain_bound):
            raise DomainError(
                f"{self.family}: loss outside [0, {self.domain_bound}) in {s.min()}..{s.max()}"
            )
        return s

    def marginal(self, s):
        return _scalar(self._vprime(self._check_domain(s)), s)

    def second_derivative(self, s):
        return _scalar(self._vsecond(self._check_domain(s)), s)

    def inverse_marginal(self, z):
        z = np.asarray(z, dtype=np.float64)
        if np.any(z < 0):
            raise DomainError("inverse marginal needs z >= 0")
        return _scalar(self._inverse(z), z)

    def risk_tolerance(self, s):
        s = self._check_domain(s)
        with np.errstate(divide="ignore", invalid="ignore"):
            t = self._vprime(s) / self._vsecond(s)
        return _scalar(t, s)


def _scalar(values: np.ndarray, like):
    return float(values) if np.ndim(like) == 0 else values


@dataclass(frozen=True)
class CRRA(DisutilityModel):
    """Power disutility ``v(s) = s**(1 + sigma) / (1 + sigma)``.

    ``sigma`` is the relative risk-aversion coefficient, so the risk
    tolerance is ``T(s) = s / sigma``.
    """

    sigma: float = 1.0
    family = "crra"

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")

    def value(self, s):
        s = self._check_domain(s)
        return _scalar(s ** (1 + self.sigma) / (1 + self.sigma), s)

    def _vprime(self, s):
        return np.power(s, self.sigma)

    def _vsecond(self, s):
        return self.sigma * np.power(s, self.sigma - 1)

    def _inverse(self, z):
        return np.power(z, 1.0 / self.sigma)

    def inverse_marginal_log(self, u):
        value = np.exp(np.asarray(u, dtype=np.float64) / self.sigma)
        return value, value / self.sigma

    def risk_tolerance(self, s):
        s = self._check_domain(s)
        return _scalar(s / self.sigma, s)


@dataclass(frozen=True)
class ExponentialType(DisutilityModel):
    """``v(s) = gamma * exp(s / gamma) - s``; ``v'(s) = exp(s / gamma) - 1``.

    The marginal stays finite at any finite loss, so with a finite
    ``domain_bound`` the upper Inada limit fails.
    """

    gamma: float = 1.0
    family = "exp"

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")

    def _check_domain(self, s):
        s = np.asarray(s, dtype=np.float64)
        if np.any(s < 0):
            raise DomainError(f"exp: negative loss {s.min()}")
        return s

    def value(self, s):
        s = self._check_domain(s)
        return _scalar(self.gamma * np.exp(s / self.gamma) - s, s)

    def _vprime(self, s):
        return np.expm1(s / self.gamma)

    def _vsecond(self, s):
        return np.exp(s / self.gamma) / self.gamma

    def _inverse(self, z):
        return self.gamma * np.log1p(z)

    def inverse_marginal_log(self, u):
        u = np.asarray(u, dtype=np.float64)
        return self.gamma * np.logaddexp(0.0, u), self.gamma * special.expit(u)

    def risk_tolerance(self, s):
        s = self._check_domain(s)
        return _scalar(-self.gamma * np.expm1(-s / self.gamma), s)


@dataclass(frozen=True)
class CustomModel(DisutilityModel):
    """Model given by a marginal disutility callable.

    ``vprime`` must be vectorised, continuous and strictly increasing on
    ``[0, domain_bound)``.  ``I`` is obtained by bisection, run to full
    precision, on a bracket grown geometrically from ``[0, 1]`` (capped at
    ``domain_bound``).  ``vsecond``
    defaults to a central difference of ``vprime``.  ``inada_upper`` declares
    that ``vprime`` diverges at ``domain_bound``; without it ``I`` saturates at
    the bound for levels beyond ``sup v'``.
    """

    vprime: Callable[[np.ndarray], np.ndarray] = field(default=None, compare=False)
    vsecond: Callable[[np.ndarray], np.ndarray] | None = field(default=None, compare=False)
    inada_upper: bool = True
    label: str = "custom"
    family = "custom"

    def __post_init__(self):
        if self.vprime is None:
            raise ValueError("CustomModel needs a vprime callable")

    @property
    def inverse_bound(self) -> float:
        return self.domain_bound

    def inada_compliant_for(self, max_loss: float) -> bool:
        return self.inada_upper and super().inada_compliant_for(max_loss)

    def _vprime(self, s):
        return np.asarray(self.vprime(np.asarray(s, dtype=np.float64)), dtype=np.float64)

    def _vsecond(self, s):
        s = np.asarray(s, dtype=np.float64)
        if self.vsecond is not None:
            return np.asarray(self.vsecond(s), dtype=np.float64)
        # step scaled to the distance from both ends of the domain
        h = 1e-5 * np.maximum(s, 1e-3)
        if not math.isinf(self.domain_bound):
            h = 1e-5 * np.minimum(np.maximum(s, 1e-3), self.domain_bound - s)
        lo = np.maximum(s - h, 0.0)
        return (self._vprime(s + h) - self._vprime(lo)) / (s + h - lo)

    def _inverse(self, z):
        z = np.asarray(z, dtype=np.float64)
        out = np.zeros_like(z)
        flat_in, flat_out = z.ravel(), out.ravel()
        for k, target in enumerate(flat_in):
            if target == 0:
                continue
            if np.isinf(target):
                flat_out[k] = self.inverse_bound
                continue
            flat_out[k] = bisect_increasing(
                lambda s: float(self._vprime(np.array([s]))[0]),
                target,
                upper=self.domain_bound,
                xtol=4 * np.finfo(float).eps,
            )
        return out


def marginal(m: DisutilityModel, s):
    """``v'(s)``."""
    return m.marginal(s)


def inverse_marginal(m: DisutilityModel, z):
    """``I(z)``, the inverse of ``v'``; ``I(0) = 0``."""
    return m.inverse_marginal(z)


def risk_tolerance(m: DisutilityModel, s):
    """``T(s) = v'(s) / v''(s)``."""
    return m.risk_tolerance(s)
