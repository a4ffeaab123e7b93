"""Lattice-valued loss distributions.

Every law lives on ``{0, step, 2*step, ..., k_max*step}``.  Convolutions go
through the FFT with exact zero-padding; compound Poisson laws use the
probability generating function ``exp(lam * (P_C(t) - 1))`` on a circular grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np
from scipy import special, stats

__all__ = [
    "TAIL_MASS",
    "KMAX_CAP",
    "TruncationError",
    "ConfigurationError",
    "LatticeDistribution",
    "CompoundPoissonSpec",
    "point_mass",
    "negbinom_pmf",
    "compound_poisson",
    "convolve",
    "aggregate",
    "discretize_gamma",
    "cdf",
    "mean",
    "variance",
    "max_support",
]

TAIL_MASS = 1e-12
KMAX_CAP = 2**24
NORMALIZATION_TOL = 1e-10


class TruncationError(ValueError):
    """The tail-mass rule cannot be met inside the allowed lattice length."""


class ConfigurationError(ValueError):
    """Distributions that cannot be combined (e.g. different steps)."""


@dataclass(frozen=True)
class LatticeDistribution:
    step: float
    pmf: np.ndarray
    name: str = ""

    def __post_init__(self):
        pmf = np.array(self.pmf, dtype=np.float64).ravel()
        if not self.step > 0:
            raise ValueError(f"step must be positive, got {self.step}")
        if pmf.size == 0:
            raise ValueError("pmf must have at least one entry")
        if not np.all(np.isfinite(pmf)) or np.any(pmf < 0):
            raise ValueError("pmf entries must be finite and non-negative")
        total = float(np.sum(pmf))
        if abs(total - 1.0) > NORMALIZATION_TOL:
            raise ValueError(f"pmf sums to {total!r}, not 1")
        pmf.setflags(write=False)
        object.__setattr__(self, "step", float(self.step))
        object.__setattr__(self, "pmf", pmf)

    @property
    def k_max(self) -> int:
        return self.pmf.size - 1

    @property
    def support(self) -> np.ndarray:
        """Lattice points ``k * step`` for ``k = 0..k_max``."""
        return self.step * np.arange(self.pmf.size)

    def cdf(self) -> np.ndarray:
        return cdf(self)

    def mean(self) -> float:
        return mean(self)

    def variance(self) -> float:
        return variance(self)

    def max_support(self) -> float:
        return max_support(self)

    def expect(self, values: np.ndarray) -> float:
        """Lattice expectation of ``values[k]`` under the pmf."""
        values = np.asarray(values, dtype=np.float64)
        return float(np.sum(self.pmf * values))


@dataclass(frozen=True)
class CompoundPoissonSpec:
    frequency_lambda: float
    severity: LatticeDistribution = field(repr=False)

    def __post_init__(self):
        if not self.frequency_lambda > 0:
            raise ValueError(f"frequency_lambda must be positive, got {self.frequency_lambda}")
        if not isinstance(self.severity, LatticeDistribution):
            raise TypeError("severity must be a LatticeDistribution")

    def mean(self) -> float:
        return self.frequency_lambda * self.severity.mean()


def _finish(pmf: np.ndarray, step: float, name: str) -> LatticeDistribution:
    """Clip round-off negatives and renormalize by the retained mass."""
    pmf = np.clip(np.asarray(pmf, dtype=np.float64), 0.0, None)
    return LatticeDistribution(step, pmf / np.sum(pmf), name)


def _trim_tail(pmf: np.ndarray) -> np.ndarray:
    """Shortest prefix whose discarded tail mass stays below TAIL_MASS."""
    # tail[k] = mass strictly above index k
    tail = np.cumsum(pmf[::-1])[::-1]
    tail = np.append(tail[1:], 0.0)
    keep = int(np.argmax(tail < TAIL_MASS))
    return pmf[: keep + 1]


def point_mass(k: int = 0, step: float = 1.0, name: str = "") -> LatticeDistribution:
    pmf = np.zeros(k + 1)
    pmf[k] = 1.0
    return LatticeDistribution(step, pmf, name or f"delta({k * step:g})")


def negbinom_pmf(
    r: int,
    q: float,
    k_max: int | None = None,
    step: float = 1.0,
    cap: int = KMAX_CAP,
) -> LatticeDistribution:
    """Negative binomial law counting failures before the r-th success.

    ``pmf[k] = C(k + r - 1, k) q**r (1 - q)**k`` on ``{0, 1, 2, ...}``, mean
    ``r (1 - q) / q``.  With ``k_max=None`` the truncation point is the
    smallest ``k`` whose upper tail is below ``TAIL_MASS``.
    """
    if int(r) != r or r < 1:
        raise ValueError(f"r must be a positive integer, got {r}")
    if not 0 < q < 1:
        raise ValueError(f"q must lie in (0, 1), got {q}")
    law = stats.nbinom(int(r), q)
    if k_max is None:
        k_max = max(int(law.mean()), 1)
        while law.sf(k_max) >= TAIL_MASS:
            k_max *= 2
            if k_max > cap:
                raise TruncationError(f"negbinom({r}, {q}) tail exceeds cap {cap}")
        ks = np.arange(k_max + 1)
        tails = law.sf(ks)
        k_max = int(np.argmax(tails < TAIL_MASS))
    elif law.sf(k_max) >= TAIL_MASS:
        raise TruncationError(
            f"negbinom({r}, {q}): tail mass {law.sf(k_max):.3e} beyond k_max={k_max}; "
            "increase k_max"
        )
    pmf = law.pmf(np.arange(k_max + 1))
    return _finish(pmf, step, f"negbinom({r}, {q})")


def _denoise(values: np.ndarray, size: int, scale: float) -> np.ndarray:
    """Zero out entries below the round-off floor of a length-``size`` FFT."""
    floor = 4 * np.finfo(float).eps * np.log2(max(size, 2)) * scale
    values[values < floor] = 0.0
    return values


def _cp_on_grid(spec: CompoundPoissonSpec, size: int) -> np.ndarray:
    sev = np.zeros(size)
    sev[: spec.severity.pmf.size] = spec.severity.pmf
    transform = np.fft.rfft(sev)
    pmf = np.fft.irfft(np.exp(spec.frequency_lambda * (transform - 1.0)), n=size)
    return _denoise(pmf, size, 1.0)


def compound_poisson(
    spec: CompoundPoissonSpec,
    k_max: int | None = None,
    cap: int = KMAX_CAP,
) -> LatticeDistribution:
    """Law of ``C_1 + ... + C_N`` with ``N ~ Poisson(lam)``, via the FFT.

    With an explicit ``k_max`` the pgf identity is evaluated on a circular
    grid of ``k_max + 1`` points and a visible wrap-around (``pmf[k_max]``
    above the tail threshold) raises ``TruncationError``.  With
    ``k_max=None`` the grid doubles until its upper half carries negligible
    mass, and the result is trimmed by the tail rule.
    """
    sev_k = spec.severity.k_max
    name = f"CP({spec.frequency_lambda:g}, {spec.severity.name})"
    if k_max is not None:
        if k_max < sev_k:
            raise ValueError(f"k_max={k_max} is below the severity k_max={sev_k}")
        pmf = _cp_on_grid(spec, k_max + 1)
        if pmf[-1] > TAIL_MASS:
            raise TruncationError(
                f"{name}: wrap-around mass {pmf[-1]:.3e} at k_max={k_max}; increase k_max"
            )
        return _finish(pmf, spec.severity.step, name)

    size = 1 << int(np.ceil(np.log2(max(2 * (sev_k + 1), 64))))
    while True:
        pmf = _cp_on_grid(spec, size)
        if np.sum(pmf[size // 2 :]) < TAIL_MASS * 1e-2:
            break
        size *= 2
        if size > cap:
            raise TruncationError(f"{name}: tail rule not met within cap {cap}")
    return _finish(_trim_tail(pmf), spec.severity.step, name)


def _fft_convolve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    n = a.size + b.size - 1
    size = 1 << int(np.ceil(np.log2(n)))
    out = np.fft.irfft(np.fft.rfft(a, size) * np.fft.rfft(b, size), size)[:n]
    return _denoise(out, size, float(np.linalg.norm(a) * np.linalg.norm(b)))


def convolve(a: LatticeDistribution, b: LatticeDistribution) -> LatticeDistribution:
    """Law of the independent sum, on the lattice of length ``len(a) + len(b) - 1``."""
    if not np.isclose(a.step, b.step, rtol=1e-12, atol=0):
        raise ConfigurationError(f"step mismatch: {a.step} vs {b.step}")
    name = f"{a.name} * {b.name}" if a.name and b.name else ""
    return _finish(_fft_convolve(a.pmf, b.pmf), a.step, name)


def aggregate(pool: Sequence[LatticeDistribution], name: str = "S") -> LatticeDistribution:
    """Law of ``S = X_1 + ... + X_n`` for independent lattice laws.

    Reduces pairwise in a balanced tree so FFT round-off stays at the level
    of a single transform of the final length.  The support bound of the
    result is ``sum(max_support(X_i))``.
    """
    laws = list(pool)
    if len(laws) < 2:
        raise ValueError("aggregate needs at least two distributions")
    step = laws[0].step
    for law in laws[1:]:
        if not np.isclose(law.step, step, rtol=1e-12, atol=0):
            raise ConfigurationError(f"step mismatch: {step} vs {law.step}")
    pmfs = [law.pmf for law in laws]
    while len(pmfs) > 1:
        nxt = [_fft_convolve(pmfs[i], pmfs[i + 1]) for i in range(0, len(pmfs) - 1, 2)]
        if len(pmfs) % 2:
            nxt.append(pmfs[-1])
        pmfs = [np.clip(p, 0.0, None) for p in nxt]
    return _finish(pmfs[0], step, name)


def _limited_mean_gamma(d: np.ndarray, shape: float, rate: float) -> np.ndarray:
    """E[min(X, d)] for X ~ Gamma(shape, rate)."""
    return shape / rate * special.gammainc(shape + 1, rate * d) + d * special.gammaincc(
        shape, rate * d
    )


def discretize_gamma(
    shape: float,
    rate: float,
    step: float,
    k_max: int | None = None,
    method: Literal["mean", "lower", "upper"] = "mean",
    cap: int = KMAX_CAP,
) -> LatticeDistribution:
    """Discretize Gamma(shape, rate) onto the lattice of width ``step``.

    ``method="mean"`` is first-order local moment matching (the discrete
    mean equals ``shape / rate`` up to tail truncation); ``"lower"`` and
    ``"upper"`` round each interval's mass down or up.
    """
    if not (shape > 0 and rate > 0 and step > 0):
        raise ValueError("shape, rate and step must be positive")
    law = stats.gamma(shape, scale=1.0 / rate)
    if k_max is None:
        k_max = max(int(np.ceil(law.isf(TAIL_MASS) / step)) + 1, 1)
        if k_max > cap:
            raise TruncationError(f"gamma({shape}, {rate}) needs more than {cap} points")
    elif law.sf(k_max * step) >= TAIL_MASS:
        raise TruncationError(
            f"gamma({shape}, {rate}): tail mass {law.sf(k_max * step):.3e} beyond "
            f"k_max={k_max}; increase k_max"
        )
    x = step * np.arange(k_max + 2)
    if method == "mean":
        lev = _limited_mean_gamma(x, shape, rate)
        pmf = np.empty(k_max + 1)
        pmf[0] = 1.0 - lev[1] / step
        pmf[1:] = (2.0 * lev[1:-1] - lev[:-2] - lev[2:]) / step
    elif method == "lower":
        pmf = np.diff(law.cdf(x))
    elif method == "upper":
        pmf = np.diff(law.cdf(x[:-1]), prepend=0.0)
    else:
        raise ValueError(f"unknown discretization method {method!r}")
    return _finish(pmf, step, f"gamma({shape:g}, {rate:g})")


def cdf(d: LatticeDistribution) -> np.ndarray:
    return np.cumsum(d.pmf)


def mean(d: LatticeDistribution) -> float:
    return d.expect(d.support)


def variance(d: LatticeDistribution) -> float:
    m = mean(d)
    return d.expect((d.support - m) ** 2)


def max_support(d: LatticeDistribution) -> float:
    return d.k_max * d.step
