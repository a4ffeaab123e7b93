"""Fixed-point solver for actuarially fair Pareto optimal sharing rules.

The optimal rule has the form ``h_i(s) = I_i(J(s) / alpha_i)``.  Two maps are
alternated:

* ``phi1``: weights ``alpha`` -> multiplier curve ``J`` solving the
  allocation equation ``sum_i I_i(J(s) / alpha_i) = s`` at every lattice point;
* ``phi2``: curve ``J`` -> weights solving the fairness equations
  ``E[I_i(J(S) / alpha_i)] = E[X_i]``.

Their composite ``phi`` is homogeneous of degree one, so the iteration runs on
the unit simplex through ``psi(alpha) = phi(alpha) / ||phi(alpha)||_1``.

Internally everything is solved on a log scale (``u = log J``,
``w = log alpha``), which keeps weights spanning many orders of magnitude and
steep exponential-type inverses well conditioned.  While iterating, ``J`` is
only needed where ``S`` has positive probability; the rule is then assembled
on the whole lattice from the final weights.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .pool import Pool
from .roots import RootError, grow_bracket, newton_bracketed

__all__ = [
    "SolverError",
    "MultiplierCurve",
    "FixedPointReport",
    "SharingRule",
    "ContractionCheck",
    "phi1",
    "phi2",
    "phi",
    "psi",
    "iterate",
    "rule_at",
    "hilbert_distance",
    "verify_contraction",
]

ALLOCATION_RTOL = 1e-10
FAIRNESS_RTOL = 1e-12
# coarse stride of the two-pass multiplier solve
_STRIDE = 64


class SolverError(RuntimeError):
    """Numerical fault or infeasible equation inside the fixed-point maps."""


@dataclass(frozen=True)
class MultiplierCurve:
    """``J`` on the lattice ``{0, step, ..., K * step}``, stored as ``log J``."""

    step: float
    log_values: np.ndarray

    @property
    def values(self) -> np.ndarray:
        return np.exp(self.log_values)

    @property
    def grid(self) -> np.ndarray:
        return self.step * np.arange(self.log_values.size)


@dataclass
class FixedPointReport:
    converged: bool
    iterations: int
    distance_trace: list[float] = field(default_factory=list)
    hilbert_trace: list[float] = field(default_factory=list)
    eigen_residual: float = math.nan
    runtime: float = 0.0


@dataclass
class SharingRule:
    """Optimal shares ``h_i(k * step)`` plus fairness and allocation checks.

    The share matrix is built on first access to ``h``; for large pools use
    :meth:`share` to get one participant at a time.
    """

    step: float
    alpha: np.ndarray
    curve: MultiplierCurve
    pool: Pool = field(repr=False)
    iterations: int = 0
    fairness_residuals: np.ndarray = field(default=None)
    allocation_residual: float = math.nan
    _h: np.ndarray | None = field(default=None, repr=False)

    @property
    def names(self) -> list[str]:
        return self.pool.names

    @property
    def grid(self) -> np.ndarray:
        return self.curve.grid

    def share(self, i: int) -> np.ndarray:
        """``h_i`` on the lattice."""
        if self._h is not None:
            return self._h[i]
        m = self.pool.preferences[i]
        return m.inverse_marginal_log(self.curve.log_values - math.log(self.alpha[i]))[0]

    @property
    def h(self) -> np.ndarray:
        if self._h is None:
            self._h = self.pool.inverse_each(self.curve.log_values, np.log(self.alpha))
        return self._h


@dataclass
class ContractionCheck:
    ok: bool
    worst_ratio: float
    pairs: int
    violation: tuple[np.ndarray, np.ndarray] | None = None


# -- phi1 ---------------------------------------------------------------------
def _initial_level(pool: Pool, log_alpha: np.ndarray, s: np.ndarray) -> np.ndarray:
    return np.log(s / pool.n) + float(np.mean(log_alpha))


def _solve_direct(pool: Pool, log_alpha: np.ndarray, s: np.ndarray, x0: np.ndarray | None = None):
    log_s = np.log(s)

    def g(u, idx):
        total, slope = pool.inverse_sum(u, log_alpha)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.log(total) - log_s[idx], slope / total

    if x0 is None:
        x0 = _initial_level(pool, log_alpha, s)
    lo, hi, ok = grow_bracket(g, x0)
    if not ok.all():
        bad = s[~ok][0]
        raise SolverError(f"no multiplier level solves the allocation equation at s={bad}")
    return newton_bracketed(g, lo, hi, x0=x0)


def _solve_levels(pool: Pool, log_alpha: np.ndarray, s: np.ndarray) -> np.ndarray:
    """``log J(s)`` for an increasing array of positive ``s``.

    Every ``_STRIDE``-th point is solved from scratch; the rest reuse the
    neighbouring solutions as brackets since ``J`` is increasing.
    """
    if s.size <= 2 * _STRIDE:
        return _solve_direct(pool, log_alpha, s)
    coarse = np.unique(np.r_[np.arange(0, s.size, _STRIDE), s.size - 1])
    uc = _solve_direct(pool, log_alpha, s[coarse])
    out = np.empty(s.size)
    out[coarse] = uc
    rest = np.setdiff1d(np.arange(s.size), coarse)
    j = np.searchsorted(coarse, rest)
    lo, hi = uc[j - 1], uc[j]
    x0 = np.interp(np.log(s[rest]), np.log(s[coarse]), uc)
    log_s = np.log(s[rest])

    def g(u, idx):
        total, slope = pool.inverse_sum(u, log_alpha)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.log(total) - log_s[idx], slope / total

    out[rest] = newton_bracketed(g, lo, hi, x0=x0)
    return out


def _bounded_names(pool: Pool) -> list[str]:
    return [p.name for p in pool.participants if math.isfinite(p.preference.inverse_bound)]


def _log_levels(pool: Pool, log_alpha: np.ndarray, s: np.ndarray) -> np.ndarray:
    """``log J`` at arbitrary non-negative, increasing points ``s``."""
    s = np.asarray(s, dtype=np.float64)
    u = np.full(s.size, -np.inf)
    cap = pool.inverse_bound_total
    pos = s > 0
    top = np.zeros_like(pos)
    if math.isfinite(cap):
        top = s >= cap * (1 - 1e-12)
        if top.any():
            compliant = all(p.inada_compliant for p in pool.participants)
            if not compliant or np.any(s[top] > cap * (1 + 1e-12)):
                raise SolverError(
                    f"allocation equation has no root at s={s[top][0]}: bounded inverse marginal "
                    f"for {', '.join(_bounded_names(pool))}"
                )
            u[top] = np.inf
    inner = pos & ~top
    if inner.any():
        try:
            u[inner] = _solve_levels(pool, log_alpha, s[inner])
        except RootError as exc:
            raise SolverError(str(exc)) from exc
        total, _ = pool.inverse_sum(u[inner], log_alpha)
        err = np.abs(total - s[inner])
        tol = ALLOCATION_RTOL * np.maximum(1.0, s[inner])
        if np.any(err > tol):
            k = int(np.argmax(err / tol))
            raise SolverError(f"allocation residual {err[k]:.3e} at s={s[inner][k]}")
    return u


def _check_alpha(alpha) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=np.float64)
    if alpha.ndim != 1 or not np.all(np.isfinite(alpha)) or np.any(alpha <= 0):
        raise SolverError(f"weights must be finite and positive, got {alpha}")
    return alpha


def phi1(pool: Pool, alpha) -> MultiplierCurve:
    """Multiplier curve on the full lattice of ``S`` for weights ``alpha``."""
    alpha = _check_alpha(alpha)
    return MultiplierCurve(pool.step, _log_levels(pool, np.log(alpha), pool.grid))


# -- phi2 ---------------------------------------------------------------------
def _weights(pool: Pool, u: np.ndarray, pmf: np.ndarray, w0: np.ndarray) -> np.ndarray:
    """``log alpha`` solving the fairness equations for ``u = log J`` on a support."""
    target = np.log(pool.means)
    w = np.empty(pool.n)
    done = np.zeros(pool.n, dtype=bool)
    if pool._crra.size:
        # E[(J / alpha)^(1/sigma)] = m  =>  alpha = (E[J^(1/sigma)] / m)^sigma
        sig = pool._sigma
        lse = logsumexp(u[None, :] / sig[:, None], b=pmf[None, :], axis=1)
        w[pool._crra] = sig * (lse - target[pool._crra])
        done[pool._crra] = True
    rest = np.flatnonzero(~done)
    if rest.size:
        log_m = target[rest]

        # residual log m_i - log E[I_i(J / alpha_i)] increases in w_i
        def g(x, idx):
            la = np.zeros(pool.n)
            la[rest[idx]] = x
            mean, slope = pool.fairness_moments(u, pmf, la, rest[idx])
            with np.errstate(divide="ignore", invalid="ignore"):
                return log_m[idx] - np.log(mean), slope / mean

        x0 = w0[rest]
        lo, hi, ok = grow_bracket(g, x0)
        if not ok.all():
            name = pool.names[rest[np.flatnonzero(~ok)[0]]]
            raise SolverError(f"fairness equation for {name!r} could not be bracketed")
        try:
            w[rest] = newton_bracketed(g, lo, hi, x0=x0)
        except RootError as exc:
            raise SolverError(str(exc)) from exc
    return w


def _fairness_gaps(pool: Pool, u: np.ndarray, pmf: np.ndarray, log_alpha: np.ndarray) -> np.ndarray:
    mean, _ = pool.fairness_moments(u, pmf, log_alpha, np.arange(pool.n))
    return mean - pool.means


def phi2(pool: Pool, curve: MultiplierCurve, alpha0=None) -> np.ndarray:
    """Weights making ``I_i(J / alpha_i)`` actuarially fair for every participant."""
    eff = pool.effective_indices()
    u = curve.log_values[eff]
    if np.all(np.isneginf(u)):
        return np.zeros(pool.n)
    pmf = pool.S.pmf[eff]
    w0 = np.zeros(pool.n) if alpha0 is None else np.log(_check_alpha(alpha0))
    w = _weights(pool, u, pmf, w0)
    _verify_fairness(pool, u, pmf, w)
    return np.exp(w)


def _verify_fairness(pool, u, pmf, w):
    gaps = _fairness_gaps(pool, u, pmf, w)
    tol = FAIRNESS_RTOL * np.maximum(1.0, pool.means)
    if np.any(np.abs(gaps) > tol):
        k = int(np.argmax(np.abs(gaps) / tol))
        raise SolverError(f"fairness residual {gaps[k]:.3e} for {pool.names[k]!r}")


# -- composite maps -----------------------------------------------------------
class _Support:
    """Positive-probability part of the lattice used while iterating."""

    def __init__(self, pool: Pool):
        eff = pool.effective_indices()
        self.s = pool.grid[eff]
        self.pmf = pool.S.pmf[eff]


def _phi_log(pool: Pool, w: np.ndarray, sup: _Support) -> tuple[np.ndarray, np.ndarray]:
    u = _log_levels(pool, w, sup.s)
    w_new = _weights(pool, u, sup.pmf, w)
    if not np.all(np.isfinite(w_new)):
        raise SolverError(f"non-finite weight produced from log-weights {w}")
    return w_new, u


def phi(pool: Pool, alpha) -> np.ndarray:
    """The composite map ``phi2(phi1(alpha))``; homogeneous of degree one."""
    alpha = _check_alpha(alpha)
    w, _ = _phi_log(pool, np.log(alpha), _Support(pool))
    return np.exp(w)


def _normalize(v: np.ndarray) -> np.ndarray:
    out = v / math.fsum(v)
    return out / math.fsum(out)


def psi(pool: Pool, alpha) -> np.ndarray:
    """``phi(alpha)`` normalised onto the unit simplex."""
    return _normalize(phi(pool, alpha))


def hilbert_distance(w, y) -> float:
    """Hilbert projective distance ``log(max(w/y) / min(w/y))``."""
    w = np.asarray(w, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if w.shape != y.shape:
        raise ValueError(f"shape mismatch {w.shape} vs {y.shape}")
    if np.any(w <= 0) or np.any(y <= 0):
        raise ValueError("Hilbert distance needs strictly positive vectors")
    r = np.log(w) - np.log(y)
    return float(r.max() - r.min())


# -- iteration ----------------------------------------------------------------
def iterate(
    pool: Pool,
    epsilon: float = 1e-14,
    max_iter: int = 200,
    alpha0=None,
) -> tuple[SharingRule, FixedPointReport]:
    """Iterate ``alpha <- psi(alpha)`` until consecutive weights are within ``epsilon``.

    Parameters
    ----------
    pool : Pool
    epsilon : float
        Euclidean stopping tolerance on consecutive simplex weights.
    max_iter : int
        Maximum number of ``psi`` applications.
    alpha0 : array_like, optional
        Positive start; normalised onto the simplex.  Uniform by default.

    Returns
    -------
    rule : SharingRule
        Shares on the full lattice from the last weights.
    report : FixedPointReport
        ``converged`` is False when ``max_iter`` ran out; no exception is raised.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    t0 = time.perf_counter()
    alpha = np.full(pool.n, 1.0 / pool.n) if alpha0 is None else _normalize(_check_alpha(alpha0))
    sup = _Support(pool)
    report = FixedPointReport(converged=False, iterations=0)
    for _ in range(max_iter):
        w_raw, _ = _phi_log(pool, np.log(alpha), sup)
        new = _normalize(np.exp(w_raw - w_raw.max()))
        if np.any(new <= 0):
            raise SolverError(f"weight underflow at iteration {report.iterations + 1}")
        dist = float(np.linalg.norm(new - alpha))
        report.distance_trace.append(dist)
        report.hilbert_trace.append(hilbert_distance(new, alpha))
        report.iterations += 1
        alpha = new
        if dist < epsilon:
            report.converged = True
            break

    # eigenvalue check: phi(alpha*) should return alpha* itself, unnormalised
    w_star = np.log(alpha)
    w_img, u_eff = _phi_log(pool, w_star, sup)
    img = np.exp(w_img)
    report.eigen_residual = float(np.max(np.abs(img - alpha)) / np.max(alpha))

    curve = MultiplierCurve(pool.step, _log_levels(pool, w_star, pool.grid))
    gaps = _fairness_gaps(pool, curve.log_values[pool.effective_indices()], sup.pmf, w_star)
    rule = SharingRule(
        step=pool.step,
        alpha=alpha,
        curve=curve,
        pool=pool,
        iterations=report.iterations,
        fairness_residuals=gaps,
        allocation_residual=_allocation_residual(pool, curve, w_star),
    )
    report.runtime = time.perf_counter() - t0
    return rule, report


def _allocation_residual(pool: Pool, curve: MultiplierCurve, log_alpha: np.ndarray) -> float:
    total = np.zeros(curve.log_values.size)
    for i, m in enumerate(pool.preferences):
        total += m.inverse_marginal_log(curve.log_values - log_alpha[i])[0]
    return float(np.max(np.abs(total - curve.grid)))


def rule_at(pool: Pool, alpha, s) -> np.ndarray:
    """Shares ``h_i(s)`` (rows ``i``) at arbitrary, not necessarily lattice, points."""
    alpha = _check_alpha(alpha)
    s = np.atleast_1d(np.asarray(s, dtype=np.float64))
    order = np.argsort(s)
    u = np.empty(s.size)
    u[order] = _log_levels(pool, np.log(alpha), s[order])
    return pool.inverse_each(u, np.log(alpha))


def verify_contraction(pool: Pool, samples: int = 100, rng=None) -> ContractionCheck:
    """Check ``d(psi(w), psi(y)) < d(w, y)`` on random simplex pairs.

    Pairs at distance zero are skipped.  The first violating pair, if any, is
    returned in the result.
    """
    rng = np.random.default_rng(rng)
    sup = _Support(pool)

    def step(a):
        w, _ = _phi_log(pool, np.log(a), sup)
        return _normalize(np.exp(w - w.max()))

    worst, used = 0.0, 0
    for _ in range(samples):
        w = rng.dirichlet(np.ones(pool.n))
        y = rng.dirichlet(np.ones(pool.n))
        d0 = hilbert_distance(w, y)
        if d0 == 0:
            continue
        used += 1
        ratio = hilbert_distance(step(w), step(y)) / d0
        worst = max(worst, ratio)
        if not ratio < 1:
            return ContractionCheck(False, worst, used, (w, y))
    return ContractionCheck(True, worst, used)
