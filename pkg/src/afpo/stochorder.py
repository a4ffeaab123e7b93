"""Convex-order diagnostics for shared risks.

Two laws with equal means are ordered in the convex order when their CDFs
cross exactly once (Karlin-Novikoff cut criterion).  With ``D = G - F`` the
sign pattern ``+, -`` means ``F`` belongs to the less variable law.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dist import LatticeDistribution
from .pool import Pool
from .preferences import DomainError

__all__ = [
    "PreconditionError",
    "DiscreteCDF",
    "CrossingReport",
    "pushforward_cdf",
    "lattice_cdf",
    "count_sign_changes",
    "check_conjecture",
]

TIE_TOL = 1e-10
CX_SMALLER = "cx-smaller"
CX_LARGER = "cx-larger"
EQUAL = "equal"
INCONCLUSIVE = "inconclusive"


class PreconditionError(ValueError):
    """Inputs do not meet the comparison's preconditions."""


@dataclass(frozen=True)
class DiscreteCDF:
    """Right-continuous step CDF: ``values[j] = P(Y <= grid[j])``."""

    grid: np.ndarray
    values: np.ndarray

    def __call__(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        j = np.searchsorted(self.grid, z, side="right") - 1
        return np.where(j < 0, 0.0, self.values[np.clip(j, 0, None)])

    def linear(self, z) -> np.ndarray:
        """Piecewise-linear interpolation through the jump points."""
        return np.interp(np.asarray(z, dtype=np.float64), self.grid, self.values, left=0.0, right=1.0)

    def masses(self) -> np.ndarray:
        return np.diff(self.values, prepend=0.0)

    def mean(self) -> float:
        return float(np.sum(self.grid * self.masses()))

    def variance(self) -> float:
        p = self.masses()
        m = self.mean()
        return float(np.sum(p * (self.grid - m) ** 2))


@dataclass
class CrossingReport:
    sign_changes: int
    crossing_locations: list[float]
    verdict: str
    mean_gap: float
    signs: list[int] = field(default_factory=list)
    # crossing locations mapped back to aggregate-loss units, when known
    lattice_locations: list[float] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "sign_changes": self.sign_changes,
            "crossing_locations": self.crossing_locations,
            "lattice_locations": self.lattice_locations,
            "signs": self.signs,
            "verdict": self.verdict,
            "mean_gap": self.mean_gap,
        }


def lattice_cdf(d: LatticeDistribution) -> DiscreteCDF:
    """The CDF of a lattice law on its own lattice."""
    return DiscreteCDF(d.support, d.cdf())


def pushforward_cdf(h, S: LatticeDistribution, grid=None) -> DiscreteCDF:
    """CDF of ``h(S)`` where ``h`` is given on the lattice of ``S``.

    Parameters
    ----------
    h : array_like
        Values ``h(k * step)`` for ``k = 0..k_max``; must be non-decreasing
        where ``S`` has mass.
    S : LatticeDistribution
    grid : array_like, optional
        Evaluation points.  Defaults to the distinct values of ``h`` on the
        support of ``S``.
    """
    h = np.asarray(h, dtype=np.float64)
    if h.shape != S.pmf.shape:
        raise ValueError(f"h has {h.size} values for a lattice of {S.pmf.size}")
    keep = S.pmf > 0
    hv, pv = h[keep], S.pmf[keep]
    drops = np.diff(hv)
    if np.any(drops < -1e-12 * max(1.0, float(np.max(np.abs(hv))))):
        raise DomainError("pushforward needs a non-decreasing function on the support")
    hv = np.maximum.accumulate(hv)
    cum = np.cumsum(pv)
    if grid is None:
        # merge equal images so the grid is strictly increasing
        last = np.r_[hv[1:] != hv[:-1], True]
        return DiscreteCDF(hv[last], cum[last])
    grid = np.asarray(grid, dtype=np.float64)
    j = np.searchsorted(hv, grid, side="right") - 1
    return DiscreteCDF(grid, np.where(j < 0, 0.0, cum[np.clip(j, 0, None)]))


def count_sign_changes(
    F: DiscreteCDF,
    G: DiscreteCDF,
    tol: float = TIE_TOL,
    step: float = 1.0,
    mode: str = "step",
) -> CrossingReport:
    """Sign changes of ``G - F`` on the union of both grids.

    ``mode="step"`` compares the exact right-continuous CDFs, which is right
    when both live on one lattice.  ``mode="linear"`` compares the curves
    interpolated linearly between jump points; use it for laws on unrelated
    grids, where interleaved atoms otherwise produce a flip at every jump.
    Points with ``|G - F| <= tol`` are ties and are skipped, so a run of ties
    between two equal signs does not create a crossing.  A crossing is located
    at the last grid point of the run before the sign flips.  The verdict
    concerns ``F``: ``cx-smaller`` for the pattern ``+, -`` with means equal
    within ``10 * step``.
    """
    if mode not in ("step", "linear"):
        raise ValueError(f"mode must be 'step' or 'linear', got {mode!r}")
    z = np.union1d(F.grid, G.grid)
    d = G.linear(z) - F.linear(z) if mode == "linear" else G(z) - F(z)
    strict = np.flatnonzero(np.abs(d) > tol)
    signs = np.sign(d[strict]).astype(int)
    flips = np.flatnonzero(signs[1:] != signs[:-1])
    locations = [float(z[strict[k]]) for k in flips]
    pattern = [int(signs[0])] + [int(signs[k + 1]) for k in flips] if signs.size else []
    gap = abs(F.mean() - G.mean())
    if not pattern:
        verdict = EQUAL
    elif gap > 10 * step:
        verdict = INCONCLUSIVE
    elif pattern == [1, -1]:
        verdict = CX_SMALLER
    elif pattern == [-1, 1]:
        verdict = CX_LARGER
    else:
        verdict = INCONCLUSIVE
    return CrossingReport(len(flips), locations, verdict, gap, pattern)


def _inverse_on_lattice(h: np.ndarray, grid: np.ndarray, z: float) -> float:
    """Aggregate loss whose share is ``z``, by linear interpolation of ``h``."""
    return float(np.interp(z, h, grid))


def check_conjecture(pool_a: Pool, pool_b: Pool, solve=None, tol: float = TIE_TOL) -> dict:
    """Compare each participant's shared risk in two pools.

    Means must agree participant by participant within ``10 * step``.  The
    aggregate laws are compared first; if they are not ordered, every
    participant is reported ``inconclusive``.  ``solve`` maps a pool to a
    :class:`~afpo.solver.SharingRule` (default: :func:`afpo.solver.iterate`
    with its defaults).

    Returns a dict with the aggregate report under ``"S"`` and a list of
    per-participant reports under ``"participants"``.  Crossing locations
    are also mapped to aggregate-loss units through the first pool's rule.
    """
    from .solver import iterate

    if pool_a.n != pool_b.n:
        raise PreconditionError(f"participant counts differ: {pool_a.n} vs {pool_b.n}")
    if pool_a.step != pool_b.step:
        raise PreconditionError("pools use different lattice steps")
    step = pool_a.step
    gaps = np.abs(pool_a.means - pool_b.means)
    if np.any(gaps > 10 * step):
        k = int(np.argmax(gaps))
        raise PreconditionError(
            f"mean mismatch for participant {pool_a.names[k]!r}: "
            f"{pool_a.means[k]} vs {pool_b.means[k]}"
        )
    agg = count_sign_changes(lattice_cdf(pool_a.S), lattice_cdf(pool_b.S), tol, step)
    agg.lattice_locations = list(agg.crossing_locations)
    if agg.verdict == INCONCLUSIVE:
        reports = [CrossingReport(0, [], INCONCLUSIVE, float(g)) for g in gaps]
        return {"S": agg, "participants": reports}

    if solve is None:
        solve = lambda p: iterate(p)[0]  # noqa: E731
    rule_a, rule_b = solve(pool_a), solve(pool_b)
    reports = []
    for i in range(pool_a.n):
        ha, hb = rule_a.share(i), rule_b.share(i)
        rep = count_sign_changes(
            pushforward_cdf(ha, pool_a.S), pushforward_cdf(hb, pool_b.S), tol, step, mode="linear"
        )
        rep.lattice_locations = [
            _inverse_on_lattice(ha, pool_a.grid, z) for z in rep.crossing_locations
        ]
        reports.append(rep)
    return {"S": agg, "participants": reports}
