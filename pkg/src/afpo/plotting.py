"""Static figures written to files (Agg backend, no display needed)."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .dist import LatticeDistribution  # noqa: E402
from .solver import FixedPointReport, SharingRule  # noqa: E402
from .stochorder import DiscreteCDF  # noqa: E402

__all__ = ["plot_rules", "plot_convergence", "plot_pmf", "plot_cdfs"]

STYLE = {
    "figure.figsize": (6.0, 4.0),
    "figure.dpi": 110,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 10,
    "legend.frameon": False,
}

# only the first few participants are drawn on shared axes
MAX_CURVES = 8


def _save(fig, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def _support_limit(S: LatticeDistribution, mass: float = 1e-6) -> int:
    """Last lattice index before the upper tail drops below ``mass``."""
    tail = 1.0 - S.cdf()
    idx = np.flatnonzero(tail > mass)
    return int(idx[-1]) + 2 if idx.size else S.k_max


def plot_rules(rule: SharingRule, path, max_curves: int = MAX_CURVES) -> Path:
    """``h_i(s)`` against ``s`` with the mean-proportional lines dashed."""
    pool = rule.pool
    k = min(_support_limit(pool.S), rule.grid.size - 1)
    s = rule.grid[: k + 1]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        slopes = pool.means / pool.means.sum()
        for i in range(min(pool.n, max_curves)):
            (line,) = ax.plot(s, rule.share(i)[: k + 1], lw=1.5, label=pool.names[i])
            ax.plot(s, slopes[i] * s, ls="--", lw=0.8, color=line.get_color())
        ax.set_xlabel("aggregate loss s")
        ax.set_ylabel("share h_i(s)")
        ax.legend(ncol=2, fontsize=8)
        return _save(fig, path)


def plot_convergence(report: FixedPointReport, path) -> Path:
    """Euclidean and Hilbert step sizes per iteration on a log scale."""
    it = np.arange(1, len(report.distance_trace) + 1)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        # exact zeros cannot sit on a log axis
        floor = np.finfo(float).tiny
        ax.semilogy(it, np.maximum(report.distance_trace, floor), "o-", label="Euclidean")
        ax.semilogy(it, np.maximum(report.hilbert_trace, floor), "s--", label="Hilbert")
        ax.set_xlabel("iteration")
        ax.set_ylabel("distance between consecutive weights")
        ax.xaxis.get_major_locator().set_params(integer=True)
        ax.legend()
        return _save(fig, path)


def plot_pmf(S: LatticeDistribution, path) -> Path:
    k = _support_limit(S)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.vlines(S.support[: k + 1], 0, S.pmf[: k + 1], lw=1.0)
        ax.set_xlabel("aggregate loss s")
        ax.set_ylabel("probability")
        return _save(fig, path)


def plot_cdfs(cdfs: Sequence[DiscreteCDF], labels: Sequence[str], path, title: str = "") -> Path:
    """Overlay of step CDFs, e.g. one participant's share in several pools."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        right = 0.0
        for cdf, label in zip(cdfs, labels):
            ax.step(cdf.grid, cdf.values, where="post", lw=1.2, label=label)
            # cut the far tail, which carries no visible mass
            right = max(right, float(cdf.grid[min(np.searchsorted(cdf.values, 1 - 1e-4), cdf.grid.size - 1)]))
        if right > 0:
            ax.set_xlim(right=right * 1.05)
        ax.set_xlabel("z")
        ax.set_ylabel("P(h_i(S) <= z)")
        if title:
            ax.set_title(title)
        ax.legend()
        return _save(fig, path)
