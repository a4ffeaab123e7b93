"""Monotone root finding: scalar bisection and vectorised safeguarded Newton."""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

__all__ = ["RootError", "bisect_increasing", "grow_bracket", "newton_bracketed"]


class RootError(RuntimeError):
    pass


def bisect_increasing(
    f: Callable[[float], float],
    target: float,
    upper: float = math.inf,
    xtol: float = 1e-12,
    max_iter: int = 400,
) -> float:
    """Solve ``f(x) = target`` for increasing ``f`` on ``[0, upper)``.

    The bracket starts at ``[0, 1]`` and doubles (staying below ``upper``)
    until it straddles the target.  If ``f`` never reaches ``target`` below a
    finite ``upper`` the upper end is returned.
    """
    lo, hi = 0.0, min(1.0, 0.5 * upper) if math.isfinite(upper) else 1.0
    while f(hi) < target:
        lo = hi
        if math.isfinite(upper):
            hi = 0.5 * (hi + upper)
            if upper - hi <= xtol * max(1.0, upper):
                return upper
        else:
            hi *= 2.0
            if hi > 1e300:
                raise RootError(f"no bracket for target {target}")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if f(mid) < target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= xtol * max(1.0, hi):
            break
    return 0.5 * (lo + hi)


def grow_bracket(
    g: Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]],
    x0: np.ndarray,
    limit: float = 800.0,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Expand ``[lo, hi]`` around ``x0`` until ``g(lo) <= 0 <= g(hi)``.

    ``g(x, idx)`` must be increasing in ``x``; ``idx`` selects the active
    problems.  Steps double from 1.  Returns ``(lo, hi, ok)`` where ``ok``
    flags problems bracketed within ``|x - x0| <= limit``.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    lo = x0.copy()
    hi = x0.copy()
    idx = np.arange(x0.size)
    val, _ = g(x0, idx)
    ok = np.ones(x0.size, dtype=bool)

    up = val < 0
    step = 1.0
    active = idx[up]
    while active.size:
        hi[active] = lo[active] + step
        v, _ = g(hi[active], active)
        still = v < 0
        lo[active[still]] = hi[active[still]]
        step *= 2.0
        if step > limit:
            ok[active[still]] = False
            break
        active = active[still]

    down = val > 0
    step = 1.0
    active = idx[down]
    while active.size:
        lo[active] = hi[active] - step
        v, _ = g(lo[active], active)
        still = v > 0
        hi[active[still]] = lo[active[still]]
        step *= 2.0
        if step > limit:
            ok[active[still]] = False
            break
        active = active[still]
    return lo, hi, ok


def newton_bracketed(
    g: Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]],
    lo: np.ndarray,
    hi: np.ndarray,
    x0: np.ndarray | None = None,
    xtol: float = 4 * np.finfo(float).eps,
    max_iter: int = 200,
) -> np.ndarray:
    """Vectorised Newton iteration kept inside a shrinking bracket.

    ``g(x, idx)`` returns the residual (increasing in ``x``) and its
    derivative for the problems ``idx``.  A Newton step that leaves the
    current bracket, or a non-positive derivative, is replaced by bisection.
    Iteration stops per problem once the step falls below
    ``xtol * max(1, |x|)`` or the residual is exactly zero.
    """
    lo = np.array(lo, dtype=np.float64)
    hi = np.array(hi, dtype=np.float64)
    x = 0.5 * (lo + hi) if x0 is None else np.clip(np.array(x0, dtype=np.float64), lo, hi)
    active = np.arange(x.size)
    for _ in range(max_iter):
        if not active.size:
            return x
        xa = x[active]
        val, der = g(xa, active)
        neg = val < 0
        lo[active[neg]] = xa[neg]
        hi[active[~neg]] = xa[~neg]
        with np.errstate(divide="ignore", invalid="ignore"):
            new = xa - val / der
        la, ha = lo[active], hi[active]
        bad = ~np.isfinite(new) | (new <= la) | (new >= ha) | (der <= 0)
        new[bad] = 0.5 * (la[bad] + ha[bad])
        new = np.where(val == 0, xa, new)
        x[active] = new
        scale = np.maximum(1.0, np.abs(new))
        done = (np.abs(new - xa) <= xtol * scale) | (val == 0) | (ha - la <= xtol * scale)
        active = active[~done]
    if active.size:
        raise RootError(f"{active.size} root solves did not converge in {max_iter} steps")
    return x
