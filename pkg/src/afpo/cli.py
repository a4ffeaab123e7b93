"""Command line front end.

    afpo solve pool.yaml [--epsilon E] [--max-iter N] [--delta D] [--emit-cdf]
    afpo compare a.yaml b.yaml --out crossings.json
    afpo gen --seed 1 --n 1000 --out pool.yaml

``solve`` exits 0 on convergence, 2 when the iteration budget runs out and 1
on any configuration or feasibility error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, PoolConfig, build_pool, dump_config, load_config
from .dist import TruncationError
from .oracles import InfeasibleError
from .pool import Pool, PoolError
from .solver import SharingRule, SolverError, iterate
from .stochorder import PreconditionError, check_conjecture, pushforward_cdf

log = logging.getLogger("afpo")

EXIT_OK, EXIT_ERROR, EXIT_NOT_CONVERGED = 0, 1, 2
_USER_ERRORS = (ConfigError, PoolError, InfeasibleError, TruncationError, SolverError, PreconditionError)
# rows per block when streaming the rule table
_ROWS = 4096
_FMT = "%.17g"


def _apply_overrides(cfg: PoolConfig, args) -> PoolConfig:
    if args.epsilon is not None:
        cfg.solver.epsilon = args.epsilon
    if args.max_iter is not None:
        cfg.solver.max_iter = args.max_iter
    if args.delta is not None:
        cfg.solver.delta = args.delta
    return cfg


def _load(path, args) -> tuple[PoolConfig, Pool]:
    cfg = _apply_overrides(load_config(path), args)
    if not cfg.solver.epsilon > 0 or cfg.solver.max_iter < 1 or not cfg.solver.delta > 0:
        raise ConfigError("solver: epsilon and delta must be positive, max_iter at least 1")
    return cfg, build_pool(cfg)


def write_rule_table(rule: SharingRule, path: Path) -> None:
    """CSV ``s,h_1,...,h_n`` over the whole lattice, 17 significant digits.

    Every row is re-checked for full allocation before it is written.
    """
    pool = rule.pool
    log_alpha = np.log(rule.alpha)
    grid, u = rule.grid, rule.curve.log_values
    tol = 1e-8 * max(1.0, float(grid[-1]))
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(",".join(["s"] + pool.names) + "\n")
        for start in range(0, grid.size, _ROWS):
            sl = slice(start, start + _ROWS)
            h = pool.inverse_each(u[sl], log_alpha)
            gap = np.abs(h.sum(axis=0) - grid[sl])
            if np.any(gap > tol):
                k = int(np.argmax(gap))
                raise SolverError(f"row s={grid[sl][k]} violates full allocation by {gap[k]:.3e}")
            np.savetxt(fh, np.column_stack([grid[sl], h.T]), fmt=_FMT, delimiter=",")


def write_cdf_table(rule: SharingRule, path: Path) -> None:
    """Long-format CSV ``participant,z,F`` of each share's distribution."""
    pool = rule.pool
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write("participant,z,F\n")
        for i, name in enumerate(pool.names):
            cdf = pushforward_cdf(rule.share(i), pool.S)
            for z, f in zip(cdf.grid, cdf.values):
                fh.write(f"{name},{z:.17g},{f:.17g}\n")


def _report(cfg: PoolConfig, pool: Pool, rule: SharingRule, rep) -> dict:
    return {
        "participants": pool.names,
        "converged": rep.converged,
        "iterations": rep.iterations,
        "alpha": rule.alpha.tolist(),
        "expected_loss": pool.means.tolist(),
        "distance_trace": rep.distance_trace,
        "hilbert_trace": rep.hilbert_trace,
        "fairness_residuals": rule.fairness_residuals.tolist(),
        "allocation_residual": rule.allocation_residual,
        "eigen_residual": rep.eigen_residual,
        "max_support": float(pool.S.max_support()),
        "lattice_step": pool.step,
        "settings": {"epsilon": cfg.solver.epsilon, "max_iter": cfg.solver.max_iter,
                     "delta": cfg.solver.delta},
        "runtime": rep.runtime,
    }


def _figures_dir(args, report_path: Path) -> Path | None:
    if args.no_figures:
        return None
    return Path(args.figures) if args.figures else report_path.parent


def run_solve(args) -> int:
    cfg, pool = _load(args.config, args)
    stem = Path(args.config).stem
    rule, rep = iterate(pool, cfg.solver.epsilon, cfg.solver.max_iter)
    table = cfg.output_path("rule_table", f"{stem}_rule.csv")
    report = cfg.output_path("report", f"{stem}_report.json")
    write_rule_table(rule, table)
    report.parent.mkdir(parents=True, exist_ok=True)
    report.write_text(json.dumps(_report(cfg, pool, rule, rep), indent=2) + "\n")
    if args.emit_cdf or "cdf" in cfg.outputs:
        write_cdf_table(rule, cfg.output_path("cdf", f"{stem}_cdf.csv"))
    figs = _figures_dir(args, report)
    if figs is not None:
        from . import plotting

        plotting.plot_rules(rule, figs / f"{stem}_rules.png")
        plotting.plot_convergence(rep, figs / f"{stem}_convergence.png")
        plotting.plot_pmf(pool.S, figs / f"{stem}_pmf.png")
    log.info("%s: %d iterations, converged=%s", stem, rep.iterations, rep.converged)
    print(f"{'converged' if rep.converged else 'NOT converged'} after {rep.iterations} "
          f"iterations; rule table -> {table}; report -> {report}")
    return EXIT_OK if rep.converged else EXIT_NOT_CONVERGED


def run_compare(args) -> int:
    cfg_a, pool_a = _load(args.config_a, args)
    cfg_b, pool_b = _load(args.config_b, args)
    rules = {}

    def solve(pool):
        cfg = cfg_a if pool is pool_a else cfg_b
        rule, rep = iterate(pool, cfg.solver.epsilon, cfg.solver.max_iter)
        if not rep.converged:
            raise SolverError(f"solver did not converge for {cfg.source}")
        rules[id(pool)] = rule
        return rule

    result = check_conjecture(pool_a, pool_b, solve=solve)
    out = {
        "config_a": str(args.config_a),
        "config_b": str(args.config_b),
        "aggregate": result["S"].as_dict(),
        "participants": [
            {"name": name, **r.as_dict()} for name, r in zip(pool_a.names, result["participants"])
        ],
    }
    path = Path(args.out)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(out, indent=2) + "\n")
    figs = _figures_dir(args, path)
    if figs is not None and rules:
        from . import plotting

        ra, rb = rules[id(pool_a)], rules[id(pool_b)]
        for i, name in enumerate(pool_a.names):
            cdfs = [pushforward_cdf(ra.share(i), pool_a.S), pushforward_cdf(rb.share(i), pool_b.S)]
            plotting.plot_cdfs(cdfs, [Path(args.config_a).stem, Path(args.config_b).stem],
                               figs / f"{path.stem}_{name}_cdf.png", title=name)
    verdicts = ", ".join(f"{n}: {r.verdict}" for n, r in zip(pool_a.names, result["participants"]))
    print(f"S: {result['S'].verdict}; {verdicts}")
    return EXIT_OK


def generate_pool(seed: int, n: int) -> dict:
    """Random compound-Poisson pool with exponential-type disutilities.

    ``lambda ~ Exp(mean 0.1)``, ``r ~ U{1..6}``, ``q ~ U[0.4, 0.5]``,
    ``gamma ~ U{1..10}``, drawn in that order from ``default_rng(seed)``.
    """
    if n < 2:
        raise ConfigError("n must be at least 2")
    rng = np.random.default_rng(seed)
    lam = rng.exponential(0.1, n)
    r = rng.integers(1, 7, n)
    q = rng.uniform(0.4, 0.5, n)
    gamma = rng.integers(1, 11, n)
    parts = [
        {
            "name": f"p{i + 1}",
            "loss": {"compound_poisson": {
                "lambda": float(lam[i]),
                "severity": {"negbinom": {"r": int(r[i]), "q": float(q[i])}},
            }},
            "disutility": {"exp": {"gamma": int(gamma[i])}},
        }
        for i in range(n)
    ]
    return {"solver": {"epsilon": 1e-14, "max_iter": 200, "delta": 1.0}, "participants": parts}


def run_gen(args) -> int:
    text = dump_config(generate_pool(args.seed, args.n))
    path = Path(args.out)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    print(f"wrote {args.n} participants to {path}")
    return EXIT_OK


def _solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epsilon", type=float, help="stopping tolerance (default from config, 1e-14)")
    p.add_argument("--max-iter", type=int, help="iteration budget (default from config, 200)")
    p.add_argument("--delta", type=float, help="lattice step for all losses (default 1)")
    p.add_argument("--figures", metavar="DIR", help="directory for PNG figures")
    p.add_argument("--no-figures", action="store_true", help="skip the PNG figures")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="afpo", description="Actuarially fair Pareto optimal risk sharing."
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve one pool and write the rule table and report")
    p.add_argument("config")
    p.add_argument("--emit-cdf", action="store_true", help="also write each share's CDF")
    _solver_flags(p)
    p.set_defaults(func=run_solve)

    p = sub.add_parser("compare", help="convex-order comparison of two pools")
    p.add_argument("config_a")
    p.add_argument("config_b")
    p.add_argument("--out", required=True, help="crossing report JSON")
    _solver_flags(p)
    p.set_defaults(func=run_compare)

    p = sub.add_parser("gen", help="write a seeded random pool config")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=run_gen)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except _USER_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
