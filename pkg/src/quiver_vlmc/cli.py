"""Command-line entry point ``quiver-vlmc``.

Exit codes
----------
0  success
2  usage error (argparse)
3  invalid config or input
4  degeneracy (reducible chain, zero fiber mass, singular system)
5  invalid extension law
6  estimator degeneracy (unvisited state in a simulated trajectory)
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from .config import EstimationConfig, dump_config, load_config, model_section
from .errors import (ConfigError, DegeneracyError, DomainError, EstimatorDegeneracyError, InputError,
                     ModelValidityError, QuiverVLMCError)
from .fixtures import build_branching_fixture
from .rank import minimal_window
from .report import dumps, run_analysis, write_report
from .simulate import estimate_minimal_window, oracle_gap, save_trajectory, simulate

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_DEGENERACY = 4
EXIT_MODEL = 5
EXIT_ESTIMATOR = 6


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, EstimatorDegeneracyError):
        return EXIT_ESTIMATOR
    if isinstance(exc, DegeneracyError):
        return EXIT_DEGENERACY
    if isinstance(exc, ModelValidityError):
        return EXIT_MODEL
    if isinstance(exc, (ConfigError, InputError, DomainError)):
        return EXIT_CONFIG
    return 1


def _emit(text: str, path: Optional[str]) -> None:
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_analyze(args) -> int:
    cfg = load_config(args.config)
    report = run_analysis(cfg, estimate=False if args.skip_estimation else None)
    out = args.output or cfg.output
    if out:
        write_report(report, out)
        print(f"report written to {out}", file=sys.stderr)
    else:
        sys.stdout.write(dumps(report))
    return EXIT_OK


def cmd_mstar(args) -> int:
    cfg = load_config(args.config)
    mw = minimal_window(cfg.model, cfg.model.theta0, cfg.T, args.M_max or cfg.M_max, cfg.rank_tol)
    sys.stdout.write(json.dumps({"m_star": mw.m_star, "dim_T": cfg.T.p,
                                 "ranks": {str(k): v for k, v in mw.ranks.items()},
                                 "errors": {str(k): v for k, v in mw.errors.items()}}, indent=2) + "\n")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    traj = simulate(cfg.model, cfg.model.theta0, args.n, args.seed, depth=args.depth)
    if args.output:
        save_trajectory(traj, args.output)
        print(f"{traj.n} edges written to {args.output}", file=sys.stderr)
    else:
        sys.stdout.write("\n".join(traj.edges) + "\n")
    return EXIT_OK


def cmd_estimate(args) -> int:
    cfg = load_config(args.config)
    est = cfg.estimation or EstimationConfig()
    n = args.n or est.n
    delta = args.delta or est.delta
    M = args.M or est.M
    seeds = tuple(range(args.seeds)) if args.seeds else est.seeds
    policy = args.seed_policy or est.seed_policy
    model = cfg.model
    gamma = args.gamma if args.gamma is not None else est.gamma
    if gamma is None:
        gamma = oracle_gap(model, model.theta0, cfg.T, M)
    run = estimate_minimal_window(model, model.theta0, cfg.T, M, gamma, n, delta, seeds, policy)
    if not run.estimates:
        raise EstimatorDegeneracyError(next(iter(run.failures.values()), "no estimates"))
    counts = {}
    for v in run.estimates.values():
        counts[v] = counts.get(v, 0) + 1
    majority = max(sorted(counts), key=lambda k: counts[k])
    out = {"gamma": gamma, "n": n, "delta": delta, "M": M, "seed_policy": policy,
           "estimates": {str(s): v for s, v in run.estimates.items()},
           "counts": {str(k): v for k, v in sorted(counts.items())},
           "majority": majority, "failures": {str(s): m for s, m in run.failures.items()}}
    _emit(json.dumps(out, indent=2) + "\n", args.output)
    return EXIT_OK


def cmd_example(args) -> int:
    model, oracle = build_branching_fixture(args.eta1, args.eta2)
    cfg = {
        "model": model_section(model),
        "analysis": {"depths": [1, 2, 3], "M_max": 3, "rank_tol": 1.0e-8, "fd_step": 1.0e-5},
        "estimation": {"n": 200000, "delta": 0.05, "gamma": None, "seeds": 20, "M": 3, "seed_policy": "crn"},
    }
    pi = oracle.pi
    header = [
        f"# branching example at eta = ({args.eta1}, {args.eta2})",
        f"# oracle D = {oracle.D!r}",
        "# oracle pi (" + ", ".join(pi) + ") = " + ", ".join(repr(float(v)) for v in pi.values()),
        f"# oracle reduced q2 = {oracle.q2_reduced.tolist()}, reduced q1 = {oracle.q1_reduced!r}",
        f"# oracle Dq1 = {oracle.dq1_reduced.ravel().tolist()}, kernel h = {oracle.kernel_direction.tolist()}",
        "# expected m_* = 2",
    ]
    _emit("\n".join(header) + "\n" + dump_config(cfg), args.output)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="quiver-vlmc",
                                description="First-order boundary-window identifiability for quiver VLMCs.")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="full rank report for a config")
    a.add_argument("config")
    a.add_argument("-o", "--output", help="report path (default: config 'output' or stdout)")
    a.add_argument("--skip-estimation", action="store_true", help="ignore the estimation section")
    a.set_defaults(func=cmd_analyze)

    m = sub.add_parser("mstar", help="minimal informative window only")
    m.add_argument("config")
    m.add_argument("--M-max", dest="M_max", type=int)
    m.set_defaults(func=cmd_mstar)

    s = sub.add_parser("simulate", help="simulate a trajectory at theta0")
    s.add_argument("config")
    s.add_argument("--n", type=int, default=1000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--depth", type=int, default=None, help="keep an initial word of at least this length")
    s.add_argument("-o", "--output", help="trajectory file (edge ids, one per line)")
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("estimate", help="plug-in minimal-window estimate over seeds")
    e.add_argument("config")
    e.add_argument("--n", type=int)
    e.add_argument("--delta", type=float)
    e.add_argument("--gamma", type=float)
    e.add_argument("--seeds", type=int, help="use seeds 0..N-1")
    e.add_argument("--M", type=int)
    e.add_argument("--seed-policy", choices=("crn", "independent"))
    e.add_argument("-o", "--output")
    e.set_defaults(func=cmd_estimate)

    x = sub.add_parser("example", help="emit a ready-to-run example config")
    x.add_argument("name", choices=("branching",))
    x.add_argument("--eta1", type=float, default=0.5)
    x.add_argument("--eta2", type=float, default=0.5)
    x.add_argument("-o", "--output")
    x.set_defaults(func=cmd_example)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except QuiverVLMCError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
