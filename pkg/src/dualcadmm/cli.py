"""
Command-line front end.

    dualcadmm solve problem.json --algorithm decomposed --out run1
    dualcadmm bench-bpd --seeds 10 --iters 2000 --out bpd
    dualcadmm verify --seed-sweep 5

Exit codes: 0 success (tolerance met), 2 iteration limit reached without
meeting the tolerance, 1 error.  Argument errors exit through argparse with
status 2 as usual.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from .bench_bpd import BenchConfig, format_value, run_experiment
from .dual_solvers import ALGORITHMS, InnerConfig, IterationRecord, RunAborted, SolverConfig, run
from .problem import ProblemFormatError, load_problem
from .graph import GraphError
from . import verify as verify_mod

log = logging.getLogger("dualcadmm")

EXIT_OK, EXIT_ERROR, EXIT_MAX_ITER = 0, 1, 2


def positive_float(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


def nonneg_float(text):
    v = float(text)
    if not v >= 0:
        raise argparse.ArgumentTypeError(f"must be nonnegative, got {text}")
    return v


def positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return v


def nonneg_int(text):
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be a nonnegative integer, got {text}")
    return v


def _algorithms(text):
    algs = tuple(a.strip() for a in text.split(",") if a.strip())
    bad = [a for a in algs if a not in ALGORITHMS]
    if bad or not algs:
        raise argparse.ArgumentTypeError(
            f"expected a comma-separated subset of {','.join(ALGORITHMS)}, got {text!r}")
    return algs


def build_parser():
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(prog="dualcadmm", formatter_class=fmt,
                                     description="Decentralized conic resource allocation "
                                                 "by dual consensus ADMM.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0,
                        help="more logging (repeat for debug output)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", formatter_class=fmt, help="solve a problem file")
    p.add_argument("problem", help="JSON problem file (graph, cone, agents)")
    p.add_argument("--algorithm", choices=ALGORITHMS, default="aggregate",
                   help="aggregate (cone inside the x-subproblem) or decomposed (separate z-step)")
    p.add_argument("--rho", type=positive_float, default=1.0, help="consensus penalty")
    p.add_argument("--sigma", type=positive_float, default=1.0,
                   help="cone-split penalty (decomposed only)")
    p.add_argument("--max-iter", type=nonneg_int, default=1000, help="outer iteration limit")
    p.add_argument("--tol", type=nonneg_float, default=1e-6,
                   help="residual tolerance, relative to 1 + max |A_i|, |b_i| entry")
    p.add_argument("--inner-tol", type=positive_float, default=1e-8,
                   help="inner stationarity tolerance")
    p.add_argument("--inner-max-iter", type=positive_int, default=500,
                   help="inner iteration limit (retried once with 10x)")
    p.add_argument("--workers", type=positive_int, default=1, help="threads for agent updates")
    p.add_argument("--out", default="solve_out", help="output directory")
    p.set_defaults(func=cmd_solve)

    b = sub.add_parser("bench-bpd", formatter_class=fmt,
                       help="basis pursuit denoising benchmark")
    b.add_argument("--seeds", type=positive_int, default=10,
                   help="number of instances (seeds seed-offset .. seed-offset+seeds-1)")
    b.add_argument("--seed-offset", type=nonneg_int, default=0, help="first seed")
    b.add_argument("--algorithms", type=_algorithms, default=",".join(ALGORITHMS),
                   help="comma-separated algorithms")
    b.add_argument("--rho", type=positive_float, default=1.0, help="consensus penalty")
    b.add_argument("--sigma", type=positive_float, default=1.0,
                   help="cone-split penalty (decomposed only)")
    b.add_argument("--iters", type=positive_int, default=2000, help="iterations per run")
    b.add_argument("--out", default="bpd_results", help="output directory")
    b.add_argument("--workers", type=positive_int, default=1,
                   help="processes; results do not depend on it")
    b.add_argument("--p", type=positive_int, default=20, help="measurements")
    b.add_argument("--q", type=positive_int, default=120, help="signal length")
    b.add_argument("--kappa", type=positive_int, default=20, help="nonzeros in the signal")
    b.add_argument("--n-agents", type=positive_int, default=10,
                   help="agents; must divide q")
    b.add_argument("--n-edges", type=positive_int, default=15, help="graph edges")
    b.add_argument("--inner-tol", type=positive_float, default=1e-8,
                   help="inner stationarity tolerance")
    b.add_argument("--inner-max-iter", type=positive_int, default=500,
                   help="inner iteration limit")
    b.add_argument("--no-plot", action="store_true", help="skip the report figure")
    b.set_defaults(func=cmd_bench_bpd)

    v = sub.add_parser("verify", formatter_class=fmt, help="fast invariant checks")
    v.add_argument("--seed", type=nonneg_int, default=0, help="first seed")
    v.add_argument("--seed-sweep", type=positive_int, default=1,
                   help="number of independent sweeps")
    v.set_defaults(func=cmd_verify)
    return parser


def _write_history(path, history):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(IterationRecord.FIELDS)
        for rec in history:
            w.writerow([format_value(v) for v in rec.row()])


def _summary(problem, report, status):
    final = report.final
    states = report.states
    return {
        "status": status,
        "algorithm": report.config.algorithm,
        "rho": report.config.rho,
        "sigma": report.config.sigma,
        "tol": report.config.tol,
        "iterations": report.iterations,
        "converged": report.converged,
        "data_scale": problem.data_scale(),
        "objective": final.objective if final else None,
        "residuals": {f: getattr(final, f) for f in IterationRecord.FIELDS[1:6]} if final else None,
        "x": [st.x.tolist() for st in states],
        "y": [st.y.tolist() for st in states],
        "y_mean": np.mean([st.y for st in states], axis=0).tolist(),
    }


def cmd_solve(args):
    try:
        problem = load_problem(args.problem)
    except (OSError, ProblemFormatError, GraphError) as exc:
        log.error("cannot load problem: %s", exc)
        return EXIT_ERROR
    try:
        cfg = SolverConfig(algorithm=args.algorithm, rho=args.rho, sigma=args.sigma,
                           max_iter=args.max_iter, tol=args.tol, workers=args.workers,
                           inner=InnerConfig(tol=args.inner_tol, max_iter=args.inner_max_iter))
    except ValueError as exc:
        log.error("%s", exc)
        return EXIT_ERROR
    os.makedirs(args.out, exist_ok=True)
    try:
        report = run(problem, cfg)
        status = "converged" if report.converged else "max_iter"
        code = EXIT_OK if report.converged else EXIT_MAX_ITER
    except RunAborted as exc:
        log.error("%s", exc)
        report, status, code = exc.report, "error", EXIT_ERROR
    except ValueError as exc:
        log.error("%s", exc)
        return EXIT_ERROR
    _write_history(os.path.join(args.out, "iterations.csv"), report.history)
    with open(os.path.join(args.out, "summary.json"), "w") as fh:
        json.dump(_summary(problem, report, status), fh, indent=1)
    final = report.final
    print(f"{status} after {report.iterations} iterations; objective {final.objective:.10g}")
    for name in IterationRecord.FIELDS[1:6]:
        print(f"  {name:16s} {getattr(final, name):.3e}")
    return code


def cmd_bench_bpd(args):
    cfg = BenchConfig(seeds=args.seeds, seed_offset=args.seed_offset, algorithms=args.algorithms,
                      rho=args.rho, sigma=args.sigma, iters=args.iters, out=args.out,
                      p=args.p, q=args.q, kappa=args.kappa, n_agents=args.n_agents,
                      n_edges=args.n_edges, workers=args.workers, plot=not args.no_plot,
                      inner=InnerConfig(tol=args.inner_tol, max_iter=args.inner_max_iter))
    paths = run_experiment(cfg)
    for path in paths["means"]:
        print(path)
    if "figure" in paths:
        print(paths["figure"])
    return EXIT_OK


def cmd_verify(args):
    ok = verify_mod.sweep(args.seed, args.seed_sweep)
    return EXIT_OK if ok else EXIT_ERROR


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
