"""Command-line front end.

Two subcommands:

    run      one solver on one problem, trace to CSV
    compare  several solvers on one shared problem, long-format CSV

Reports are delimited text (one row per iteration); with --plot a PNG
per report is rendered next to the CSV.  Exit status: 0 when every run
reached the gradient tolerance, 2 when some run stopped on the
iteration cap, 1 on any configuration or input error.
"""

from __future__ import annotations

import argparse
import csv
import sys
import time
from dataclasses import dataclass

import numpy as np

from .agqn import REASON_TOLERANCE, AgqnConfig, agqn_run
from .baselines import BaselineConfig, LineSearchError, bfgs_wolfe_run, nagd_run
from .dagqn import DagqnConfig, dagqn_run, partition_shards
from .datasets import load_libsvm, synthesize
from .objectives import (
    LogisticObjective,
    SmoothnessConstants,
    computed_constants,
    preset_constants,
)

__all__ = ["RunConfig", "main"]

ALGOS = ("agqn", "dagqn", "nagd", "bfgs")
PROFILES = ("preset", "computed", "explicit")
CSV_COLUMNS = (
    "iter",
    "f",
    "grad_norm",
    "alpha",
    "beta",
    "hvp_calls",
    "comm_rounds",
    "scalars_pushed",
    "sigma_diag",
    "lambda_diag",
)


class CliError(Exception):
    """Anything that should become an error message and exit status 1."""


@dataclass
class RunConfig:
    """One resolved solver selection within a report."""

    algo: str
    tau: int = 6
    workers: int = 1

    def __post_init__(self):
        if self.algo not in ALGOS:
            raise CliError("unknown algorithm %r (choose from %s)" % (self.algo, ", ".join(ALGOS)))
        if self.tau < 0:
            raise CliError("tau must be nonnegative, got %d" % self.tau)
        if self.workers < 1:
            raise CliError("workers must be at least 1, got %d" % self.workers)

    @property
    def label(self):
        if self.algo == "agqn":
            return "agqn-tau%d" % self.tau
        if self.algo == "dagqn":
            return "dagqn-p%d-tau%d" % (self.workers, self.tau)
        return self.algo


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on usage errors; 2 means "hit the
    # iteration cap" here, so route usage problems through CliError.
    def error(self, message):
        raise CliError(message)


def _parse_spec(text, what, allowed):
    """Parse 'key=value,key=value' with integer values."""
    out = {}
    if not text:
        return out
    for piece in text.split(","):
        if not piece:
            continue
        key, sep, value = piece.partition("=")
        key = key.strip()
        if not sep or key not in allowed:
            raise CliError(
                "%s: bad field %r (allowed: %s)" % (what, piece, ", ".join(allowed))
            )
        try:
            out[key] = float(value) if key == "sep" else int(value)
        except ValueError:
            raise CliError("%s: %r is not a number" % (what, value)) from None
    return out


def _build_dataset(args):
    if args.dataset is not None and args.synthetic is not None:
        raise CliError("--dataset and --synthetic are mutually exclusive")
    if args.dataset is not None:
        try:
            return load_libsvm(args.dataset, n_features=args.n_features)
        except OSError as exc:
            raise CliError("cannot read dataset %s: %s" % (args.dataset, exc.strerror)) from exc
    if args.synthetic is not None:
        fields = _parse_spec(args.synthetic, "--synthetic", ("n", "m", "seed", "sep"))
        if "n" not in fields or "m" not in fields:
            raise CliError("--synthetic needs at least n=..,m=..")
        return synthesize(
            fields["n"],
            fields["m"],
            seed=fields.get("seed", 0),
            separability=fields.get("sep", 3.0),
        )
    raise CliError("one of --dataset or --synthetic is required")


def _explicit_constants(args):
    values = (args.mu, args.omega, args.lipschitz, args.concordance)
    if any(v is None for v in values):
        raise CliError("--profile explicit needs all of --mu, --omega, --L, --M")
    return SmoothnessConstants(*values)


def _constants_for(args, dataset, workers):
    """Per-objective constants under the selected profile.

    With several workers the preset profile scales by the shard sample
    count; computed and explicit constants hold uniformly for every
    shard (mu = gamma/p is each shard's true strong convexity and the
    full-data curvature bounds every shard's)."""
    if args.profile == "explicit":
        return _explicit_constants(args)
    if any(v is not None for v in (args.mu, args.omega, args.lipschitz, args.concordance)):
        raise CliError("--mu/--omega/--L/--M require --profile explicit")
    if args.profile == "computed":
        return computed_constants(dataset.samples, args.gamma / workers)
    if workers > 1:
        return preset_constants(dataset.m / workers)
    return preset_constants(dataset.m)


def _solve(run, args, dataset, x0):
    """Dispatch one run; returns (SolverResult, per-shard n for reporting)."""
    constants = _constants_for(args, dataset, run.workers if run.algo == "dagqn" else 1)
    if run.algo == "dagqn":
        shards = partition_shards(dataset, run.workers, gamma=args.gamma, constants=constants)
        config = DagqnConfig(
            x0=x0,
            tau=run.tau,
            tol=args.tol,
            max_iters=args.max_iters,
            diagnostics=args.diagnostics,
            theory_stepsize=args.theory_stepsize,
        )
        return dagqn_run(shards, config)
    objective = LogisticObjective(dataset.samples, dataset.labels, args.gamma, constants)
    if run.algo == "agqn":
        config = AgqnConfig(
            x0=x0,
            tau=run.tau,
            tol=args.tol,
            max_iters=args.max_iters,
            diagnostics=args.diagnostics,
            theory_stepsize=args.theory_stepsize,
        )
        return agqn_run(objective, config)
    config = BaselineConfig(x0=x0, tol=args.tol, max_iters=args.max_iters,
                            diagnostics=args.diagnostics)
    if run.algo == "nagd":
        return nagd_run(objective, config)
    return bfgs_wolfe_run(objective, config)


def _cell(value):
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(float(value))


def _trace_row(rec):
    return [
        str(rec.k),
        _cell(rec.f_value),
        _cell(rec.grad_norm),
        _cell(rec.alpha),
        _cell(rec.beta_value),
        _cell(rec.hvp_calls),
        _cell(rec.comm_rounds),
        _cell(rec.scalars_pushed),
        _cell(rec.sigma_diag),
        _cell(rec.lambda_diag),
    ]


def _write_csv(path, rows, labeled=False):
    header = (("algo",) + CSV_COLUMNS) if labeled else CSV_COLUMNS
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _summary_line(label, trace, reason, wall):
    last = trace[-1]
    rounds = last.comm_rounds if last.comm_rounds is not None else "-"
    scalars = last.scalars_pushed if last.scalars_pushed is not None else "-"
    return "%s: %d iterations (%s), rounds=%s, scalars_pushed=%s, wall=%.3fs" % (
        label, last.k, reason, rounds, scalars, wall
    )


def _solve_reported(run, args, dataset, x0):
    """Run one solver; a line-search abort becomes a partial trace.

    Returns (trace, reason, converged).  The stall is an expected outcome
    for the line-search baseline at tight tolerances, so the report keeps
    the rows produced before the abort.
    """
    try:
        result = _solve(run, args, dataset, x0)
    except LineSearchError as exc:
        trace = exc.state.get("trace") or []
        if not trace:
            raise
        return trace, "line-search-failure", False
    return result.trace, result.reason, result.reason == REASON_TOLERANCE


def _add_problem_flags(parser):
    parser.add_argument("--dataset", help="sparse-text classification file")
    parser.add_argument("--synthetic", metavar="SPEC",
                        help="generate data: n=..,m=..[,seed=..][,sep=..]")
    parser.add_argument("--n-features", type=int, default=None,
                        help="override the feature count of --dataset")
    parser.add_argument("--gamma", type=float, default=1.0,
                        help="ridge weight of the logistic objective")
    parser.add_argument("--profile", choices=PROFILES, default="preset",
                        help="how mu/omega/L/M are chosen")
    parser.add_argument("--mu", type=float, default=None)
    parser.add_argument("--omega", type=float, default=None)
    parser.add_argument("--L", type=float, dest="lipschitz", default=None)
    parser.add_argument("--M", type=float, dest="concordance", default=None)
    parser.add_argument("--tol", type=float, default=1e-9,
                        help="gradient-norm stopping tolerance")
    parser.add_argument("--max-iters", type=int, default=500)
    parser.add_argument("--seed", type=int, default=0,
                        help="seed of the gaussian starting point")
    parser.add_argument("--theory-stepsize", action="store_true",
                        help="keep the budget-preserving stepsize cap")
    parser.add_argument("--diagnostics", action="store_true",
                        help="record sigma/lambda columns (small n only)")
    parser.add_argument("--out", required=True, help="CSV report path")
    parser.add_argument("--plot", action="store_true",
                        help="render PNG figures next to the CSV")


def _build_parser():
    parser = _Parser(prog="greedyqn", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="one solver, one problem")
    run_p.add_argument("--algo", choices=ALGOS, default="agqn")
    run_p.add_argument("--tau", type=int, default=6,
                       help="greedy updates per iteration (quasi-Newton only)")
    run_p.add_argument("--workers", type=int, default=1,
                       help="worker count (dagqn only)")
    _add_problem_flags(run_p)

    cmp_p = sub.add_parser("compare", help="several solvers, shared problem")
    cmp_p.add_argument("--run", action="append", default=[], metavar="SPEC",
                       help="solver spec algo[,tau=..][,workers=..]; repeatable")
    _add_problem_flags(cmp_p)
    return parser


def _parse_run_spec(text):
    algo, sep, rest = text.partition(",")
    algo = algo.strip()
    if algo not in ALGOS:
        raise CliError("--run %r: unknown algorithm %r" % (text, algo))
    allowed = {"agqn": ("tau",), "dagqn": ("tau", "workers")}.get(algo, ())
    fields = _parse_spec(rest if sep else "", "--run %s" % text, allowed)
    return RunConfig(algo, **fields)


def _figure_stem(out):
    return out[:-4] if out.endswith(".csv") else out


def _cmd_run(args):
    dataset = _build_dataset(args)
    run = RunConfig(args.algo, tau=args.tau, workers=args.workers)
    rng = np.random.default_rng(args.seed)
    x0 = rng.standard_normal(dataset.n)
    start = time.perf_counter()
    trace, reason, converged = _solve_reported(run, args, dataset, x0)
    wall = time.perf_counter() - start
    _write_csv(args.out, [_trace_row(rec) for rec in trace])
    print(_summary_line(run.label, trace, reason, wall))
    if args.plot:
        from .figures import convergence_figure

        path = convergence_figure(trace, _figure_stem(args.out) + ".png",
                                  title=run.label)
        print("figure: %s" % path)
    return 0 if converged else 2


def _cmd_compare(args):
    if not args.run:
        raise CliError("compare needs at least one --run spec")
    dataset = _build_dataset(args)
    runs = [_parse_run_spec(text) for text in args.run]
    labels = [run.label for run in runs]
    if len(set(labels)) != len(labels):
        raise CliError("duplicate run label; vary tau/workers or drop a --run")
    rng = np.random.default_rng(args.seed)
    x0 = rng.standard_normal(dataset.n)

    rows = []
    traces = []
    status = 0
    for run in runs:
        start = time.perf_counter()
        trace, reason, converged = _solve_reported(run, args, dataset, x0)
        wall = time.perf_counter() - start
        rows.extend([run.label] + _trace_row(rec) for rec in trace)
        traces.append((run.label, trace))
        print(_summary_line(run.label, trace, reason, wall))
        if not converged:
            status = 2
    _write_csv(args.out, rows, labeled=True)
    if args.plot:
        from .figures import comparison_figure

        stem = _figure_stem(args.out)
        print("figure: %s" % comparison_figure(traces, stem + ".png"))
        if any(rec.scalars_pushed is not None for _, trace in traces for rec in trace):
            print("figure: %s" % comparison_figure(
                traces, stem + "-comm.png", x_axis="scalars"))
    return status


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "run":
            return _cmd_run(args)
        return _cmd_compare(args)
    except CliError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 1
    except (ValueError, RuntimeError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
