"""Command-line front end.

One binary, six subcommands: solve | grad | optimize | generate | benchmark
| simulate. All flags are long-form. Results go to stdout (or --output) as
JSON with shortest-repr floats; optimization also writes a CSV trace with
ten-significant-digit values. Errors print a machine-readable JSON object
to stderr; the exit code is 2 for input or schema problems and 3 for
numeric failures.

The benchmark harness may fan rows out across processes; the PGFLOW_THREADS
environment variable caps the worker count (default: machine cores).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .core import spectral_safety_check
from .errors import (
    AllStepsRejected,
    BoundaryProbe,
    DimensionMismatch,
    InfeasibleStart,
    MissingAnalyticJacobians,
    ModelFormatError,
    NoConvergence,
    NotOpen,
    PgflowError,
    SafetyCheckFailed,
    UnstableOperatingPoint,
)
from .gradients import GradientConfig, compute_gradient
from .models import JacksonNetwork, random_forward_dag
from .modelio import load_model, model_to_dict
from .optimize import Armijo, Constant, OptimizeConfig, projected_descent
from .sim import SimConfig, geometric_fit_test, simulate_network
from .solvers import SolverConfig, solve_flows

__all__ = ["main"]

_INPUT_ERRORS = (
    ModelFormatError,
    DimensionMismatch,
    NotOpen,
    InfeasibleStart,
    MissingAnalyticJacobians,
    ValueError,
)
_NUMERIC_ERRORS = (
    SafetyCheckFailed,
    NoConvergence,
    UnstableOperatingPoint,
    AllStepsRejected,
    BoundaryProbe,
)

_ENGINE_MAP = {
    "analytic": "analytic",
    "numeric": "numeric_jacobian",
    "fdj": "finite_difference",
}


# ---------------------------------------------------------------------------
# Small helpers
# ---------------------------------------------------------------------------

def _jsonify(obj):
    if isinstance(obj, np.ndarray):
        return [_jsonify(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    if isinstance(obj, dict):
        return {k: _jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonify(v) for v in obj]
    return obj


def _emit(doc: dict, output) -> None:
    text = json.dumps(_jsonify(doc), indent=1)
    if output:
        with open(output, "w") as fh:
            fh.write(text + "\n")
    else:
        sys.stdout.write(text + "\n")


def _parse_float_list(text: str) -> np.ndarray:
    toks = [t.strip() for t in text.split(",")]
    toks = [t for t in toks if t]
    try:
        return np.array([float(t) for t in toks])
    except ValueError as err:
        raise ModelFormatError(f"cannot parse number list {text!r}: {err}") from err


def _parse_int_list(text: str) -> list[int]:
    toks = [t.strip() for t in text.split(",")]
    toks = [t for t in toks if t]
    try:
        return [int(t) for t in toks]
    except ValueError as err:
        raise ModelFormatError(f"cannot parse integer list {text!r}: {err}") from err


def _resolve_theta(args, bundle) -> np.ndarray:
    if getattr(args, "theta", None) is None:
        return np.asarray(bundle.theta0, dtype=float)
    theta = _parse_float_list(args.theta)
    expected = bundle.system.param_dim
    if theta.shape != (expected,):
        raise DimensionMismatch("theta", expected, theta.size)
    return theta


def _solver_config(args) -> SolverConfig:
    return SolverConfig(
        method=getattr(args, "method", "auto"),
        fp_tol=getattr(args, "fp_tol", 1e-10),
        max_iter=getattr(args, "max_fp_iter", 10000),
    )


def _gradient_config(args, bundle) -> GradientConfig:
    return GradientConfig(
        engine=_ENGINE_MAP[args.engine],
        eps=getattr(args, "eps", 1e-8),
        solver=_solver_config(args),
        feasible=bundle.feasible,
    )


def _fmt(value: float) -> str:
    return f"{value:.10g}"


def _write_trace_csv(trace, path) -> None:
    p = trace.thetas.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["k", "J", "grad_norm", "step"] + [f"theta_{j}" for j in range(p)]
        )
        for k in range(len(trace.objective_values)):
            writer.writerow(
                [
                    str(k),
                    _fmt(trace.objective_values[k]),
                    _fmt(trace.grad_norms[k]),
                    _fmt(trace.steps[k]),
                ]
                + [_fmt(v) for v in trace.thetas[k]]
            )


def _stable_objective(bundle, theta, phi):
    margins = bundle.objective.margins(theta, phi)
    if margins is not None and np.any(margins <= 0.0):
        return None
    return bundle.objective.value(theta, phi)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_solve(args) -> dict:
    bundle = load_model(args.model)
    theta = _resolve_theta(args, bundle)
    cfg = _solver_config(args)
    start = time.perf_counter()
    check = spectral_safety_check(bundle.system, theta, kappa=cfg.kappa)
    report = solve_flows(bundle.system, theta, config=cfg)
    wall = time.perf_counter() - start
    doc = {
        "model": args.model,
        "theta": theta,
        "flows": report.flows,
        "objective": _stable_objective(bundle, theta, report.flows),
        "iterations": report.iterations,
        "residual_norm": report.residual_norm,
        "method": report.method,
        "safety_rule": check.rule,
        "wall_seconds": wall,
    }
    _emit(doc, args.output)
    return doc


def cmd_grad(args) -> dict:
    bundle = load_model(args.model)
    theta = _resolve_theta(args, bundle)
    gcfg = _gradient_config(args, bundle)
    start = time.perf_counter()
    report = compute_gradient(bundle.system, bundle.objective, theta, gcfg)
    wall = time.perf_counter() - start
    doc = {
        "model": args.model,
        "theta": theta,
        "engine": args.engine,
        "gradient": report.gradient,
        "objective": report.objective_value,
        "flows": report.flows,
        "fp_solves": report.fp_solves,
        "g_evals": report.g_evals,
        "wall_seconds": wall,
    }
    _emit(doc, args.output)
    return doc


def cmd_optimize(args) -> dict:
    bundle = load_model(args.model)
    theta0 = _resolve_theta(args, bundle)
    if args.step == "constant":
        rule = Constant(args.eta)
    else:
        rule = Armijo(eta0=args.eta0, shrink=args.shrink, slope=args.slope)
    cfg = OptimizeConfig(
        step_rule=rule,
        eps_J=args.eps_j,
        eps_grad=args.eps_grad,
        max_iter=args.max_iter,
        gradient=_gradient_config(args, bundle),
    )
    start = time.perf_counter()
    trace = projected_descent(
        bundle.system, bundle.objective, theta0, bundle.feasible, cfg
    )
    wall = time.perf_counter() - start
    flows = solve_flows(bundle.system, trace.theta_star, config=cfg.gradient.solver).flows
    _write_trace_csv(trace, args.trace)
    doc = {
        "model": args.model,
        "config": {
            "engine": args.engine,
            "step": args.step,
            "eta": args.eta if args.step == "constant" else None,
            "eta0": args.eta0 if args.step == "armijo" else None,
            "shrink": args.shrink if args.step == "armijo" else None,
            "slope": args.slope if args.step == "armijo" else None,
            "eps_J": args.eps_j,
            "eps_grad": args.eps_grad,
            "max_iter": args.max_iter,
        },
        "theta0": theta0,
        "theta_star": trace.theta_star,
        "J_star": trace.J_star,
        "flows": flows,
        "termination": trace.termination,
        "iterations": trace.iterations,
        "fp_solves": trace.fp_solves,
        "g_evals": trace.g_evals,
        "wall_seconds": wall,
        "trace_file": args.trace,
    }
    _emit(doc, args.output)
    return doc


def cmd_generate(args) -> dict:
    network = random_forward_dag(args.d, args.p, args.seed)
    doc = model_to_dict(network)
    text = json.dumps(doc, indent=1)
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text + "\n")
    else:
        sys.stdout.write(text + "\n")
    return doc


def _benchmark_row(job: tuple) -> dict:
    d, p, engine, seed, eta, max_iter = job
    row = {
        "d": d,
        "p": p,
        "engine": engine,
        "status": "ok",
        "J_star": "",
        "iterations": "",
        "wall_seconds": "",
    }
    try:
        bundle = random_forward_dag(d, p, seed).build()
        cfg = OptimizeConfig(
            step_rule=Constant(eta),
            max_iter=max_iter,
            gradient=GradientConfig(
                engine=_ENGINE_MAP[engine], feasible=bundle.feasible
            ),
        )
        start = time.perf_counter()
        trace = projected_descent(
            bundle.system, bundle.objective, bundle.theta0, bundle.feasible, cfg
        )
        wall = time.perf_counter() - start
        row.update(
            J_star=_fmt(trace.J_star),
            iterations=str(trace.iterations),
            wall_seconds=_fmt(wall),
        )
    except PgflowError as err:
        row["status"] = type(err).__name__
    return row


def cmd_benchmark(args) -> list:
    sizes_d = _parse_int_list(args.d)
    sizes_p = _parse_int_list(args.p)
    if len(sizes_d) != len(sizes_p):
        raise ModelFormatError(
            f"--d lists {len(sizes_d)} sizes but --p lists {len(sizes_p)}"
        )
    engines = [e.strip() for e in args.engines.split(",") if e.strip()]
    if not engines:
        raise ModelFormatError("engine list is empty")
    for engine in engines:
        if engine not in _ENGINE_MAP:
            raise ModelFormatError(
                f"unknown engine {engine!r}; choose from {sorted(_ENGINE_MAP)}"
            )
    jobs = [
        (d, p, engine, args.seed, args.eta, args.max_iter)
        for d, p in zip(sizes_d, sizes_p)
        for engine in sorted(set(engines))
    ]
    workers = os.environ.get("PGFLOW_THREADS")
    workers = int(workers) if workers else (os.cpu_count() or 1)
    workers = max(1, min(workers, len(jobs)))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_benchmark_row, jobs))
    else:
        rows = [_benchmark_row(job) for job in jobs]
    rows.sort(key=lambda r: (r["d"], r["p"], r["engine"]))
    header = ["d", "p", "engine", "status", "J_star", "iterations", "wall_seconds"]
    out = open(args.output, "w", newline="") if args.output else sys.stdout
    try:
        writer = csv.writer(out)
        writer.writerow(header)
        for row in rows:
            writer.writerow([row[h] for h in header])
    finally:
        if args.output:
            out.close()
    return rows


def cmd_simulate(args) -> dict:
    bundle = load_model(args.model)
    if not isinstance(bundle.network, JacksonNetwork):
        raise ModelFormatError(
            f"simulation unsupported for model_type {bundle.kind}"
        )
    theta = _resolve_theta(args, bundle)
    lam, mu, P = bundle.network.simulation_inputs(theta)
    cfg = SimConfig(
        horizon=args.horizon,
        warmup=args.warmup,
        replications=args.replications,
        seed=args.seed,
    )
    start = time.perf_counter()
    report = simulate_network(lam, mu, P, cfg)
    wall = time.perf_counter() - start
    solved = solve_flows(bundle.system, theta)
    R = cfg.replications
    rep_totals = report.rep_queue_lengths.sum(axis=1)
    se_total = rep_totals.std(ddof=1) / np.sqrt(R) if R > 1 else 0.0
    doc = {
        "model": args.model,
        "theta": theta,
        "mean_queue_lengths": report.mean_queue_lengths,
        "se_queue_lengths": report.se_queue_lengths,
        "throughput": report.throughput,
        "se_throughput": report.se_throughput,
        "empirical_J": float(rep_totals.mean()),
        "se_J": float(se_total),
        "analytic_flows": solved.flows,
        "analytic_J": _stable_objective(bundle, theta, solved.flows),
        "total_events": report.total_events,
        "horizon": cfg.horizon,
        "warmup": cfg.warmup,
        "replications": R,
        "seed": cfg.seed,
        "wall_seconds": wall,
    }
    if args.gof:
        rho = solved.flows / mu
        over = np.nonzero(rho >= 1.0)[0]
        if over.size:
            raise UnstableOperatingPoint(over)
        gof = geometric_fit_test(report, rho)
        doc["gof"] = {
            "passed": gof.passed,
            "alpha": gof.alpha,
            "n_tests": gof.n_tests,
            "min_pvalue": gof.min_pvalue,
        }
    _emit(doc, args.output)
    return doc


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _add_model_theta(sub) -> None:
    sub.add_argument("--model", required=True, help="model JSON file")
    sub.add_argument(
        "--theta",
        help="comma-separated parameter vector (default: the model's theta0)",
    )


def _add_solver_flags(sub) -> None:
    sub.add_argument(
        "--method",
        choices=["auto", "acyclic", "direct", "picard"],
        default="auto",
        help="fixed-point solve path (default auto)",
    )
    sub.add_argument("--fp-tol", type=float, default=1e-10, dest="fp_tol")
    sub.add_argument("--max-fp-iter", type=int, default=10000, dest="max_fp_iter")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pgflow",
        description="Deterministic steady-state optimization for queueing networks.",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    sub = subs.add_parser("solve", help="solve the flow fixed point at theta")
    _add_model_theta(sub)
    _add_solver_flags(sub)
    sub.add_argument("--output", help="write the JSON result here instead of stdout")
    sub.set_defaults(func=cmd_solve)

    sub = subs.add_parser("grad", help="evaluate the objective gradient at theta")
    _add_model_theta(sub)
    _add_solver_flags(sub)
    sub.add_argument(
        "--engine",
        choices=sorted(_ENGINE_MAP),
        default="analytic",
        help="gradient engine (default analytic)",
    )
    sub.add_argument("--eps", type=float, default=1e-8, help="probe half-width")
    sub.add_argument("--output")
    sub.set_defaults(func=cmd_grad)

    sub = subs.add_parser("optimize", help="run projected gradient descent")
    _add_model_theta(sub)
    _add_solver_flags(sub)
    sub.add_argument("--engine", choices=sorted(_ENGINE_MAP), default="analytic")
    sub.add_argument("--eps", type=float, default=1e-8)
    sub.add_argument(
        "--step", choices=["constant", "armijo"], default="constant",
        help="step rule (default constant)",
    )
    sub.add_argument("--eta", type=float, default=0.05, help="constant step size")
    sub.add_argument("--eta0", type=float, default=1.0, help="armijo initial step")
    sub.add_argument("--shrink", type=float, default=0.5, help="armijo backtrack factor")
    sub.add_argument("--slope", type=float, default=1e-4, help="armijo slope constant")
    sub.add_argument("--eps-j", type=float, default=1e-6, dest="eps_j")
    sub.add_argument("--eps-grad", type=float, default=1e-4, dest="eps_grad")
    sub.add_argument("--max-iter", type=int, default=500, dest="max_iter")
    sub.add_argument(
        "--trace", default="pgflow_trace.csv", help="CSV trace path (default pgflow_trace.csv)"
    )
    sub.add_argument("--output")
    sub.set_defaults(func=cmd_optimize)

    sub = subs.add_parser("generate", help="emit a seeded random benchmark model")
    sub.add_argument("--d", type=int, required=True, help="number of queues")
    sub.add_argument("--p", type=int, required=True, help="number of controlled splits")
    sub.add_argument("--seed", type=int, required=True)
    sub.add_argument("--output", help="write the model here instead of stdout")
    sub.set_defaults(func=cmd_generate)

    sub = subs.add_parser("benchmark", help="optimize seeded models across engines")
    sub.add_argument("--d", required=True, help="comma-separated queue counts")
    sub.add_argument(
        "--p", required=True, help="comma-separated control counts (zipped with --d)"
    )
    sub.add_argument(
        "--engines",
        default="analytic,numeric,fdj",
        help="comma-separated engines (default all three)",
    )
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--eta", type=float, default=0.05)
    sub.add_argument("--max-iter", type=int, default=500, dest="max_iter")
    sub.add_argument("--output", help="write the CSV table here instead of stdout")
    sub.set_defaults(func=cmd_benchmark)

    sub = subs.add_parser("simulate", help="run the event simulator at theta")
    _add_model_theta(sub)
    sub.add_argument("--horizon", type=float, default=2e5)
    sub.add_argument("--warmup", type=float, default=2e4)
    sub.add_argument("--replications", type=int, default=10)
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument(
        "--gof",
        action="store_true",
        help="also test occupancy marginals against the geometric law",
    )
    sub.add_argument("--output")
    sub.set_defaults(func=cmd_simulate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except _NUMERIC_ERRORS as err:
        _error_out(err)
        return 3
    except _INPUT_ERRORS as err:
        _error_out(err)
        return 2
    return 0


def _error_out(err: Exception) -> None:
    doc = {"error": type(err).__name__, "message": str(err)}
    sys.stderr.write(json.dumps(doc) + "\n")


if __name__ == "__main__":
    sys.exit(main())
