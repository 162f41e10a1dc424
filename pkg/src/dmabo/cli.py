"""Command-line experiment runner.

Subcommands:
    run     execute seeded runs from a config file; writes per-seed trace
            CSVs, a summary CSV, and a replayable instance file
    oracle  brute-force reference solve plus the constants report
    report  aggregate trace CSVs into plot-ready tables and figures

Exit codes: 0 ok, 2 config error, 3 numerical error, 4 infeasible instance.
DMABO_THREADS caps the number of parallel seed workers.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .algorithm import compute_constants, run_dmabo
from .baselines import run_method
from .config import ExperimentConfig, load_config, save_config
from .errors import ConfigError, DmaboError, InfeasibleError, InputError, NumericalError
from .metrics import (CSV_FLOAT_FMT, best_iterate, regret_trace, shift_trace,
                      strong_violation_trace, violation_trace, write_trace_csv)
from .problems import load_instance, save_instance, solve_reference
from .report import write_report


def _worker_count(n_seeds: int) -> int:
    cap = os.environ.get("DMABO_THREADS")
    try:
        cap = int(cap) if cap else min(4, os.cpu_count() or 1)
    except ValueError:
        raise ConfigError(f"DMABO_THREADS must be an integer, got {cap!r}")
    return max(1, min(cap, n_seeds))


def _parse_seed_range(text: str) -> list[int]:
    """'a..b' inclusive, or a single integer."""
    if ".." in text:
        a, b = text.split("..", 1)
        lo, hi = int(a), int(b)
        if hi < lo:
            raise ConfigError(f"empty seed range {text!r}")
        return list(range(lo, hi + 1))
    return [int(text)]


def _run_one(args):
    problem_blob, method, algo, seed, penalty_q = args
    from .problems import instance_from_json
    problem = instance_from_json(problem_blob)
    trace = run_method(problem, method, algo, seed, Q=penalty_q)
    return seed, trace


def cmd_run(config: ExperimentConfig, quiet: bool = False) -> int:
    out_dir = Path(config.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    problem = config.build_problem()
    algo = config.algo_config()
    save_instance(problem, out_dir / "instance.json")
    save_config(config, out_dir / "config.json")

    f_star = None
    reference = None
    try:
        reference = solve_reference(problem)
        f_star = reference.f_star
    except InputError:
        if not quiet:
            print("reference solve skipped: product grid above cap", file=sys.stderr)

    from .problems import instance_to_json
    blob = instance_to_json(problem)
    jobs = [(blob, config.method, algo, seed, config.penalty_q) for seed in config.seeds]
    workers = _worker_count(len(jobs))
    if workers == 1:
        results = [_run_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_one, jobs))
    results.sort(key=lambda r: r[0])

    summary_rows = []
    fmt = lambda v: CSV_FLOAT_FMT % v
    for seed, trace in results:
        write_trace_csv(trace, out_dir / f"trace_{config.method}_seed{seed}.csv",
                        f_star=f_star)
        finals = _final_metrics(trace, f_star)
        if problem.kind == "oscillation":
            finals["frac_at_x1"] = _fraction_at(trace, np.array([1.0]))
        summary_rows.append({"method": config.method, "stat": "seed",
                             "seed": seed, **finals})
        if not quiet:
            print(f"seed {seed}: " + ", ".join(f"{k}={v:.4g}" for k, v in finals.items()))

    keys = [k for k in summary_rows[0] if k not in ("method", "stat", "seed")]
    for stat, red in (("mean", np.mean), ("std", np.std)):
        agg = {}
        for k in keys:
            values = np.array([row[k] for row in summary_rows if row["stat"] == "seed"])
            values = values[~np.isnan(values)]
            agg[k] = float(red(values)) if values.size else float("nan")
        summary_rows.append({"method": config.method, "stat": stat, "seed": "", **agg})

    with open(out_dir / "summary.csv", "w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["method", "stat", "seed"] + keys)
        for row in summary_rows:
            writer.writerow([row["method"], row["stat"], row["seed"]]
                            + [fmt(row[k]) for k in keys])
    if not quiet:
        print(f"wrote {len(results)} trace files and summary.csv to {out_dir}")
    return 0


def _final_metrics(trace, f_star) -> dict:
    if trace.T == 0:
        return {"R_T": np.nan if f_star is None else 0.0, "V_T": 0.0,
                "Vplus_T": 0.0, "S_T": 0.0, "best_gap": np.nan}
    out = {
        "R_T": float(regret_trace(trace, f_star)[-1]) if f_star is not None else np.nan,
        "V_T": float(violation_trace(trace)[-1]),
        "Vplus_T": float(strong_violation_trace(trace)[-1]),
        "S_T": float(shift_trace(trace)[-1]),
    }
    best = best_iterate(trace)
    if best is None or f_star is None:
        out["best_gap"] = np.nan
    else:
        out["best_gap"] = best[2] - f_star
    return out


def _fraction_at(trace, point: np.ndarray) -> float:
    if trace.T == 0:
        return 0.0
    hits = np.all(np.isclose(trace.xs[0], point), axis=1)
    return float(hits.mean())


def cmd_oracle(instance_path, T: int = 200, delta: float = 0.1,
               pilot_seed: int | None = 0, quiet: bool = False) -> int:
    problem = load_instance(instance_path)
    reference = solve_reference(problem)
    print(f"x* = {[x.tolist() for x in reference.x_star]}")
    print(f"f* = {reference.f_star:.12g}")
    print(f"xi (certified slack) = "
          f"{'n/a (no black-box constraints)' if reference.xi is None else f'{reference.xi:.12g}'}")
    print(f"feasible tuples = {reference.n_feasible} / {problem.n_tuples()}")

    problem.xi = reference.xi if problem.m > 0 else problem.xi
    constants = compute_constants(problem, T, delta)
    print(f"T = {T}, eta = {constants.eta:.12g}")
    print(f"B = {constants.B:.12g} ({'exact' if constants.B_exact else 'upper bound'})")
    print(f"rho = {'n/a (no affine constraints)' if constants.rho is None else f'{constants.rho:.12g}'}")
    print(f"H1 = {constants.H1:.12g}")
    print(f"H2 = {constants.H2:.12g}")
    eps2 = constants.eps2()
    print(f"eps2 = {eps2:.12g} (precondition {'holds' if constants.eps_ok(eps2) else 'FAILS'})")

    if pilot_seed is not None and problem.m > 0:
        from .algorithm import AlgoConfig
        pilot = run_dmabo(problem, AlgoConfig(T=T), pilot_seed)
        beta_mat = np.zeros((problem.n_agents, problem.m))
        for i in range(problem.n_agents):
            beta_mat[i, :] = 3.0
        gamma_mat = pilot.info_gain_final[:, 1:]
        eps1 = constants.eps1(beta_mat, gamma_mat)
        print(f"eps1 = {eps1:.12g} (pilot-run gamma, constant beta; "
              f"precondition {'holds' if constants.eps_ok(eps1) else 'FAILS'})")
    else:
        print(f"eps1 = {constants.eps1():.12g} (no learning term)")
    return 0


def cmd_report(trace_dir, out_dir=None, quiet: bool = False) -> int:
    outputs = write_report(trace_dir, out_dir)
    if not quiet:
        for name, path in outputs.items():
            print(f"{name}: {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dmabo",
                                     description="Distributed multi-agent "
                                                 "constrained Bayesian optimization runner")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute seeded runs from a config file")
    run_p.add_argument("--config", required=True, help="JSON experiment config")
    run_p.add_argument("--out", default=None, help="output directory override")
    run_p.add_argument("--seeds", default=None, help="seed range a..b or single seed")
    run_p.add_argument("--method", default=None, choices=("dmabo", "dcei", "penalty"))
    run_p.add_argument("--T", type=int, default=None, help="horizon override")
    run_p.add_argument("--quiet", action="store_true")

    oracle_p = sub.add_parser("oracle", help="reference solve and constants report")
    oracle_p.add_argument("instance", help="instance JSON file")
    oracle_p.add_argument("--T", type=int, default=200)
    oracle_p.add_argument("--delta", type=float, default=0.1)
    oracle_p.add_argument("--no-pilot", action="store_true",
                          help="skip the pilot run behind the eps1 estimate")
    oracle_p.add_argument("--quiet", action="store_true")

    report_p = sub.add_parser("report", help="aggregate traces into plot-ready tables")
    report_p.add_argument("traces", help="directory containing trace_*.csv")
    report_p.add_argument("--out", default=None, help="output directory (default: trace dir)")
    report_p.add_argument("--quiet", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            config = load_config(args.config)
            if args.out is not None:
                config.out = args.out
            if args.seeds is not None:
                config.seeds = _parse_seed_range(args.seeds)
            if args.method is not None:
                config.method = args.method
            if args.T is not None:
                config.algo["T"] = args.T
            return cmd_run(config, quiet=args.quiet)
        if args.command == "oracle":
            return cmd_oracle(args.instance, T=args.T, delta=args.delta,
                              pilot_seed=None if args.no_pilot else 0,
                              quiet=args.quiet)
        if args.command == "report":
            return cmd_report(args.traces, args.out, quiet=args.quiet)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3
    except InfeasibleError as exc:
        print(f"infeasible instance: {exc}", file=sys.stderr)
        return 4
    except DmaboError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
