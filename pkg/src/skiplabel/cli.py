"""Command-line harness: run, sweep, oracle-verify, drift-report, gen-trace."""
from __future__ import annotations

import argparse
import sys

from .harness import (ExperimentSpec, HarnessFailure, build_ops, drift_report,
                      oracle_verify, results_csv, run, sweep)
from .workloads import (gen_delete_max_insert_random, gen_front_insert, gen_hammer,
                        gen_uniform_mix, read_trace, write_trace)


def _parse_seeds(text: str) -> tuple[int, ...]:
    """Either a count ("5" -> seeds 0..4) or an explicit list ("3,7,11")."""
    if "," in text:
        return tuple(int(t) for t in text.split(",") if t)
    return tuple(range(int(text)))


def _add_engine_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--capacity", type=int, default=1 << 15,
                   help="largest key count the array is sized for")
    p.add_argument("--epsilon", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=0.5)
    p.add_argument("--gamma-mode", choices=("const", "invlog"), default="const")
    p.add_argument("--split", choices=("smooth", "adaptive"), default="adaptive")
    p.add_argument("--kappa", type=float, default=8.0)
    p.add_argument("--metrics-every", type=int, default=64)


def _add_workload_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--workload", choices=("front", "delmax", "uniform", "hammer"),
                   default="uniform")
    p.add_argument("--n", type=str, default="1024",
                   help="warmup size; a comma list for sweep")
    p.add_argument("--steps", type=int, default=4096)
    p.add_argument("--p-insert", type=float, default=0.5)
    p.add_argument("--rank-fraction", type=float, default=0.0)
    p.add_argument("--trace", type=str, default=None,
                   help="replay a recorded trace CSV instead of generating")


def _spec_from_args(args, warmup: int) -> ExperimentSpec:
    return ExperimentSpec(
        workload="trace" if args.trace else args.workload,
        capacity=args.capacity,
        steps=args.steps,
        warmup=warmup,
        epsilon=args.epsilon,
        gamma=args.gamma,
        gamma_mode="invlog" if args.gamma_mode == "invlog" else "constant",
        split=args.split,
        kappa=args.kappa,
        seeds=_parse_seeds(args.seeds),
        p_insert=args.p_insert,
        rank_fraction=args.rank_fraction,
        metrics_every=args.metrics_every,
        record_events=bool(getattr(args, "events", False)),
        trace_path=args.trace,
    )


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="skiplabel",
        description="sorted-array slot labeling experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one spec, one CSV row per seed")
    _add_engine_flags(p_run)
    _add_workload_flags(p_run)
    p_run.add_argument("--seeds", type=str, default="3")
    p_run.add_argument("--out", type=str, default=None)
    p_run.add_argument("--events", action="store_true",
                       help="write a per-reallocation event CSV per seed")

    p_sweep = sub.add_parser("sweep", help="scaling table over sizes from --n")
    _add_engine_flags(p_sweep)
    _add_workload_flags(p_sweep)
    p_sweep.add_argument("--seeds", type=str, default="3")
    p_sweep.add_argument("--out", type=str, default=None)

    p_oracle = sub.add_parser("oracle-verify",
                              help="replay a small trace against the brute-force oracle")
    _add_engine_flags(p_oracle)
    _add_workload_flags(p_oracle)
    p_oracle.add_argument("--seeds", type=str, default="1")

    p_drift = sub.add_parser("drift-report",
                             help="per-depth slack under front insertion, all modes")
    p_drift.add_argument("--n", type=int, default=1 << 13)
    p_drift.add_argument("--capacity", type=int, default=None)
    p_drift.add_argument("--epsilon", type=float, default=1.0)
    p_drift.add_argument("--kappa", type=float, default=8.0)
    p_drift.add_argument("--seeds", type=str, default="1")
    p_drift.add_argument("--out", type=str, default=None)

    p_gen = sub.add_parser("gen-trace", help="write a workload trace CSV")
    _add_workload_flags(p_gen)
    p_gen.add_argument("--seeds", type=str, default="1")
    p_gen.add_argument("--out", type=str, required=True)

    args = parser.parse_args(argv)

    if args.command == "run":
        warmup = int(args.n.split(",")[0])
        spec = _spec_from_args(args, warmup)
        try:
            rows = run(spec, out_path=args.out)
        except HarnessFailure as exc:
            print(f"invariant failure: {exc}", file=sys.stderr)
            return 2
        if not args.out:
            sys.stdout.write(results_csv(rows))
        return 0

    if args.command == "sweep":
        n_list = [int(t) for t in args.n.split(",") if t]
        spec = _spec_from_args(args, 0)
        try:
            rows = sweep(spec, n_list, out_path=args.out)
        except HarnessFailure as exc:
            print(f"invariant failure: {exc}", file=sys.stderr)
            return 2
        for r in rows:
            print(f"n={r.n} amortized={r.median_amortized:.2f} "
                  f"amortized/(log*loglog)={r.ratio_log_loglog:.3f} "
                  f"amortized/log^2={r.ratio_log2:.3f}")
        return 0

    if args.command == "oracle-verify":
        seed = _parse_seeds(args.seeds)[0]
        if args.trace:
            trace = read_trace(args.trace)
        else:
            warmup = min(int(args.n.split(",")[0]), 64)
            spec = _spec_from_args(args, warmup)
            head, tail = build_ops(spec, seed)
            trace = head + tail
        spec = _spec_from_args(args, 0)
        report = oracle_verify(trace, spec.engine_config(seed))
        if report.ok:
            print(f"oracle: ok over {report.step} steps")
            return 0
        print(f"oracle: divergence at step {report.step}: {report.detail}")
        return 2

    if args.command == "drift-report":
        seed = _parse_seeds(args.seeds)[0]
        rep = drift_report(args.n, epsilon=args.epsilon, capacity=args.capacity,
                           seed=seed, kappa=args.kappa, out_path=args.out)
        for mode, eta in rep.min_eta.items():
            print(f"{mode}: min relative slack {eta:.4f} over {rep.phase} steps")
        return 0

    if args.command == "gen-trace":
        seed = _parse_seeds(args.seeds)[0]
        warmup = int(args.n.split(",")[0])
        if args.workload == "front":
            ops = gen_front_insert(args.steps)
        elif args.workload == "delmax":
            ops = gen_delete_max_insert_random(warmup, args.steps, seed)
        elif args.workload == "uniform":
            ops = gen_uniform_mix(warmup, args.steps, args.p_insert, seed)
        else:
            ops = gen_hammer(args.rank_fraction, args.steps, seed, warmup_n=warmup)
        write_trace(args.out, ops)
        print(f"wrote {len(ops)} ops to {args.out}")
        return 0

    return 1


if __name__ == "__main__":
    raise SystemExit(main())
