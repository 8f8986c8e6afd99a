"""Command-line entry point: sample, plan, simulate, compare.

Exit codes: 0 success, 2 usage or config-value error, 3 infeasible batch,
4 I/O failure (missing or unreadable files).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import baselines, partitioner, simulator, topology, workload

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INFEASIBLE = 3
EXIT_IO = 4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="varlenplan", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_sample = sub.add_parser("sample", help="sample a synthetic batch from a dataset length preset")
    p_sample.add_argument("--dataset", required=True, choices=workload.PRESET_NAMES)
    p_sample.add_argument("--total-len", required=True, type=int, help="exact batch token total")
    p_sample.add_argument("--seed", required=True, type=int)
    p_sample.add_argument("--out", required=True, help="output batch JSON path")

    p_plan = sub.add_parser("plan", help="build a placement plan for a batch")
    p_plan.add_argument("--config", required=True, help="cluster config path or 'cluster_a'")
    p_plan.add_argument("--batch", required=True, help="batch JSON path")
    p_plan.add_argument("--strategy", default="zeppelin", choices=baselines.STRATEGIES)
    p_plan.add_argument("--out", required=True, help="output plan JSON path")

    p_sim = sub.add_parser("simulate", help="simulate a stored plan")
    p_sim.add_argument("--config", required=True)
    p_sim.add_argument("--plan", required=True, help="plan JSON path")
    p_sim.add_argument("--trace", help="Chrome trace output path")
    p_sim.add_argument("--report", help="report CSV output path")

    p_cmp = sub.add_parser("compare", help="plan + simulate several strategies on one batch")
    p_cmp.add_argument("--config", required=True)
    src = p_cmp.add_mutually_exclusive_group(required=True)
    src.add_argument("--batch", help="batch JSON path")
    src.add_argument("--dataset", choices=workload.PRESET_NAMES, help="sample a batch instead")
    p_cmp.add_argument("--total-len", type=int, help="token total when sampling")
    p_cmp.add_argument("--seed", type=int, default=0)
    p_cmp.add_argument("--strategies", default=",".join(baselines.STRATEGIES),
                       help="comma-separated strategy list")
    p_cmp.add_argument("--out", required=True, help="comparison CSV path")
    p_cmp.add_argument("--trace-dir", help="also export one trace JSON per strategy here")
    return parser


def _load_batch_arg(args: argparse.Namespace) -> workload.SequenceBatch:
    if getattr(args, "batch", None):
        return workload.load_batch(args.batch)
    if args.total_len is None:
        raise topology.ConfigError("--total-len is required when sampling with --dataset")
    dist = workload.preset(args.dataset)
    return workload.sample_batch(dist, args.total_len, args.seed)


def _cmd_sample(args: argparse.Namespace) -> int:
    dist = workload.preset(args.dataset)
    batch = workload.sample_batch(dist, args.total_len, args.seed)
    workload.save_batch(args.out, batch)
    print(f"wrote {len(batch)} sequences ({batch.total_tokens} tokens) to {args.out}")
    return EXIT_OK


def _cmd_plan(args: argparse.Namespace) -> int:
    cluster, _ = topology.resolve_cluster(args.config)
    batch = workload.load_batch(args.batch)
    planners = {
        "zeppelin": partitioner.build_plan,
        "te_cp": baselines.plan_te_cp,
        "llama_cp": baselines.plan_llama_cp,
        "hybrid_dp": baselines.plan_hybrid_dp,
    }
    plan = planners[args.strategy](batch, cluster)
    partitioner.save_plan(args.out, plan)
    print(f"wrote {args.strategy} plan for {len(batch)} sequences to {args.out}")
    return EXIT_OK


def _cmd_simulate(args: argparse.Namespace) -> int:
    cluster, coeffs = topology.resolve_cluster(args.config)
    plan = partitioner.load_plan(args.plan)
    timeline, report = simulator.simulate(plan, cluster, coeffs)
    batch = partitioner.batch_from_plan(plan)
    if plan.strategy != "te_cp":
        try:
            te_plan = baselines.plan_te_cp(batch, cluster)
            te_total = simulator.simulate(te_plan, cluster, coeffs)[1].total_step
            if te_total and report.total_step > 0:
                report.speedup_vs_te_cp = te_total / report.total_step
        except partitioner.InfeasibleBatch:
            pass
    else:
        report.speedup_vs_te_cp = 1.0
    if args.trace:
        simulator.export_trace(timeline, args.trace)
    if args.report:
        simulator.write_compare_csv([report], args.report)
    print(f"{plan.strategy}: attention {report.attention_makespan:.6g}s, "
          f"total step {report.total_step:.6g}s")
    return EXIT_OK


def _cmd_compare(args: argparse.Namespace) -> int:
    cluster, coeffs = topology.resolve_cluster(args.config)
    batch = _load_batch_arg(args)
    strategies = [s.strip() for s in args.strategies.split(",") if s.strip()]
    reports = simulator.compare(batch, cluster, coeffs, strategies)
    simulator.write_compare_csv(reports, args.out)
    if args.trace_dir:
        os.makedirs(args.trace_dir, exist_ok=True)
        timelines = simulator.simulate_timelines(batch, cluster, coeffs, strategies)
        for name, timeline in timelines.items():
            simulator.export_trace(timeline, os.path.join(args.trace_dir, f"{name}.trace.json"))
    for report in reports:
        if report.feasible:
            speedup = f"{report.speedup_vs_te_cp:.3f}x" if report.speedup_vs_te_cp else "n/a"
            print(f"{report.strategy}: total {report.total_step:.6g}s, speedup vs te_cp {speedup}")
        else:
            print(f"{report.strategy}: infeasible ({report.error})", file=sys.stderr)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    handlers = {
        "sample": _cmd_sample,
        "plan": _cmd_plan,
        "simulate": _cmd_simulate,
        "compare": _cmd_compare,
    }
    try:
        return handlers[args.command](args)
    except partitioner.InfeasibleBatch as exc:
        print(f"error: infeasible batch: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"error: cannot access {getattr(exc, 'filename', None) or exc}", file=sys.stderr)
        return EXIT_IO
    except json.JSONDecodeError as exc:
        print(f"error: invalid JSON input: {exc}", file=sys.stderr)
        return EXIT_IO
    except (topology.ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
