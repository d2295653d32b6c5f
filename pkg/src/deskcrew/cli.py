"""Command-line entry points: run, bench, grid validate, planbench, serve."""

from __future__ import annotations

import argparse
import json
import statistics
import sys

from . import gridpath
from .agents import make_backend
from .bench import BenchConfig, aggregate, run_bench, write_summary
from .dialog import ProtocolParams, run_episode
from .world import TASKS


def _cmd_run(args) -> int:
    with open(args.config) as f:
        spec = json.load(f)
    task_id = spec["task"]
    condition = spec.get("condition", "dialog")
    roster_spec = spec.get("roster") or {}
    if not roster_spec:
        speakers = ("Central",) if condition == "central" else TASKS[task_id].roster
        roster_spec = {s: {"kind": "scripted", "policy_id": f"oracle:{task_id}"} for s in speakers}
    backends = {name: make_backend(cfg) for name, cfg in roster_spec.items()}
    p = spec.get("params", {})
    params = ProtocolParams(K=int(p.get("K", 5)), M=p.get("M"), T=int(p.get("T", 15)))
    log = run_episode(
        task_id,
        backends,
        params,
        seed=int(spec.get("seed", 0)),
        condition=condition,
        log_path=args.out,
    )
    print(json.dumps(log.metrics, indent=2))
    return 0 if log.metrics["success"] else 1


def _cmd_bench(args) -> int:
    config = BenchConfig(
        task_id=args.task,
        condition=args.condition,
        seeds=list(range(args.seed0, args.seed0 + args.episodes)),
        results_dir=args.results,
        max_workers=args.workers,
    )
    logs = run_bench(config)
    metrics = aggregate(logs)
    path = write_summary(config, metrics)
    print(json.dumps(metrics.to_dict(), indent=2))
    print(f"summary appended to {path}")
    return 0


def _cmd_grid_validate(args) -> int:
    instance = gridpath.load_instance(args.grid)
    paths = gridpath.load_paths(args.paths)
    report = gridpath.validate_paths(instance, paths)
    if report.ok:
        print("OK: all paths valid")
        return 0
    print(gridpath.feedback_text(report))
    return 1


def _cmd_grid_demo(args) -> int:
    instance = gridpath.generate_instance(args.seed, n_obstacles=args.obstacles, n_agents=args.agents)
    print(json.dumps(instance.to_dict(), indent=2))
    return 0


def _cmd_planbench(args) -> int:
    from .planner import run_place_benchmark, write_benchmark_csv

    seeds = list(range(args.seeds))
    rows = run_place_benchmark(seeds, iteration_budget=args.budget)
    write_benchmark_csv(rows, args.out)
    for method in ("direct", "decomposed", "hardcode"):
        sub = [r for r in rows if r["method"] == method]
        if not sub:
            continue
        rate = sum(r["success"] for r in sub) / len(sub)
        med = statistics.median(r["nodes"] for r in sub)
        print(f"{method:12s} success {rate:.2f}  median nodes {med:g}")
    print(f"rows written to {args.out}")
    return 0


def _cmd_serve(args) -> int:
    from .service import serve

    serve(port=args.port, log_dir=args.log_dir, static_dir=args.static)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="deskcrew", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one episode from a JSON config")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", default=None, help="write the episode JSONL here")
    p_run.set_defaults(func=_cmd_run)

    p_bench = sub.add_parser("bench", help="seed sweep for one task and condition")
    p_bench.add_argument("--task", required=True, choices=sorted(TASKS))
    p_bench.add_argument("--condition", default="dialog")
    p_bench.add_argument("--episodes", type=int, default=20)
    p_bench.add_argument("--seed0", type=int, default=0)
    p_bench.add_argument("--results", default="results")
    p_bench.add_argument("--workers", type=int, default=4)
    p_bench.set_defaults(func=_cmd_bench)

    p_grid = sub.add_parser("grid", help="grid toy utilities")
    grid_sub = p_grid.add_subparsers(dest="grid_command", required=True)
    p_gv = grid_sub.add_parser("validate", help="validate a paths file against a grid file")
    p_gv.add_argument("--grid", required=True)
    p_gv.add_argument("--paths", required=True)
    p_gv.set_defaults(func=_cmd_grid_validate)
    p_gd = grid_sub.add_parser("demo", help="print a generated solvable instance")
    p_gd.add_argument("--seed", type=int, default=0)
    p_gd.add_argument("--obstacles", type=int, default=20)
    p_gd.add_argument("--agents", type=int, default=4)
    p_gd.set_defaults(func=_cmd_grid_demo)

    p_pb = sub.add_parser("planbench", help="waypoint-decomposition planner comparison")
    p_pb.add_argument("--seeds", type=int, default=20)
    p_pb.add_argument("--budget", type=int, default=8000)
    p_pb.add_argument("--out", default="planbench.csv")
    p_pb.set_defaults(func=_cmd_planbench)

    p_serve = sub.add_parser("serve", help="HTTP service for live/human episodes")
    p_serve.add_argument("--port", type=int, default=8080)
    p_serve.add_argument("--log-dir", default="service_logs")
    p_serve.add_argument("--static", default=None, help="directory of built UI assets")
    p_serve.set_defaults(func=_cmd_serve)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
