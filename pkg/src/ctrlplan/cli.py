"""Command-line interface.

Verbs:

* ``plan``       one planner run; writes the iteration trace CSV, the
                 solution (when found) and optionally a tree dump.
* ``bench``      a multi-seed ensemble over the config's experiment arms;
                 writes raw traces, per-arm summary CSVs and results.json.
* ``theory``     the consolidated analysis report as JSON.
* ``dump-tree``  one planner run, emitting only the final tree dump.

Configs are JSON files (see :mod:`ctrlplan.config`) or bundled instances
addressed as ``builtin:<name>`` (``builtin:cartpole``, ``builtin:linear1d``,
``builtin:cartpole_dt_policies``, ``builtin:cartpole_fullscale``).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import bench
from .config import resolve_config
from .planner import plan, write_records_csv  # noqa: F401  (write_records_csv used by bench outputs too)


def _add_common_plan_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, help="config path or builtin:<name>")
    p.add_argument("--seed", type=int, default=None, help="override rng seed")
    p.add_argument("--budget", type=int, default=None, help="override valid-iteration budget")
    p.add_argument("--wall-budget", type=float, default=None, help="override wall-clock budget [s]")
    p.add_argument("--strategy", choices=["uniform", "rrt"], default=None)
    p.add_argument("--pruning", choices=["on", "off"], default=None)


def _planner_overrides(args) -> dict:
    over = {
        "rng_seed": args.seed,
        "iteration_budget": args.budget,
        "wall_clock_budget": args.wall_budget,
        "strategy": args.strategy,
    }
    if args.pruning is not None:
        over["pruning"] = args.pruning == "on"
    return over


def _solution_payload(result) -> dict:
    sol = result.solution
    return {
        "found": sol is not None,
        "cost": None if sol is None else sol.cost,
        "reached_goal": None if sol is None else sol.reached_goal,
        "controls": None if sol is None else sol.controls.controls.tolist(),
        "durations": None if sol is None else sol.controls.durations.tolist(),
        "valid_iterations": result.valid_iterations,
        "total_iterations": result.total_iterations,
        "first_solution_iteration": result.first_solution_iteration,
    }


def cmd_plan(args) -> int:
    problem = resolve_config(args.config)
    cfg = problem.planner_config(**_planner_overrides(args))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    # the trace is streamed while the run progresses
    with open(out / "records.csv", "w") as f:
        f.write("iteration,total_iterations,best_cost,node_count,wall_time_s\n")
        sink = lambda r: f.write(
            f"{r.iteration},{r.total_iterations},{r.best_cost!r},{r.node_count},{r.wall_time!r}\n"
        )
        result = plan(problem.model, problem.workspace, problem.cost, cfg,
                      problem.initial_state, record_sink=sink)
    with open(out / "solution.json", "w") as f:
        json.dump(_solution_payload(result), f, indent=2)
    if args.dump_tree:
        (out / "tree.txt").write_text(result.tree.dump())
    found = result.solution is not None
    cost = f"{result.solution.cost:.6g}" if found else "-"
    print(f"plan: found={found} cost={cost} valid={result.valid_iterations} "
          f"total={result.total_iterations} wall={result.wall_time:.1f}s -> {out}")
    return 0


def cmd_bench(args) -> int:
    problem = resolve_config(args.config)
    spec = bench.experiment_from_problem(
        problem,
        seeds=args.seeds,
        budget=args.budget,
        parallelism=args.parallelism,
    )
    summary = bench.run_experiment(spec, args.out_dir)
    for arm in summary.arms.values():
        succ = arm.success_fraction[-1]
        print(f"bench[{arm.name}]: success={succ:.2f} "
              f"mean_final_cost={arm.mean_best_cost[-1]:.6g} mean_wall={arm.mean_wall_time:.1f}s")
    print(f"bench: wrote {args.out_dir}")
    return 0


def cmd_theory(args) -> int:
    report = bench.theory_report(
        rho_sweep=tuple(args.rho),
        trials=args.trials,
        seed=args.seed,
        out_path=Path(args.out_dir) / "theory_report.json",
    )
    for check in report["checks"]:
        label = check.get("rho", "")
        print(f"theory[{check['check']}{' rho=' + str(label) if label != '' else ''}]: "
              f"{'PASS' if check['passed'] else 'FAIL'}")
    print(f"theory: passed={report['passed']} -> {args.out_dir}/theory_report.json")
    return 0 if report["passed"] else 1


def cmd_dump_tree(args) -> int:
    problem = resolve_config(args.config)
    cfg = problem.planner_config(**_planner_overrides(args))
    result = plan(problem.model, problem.workspace, problem.cost, cfg, problem.initial_state)
    text = result.tree.dump()
    if args.out == "-":
        sys.stdout.write(text)
    else:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text)
        print(f"dump-tree: {result.tree.node_count} live nodes -> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ctrlplan", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="single planner run")
    _add_common_plan_args(p)
    p.add_argument("--out-dir", default="out/plan")
    p.add_argument("--dump-tree", action="store_true", help="also write tree.txt")
    p.set_defaults(fn=cmd_plan)

    p = sub.add_parser("bench", help="multi-seed ensemble")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", default="out/bench")
    p.add_argument("--seeds", type=int, default=None, help="override seed count")
    p.add_argument("--budget", type=int, default=None, help="override per-run budget")
    p.add_argument("--parallelism", type=int, default=None, help="worker processes (0 = auto)")
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("theory", help="consolidated analysis report")
    p.add_argument("--out-dir", default="out/theory")
    p.add_argument("--rho", type=float, nargs="+", default=[0.05, 0.2, 0.5])
    p.add_argument("--trials", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_theory)

    p = sub.add_parser("dump-tree", help="run a plan and dump the final tree")
    _add_common_plan_args(p)
    p.add_argument("--out", default="-", help="output path, or - for stdout")
    p.set_defaults(fn=cmd_dump_tree)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    raise SystemExit(main())
