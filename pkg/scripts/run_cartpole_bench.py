#!/usr/bin/env python3
"""Run the cart-pole swing-up comparison and emit plot-ready CSVs.

Three arms by default (uniform, uniform+pruning, RRT-style+pruning, all at
constant 1 s edges) over 21 seeds.  Use --config builtin:cartpole_dt_policies
for the constant-vs-sampled integration-time comparison, or
builtin:cartpole_fullscale for the (slow) full-scale budgets.
"""

import argparse

import numpy as np

from ctrlplan.bench import experiment_from_problem, run_experiment
from ctrlplan.config import resolve_config


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default="builtin:cartpole")
    ap.add_argument("--out-dir", default="out/cartpole_bench")
    ap.add_argument("--seeds", type=int, default=None)
    ap.add_argument("--budget", type=int, default=None)
    ap.add_argument("--parallelism", type=int, default=None)
    args = ap.parse_args()

    problem = resolve_config(args.config)
    spec = experiment_from_problem(
        problem, seeds=args.seeds, budget=args.budget, parallelism=args.parallelism
    )
    summary = run_experiment(spec, args.out_dir)
    for name, arm in summary.arms.items():
        firsts = [f for f in arm.first_solution_iterations if f is not None]
        finals = [c for c in arm.final_best_costs if np.isfinite(c)]
        print(f"{name}:")
        print(f"  solved          {len(firsts)}/{len(arm.first_solution_iterations)}")
        if firsts:
            print(f"  median first    {np.median(firsts):.0f} valid iterations")
        if finals:
            print(f"  median final    {np.median(finals):.1f}")
        print(f"  mean wall       {arm.mean_wall_time:.1f} s")
    print(f"wrote {args.out_dir}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
