"""Multi-seed experiment harness and the consolidated theory report.

An experiment runs a grid of (arm, seed) planner instances over one
problem, each fully determined by the problem config and its seed, and
aggregates best-cost statistics on a fixed valid-iteration checkpoint
grid.  Runs execute in worker processes (results are merged in arm/seed
order, so the outputs do not depend on scheduling).

Output layout under ``out_dir``::

    runs/<arm>/seed_<s>.csv   raw planner traces (wall_time_s column is
                              the only nondeterministic output)
    summary_<arm>.csv         checkpoint, mean, min, max, success_fraction
    results.json              deterministic per-run and per-arm summary
    timings.json              wall-clock times (nondeterministic)

Aggregation conventions: a run contributes ``inf`` to the mean best cost
until it has found a solution, which keeps the per-arm mean non-increasing
in the checkpoint index; min/max are over runs with solutions.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import analysis
from .config import Problem, dt_policy_from_config, problem_from_dict
from .dynamics import linear_model
from .planner import plan, write_records_csv


@dataclass(frozen=True)
class ArmSpec:
    name: str
    strategy: str
    pruning: bool
    dt_policy: dict  # raw dt_policy config


@dataclass(frozen=True)
class ExperimentSpec:
    """A picklable description of an ensemble run.

    ``problem`` is the raw problem config dict; workers rebuild the model
    and workspace from it, which keeps the spec cheap to ship across
    processes and the runs reproducible from the JSON alone.
    """

    problem: dict
    arms: tuple[ArmSpec, ...]
    seeds: tuple[int, ...]
    budget: int
    record_cadence: int = 1
    checkpoint_every: int | None = None
    parallelism: int = 0  # 0 = one worker per CPU

    def __post_init__(self):
        if not self.arms or not self.seeds:
            raise ValueError("need at least one arm and one seed")
        if self.budget < 1 or self.record_cadence < 1:
            raise ValueError("budget and record_cadence must be >= 1")
        ck = self.checkpoint_every or self.record_cadence
        if ck % self.record_cadence != 0:
            raise ValueError("checkpoint_every must be a multiple of record_cadence")


def experiment_from_problem(problem: Problem, **overrides) -> ExperimentSpec:
    raw = problem.raw.get("experiment")
    if raw is None:
        raise ValueError("problem config has no 'experiment' section")
    exp = dict(raw)
    exp.update({k: v for k, v in overrides.items() if v is not None})
    seeds = exp.get("seeds", 21)
    if isinstance(seeds, int):
        seeds = tuple(range(seeds))
    else:
        seeds = tuple(int(s) for s in seeds)
    arms = tuple(
        ArmSpec(a["name"], a["strategy"], bool(a["pruning"]), a["dt_policy"]) for a in exp["arms"]
    )
    return ExperimentSpec(
        problem=problem.raw,
        arms=arms,
        seeds=seeds,
        budget=int(exp["budget"]),
        record_cadence=int(exp.get("record_cadence", 1)),
        checkpoint_every=int(exp.get("checkpoint_every", 0)) or None,
        parallelism=int(exp.get("parallelism", 0)),
    )


@dataclass
class RunOutcome:
    """Deterministic per-run results plus the recorded trace."""

    arm: str
    seed: int
    iterations: np.ndarray      # record grid (valid iterations)
    best_costs: np.ndarray
    node_counts: np.ndarray
    final_best_cost: float
    first_solution_iteration: int | None
    first_solution_total_iterations: int | None
    valid_iterations: int
    total_iterations: int
    wall_time: float
    error: str | None = None


def _run_single(args) -> tuple[RunOutcome, list]:
    raw, arm, seed, budget, cadence = args
    problem = problem_from_dict(raw)
    cfg = problem.planner_config(
        strategy=arm.strategy,
        pruning=arm.pruning,
        dt_policy=arm.dt_policy,
        iteration_budget=budget,
        rng_seed=seed,
        record_cadence=cadence,
    )
    try:
        res = plan(problem.model, problem.workspace, problem.cost, cfg, problem.initial_state)
    except Exception as exc:  # recorded per-run, the ensemble continues
        failed = RunOutcome(
            arm=arm.name, seed=seed,
            iterations=np.zeros(0, dtype=np.int64), best_costs=np.zeros(0),
            node_counts=np.zeros(0, dtype=np.int64), final_best_cost=math.inf,
            first_solution_iteration=None, first_solution_total_iterations=None,
            valid_iterations=0, total_iterations=0, wall_time=0.0,
            error=f"{type(exc).__name__}: {exc}",
        )
        return failed, []
    return RunOutcome(
        arm=arm.name,
        seed=seed,
        iterations=np.array([r.iteration for r in res.records], dtype=np.int64),
        best_costs=np.array([r.best_cost for r in res.records]),
        node_counts=np.array([r.node_count for r in res.records], dtype=np.int64),
        final_best_cost=res.solution.cost if res.solution else math.inf,
        first_solution_iteration=res.first_solution_iteration,
        first_solution_total_iterations=res.first_solution_total_iterations,
        valid_iterations=res.valid_iterations,
        total_iterations=res.total_iterations,
        wall_time=res.wall_time,
        error=None,
    ), res.records


@dataclass(frozen=True)
class ArmSummary:
    name: str
    checkpoints: np.ndarray
    mean_best_cost: np.ndarray       # inf until every run has a solution
    min_best_cost: np.ndarray        # over runs with solutions (inf if none)
    max_best_cost: np.ndarray
    success_fraction: np.ndarray
    mean_node_count: np.ndarray
    mean_wall_time: float
    first_solution_iterations: tuple[int | None, ...]
    final_best_costs: tuple[float, ...]


@dataclass(frozen=True)
class EnsembleSummary:
    name: str
    budget: int
    seeds: tuple[int, ...]
    arms: dict[str, ArmSummary]


def _value_at_checkpoints(iters: np.ndarray, values: np.ndarray, grid: np.ndarray, default: float) -> np.ndarray:
    """Last recorded value at or before each checkpoint."""
    out = np.full(grid.shape[0], default, dtype=np.float64)
    if iters.size == 0:
        return out
    pos = np.searchsorted(iters, grid, side="right") - 1
    mask = pos >= 0
    out[mask] = values[pos[mask]]
    return out


def run_experiment(spec: ExperimentSpec, out_dir: str | Path | None = None) -> EnsembleSummary:
    """Execute every (arm, seed) run and aggregate checkpoint statistics."""
    jobs = [
        (spec.problem, arm, seed, spec.budget, spec.record_cadence)
        for arm in spec.arms
        for seed in spec.seeds
    ]
    workers = spec.parallelism or os.cpu_count() or 1
    results: list[tuple[RunOutcome, list]] = []
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_single, jobs, chunksize=1))
    else:
        results = [_run_single(j) for j in jobs]

    outcomes = list(results)

    out_path = Path(out_dir) if out_dir is not None else None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)
        for outcome, records in outcomes:
            run_dir = out_path / "runs" / outcome.arm
            run_dir.mkdir(parents=True, exist_ok=True)
            with open(run_dir / f"seed_{outcome.seed}.csv", "w") as f:
                write_records_csv(records, f)

    ck_every = spec.checkpoint_every or spec.record_cadence
    grid = np.arange(ck_every, spec.budget + 1, ck_every, dtype=np.int64)
    if grid.size == 0 or grid[-1] != spec.budget:
        grid = np.append(grid, spec.budget)

    name = spec.problem.get("name", "experiment")
    arms: dict[str, ArmSummary] = {}
    for arm in spec.arms:
        rows = [(o, r) for o, r in outcomes if o.arm == arm.name]
        costs = np.vstack(
            [_value_at_checkpoints(o.iterations, o.best_costs, grid, math.inf) for o, _ in rows]
        )
        nodes = np.vstack(
            [
                _value_at_checkpoints(o.iterations, o.node_counts.astype(np.float64), grid, 1.0)
                for o, _ in rows
            ]
        )
        finite = np.isfinite(costs)
        min_cost = np.where(finite.any(axis=0), np.where(finite, costs, np.inf).min(axis=0), np.inf)
        max_cost = np.where(finite.any(axis=0), np.where(finite, costs, -np.inf).max(axis=0), np.inf)
        arms[arm.name] = ArmSummary(
            name=arm.name,
            checkpoints=grid,
            mean_best_cost=costs.mean(axis=0),
            min_best_cost=min_cost,
            max_best_cost=max_cost,
            success_fraction=finite.mean(axis=0),
            mean_node_count=nodes.mean(axis=0),
            mean_wall_time=float(np.mean([o.wall_time for o, _ in rows])),
            first_solution_iterations=tuple(o.first_solution_iteration for o, _ in rows),
            final_best_costs=tuple(o.final_best_cost for o, _ in rows),
        )
    summary = EnsembleSummary(name=name, budget=spec.budget, seeds=spec.seeds, arms=arms)

    if out_path is not None:
        emit_plot_data(summary, out_path)
        deterministic = {
            "name": name,
            "budget": spec.budget,
            "seeds": list(spec.seeds),
            "arms": {
                a.name: {
                    "first_solution_iterations": list(a.first_solution_iterations),
                    "final_best_costs": [repr(c) for c in a.final_best_costs],
                    "success_fraction_final": float(a.success_fraction[-1]),
                    "errors": [o.error for o, _ in outcomes if o.arm == a.name and o.error],
                }
                for a in arms.values()
            },
        }
        with open(out_path / "results.json", "w") as f:
            json.dump(deterministic, f, indent=2, sort_keys=True)
        with open(out_path / "timings.json", "w") as f:
            json.dump(
                {a.name: a.mean_wall_time for a in arms.values()}, f, indent=2, sort_keys=True
            )
    return summary


def emit_plot_data(summary: EnsembleSummary, out_dir: str | Path) -> list[Path]:
    """One plot-ready CSV per arm with exactly five columns.

    Floats are written with ``repr`` so parsing the file back reproduces
    the summary values exactly.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for arm in summary.arms.values():
        p = out_dir / f"summary_{arm.name}.csv"
        with open(p, "w") as f:
            f.write("checkpoint,mean_best_cost,min_best_cost,max_best_cost,success_fraction\n")
            for i, ck in enumerate(arm.checkpoints):
                f.write(
                    f"{ck},{float(arm.mean_best_cost[i])!r},{float(arm.min_best_cost[i])!r},"
                    f"{float(arm.max_best_cost[i])!r},{float(arm.success_fraction[i])!r}\n"
                )
        paths.append(p)
    return paths


def parse_plot_csv(path: str | Path) -> dict[str, np.ndarray]:
    """Parse a file written by :func:`emit_plot_data` back into arrays."""
    with open(path) as f:
        header = f.readline().strip().split(",")
        rows = [line.strip().split(",") for line in f if line.strip()]
    cols = {name: np.array([float(r[i]) for r in rows]) for i, name in enumerate(header)}
    return cols


# ---------------------------------------------------------------------------
# consolidated theory report


def theory_report(
    rho_sweep=(0.05, 0.2, 0.5),
    trials: int = 10_000,
    mc_j_max: int = 200,
    mc_k_max: int = 3,
    rate_j_max: int = 1_000_000,
    rate_rhos=(0.3, 0.9),
    seed: int = 0,
    out_path: str | Path | None = None,
) -> dict:
    """Run every analysis check and write a consolidated pass/fail report.

    Checks: bound formula spot values and monotonicity, recurrence-table
    invariants (including the rho=0 edge), Monte-Carlo dominance of the
    recurrence lower bound, the failure-decay exponent fit, the closed-form
    boundary conditions, quadratic-Lyapunov descent of the coupled system,
    and the empirical path-divergence validation on the exact linear model.
    """
    checks: list[dict] = []

    # bound formulas: frozen spot values and monotonicity in each argument
    spot = abs(analysis.path_divergence_bound(0.5, 1.0, 2.0) - 0.5 * (math.e**2 - 1.0)) < 1e-12
    mono_rng = np.random.default_rng(seed)
    mono_ok = True
    for _ in range(200):
        e1, e2 = sorted(mono_rng.uniform(0.0, 2.0, 2))
        l1, l2 = sorted(mono_rng.uniform(0.1, 3.0, 2))
        t1, t2 = sorted(mono_rng.uniform(0.0, 3.0, 2))
        if analysis.path_divergence_bound(e1, l1, t1) > analysis.path_divergence_bound(e2, l2, t2) + 1e-15:
            mono_ok = False
    checks.append({"check": "bound_formulas", "passed": bool(spot and mono_ok)})

    # recurrence-table invariants
    inv_ok = True
    for rho in rho_sweep:
        table = analysis.recurrence_lower_bound(rho, 100, 4).p
        inv_ok &= bool(np.all(np.diff(table, axis=0) >= -1e-15))
        inv_ok &= bool(table.max() <= 1.0 + 1e-12)
        inv_ok &= bool(np.all(table[:, 1:] <= table[:, :-1] + 1e-15))
    zero = analysis.recurrence_lower_bound(0.0, 50, 3).p
    inv_ok &= bool(np.all(zero[:, 1:] == 0.0) and np.all(zero[:, 0] == 1.0))
    checks.append({"check": "recurrence_invariants", "passed": bool(inv_ok)})

    for rho in rho_sweep:
        checks.append(
            analysis.check_recurrence_dominance(rho, mc_j_max, mc_k_max, trials, seed=seed)
        )

    for rho in rate_rhos:
        exponent = analysis.discrete_rate_fit(rho, rate_j_max)
        checks.append(
            {
                "check": "discrete_rate_fit",
                "rho": rho,
                "exponent": exponent,
                "passed": bool(abs(exponent - rho) <= 0.01),
            }
        )

    boundary_ok = all(
        abs(analysis.q_rate_bound(k, 0.5, 1.0, float(k)) - (1.0 - 0.5**k / math.factorial(k))) < 1e-9
        for k in range(1, 5)
    )
    checks.append({"check": "q_bound_boundary_conditions", "passed": bool(boundary_ok)})

    lyap = analysis.lyapunov_descent_check(0.5, 4)
    checks.append(
        {
            "check": "lyapunov_descent",
            "v_strictly_decreasing": lyap.v_strictly_decreasing,
            "max_q_at_t_end": lyap.max_q_final,
            "threshold_time": lyap.threshold_time,
            "passed": bool(lyap.passed),
        }
    )

    lemma1 = analysis.validate_lemma1_empirically(linear_model(1.0, 1.0), trials=300, seed=seed)
    checks.append(
        {
            "check": "path_divergence_empirical",
            "violations": lemma1.violations,
            "max_violation": lemma1.max_violation,
            "passed": lemma1.passed,
        }
    )

    report = {"passed": bool(all(c["passed"] for c in checks)), "checks": checks}
    if out_path is not None:
        out_path = Path(out_path)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        with open(out_path, "w") as f:
            json.dump(report, f, indent=2, sort_keys=True, default=float)
    return report
