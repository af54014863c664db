"""The planning loop with pluggable expansion strategies.

``plan`` grows a :class:`~ctrlplan.tree.PlanTree` by repeatedly expanding a
node with a uniformly sampled control held for a sampled or constant
duration, discarding edges that collide, optionally applying cost pruning,
and tracking the cheapest goal-reaching node (branch-and-bound admission:
candidates at least as expensive as the best known solution are not
inserted).

Iteration bookkeeping follows the benchmark's convention: *valid*
iterations are those whose edge was collision-free (rejections by
admission or pruning still count as valid); the total count additionally
includes collision, blowup and sampling-retry failures.

Reproducibility: one seeded generator drives everything, with a fixed draw
order per iteration -- (1) node selection (uniform strategy: one integer;
RRT strategy: one state vector per retry), (2) one control vector, (3) one
duration when the policy is sampled.  Identical config and seed replay the
identical iteration stream.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Iterable

import numpy as np

from . import _kernels
from .core import (
    ControlSequence,
    CostFunctional,
    StatePath,
    Workspace,
    in_goal,
    is_collision_free,
    path_cost,
    wrap_angle,
)
from .dynamics import DynamicsModel, IntegrationBlowupError, IntegratorConfig, propagate, simulate_sequence
from .tree import EmptyTreeError, Metric, PlanTree, RadiusSchedule


class InvalidConfigError(ValueError):
    """Raised by ``plan`` before any iteration when the config is unusable."""


class InconsistentTreeError(RuntimeError):
    """A replayed trajectory disagreed with the tree's stored annotations."""


@dataclass(frozen=True)
class DtPolicy:
    """Edge-duration policy: ``constant(dt)`` or ``uniform(tau_max)``.

    The sampled policy draws durations uniformly from ``(0, tau_max]``.
    """

    kind: str
    dt: float = 1.0
    tau_max: float = 3.0

    def __post_init__(self):
        if self.kind not in ("constant", "uniform"):
            raise ValueError("kind must be 'constant' or 'uniform'")
        if self.kind == "constant" and not (np.isfinite(self.dt) and self.dt > 0):
            raise ValueError("constant policy needs dt > 0")
        if self.kind == "uniform" and not (np.isfinite(self.tau_max) and self.tau_max > 0):
            raise ValueError("uniform policy needs tau_max > 0")

    def draw(self, rng: np.random.Generator) -> float:
        if self.kind == "constant":
            return self.dt
        return (1.0 - rng.random()) * self.tau_max

    @staticmethod
    def constant(dt: float) -> "DtPolicy":
        return DtPolicy("constant", dt=dt)

    @staticmethod
    def uniform(tau_max: float) -> "DtPolicy":
        return DtPolicy("uniform", tau_max=tau_max)


@dataclass(frozen=True)
class PlannerConfig:
    strategy: str = "uniform"                  # "uniform" | "rrt"
    pruning: bool = False
    dt_policy: DtPolicy = DtPolicy.constant(1.0)
    iteration_budget: int | None = None        # valid iterations
    wall_clock_budget: float | None = None     # seconds
    rng_seed: int = 0
    radius_schedule: RadiusSchedule = RadiusSchedule(r0=1.0, gamma=0.1)
    collision_resolution: float | None = None  # default: integrator substep
    integrator: IntegratorConfig = IntegratorConfig()
    metric_weights: tuple[float, ...] | None = None
    record_cadence: int = 1
    rrt_sample_retries: int = 64

    def validate(self, model: DynamicsModel) -> None:
        if self.strategy not in ("uniform", "rrt"):
            raise InvalidConfigError(f"unknown strategy {self.strategy!r}")
        if self.iteration_budget is None and self.wall_clock_budget is None:
            raise InvalidConfigError("set iteration_budget and/or wall_clock_budget")
        if self.iteration_budget is not None and self.iteration_budget < 1:
            raise InvalidConfigError("iteration_budget must be >= 1")
        if self.wall_clock_budget is not None and self.wall_clock_budget <= 0:
            raise InvalidConfigError("wall_clock_budget must be > 0")
        if self.record_cadence < 1:
            raise InvalidConfigError("record_cadence must be >= 1")
        if self.collision_resolution is not None and self.collision_resolution <= 0:
            raise InvalidConfigError("collision_resolution must be > 0")
        if self.metric_weights is not None and len(self.metric_weights) != model.state_dim:
            raise InvalidConfigError("metric_weights length must equal the state dimension")


@dataclass(frozen=True)
class IterationRecord:
    """One row of a planner trace.

    ``iteration`` counts valid (collision-free) samples only; collisions
    and blowups are visible via ``total_iterations``.
    """

    iteration: int
    total_iterations: int
    best_cost: float
    node_count: int
    wall_time: float


@dataclass(frozen=True)
class TrajectorySolution:
    controls: ControlSequence
    path: StatePath
    cost: float
    reached_goal: bool


@dataclass
class PlanResult:
    solution: TrajectorySolution | None
    records: list[IterationRecord]
    tree: PlanTree
    valid_iterations: int
    total_iterations: int
    wall_time: float
    first_solution_iteration: int | None = None
    first_solution_total_iterations: int | None = None


@dataclass(frozen=True)
class Expansion:
    parent: int
    control: np.ndarray
    duration: float
    path: StatePath
    child_state: np.ndarray


def _sample_control(model: DynamicsModel, rng: np.random.Generator) -> np.ndarray:
    b = model.control_bounds
    return rng.uniform(b[:, 0], b[:, 1])


def expand_uniform(
    tree: PlanTree,
    model: DynamicsModel,
    dt_policy: DtPolicy,
    rng: np.random.Generator,
    integrator: IntegratorConfig = IntegratorConfig(),
) -> Expansion | None:
    """Expand a node chosen uniformly at random among the live nodes.

    Returns None when the propagation blows up (the caller discards the
    iteration but counts it).
    """
    if len(tree) == 0:
        raise EmptyTreeError("tree has no live nodes")
    parent = tree.live_at(int(rng.integers(0, len(tree))))
    u = _sample_control(model, rng)
    duration = dt_policy.draw(rng)
    try:
        child, path = propagate(model, tree.state_of(parent), u, duration, integrator)
    except IntegrationBlowupError:
        return None
    return Expansion(parent, u, duration, path, child)


def _sample_free_state(ws: Workspace, rng: np.random.Generator, retries: int) -> np.ndarray | None:
    b = ws.state_bounds
    for _ in range(retries):
        q = rng.uniform(b[:, 0], b[:, 1])
        if not ws.obstacles.shape[0]:
            return q
        hit = False
        for box in ws.obstacles:
            inside = True
            for k, d in enumerate(ws.projection):
                v = q[d] % (2.0 * math.pi) if d in ws.angular_dims else q[d]
                if v < box[k, 0] or v > box[k, 1]:
                    inside = False
                    break
            if inside:
                hit = True
                break
        if not hit:
            return q
    return None


def expand_rrt(
    tree: PlanTree,
    model: DynamicsModel,
    ws: Workspace,
    dt_policy: DtPolicy,
    rng: np.random.Generator,
    integrator: IntegratorConfig = IntegratorConfig(),
    sample_retries: int = 64,
) -> Expansion | None:
    """Voronoi-biased expansion: propagate from the node nearest a random
    obstacle-free state sample.

    Returns None on sampling-retry exhaustion or propagation blowup.
    """
    if len(tree) == 0:
        raise EmptyTreeError("tree has no live nodes")
    q = _sample_free_state(ws, rng, sample_retries)
    if q is None:
        return None
    parent = tree.nearest(q)
    u = _sample_control(model, rng)
    duration = dt_policy.draw(rng)
    try:
        child, path = propagate(model, tree.state_of(parent), u, duration, integrator)
    except IntegrationBlowupError:
        return None
    return Expansion(parent, u, duration, path, child)


class _EdgeChecker:
    """Collision check for edge paths, with a compiled fast path.

    The fast path applies when the requested resolution does not require
    subdividing the integrator's sample grid; otherwise it falls back to
    the reference implementation in :mod:`ctrlplan.core`.
    """

    def __init__(self, ws: Workspace, resolution: float):
        self.ws = ws
        self.resolution = resolution
        self._bounds = np.ascontiguousarray(ws.state_bounds)
        mask = np.zeros(ws.state_dim, dtype=np.uint8)
        for d in ws.angular_dims:
            mask[d] = 1
        self._angular_mask = mask
        self._obstacles = np.ascontiguousarray(ws.obstacles)
        self._proj = np.asarray(ws.projection, dtype=np.int64)

    def __call__(self, path: StatePath) -> bool:
        dt = np.diff(path.times)
        if dt.size == 0 or dt.max() <= self.resolution * (1.0 + 1e-12):
            return bool(
                _kernels.box_collision_check(
                    path.states, self._bounds, self._angular_mask, self._obstacles, self._proj
                )
            )
        return is_collision_free(path, self.ws, self.resolution)


def _edge_cost(path: StatePath, u: np.ndarray, duration: float, cf: CostFunctional) -> float:
    if getattr(cf, "state_independent", False):
        return cf.running_cost(path.states[-1], u) * duration
    return path_cost(path, ControlSequence(u[None, :], np.array([duration])), cf)


def plan(
    model: DynamicsModel,
    ws: Workspace,
    cf: CostFunctional,
    cfg: PlannerConfig,
    initial_state,
    record_sink=None,
) -> PlanResult:
    """Run the main planning loop; see the module docstring for semantics.

    Returns the best solution found (or None), the iteration records at the
    configured cadence (a record is always appended when the best cost
    improves and at the final valid iteration), and the final tree.
    ``record_sink``, when given, receives each record as it is produced, so
    traces can be streamed to disk during long runs.
    """
    cfg.validate(model)
    initial_state = np.asarray(initial_state, dtype=np.float64)
    if initial_state.shape != (model.state_dim,):
        raise InvalidConfigError("initial state has the wrong dimension")
    if ws.state_dim != model.state_dim:
        raise InvalidConfigError("workspace dimension does not match the model")
    resolution = cfg.collision_resolution or cfg.integrator.substep
    start_path = StatePath(np.array([0.0]), initial_state[None, :])
    if not is_collision_free(start_path, ws, resolution):
        raise InvalidConfigError("initial state is not collision-free")

    weights = (
        np.asarray(cfg.metric_weights, dtype=np.float64)
        if cfg.metric_weights is not None
        else np.ones(model.state_dim)
    )
    metric = Metric(weights, ws.angular_dims)
    tree = PlanTree(initial_state, metric)
    rng = np.random.default_rng(cfg.rng_seed)
    checker = _EdgeChecker(ws, resolution)

    records: list[IterationRecord] = []
    valid = 0
    total = 0
    first_iter: int | None = None
    first_total: int | None = None
    budget = cfg.iteration_budget if cfg.iteration_budget is not None else math.inf
    t0 = time.perf_counter()

    def record() -> None:
        row = IterationRecord(valid, total, tree.best_cost, tree.node_count, time.perf_counter() - t0)
        records.append(row)
        if record_sink is not None:
            record_sink(row)

    while valid < budget:
        if cfg.wall_clock_budget is not None and (total & 63) == 0:
            if time.perf_counter() - t0 >= cfg.wall_clock_budget:
                break
        total += 1
        if cfg.strategy == "uniform":
            exp = expand_uniform(tree, model, cfg.dt_policy, rng, cfg.integrator)
        else:
            exp = expand_rrt(tree, model, ws, cfg.dt_policy, rng, cfg.integrator, cfg.rrt_sample_retries)
        if exp is None:
            continue
        if not checker(exp.path):
            continue
        valid += 1
        improved = False
        admitted = False
        edge_cost = _edge_cost(exp.path, exp.control, exp.duration, cf)
        cost = tree.cost_of(exp.parent) + edge_cost
        if cost < tree.best_cost:  # branch-and-bound admission
            if cfg.pruning:
                radius = cfg.radius_schedule.radius(valid)
                admitted = tree.prune(exp.child_state, cost, radius)
            else:
                admitted = True
        if admitted:
            node = tree.insert(exp.parent, exp.child_state, exp.control, exp.duration, edge_cost)
            if cost < tree.best_cost and in_goal(exp.child_state, ws):
                tree.mark_best(node, cost)
                improved = True
                if first_iter is None:
                    first_iter = valid
                    first_total = total
        if improved or valid % cfg.record_cadence == 0 or valid == budget:
            record()

    if not records or records[-1].iteration != valid:
        record()
    wall = time.perf_counter() - t0

    solution = None
    if tree.best_node is not None:
        solution = reconstruct_solution(tree, tree.best_node, model, cfg.integrator, cf, ws)
    return PlanResult(
        solution=solution,
        records=records,
        tree=tree,
        valid_iterations=valid,
        total_iterations=total,
        wall_time=wall,
        first_solution_iteration=first_iter,
        first_solution_total_iterations=first_total,
    )


def reconstruct_solution(
    tree: PlanTree,
    node_id: int,
    model: DynamicsModel,
    integrator: IntegratorConfig,
    cf: CostFunctional,
    ws: Workspace | None = None,
) -> TrajectorySolution:
    """Replay the parent chain of a node through the integrator.

    The replayed cost must match the node's stored cost-to-come to 1e-6
    relative, otherwise :class:`InconsistentTreeError` is raised.  The node
    may be live or a retained record of a pruned/best-path node, as long as
    its chain to the root is intact (always true for this tree, which keeps
    all records).
    """
    chain = tree.chain_to_root(node_id)
    steps = []
    for node in chain[1:]:
        control, duration = tree.edge_of(node)
        steps.append((control, duration))
    seq = ControlSequence.from_steps(steps, control_dim=model.control_dim)
    path, terminal = simulate_sequence(model, tree.state_of(tree.root), seq, integrator)
    cost = path_cost(path, seq, cf)
    stored = tree.cost_of(node_id)
    if abs(cost - stored) > 1e-6 * max(1.0, abs(stored)):
        raise InconsistentTreeError(
            f"replayed cost {cost} disagrees with stored cost {stored} for node {node_id}"
        )
    reached = in_goal(terminal, ws) if ws is not None else False
    return TrajectorySolution(controls=seq, path=path, cost=cost, reached_goal=reached)


def write_records_csv(records: Iterable[IterationRecord], fileobj) -> None:
    """Write a planner trace as CSV.

    Columns: ``iteration, total_iterations, best_cost, node_count,
    wall_time_s``.  ``best_cost`` is ``inf`` until a solution is found.
    """
    fileobj.write("iteration,total_iterations,best_cost,node_count,wall_time_s\n")
    for r in records:
        fileobj.write(f"{r.iteration},{r.total_iterations},{r.best_cost!r},{r.node_count},{r.wall_time!r}\n")
