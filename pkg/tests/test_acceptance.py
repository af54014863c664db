"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line (run with ``pytest tests/test_acceptance.py -v -s``).

Two sub-criteria are implemented exactly as stated but are expected to
fail for mathematical reasons (see the strict xfail markers and the
assertion messages inside): the continuous closed-form failure bound does
not dominate the discrete iterates, and the coupled system's tail
components are still above 0.05 at t = 1e4.
"""

import math

import numpy as np
import pytest

from ctrlplan.analysis import (
    BoundParams,
    check_recurrence_dominance,
    cost_gap_bound,
    discrete_q_iterates,
    discrete_rate_fit,
    lyapunov_descent_check,
    q_rate_bound,
    validate_lemma1_empirically,
)
from ctrlplan.bench import experiment_from_problem, run_experiment
from ctrlplan.config import load_builtin
from ctrlplan.core import (
    ControlSequence,
    Workspace,
    in_goal,
    is_collision_free,
    quadratic_control_cost,
)
from ctrlplan.dynamics import IntegratorConfig, linear_model, simulate_sequence, step_function_approx
from ctrlplan.planner import DtPolicy, PlannerConfig, plan, reconstruct_solution
from ctrlplan.tree import Metric, RadiusSchedule, SpatialIndex


def report(criterion: str, passed: bool, detail: str = "") -> None:
    status = "PASS" if passed else "FAIL"
    print(f"\nACCEPTANCE {criterion}: {status}  {detail}")


# ---------------------------------------------------------------------------
# 1. path-divergence bound on the exact linear model


def test_criterion_1_path_divergence_validation():
    model = linear_model(1.0, 1.0)
    rep = validate_lemma1_empirically(model, trials=1000, steps=5, step_duration=0.4, seed=0)
    # tightness witness: constant controls 0 vs 1 give gap exactly e^t - 1
    a = ControlSequence(np.array([[0.0]]), np.array([2.0]))
    b = ControlSequence(np.array([[1.0]]), np.array([2.0]))
    pa, _ = simulate_sequence(model, np.zeros(1), a)
    pb, _ = simulate_sequence(model, np.zeros(1), b)
    equality_err = np.abs(np.abs(pa.states - pb.states)[:, 0] - np.expm1(pa.times)).max()
    ok = rep.violations == 0 and equality_err < 1e-6
    report("1 (path-divergence bound)", ok,
           f"violations={rep.violations}/1000 max_excess={rep.max_violation:.2e} "
           f"tightness_err={equality_err:.2e}")
    assert rep.violations == 0
    assert equality_err < 1e-6


# ---------------------------------------------------------------------------
# 2. discretization bound for step-function approximations


def smooth_flow_oracle(kind: str, times: np.ndarray) -> np.ndarray:
    """Closed forms for xdot = x + phi(t), x(0) = 0."""
    if kind == "sin":
        return 0.5 * (np.exp(times) - np.sin(times) - np.cos(times))
    if kind == "poly":
        # phi(t) = t/2 -> x(t) = (e^t - 1 - t) / 2
        return 0.5 * (np.exp(times) - 1.0 - times)
    raise ValueError(kind)


def test_criterion_2_discretization_bound():
    model = linear_model(1.0, 1.0)
    horizon = 2.0
    cfg = IntegratorConfig(substep=0.01)
    signals = {
        "sin": (lambda t: np.array([math.sin(t)]), 1.0),   # alpha = max |cos|
        "poly": (lambda t: np.array([0.5 * t]), 0.5),      # alpha = slope
    }
    ok = True
    details = []
    for kind, (phi, alpha) in signals.items():
        errors = {}
        for dt in (0.2, 0.1, 0.05):
            seq = step_function_approx(phi, horizon, dt)
            path, _ = simulate_sequence(model, np.zeros(1), seq, cfg)
            exact = smooth_flow_oracle(kind, path.times)
            err = np.abs(path.states[:, 0] - exact)
            bound = alpha * dt * np.expm1(path.times)
            ok &= bool(np.all(err <= bound + 1e-6))
            errors[dt] = err.max()
        r1 = errors[0.2] / errors[0.1]
        r2 = errors[0.1] / errors[0.05]
        ok &= 1.6 <= r1 <= 2.4 and 1.6 <= r2 <= 2.4
        details.append(f"{kind}: ratios {r1:.2f},{r2:.2f}")
    report("2 (discretization bound)", ok, "; ".join(details))
    assert ok


# ---------------------------------------------------------------------------
# 3. Monte-Carlo dominance of the recurrence lower bound


def test_criterion_3_recurrence_dominance():
    reports = [check_recurrence_dominance(rho, 200, 3, 10_000, seed=0) for rho in (0.05, 0.2, 0.5)]
    ok = all(r["passed"] for r in reports)
    report("3 (recurrence dominance)", ok,
           " ".join(f"rho={r['rho']}: margin {r['worst_margin']:.4f}" for r in reports))
    assert ok, reports


# ---------------------------------------------------------------------------
# 4. discrete convergence rate


def test_criterion_4_rate_fit():
    fits = {rho: discrete_rate_fit(rho, 1_000_000) for rho in (0.3, 0.9)}
    ok = all(abs(fit - rho) <= 0.01 for rho, fit in fits.items())
    report("4a (discrete rate fit)", ok,
           " ".join(f"rho={rho}: {fit:.4f}" for rho, fit in fits.items()))
    assert ok, fits


@pytest.mark.xfail(
    strict=True,
    reason="the continuous closed form (1-rho) t1^rho t^-rho lower-bounds the "
    "discrete iterates: per-step factors satisfy (1-1/j)^rho < 1 - rho/j for "
    "rho in (0,1), so dominance over Q_j is impossible for j >= 2",
)
def test_criterion_4_closed_form_dominates_discrete():
    rho = 0.3
    q = discrete_q_iterates(rho, 1000)
    j = np.arange(1, 1001)
    closed = np.array([q_rate_bound(1, rho, 1.0, float(t)) for t in j])
    gap = (closed - q[1:]).min()
    report("4b (closed form dominates discrete iterates)", bool(gap >= -1e-12),
           f"min(closed - Q_j) = {gap:.4f}")
    assert gap >= -1e-12, (
        "closed form fails to dominate the discrete iterates "
        f"(worst gap {gap:.4f} at j={int(j[np.argmin(closed - q[1:])])})"
    )


# ---------------------------------------------------------------------------
# 5. boundary conditions of the failure-bound cascade


def test_criterion_5_q_bound_boundary_conditions():
    worst = 0.0
    for rho in (0.2, 0.5, 0.8):
        for k in range(1, 5):
            got = q_rate_bound(k, rho, 1.0, float(k))
            want = 1.0 - rho**k / math.factorial(k)
            worst = max(worst, abs(got - want))
    report("5 (cascade boundary conditions)", worst < 1e-9, f"max boundary error {worst:.2e}")
    assert worst < 1e-9


# ---------------------------------------------------------------------------
# 6. Lyapunov descent of the coupled system


def test_criterion_6_lyapunov_descent():
    rep = lyapunov_descent_check(0.5, 4, t_end_factor=1e4)
    report("6a (V strictly decreasing)", rep.v_strictly_decreasing,
           f"V: {rep.v[0]:.3f} -> {rep.v[-1]:.5f}")
    assert rep.v_strictly_decreasing


@pytest.mark.xfail(
    strict=True,
    reason="integrating the coupled equality system with the staged initial "
    "conditions leaves Q_3 ~ 0.11 and Q_4 ~ 0.25 at t = 1e4*delta_t (the "
    "log-power terms decay slowly); all components drop below 0.05 only "
    "around t ~ 3e6*delta_t",
)
def test_criterion_6_all_components_below_threshold_at_1e4():
    rep = lyapunov_descent_check(0.5, 4, t_end_factor=1e4, threshold=0.05)
    ok = bool(rep.max_q_final < 0.05)
    report("6b (all Q < 0.05 by t=1e4)", ok,
           f"max Q at t=1e4: {rep.max_q_final:.4f}; "
           f"threshold reached at t={rep.threshold_time}")
    assert ok, f"max Q at t=1e4 is {rep.max_q_final:.4f}"


# ---------------------------------------------------------------------------
# 7 + 10. planner soundness and prune safety on randomized instances


def random_instance(seed: int):
    rng = np.random.default_rng(10_000 + seed)
    goal_center = rng.uniform([0.55, 0.55], [0.85, 0.85])
    goal = np.stack([goal_center - 0.08, goal_center + 0.08], axis=1)
    obstacles = []
    start = np.array([0.05, 0.05])
    for _ in range(rng.integers(2, 6)):
        center = rng.uniform(0.1, 0.9, 2)
        half = rng.uniform(0.03, 0.12, 2)
        box = np.clip(np.stack([center - half, center + half], axis=1), 0.0, 1.0)
        inside = lambda p: np.all(p >= box[:, 0]) and np.all(p <= box[:, 1])
        if inside(start) or inside(goal_center):
            continue
        obstacles.append(box)
    ws = Workspace(
        state_bounds=np.array([[0.0, 1.0], [0.0, 1.0]]),
        goal=np.clip(goal, 0.0, 1.0),
        obstacles=np.array(obstacles) if obstacles else np.zeros((0, 2, 2)),
        projection=(0, 1),
    )
    return ws, start


PLANE_MODEL = linear_model(0.0, 1.0, control_bounds=(-1.0, 1.0), dims=2)
PLANE_COST = quadratic_control_cost([1.0, 1.0], 1.0)
PLANE_INTEGRATOR = IntegratorConfig(substep=0.05)


def plane_config(seed: int, pruning: bool) -> PlannerConfig:
    return PlannerConfig(
        strategy="uniform",
        pruning=pruning,
        dt_policy=DtPolicy.uniform(0.4),
        iteration_budget=2500,
        rng_seed=seed,
        radius_schedule=RadiusSchedule(r0=0.15, gamma=0.15),
        integrator=PLANE_INTEGRATOR,
        record_cadence=50,
    )


@pytest.fixture(scope="module")
def randomized_runs():
    runs = []
    for seed in range(100):
        ws, start = random_instance(seed)
        pruned = plan(PLANE_MODEL, ws, PLANE_COST, plane_config(seed, True), start)
        plain = plan(PLANE_MODEL, ws, PLANE_COST, plane_config(seed, False), start)
        runs.append((seed, ws, start, pruned, plain))
    return runs


def test_criterion_7_planner_soundness(randomized_runs):
    solved = 0
    replay_ok = True
    monotone_ok = True
    for seed, ws, start, pruned, plain in randomized_runs:
        for res in (pruned, plain):
            costs = [r.best_cost for r in res.records]
            monotone_ok &= all(a >= b for a, b in zip(costs, costs[1:]))
            if res.solution is None:
                continue
            solved += 1
            sol = reconstruct_solution(
                res.tree, res.tree.best_node, PLANE_MODEL, PLANE_INTEGRATOR, PLANE_COST, ws
            )
            replay_ok &= abs(sol.cost - res.tree.best_cost) <= 1e-6 * max(1.0, res.tree.best_cost)
            replay_ok &= in_goal(sol.path.terminal_state, ws)
            replay_ok &= is_collision_free(sol.path, ws, 0.05)
    ok = replay_ok and monotone_ok and solved >= 150  # sanity: most runs find solutions
    report("7 (planner soundness)", ok,
           f"solutions={solved}/200 replay_ok={replay_ok} monotone={monotone_ok}")
    assert replay_ok
    assert monotone_ok
    assert solved >= 150


def test_criterion_10_prune_safety(randomized_runs):
    protected = all(pruned.tree.removed_best_path_nodes == 0 for _, _, _, pruned, _ in randomized_runs)
    # informational cost-gap log against the same-seed unpruned runs; the
    # slope constant of the unknown optimum is not identifiable, so a
    # nominal alpha = 1 band is logged rather than asserted
    gaps = []
    for seed, ws, start, pruned, plain in randomized_runs:
        if pruned.solution is None or plain.solution is None:
            continue
        final_radius = plane_config(seed, True).radius_schedule.radius(pruned.valid_iterations)
        band = cost_gap_bound(BoundParams(
            lipschitz_dynamics=PLANE_MODEL.lipschitz_constant,
            lipschitz_cost=PLANE_COST.lipschitz_constant,
            control_dim=2, alpha=1.0, horizon=pruned.solution.path.duration,
            epsilon=final_radius, clearance=1.0, dt=0.4,
        ))
        gaps.append((pruned.solution.cost - plain.solution.cost, band))
    worse = sum(g > 0 for g, _ in gaps)
    outside = sum(g > b for g, b in gaps)
    report("10 (prune safety)", protected,
           f"best-path removals=0: {protected}; pruned worse in {worse}/{len(gaps)} "
           f"(outside nominal band: {outside}, logged only)")
    assert protected


# ---------------------------------------------------------------------------
# 9. spatial index vs brute force at scale


def test_criterion_9_spatial_index_exactness():
    rng = np.random.default_rng(99)
    metric = Metric(np.array([1.0, 0.5, 2.5, 0.5]), angular_dims=(2,))
    idx = SpatialIndex(metric)
    n = 10_000
    states = rng.uniform([-30, -10, 0, -7], [30, 10, 2 * math.pi, 7], size=(n, 4))
    for i, s in enumerate(states):
        idx.insert(i, s)
    for i in rng.choice(n, 2000, replace=False):
        idx.remove(int(i))
    alive = np.array(sorted(idx._slot_of.keys()))
    scaled = np.array([metric.scale(s) for s in states[alive]])
    offsets = metric._offsets
    mismatches = 0
    for _ in range(1000):
        q = rng.uniform([-35, -12, -7, -9], [35, 12, 14, 9])
        qs = metric.scale(q)
        d2 = np.min(
            [((scaled - (qs + off)) ** 2).sum(axis=1) for off in offsets], axis=0
        )
        # nearest with lowest-id tie break
        best = alive[np.lexsort((alive, d2))[0]]
        if idx.nearest(q) != best:
            mismatches += 1
        r = rng.uniform(0.5, 6.0)
        want = alive[d2 <= r * r]
        if not np.array_equal(idx.in_range(q, r), want):
            mismatches += 1
    report("9 (spatial index exactness)", mismatches == 0, f"mismatches={mismatches}/2000")
    assert mismatches == 0


# ---------------------------------------------------------------------------
# 8. cart-pole benchmark at desk scale (the long one)


@pytest.fixture(scope="module")
def cartpole_summary(tmp_path_factory):
    problem = load_builtin("cartpole")
    spec = experiment_from_problem(problem)
    return run_experiment(spec, tmp_path_factory.mktemp("cartpole_bench"))


def test_criterion_8a_pruned_uniform_reliability(cartpole_summary):
    arm = cartpole_summary.arms["uniform_pruning"]
    solved = sum(f is not None for f in arm.first_solution_iterations)
    ok = solved >= 19
    report("8a (uniform+pruning solves >= 19/21)", ok, f"solved={solved}/21")
    assert ok


def test_criterion_8b_rrt_reaches_first_solution_faster(cartpole_summary):
    med = {}
    for name, arm in cartpole_summary.arms.items():
        firsts = [f for f in arm.first_solution_iterations if f is not None]
        med[name] = np.median(firsts) if firsts else math.inf
    ok = med["rrt_pruning"] < med["uniform"] and med["rrt_pruning"] < med["uniform_pruning"]
    report("8b (RRT first solution faster)", ok,
           f"median first: rrt={med['rrt_pruning']:.0f} uniform={med['uniform']:.0f} "
           f"uniform+pruning={med['uniform_pruning']:.0f}")
    assert ok, med


def test_criterion_8c_pruned_uniform_converges_lower(cartpole_summary):
    med = {
        name: np.median(arm.final_best_costs) for name, arm in cartpole_summary.arms.items()
    }
    ok = med["uniform_pruning"] <= med["rrt_pruning"]
    report("8c (uniform+pruning final cost <= RRT)", ok,
           f"median final: uniform+pruning={med['uniform_pruning']:.0f} "
           f"rrt={med['rrt_pruning']:.0f} uniform={med['uniform']:.0f}")
    assert ok, med
