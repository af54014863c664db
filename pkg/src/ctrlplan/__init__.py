"""Steering-function-free kinodynamic planning by control-space sampling.

The package grows search trees by forward-propagating uniformly sampled
controls (uniform or Voronoi-biased node selection, optional cost pruning),
ships the cart-pole-with-obstacles benchmark, and provides executable
oracles for the Lipschitz error bounds and convergence-rate theory that
justify this planner family.
"""

from .core import (
    ControlSequence,
    CostFunctional,
    StatePath,
    Workspace,
    epsilon_distance,
    in_goal,
    is_collision_free,
    path_cost,
    quadratic_control_cost,
)
from .dynamics import (
    CartPoleParams,
    DynamicsModel,
    IntegrationBlowupError,
    IntegratorConfig,
    cart_pole_model,
    linear_model,
    propagate,
    simulate_sequence,
    step_function_approx,
)
from .planner import (
    DtPolicy,
    IterationRecord,
    PlannerConfig,
    PlanResult,
    TrajectorySolution,
    expand_rrt,
    expand_uniform,
    plan,
    reconstruct_solution,
)
from .tree import Metric, PlanTree, RadiusSchedule, SpatialIndex

__all__ = [
    "ControlSequence", "CostFunctional", "StatePath", "Workspace",
    "epsilon_distance", "in_goal", "is_collision_free", "path_cost",
    "quadratic_control_cost",
    "CartPoleParams", "DynamicsModel", "IntegrationBlowupError",
    "IntegratorConfig", "cart_pole_model", "linear_model", "propagate",
    "simulate_sequence", "step_function_approx",
    "DtPolicy", "IterationRecord", "PlannerConfig", "PlanResult",
    "TrajectorySolution", "expand_rrt", "expand_uniform", "plan",
    "reconstruct_solution",
    "Metric", "PlanTree", "RadiusSchedule", "SpatialIndex",
]

__version__ = "0.1.0"
