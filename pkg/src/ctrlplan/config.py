"""JSON problem configs: schema, loaders and the bundled instances.

A problem config is a JSON object with the sections below; unknown keys
are rejected so typos fail loudly.

``model``
    ``{"type": "cartpole", "force_range": [lo, hi]}`` or
    ``{"type": "linear", "drift": a, "gain": b, "control_bounds": [lo, hi],
    "dims": n}``.
``initial_state``
    list of n floats.
``workspace``
    ``state_bounds``/``goal`` as per-dimension ``[lo, hi]`` lists,
    ``obstacles`` as a list of boxes (each a per-projection-dimension list
    of ``[lo, hi]``), ``projection`` as a list of state dimensions and
    ``angular_dims`` for coordinates compared modulo 2*pi.
``cost``
    ``control_weights``, ``time_weight``, ``lipschitz_constant`` for the
    quadratic-control running cost.
``planner``
    defaults for single runs: ``strategy``, ``pruning``, ``dt_policy``
    (``{"kind": "constant", "dt": ...}`` or ``{"kind": "uniform",
    "tau_max": ...}``), ``iteration_budget``, ``wall_clock_budget``,
    ``rng_seed``, ``radius`` (``{"r0": ..., "gamma": ...}``),
    ``collision_resolution``, ``substep``, ``metric_weights``,
    ``record_cadence``.
``experiment``
    multi-run ensembles: ``arms`` (each with ``name``, ``strategy``,
    ``pruning``, ``dt_policy``), ``seeds`` (count or explicit list),
    ``budget``, ``record_cadence``, ``checkpoint_every``, ``parallelism``
    (0 = one worker per CPU).

Bundled instances live in ``ctrlplan/configs`` and load via
``load_builtin("cartpole")`` etc.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .core import CostFunctional, Workspace, quadratic_control_cost
from .dynamics import DynamicsModel, IntegratorConfig, cart_pole_model, linear_model
from .planner import DtPolicy, PlannerConfig
from .tree import RadiusSchedule


class ConfigError(ValueError):
    pass


def _require(d: dict, allowed: set[str], context: str) -> None:
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)} in {context}")


def model_from_config(d: dict) -> DynamicsModel:
    kind = d.get("type")
    if kind == "cartpole":
        _require(d, {"type", "force_range"}, "model")
        fr = tuple(d.get("force_range", (0.0, 300.0)))
        return cart_pole_model(force_range=fr)
    if kind == "linear":
        _require(d, {"type", "drift", "gain", "control_bounds", "dims"}, "model")
        return linear_model(
            drift=float(d.get("drift", 1.0)),
            gain=float(d.get("gain", 1.0)),
            control_bounds=tuple(d.get("control_bounds", (-1.0, 1.0))),
            dims=int(d.get("dims", 1)),
        )
    raise ConfigError(f"unknown model type {kind!r}")


def workspace_from_config(d: dict) -> Workspace:
    _require(d, {"state_bounds", "goal", "obstacles", "projection", "angular_dims"}, "workspace")
    return Workspace(
        state_bounds=np.asarray(d["state_bounds"], dtype=np.float64),
        goal=np.asarray(d["goal"], dtype=np.float64),
        obstacles=np.asarray(d.get("obstacles", []), dtype=np.float64),
        projection=tuple(d.get("projection", ())),
        angular_dims=tuple(d.get("angular_dims", ())),
    )


def cost_from_config(d: dict) -> CostFunctional:
    _require(d, {"control_weights", "time_weight", "lipschitz_constant"}, "cost")
    return quadratic_control_cost(
        d["control_weights"], d["time_weight"], d.get("lipschitz_constant", 1.0)
    )


def dt_policy_from_config(d: dict) -> DtPolicy:
    _require(d, {"kind", "dt", "tau_max"}, "dt_policy")
    if d["kind"] == "constant":
        return DtPolicy.constant(float(d.get("dt", 1.0)))
    if d["kind"] == "uniform":
        return DtPolicy.uniform(float(d.get("tau_max", 3.0)))
    raise ConfigError(f"unknown dt_policy kind {d['kind']!r}")


_PLANNER_KEYS = {
    "strategy", "pruning", "dt_policy", "iteration_budget", "wall_clock_budget",
    "rng_seed", "radius", "collision_resolution", "substep", "metric_weights",
    "record_cadence", "rrt_sample_retries",
}


def planner_config_from_config(d: dict, **overrides) -> PlannerConfig:
    _require(d, _PLANNER_KEYS, "planner")
    merged = dict(d)
    merged.update({k: v for k, v in overrides.items() if v is not None})
    radius = merged.get("radius", {"r0": 1.0, "gamma": 0.1})
    kwargs = dict(
        strategy=merged.get("strategy", "uniform"),
        pruning=bool(merged.get("pruning", False)),
        dt_policy=dt_policy_from_config(merged.get("dt_policy", {"kind": "constant", "dt": 1.0})),
        iteration_budget=merged.get("iteration_budget"),
        wall_clock_budget=merged.get("wall_clock_budget"),
        rng_seed=int(merged.get("rng_seed", 0)),
        radius_schedule=RadiusSchedule(r0=float(radius["r0"]), gamma=float(radius.get("gamma", 0.1))),
        collision_resolution=merged.get("collision_resolution"),
        integrator=IntegratorConfig(substep=float(merged.get("substep", 0.01))),
        record_cadence=int(merged.get("record_cadence", 1)),
        rrt_sample_retries=int(merged.get("rrt_sample_retries", 64)),
    )
    if merged.get("metric_weights") is not None:
        kwargs["metric_weights"] = tuple(merged["metric_weights"])
    return PlannerConfig(**kwargs)


@dataclass(frozen=True)
class Problem:
    """A fully-loaded planning problem plus its raw config dict."""

    name: str
    model: DynamicsModel
    workspace: Workspace
    cost: CostFunctional
    initial_state: np.ndarray
    raw: dict

    def planner_config(self, **overrides) -> PlannerConfig:
        return planner_config_from_config(self.raw.get("planner", {}), **overrides)


def problem_from_dict(raw: dict) -> Problem:
    _require(raw, {"name", "model", "initial_state", "workspace", "cost", "planner", "experiment"}, "problem")
    model = model_from_config(raw["model"])
    ws = workspace_from_config(raw["workspace"])
    cost = cost_from_config(raw["cost"])
    x0 = np.asarray(raw["initial_state"], dtype=np.float64)
    if x0.shape != (model.state_dim,):
        raise ConfigError("initial_state dimension does not match the model")
    return Problem(
        name=raw.get("name", "problem"),
        model=model,
        workspace=ws,
        cost=cost,
        initial_state=x0,
        raw=raw,
    )


def load_problem(path: str | Path) -> Problem:
    with open(path) as f:
        return problem_from_dict(json.load(f))


def builtin_config_path(name: str) -> Path:
    p = resources.files("ctrlplan").joinpath("configs", f"{name}.json")
    return Path(str(p))


def load_builtin(name: str) -> Problem:
    text = resources.files("ctrlplan").joinpath("configs", f"{name}.json").read_text()
    return problem_from_dict(json.loads(text))


def resolve_config(spec: str | Path) -> Problem:
    """Load ``builtin:<name>`` or a filesystem path."""
    s = str(spec)
    if s.startswith("builtin:"):
        return load_builtin(s.split(":", 1)[1])
    return load_problem(spec)
