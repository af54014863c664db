"""Dynamics models and forward propagation.

Propagation integrates the equation of motion ``gamma_dot = f(gamma, u, t)``
under a zero-order hold (the control is constant over the edge) with a
fixed-step classical Runge-Kutta scheme.  The requested duration is split
into ``ceil(duration / substep)`` equal substeps, so propagating twice for
``T`` is bitwise-identical to propagating once for ``2*T`` whenever ``T``
is a multiple of the substep.

Two model families ship with the package:

* :func:`cart_pole_model` -- the 4-D cart-and-pole system used by the
  benchmark, with a compiled fast path for the planner's inner loop.
* :func:`linear_model` -- decoupled linear dynamics ``x_i' = a x_i + b u_i``
  whose Lipschitz constant ``max(|a|, |b|)`` is exact, used to validate the
  error bounds in :mod:`ctrlplan.analysis`.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import partial
from typing import Callable

import numpy as np

from . import _kernels
from .core import ControlSequence, StatePath, as_vector


class IntegrationBlowupError(RuntimeError):
    """Propagation produced a non-finite state.

    Carries ``last_finite_state``, the last sample that was still finite.
    """

    def __init__(self, last_finite_state: np.ndarray):
        super().__init__("integration produced a non-finite state")
        self.last_finite_state = last_finite_state


@dataclass(frozen=True)
class IntegratorConfig:
    """Fixed-step RK4 settings.

    ``substep`` is the nominal step; a propagation of duration ``T`` uses
    ``ceil(T/substep)`` equal steps, so the effective step never exceeds
    ``substep``.  With ``record_path=False`` the returned path keeps only
    its endpoints (collision checking needs a recorded path).
    """

    substep: float = 0.01
    record_path: bool = True

    def __post_init__(self):
        if not (np.isfinite(self.substep) and self.substep > 0):
            raise ValueError("substep must be finite and > 0")


@dataclass(frozen=True)
class DynamicsModel:
    """A Lipschitz-continuous vector field with control bounds.

    ``vector_field(state, control, t)`` returns the state derivative.
    ``lipschitz_constant`` must upper-bound the Lipschitz constant of the
    field in state and control jointly, in the L1 norm, over the intended
    operating ranges; the test suite spot-checks declared constants by
    random finite differencing.

    ``flow`` is an optional compiled fast path with signature
    ``flow(state, control, duration, substep) -> (k+1, n) array`` that must
    agree with the generic RK4 integration of ``vector_field``.
    """

    state_dim: int
    control_dim: int
    control_bounds: np.ndarray
    vector_field: Callable[[np.ndarray, np.ndarray, float], np.ndarray]
    lipschitz_constant: float
    name: str = "model"
    flow: Callable | None = None

    def __post_init__(self):
        b = np.asarray(self.control_bounds, dtype=np.float64)
        if b.shape != (self.control_dim, 2) or np.any(b[:, 0] > b[:, 1]):
            raise ValueError("control_bounds must be (m, 2) with lo <= hi")
        if not (np.isfinite(self.lipschitz_constant) and self.lipschitz_constant > 0):
            raise ValueError("lipschitz_constant must be finite and > 0")
        b = b.copy()
        b.flags.writeable = False
        object.__setattr__(self, "control_bounds", b)

    def control_in_bounds(self, u: np.ndarray) -> bool:
        return bool(
            np.all(u >= self.control_bounds[:, 0]) and np.all(u <= self.control_bounds[:, 1])
        )


def _rk4_path(model: DynamicsModel, state: np.ndarray, u: np.ndarray, duration: float, substep: float) -> np.ndarray:
    """Generic RK4 sampling of the constant-control flow."""
    n = max(1, int(np.ceil(duration / substep - 1e-12)))
    dt = duration / n
    f = model.vector_field
    out = np.empty((n + 1, model.state_dim))
    s = np.array(state, dtype=np.float64)
    out[0] = s
    t = 0.0
    for i in range(n):
        k1 = f(s, u, t)
        k2 = f(s + 0.5 * dt * k1, u, t + 0.5 * dt)
        k3 = f(s + 0.5 * dt * k2, u, t + 0.5 * dt)
        k4 = f(s + dt * k3, u, t + dt)
        s = s + dt * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
        t += dt
        out[i + 1] = s
    return out


def propagate(
    model: DynamicsModel,
    state: np.ndarray,
    u: np.ndarray,
    duration: float,
    cfg: IntegratorConfig = IntegratorConfig(),
) -> tuple[np.ndarray, StatePath]:
    """Integrate the constant-control flow for ``duration`` seconds.

    Returns ``(terminal_state, path)``.  Deterministic for fixed inputs.
    Raises :class:`IntegrationBlowupError` if the flow leaves the finite
    floats; the error carries the last finite sample.
    """
    if duration <= 0 or not np.isfinite(duration):
        raise ValueError("duration must be finite and > 0")
    s = as_vector(state, model.state_dim, "state")
    uu = as_vector(u, model.control_dim, "control")
    if not model.control_in_bounds(uu):
        raise ValueError(f"control {uu} outside bounds {model.control_bounds}")
    if model.flow is not None:
        samples = model.flow(s, uu, duration, cfg.substep)
    else:
        samples = _rk4_path(model, s, uu, duration, cfg.substep)
    finite = np.isfinite(samples).all(axis=1)
    if not finite.all():
        bad = int(np.argmin(finite))
        raise IntegrationBlowupError(samples[max(0, bad - 1)])
    n = samples.shape[0] - 1
    if cfg.record_path:
        times = np.linspace(0.0, duration, n + 1)
        path = StatePath(times, samples)
    else:
        path = StatePath(np.array([0.0, duration]), samples[[0, -1]])
    return samples[-1].copy(), path


def simulate_sequence(
    model: DynamicsModel,
    state: np.ndarray,
    seq: ControlSequence,
    cfg: IntegratorConfig = IntegratorConfig(),
) -> tuple[StatePath, np.ndarray]:
    """Propagate a whole control sequence; returns ``(path, terminal_state)``.

    The path is the concatenation of the per-step flows; its time grid
    covers ``[0, sum(durations)]``.  An empty sequence yields the one-sample
    path at the initial state.
    """
    s = as_vector(state, model.state_dim, "state")
    if len(seq) == 0:
        return StatePath(np.array([0.0]), s[None, :]), s
    path = None
    for u, dt in seq.steps():
        s, piece = propagate(model, s, u, dt, cfg)
        path = piece if path is None else path.concat(piece)
    return path, s


def step_function_approx(phi: Callable[[float], np.ndarray], horizon: float, dt: float) -> ControlSequence:
    """Left-endpoint step-function approximation of a control signal.

    Produces ``floor(horizon/dt)`` steps, the i-th holding ``phi(i*dt)``
    for ``dt`` seconds.
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    if horizon < dt:
        raise ValueError("horizon must be at least dt")
    k = int(np.floor(horizon / dt + 1e-12))
    controls = np.asarray([np.atleast_1d(phi(i * dt)) for i in range(k)], dtype=np.float64)
    return ControlSequence(controls, np.full(k, dt))


# ---------------------------------------------------------------------------
# built-in models


@dataclass(frozen=True)
class CartPoleParams:
    """Physical constants of the cart-and-pole benchmark system."""

    mass_cart: float = 10.0
    mass_pole: float = 5.0
    inertia: float = 10.0
    length: float = 2.5
    gravity: float = 9.86

    def energy(self, state: np.ndarray) -> float:
        """Total mechanical energy; conserved along force-free motion."""
        _, v, th, om = state
        ml = self.mass_pole * self.length
        ke = (
            0.5 * (self.mass_cart + self.mass_pole) * v * v
            + ml * v * om * np.cos(th)
            + 0.5 * (self.inertia + ml * self.length) * om * om
        )
        pe = -ml * self.gravity * np.cos(th)
        return float(ke + pe)


# Upper bound on the L1 Lipschitz constant of the cart-pole field over the
# benchmark ranges (x in [0,60], v in [-12,12], any theta, Omega in
# [-2pi,2pi], F in [-300,300]), from dense finite-difference sampling of the
# Jacobian's max column sum (~66.7) plus margin.
CART_POLE_LIPSCHITZ = 70.0

#: Force range as printed with the benchmark system definition.
DEFAULT_FORCE_RANGE = (0.0, 300.0)


def cart_pole_vector_field(params: CartPoleParams):
    m, mc = params.mass_pole, params.mass_cart
    length, inertia, grav = params.length, params.inertia, params.gravity
    ml = m * length
    iml = inertia + m * length * length
    mm = mc + m

    def field(state: np.ndarray, control: np.ndarray, t: float) -> np.ndarray:
        _, v, th, om = state
        f = control[0]
        c, si = np.cos(th), np.sin(th)
        den = mm * iml - (ml * c) ** 2
        vdot = (iml * (f + ml * om * om * si) + ml * ml * c * si * grav) / den
        omdot = ((-ml * c) * (f + ml * om * om * si) + mm * (-m * grav * length * si)) / den
        return np.array([v, vdot, om, omdot])

    return field


def cart_pole_model(
    force_range: tuple[float, float] = DEFAULT_FORCE_RANGE,
    params: CartPoleParams = CartPoleParams(),
) -> DynamicsModel:
    """The cart-and-pole system with a compiled propagation fast path.

    State is ``[x, v, theta, Omega]`` with ``theta = 0`` at the hanging-down
    equilibrium and ``theta = pi`` upright.  The input is a horizontal force
    on the cart.
    """
    fast = partial(
        _kernels.cart_pole_flow,
        mass_cart=params.mass_cart,
        mass_pole=params.mass_pole,
        inertia=params.inertia,
        length=params.length,
        gravity=params.gravity,
    )
    return DynamicsModel(
        state_dim=4,
        control_dim=1,
        control_bounds=np.array([force_range]),
        vector_field=cart_pole_vector_field(params),
        lipschitz_constant=CART_POLE_LIPSCHITZ,
        name="cart_pole",
        flow=fast,
    )


def linear_model(
    drift: float = 1.0,
    gain: float = 1.0,
    control_bounds: tuple[float, float] = (-1.0, 1.0),
    dims: int = 1,
) -> DynamicsModel:
    """Decoupled linear dynamics ``x_i' = drift * x_i + gain * u_i``.

    The L1 Lipschitz constant is exactly ``max(|drift|, |gain|)`` (taken as
    1 when both vanish), which makes this the reference system for bound
    validation.  ``dims=1, drift=1, gain=1`` is the bound-validation model;
    ``drift=0`` gives a pure integrator for planner tests.
    """
    lp = max(abs(drift), abs(gain)) or 1.0
    fast = partial(_kernels.diagonal_linear_flow, drift=drift, gain=gain)

    def field(state: np.ndarray, control: np.ndarray, t: float) -> np.ndarray:
        return drift * state + gain * control

    return DynamicsModel(
        state_dim=dims,
        control_dim=dims,
        control_bounds=np.array([control_bounds] * dims),
        vector_field=field,
        lipschitz_constant=lp,
        name=f"linear_{drift:g}_{gain:g}",
        flow=fast,
    )
