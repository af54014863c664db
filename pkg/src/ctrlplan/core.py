"""Domain types shared by the planners, the dynamics models and the benchmark.

States and controls are plain 1-D float64 arrays.  The types in this module
wrap them with the invariants the planners rely on: control sequences carry
strictly positive durations, state paths carry a strictly increasing time
grid starting at zero, and workspaces describe axis-aligned box obstacles in
a declared projection of the state space.

Angular state dimensions are stored unwrapped (the integrators see a smooth
coordinate) and are wrapped modulo 2*pi only where geometry is evaluated:
goal membership and obstacle containment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

TWO_PI = 2.0 * math.pi


class DimensionMismatchError(ValueError):
    """Raised when two objects disagree on a vector dimension."""


class DurationMismatchError(ValueError):
    """Raised when a path and a control sequence cover different time spans."""


def as_vector(x, dim: int | None = None, name: str = "vector") -> np.ndarray:
    """Coerce ``x`` to a finite, read-only 1-D float64 array.

    Raises ``ValueError`` on non-finite entries and
    ``DimensionMismatchError`` when ``dim`` is given and does not match.
    """
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} has non-finite entries: {v}")
    if dim is not None and v.shape[0] != dim:
        raise DimensionMismatchError(f"{name} has length {v.shape[0]}, expected {dim}")
    v = v.copy()
    v.flags.writeable = False
    return v


@dataclass(frozen=True)
class ControlSequence:
    """A piecewise-constant control signal.

    ``controls`` has shape ``(k, m)`` and ``durations`` shape ``(k,)`` with
    every duration strictly positive.  The empty sequence (``k == 0``) is
    allowed; it represents the trajectory of the tree root.
    """

    controls: np.ndarray
    durations: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.controls, dtype=np.float64)
        d = np.asarray(self.durations, dtype=np.float64)
        if c.ndim != 2:
            raise ValueError(f"controls must be (k, m), got shape {c.shape}")
        if d.shape != (c.shape[0],):
            raise ValueError("durations must have one entry per control")
        if not np.all(np.isfinite(c)):
            raise ValueError("controls contain non-finite entries")
        if c.shape[0] and (not np.all(np.isfinite(d)) or np.any(d <= 0.0)):
            raise ValueError("durations must be finite and > 0")
        c = c.copy()
        d = d.copy()
        c.flags.writeable = False
        d.flags.writeable = False
        object.__setattr__(self, "controls", c)
        object.__setattr__(self, "durations", d)

    @classmethod
    def from_steps(cls, steps: Iterable[tuple[Sequence[float], float]], control_dim: int | None = None) -> "ControlSequence":
        steps = list(steps)
        if not steps:
            m = 0 if control_dim is None else control_dim
            return cls(np.zeros((0, m)), np.zeros(0))
        controls = np.asarray([np.atleast_1d(u) for u, _ in steps], dtype=np.float64)
        durations = np.asarray([t for _, t in steps], dtype=np.float64)
        return cls(controls, durations)

    def __len__(self) -> int:
        return self.controls.shape[0]

    @property
    def control_dim(self) -> int:
        return self.controls.shape[1]

    @property
    def total_duration(self) -> float:
        return float(self.durations.sum())

    def steps(self):
        for i in range(len(self)):
            yield self.controls[i], float(self.durations[i])

    def concat(self, other: "ControlSequence") -> "ControlSequence":
        if len(self) and len(other) and self.control_dim != other.control_dim:
            raise DimensionMismatchError("control dimensions differ")
        if not len(self):
            return other
        if not len(other):
            return self
        return ControlSequence(
            np.vstack([self.controls, other.controls]),
            np.concatenate([self.durations, other.durations]),
        )


@dataclass(frozen=True)
class StatePath:
    """A sampled state-space path on a strictly increasing time grid.

    ``times[0]`` is always 0 and every state is finite.  Paths produced by
    the integrator sample the flow at the integration substeps, so the grid
    spacing is the integrator substep unless a caller resamples.
    """

    times: np.ndarray
    states: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=np.float64)
        s = np.asarray(self.states, dtype=np.float64)
        if t.ndim != 1 or s.ndim != 2 or s.shape[0] != t.shape[0]:
            raise ValueError("times must be (n,), states (n, dim)")
        if t.shape[0] == 0:
            raise ValueError("a path needs at least one sample")
        if abs(t[0]) > 1e-12:
            raise ValueError(f"paths start at time 0, got {t[0]}")
        if np.any(np.diff(t) <= 0.0):
            raise ValueError("path times must be strictly increasing")
        if not np.all(np.isfinite(s)):
            raise ValueError("path states contain non-finite entries")
        t = t.copy()
        s = s.copy()
        t.flags.writeable = False
        s.flags.writeable = False
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "states", s)

    def __len__(self) -> int:
        return self.times.shape[0]

    @property
    def state_dim(self) -> int:
        return self.states.shape[1]

    @property
    def duration(self) -> float:
        return float(self.times[-1])

    @property
    def terminal_state(self) -> np.ndarray:
        return self.states[-1]

    def concat(self, other: "StatePath") -> "StatePath":
        """Join ``other`` onto the end of this path, shifting its time grid.

        The first sample of ``other`` is dropped; it must coincide with this
        path's terminal state.
        """
        if self.state_dim != other.state_dim:
            raise DimensionMismatchError("state dimensions differ")
        if not np.allclose(other.states[0], self.states[-1], rtol=0.0, atol=1e-9):
            raise ValueError("paths are not contiguous")
        times = np.concatenate([self.times, other.times[1:] + self.times[-1]])
        states = np.vstack([self.states, other.states[1:]])
        return StatePath(times, states)


@dataclass(frozen=True)
class Workspace:
    """State bounds, box obstacles and the goal region.

    ``state_bounds`` and ``goal`` are ``(n, 2)`` arrays of closed intervals.
    ``obstacles`` is ``(n_obs, len(projection), 2)``: each obstacle is an
    axis-aligned box over the state dimensions listed in ``projection``.
    Dimensions listed in ``angular_dims`` are compared modulo 2*pi, both for
    goal membership and obstacle containment; their obstacle and goal
    intervals must be given inside ``[0, 2*pi]``.
    """

    state_bounds: np.ndarray
    goal: np.ndarray
    obstacles: np.ndarray = field(default_factory=lambda: np.zeros((0, 0, 2)))
    projection: tuple[int, ...] = ()
    angular_dims: tuple[int, ...] = ()

    def __post_init__(self):
        bounds = np.asarray(self.state_bounds, dtype=np.float64)
        goal = np.asarray(self.goal, dtype=np.float64)
        obs = np.asarray(self.obstacles, dtype=np.float64)
        if bounds.ndim != 2 or bounds.shape[1] != 2:
            raise ValueError("state_bounds must be (n, 2)")
        n = bounds.shape[0]
        if goal.shape != (n, 2):
            raise ValueError("goal must be (n, 2)")
        if np.any(bounds[:, 0] > bounds[:, 1]):
            raise ValueError("empty state bounds interval")
        if np.any(goal[:, 0] > goal[:, 1]):
            raise ValueError("empty goal interval")
        proj = tuple(int(d) for d in self.projection)
        ang = tuple(sorted(int(d) for d in self.angular_dims))
        if any(d < 0 or d >= n for d in proj + ang):
            raise ValueError("projection/angular dimension out of range")
        if obs.size == 0:
            obs = np.zeros((0, len(proj), 2))
        if obs.ndim != 3 or obs.shape[1] != len(proj) or obs.shape[2] != 2:
            raise ValueError("obstacles must be (n_obs, len(projection), 2)")
        for k, d in enumerate(proj):
            lo, hi = (0.0, TWO_PI) if d in ang else (bounds[d, 0], bounds[d, 1])
            if obs.shape[0] and (obs[:, k, 0].min() < lo - 1e-9 or obs[:, k, 1].max() > hi + 1e-9):
                raise ValueError(f"obstacle interval outside bounds in dimension {d}")
        # the goal must intersect the bounds in every non-angular dimension
        for d in range(n):
            if d in ang:
                continue
            if goal[d, 1] < bounds[d, 0] or goal[d, 0] > bounds[d, 1]:
                raise ValueError(f"goal does not intersect state bounds in dimension {d}")
        for arr in (bounds, goal, obs):
            arr.flags.writeable = False
        object.__setattr__(self, "state_bounds", bounds)
        object.__setattr__(self, "goal", goal)
        object.__setattr__(self, "obstacles", obs)
        object.__setattr__(self, "projection", proj)
        object.__setattr__(self, "angular_dims", ang)

    @property
    def state_dim(self) -> int:
        return self.state_bounds.shape[0]


@dataclass(frozen=True)
class CostFunctional:
    """A running cost rate plus its Lipschitz constant w.r.t. path distance.

    ``running_cost(state, control)`` returns a nonnegative cost rate
    (cost per second).  ``lipschitz_constant`` is the constant used by the
    cost-gap bound in :mod:`ctrlplan.analysis`; it is supplied by the user,
    not estimated.  ``state_independent=True`` declares that the rate
    ignores the state, letting integrators evaluate edge costs in closed
    form (rate times duration, which the trapezoidal rule reproduces).
    """

    running_cost: Callable[[np.ndarray, np.ndarray], float]
    lipschitz_constant: float = 1.0
    state_independent: bool = False

    def __post_init__(self):
        if not (np.isfinite(self.lipschitz_constant) and self.lipschitz_constant > 0):
            raise ValueError("lipschitz_constant must be finite and > 0")


def quadratic_control_cost(control_weights, time_weight: float, lipschitz_constant: float = 1.0) -> CostFunctional:
    """Cost rate ``sum_i w_i * u_i**2 + time_weight``, independent of state."""
    w = as_vector(control_weights, name="control_weights")
    tw = float(time_weight)
    if tw < 0 or np.any(w < 0):
        raise ValueError("cost weights must be nonnegative")

    def rate(state: np.ndarray, u: np.ndarray) -> float:
        return float(np.dot(w, u * u) + tw)

    return CostFunctional(rate, lipschitz_constant, state_independent=True)


# ---------------------------------------------------------------------------
# operations


def epsilon_distance(a: ControlSequence, b: ControlSequence) -> float:
    """Maximum per-step L1 distance between two control sequences.

    The shorter sequence is zero-padded, so sequences of different lengths
    are always comparable.  This is a pseudometric on padded sequences.
    """
    if len(a) and len(b) and a.control_dim != b.control_dim:
        raise DimensionMismatchError("control dimensions differ")
    k = max(len(a), len(b))
    if k == 0:
        return 0.0
    m = a.control_dim if len(a) else b.control_dim
    pa = np.zeros((k, m))
    pb = np.zeros((k, m))
    if len(a):
        pa[: len(a)] = a.controls
    if len(b):
        pb[: len(b)] = b.controls
    return float(np.abs(pa - pb).sum(axis=1).max())


def wrap_angle(x, lo: float = 0.0):
    """Wrap ``x`` into ``[lo, lo + 2*pi)``."""
    return (x - lo) % TWO_PI + lo


def in_goal(state: np.ndarray, ws: Workspace) -> bool:
    """True iff every coordinate lies in its closed goal interval.

    Angular coordinates are compared modulo 2*pi: the state value is wrapped
    into ``[lo, lo + 2*pi)`` before testing against ``hi``.
    """
    s = np.asarray(state, dtype=np.float64)
    if s.shape != (ws.state_dim,):
        raise DimensionMismatchError(f"state has shape {s.shape}, expected ({ws.state_dim},)")
    for d in range(ws.state_dim):
        lo, hi = ws.goal[d]
        v = wrap_angle(s[d], lo) if d in ws.angular_dims else s[d]
        if v < lo or v > hi:
            return False
    return True


def _dyadic_subdivide(path: StatePath, resolution: float) -> np.ndarray:
    """Sample the path at spacing <= resolution, endpoint-inclusive.

    Each segment is split into the smallest power-of-two number of pieces
    that meets the spacing.  Power-of-two splitting makes the sample set at
    a finer resolution a superset of the sample set at a coarser one, which
    is what makes collision checking monotone in the resolution.
    """
    t = path.times
    s = path.states
    dt = np.diff(t)
    if dt.size == 0 or np.all(dt <= resolution * (1.0 + 1e-12)):
        return s
    pieces = []
    for i in range(dt.size):
        k = 1
        while dt[i] / k > resolution * (1.0 + 1e-12):
            k *= 2
        if k == 1:
            pieces.append(s[i : i + 1])
        else:
            frac = np.arange(k, dtype=np.float64)[:, None] / k
            pieces.append(s[i] + frac * (s[i + 1] - s[i]))
    pieces.append(s[-1:])
    return np.vstack(pieces)


def is_collision_free(path: StatePath, ws: Workspace, resolution: float) -> bool:
    """Check a path against state bounds and obstacle boxes.

    The continuous edge is sampled at spacing at most ``resolution``
    (linearly interpolating between recorded path samples, endpoints
    included).  A sampled state collides when it leaves the closed state
    bounds or lands inside (boundary included) any obstacle box.  When the
    check returns False at some resolution it returns False at every finer
    resolution.
    """
    if resolution <= 0:
        raise ValueError("resolution must be > 0")
    if path.state_dim != ws.state_dim:
        raise DimensionMismatchError("path/workspace dimension mismatch")
    pts = _dyadic_subdivide(path, resolution)
    bounds = ws.state_bounds
    for d in range(ws.state_dim):
        if d in ws.angular_dims:
            continue
        col = pts[:, d]
        if col.min() < bounds[d, 0] or col.max() > bounds[d, 1]:
            return False
    if ws.obstacles.shape[0]:
        proj = np.empty((pts.shape[0], len(ws.projection)))
        for k, d in enumerate(ws.projection):
            col = pts[:, d]
            proj[:, k] = col % TWO_PI if d in ws.angular_dims else col
        for box in ws.obstacles:
            inside = np.ones(pts.shape[0], dtype=bool)
            for k in range(box.shape[0]):
                inside &= (proj[:, k] >= box[k, 0]) & (proj[:, k] <= box[k, 1])
                if not inside.any():
                    break
            if inside.any():
                return False
    return True


def path_cost(path: StatePath, controls: ControlSequence, cf: CostFunctional) -> float:
    """Integrate the running cost along a path by the trapezoidal rule.

    The quadrature uses the path's own sample grid (the integrator's
    substeps), with the control held at the step value over each step, so
    the result is deterministic and additive over concatenation.  The path
    duration must equal the total control duration.
    """
    total = controls.total_duration
    if abs(path.duration - total) > 1e-9 * max(1.0, abs(total)):
        raise DurationMismatchError(
            f"path covers {path.duration} s but controls cover {total} s"
        )
    if len(controls) == 0:
        return 0.0
    t = path.times
    cost = 0.0
    boundaries = np.concatenate([[0.0], np.cumsum(controls.durations)])
    idx = np.searchsorted(t, boundaries - 1e-9, side="left")
    idx[-1] = len(t) - 1
    for i in range(len(controls)):
        u = controls.controls[i]
        a, b = idx[i], idx[i + 1]
        if b <= a:
            continue
        rates = np.array([cf.running_cost(path.states[j], u) for j in range(a, b + 1)])
        cost += float(np.trapezoid(rates, t[a : b + 1]))
    return cost
