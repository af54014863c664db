import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctrlplan.core import (
    ControlSequence,
    DimensionMismatchError,
    DurationMismatchError,
    StatePath,
    Workspace,
    epsilon_distance,
    in_goal,
    is_collision_free,
    path_cost,
    quadratic_control_cost,
)

TWO_PI = 2.0 * math.pi


def seq(*steps):
    return ControlSequence.from_steps([(np.atleast_1d(u), d) for u, d in steps])


# ---------------------------------------------------------------------------
# epsilon_distance


def test_epsilon_distance_identity():
    a = seq((1.0, 0.5), (2.0, 0.5), (-0.3, 1.0))
    assert epsilon_distance(a, a) == 0.0


def test_epsilon_distance_zero_padding():
    a = seq((1.0, 1.0), (2.0, 1.0))
    b = seq((1.0, 1.0))
    # the shorter sequence is padded with zero controls
    assert epsilon_distance(a, b) == 2.0


def test_epsilon_distance_l1_hand_value():
    a = ControlSequence(np.array([[0.3, 0.4]]), np.array([1.0]))
    b = ControlSequence(np.array([[0.1, 0.1]]), np.array([1.0]))
    assert epsilon_distance(a, b) == pytest.approx(0.5, abs=1e-15)


def test_epsilon_distance_dimension_mismatch():
    a = ControlSequence(np.array([[1.0, 2.0]]), np.array([1.0]))
    b = ControlSequence(np.array([[1.0]]), np.array([1.0]))
    with pytest.raises(DimensionMismatchError):
        epsilon_distance(a, b)


@st.composite
def sequences(draw, m=2):
    k = draw(st.integers(0, 4))
    vals = draw(
        st.lists(
            st.lists(st.floats(-5, 5, allow_nan=False), min_size=m, max_size=m),
            min_size=k,
            max_size=k,
        )
    )
    controls = np.asarray(vals, dtype=float).reshape(k, m)
    return ControlSequence(controls, np.ones(k))


@given(sequences(), sequences(), sequences())
@settings(max_examples=200, deadline=None)
def test_epsilon_distance_is_pseudometric(a, b, c):
    dab = epsilon_distance(a, b)
    dba = epsilon_distance(b, a)
    assert dab == dba
    assert dab >= 0.0
    assert epsilon_distance(a, c) <= dab + epsilon_distance(b, c) + 1e-12


# ---------------------------------------------------------------------------
# workspace geometry

CART_GOAL = np.array(
    [[48.0, 52.0], [-4.0, 4.0], [math.pi - math.radians(10), math.pi + math.radians(10)], [-3.14, 3.14]]
)


@pytest.fixture
def cart_ws():
    return Workspace(
        state_bounds=np.array([[0.0, 60.0], [-12.0, 12.0], [0.0, TWO_PI], [-TWO_PI, TWO_PI]]),
        goal=CART_GOAL,
        obstacles=np.array([[[18.0, 24.0], [1.9, 4.4]]]),
        projection=(0, 2),
        angular_dims=(2,),
    )


def test_in_goal_upright_center(cart_ws):
    assert in_goal(np.array([50.0, 0.0, math.pi, 0.0]), cart_ws)


def test_in_goal_initial_state_is_not_goal(cart_ws):
    assert not in_goal(np.zeros(4), cart_ws)


def test_in_goal_wraps_full_turns(cart_ws):
    assert in_goal(np.array([50.0, 0.0, math.pi + TWO_PI, 0.0]), cart_ws)
    assert in_goal(np.array([50.0, 0.0, math.pi - 6 * TWO_PI, 0.0]), cart_ws)


@given(st.integers(-5, 5), st.floats(-0.15, 0.15))
@settings(max_examples=100, deadline=None)
def test_in_goal_invariant_under_full_turns(k, dth):
    ws = Workspace(
        state_bounds=np.array([[0.0, 60.0], [-12.0, 12.0], [0.0, TWO_PI], [-TWO_PI, TWO_PI]]),
        goal=CART_GOAL,
        obstacles=np.zeros((0, 0, 2)),
        projection=(0, 2),
        angular_dims=(2,),
    )
    base = np.array([50.0, 0.0, math.pi + dth, 0.0])
    shifted = base.copy()
    shifted[2] += k * TWO_PI
    assert in_goal(base, ws) == in_goal(shifted, ws)


def test_workspace_rejects_goal_outside_bounds():
    with pytest.raises(ValueError):
        Workspace(state_bounds=np.array([[0.0, 1.0]]), goal=np.array([[5.0, 6.0]]))


def test_workspace_rejects_obstacle_outside_bounds():
    with pytest.raises(ValueError):
        Workspace(
            state_bounds=np.array([[0.0, 1.0]]),
            goal=np.array([[0.5, 0.8]]),
            obstacles=np.array([[[2.0, 3.0]]]),
            projection=(0,),
        )


# ---------------------------------------------------------------------------
# collision checking


def straight_path(a, b, n=2):
    a, b = np.atleast_1d(a), np.atleast_1d(b)
    frac = np.linspace(0.0, 1.0, n)[:, None]
    return StatePath(np.linspace(0.0, 1.0, n), a + frac * (b - a))


@pytest.fixture
def box_ws():
    return Workspace(
        state_bounds=np.array([[0.0, 10.0], [0.0, 10.0]]),
        goal=np.array([[9.0, 10.0], [9.0, 10.0]]),
        obstacles=np.array([[[4.0, 6.0], [4.0, 6.0]]]),
        projection=(0, 1),
    )


def test_free_path_is_free(box_ws):
    assert is_collision_free(straight_path([1.0, 1.0], [2.0, 9.0], 20), box_ws, 0.05)


def test_sample_inside_obstacle_collides(box_ws):
    assert not is_collision_free(straight_path([1.0, 1.0], [5.0, 5.0], 20), box_ws, 0.05)


def test_violation_between_coarse_samples_found_at_fine_resolution(box_ws):
    # two samples straddling the obstacle: the coarse check sees only free
    # endpoints, the fine check interpolates through the box
    path = straight_path([1.0, 5.0], [9.0, 5.0], 2)
    assert is_collision_free(path, box_ws, 1.0)
    assert not is_collision_free(path, box_ws, 0.1)


def test_collision_check_monotone_in_resolution(box_ws):
    rng = np.random.default_rng(3)
    resolutions = [0.8, 0.4, 0.2, 0.1, 0.05, 0.02]
    for _ in range(50):
        path = straight_path(rng.uniform(0, 10, 2), rng.uniform(0, 10, 2), rng.integers(2, 6))
        results = [is_collision_free(path, box_ws, r) for r in resolutions]
        # once False it must stay False at all finer resolutions
        for coarse, fine in zip(results, results[1:]):
            if not coarse:
                assert not fine


def test_out_of_bounds_collides(box_ws):
    assert not is_collision_free(straight_path([1.0, 1.0], [1.0, 11.0], 30), box_ws, 0.05)


def test_angular_obstacle_wraps(cart_ws):
    # theta = 3.0 + 2*pi lies inside the obstacle's angular band after wrap
    s = np.array([20.0, 0.0, 3.0 + TWO_PI, 0.0])
    path = StatePath(np.array([0.0]), s[None, :])
    assert not is_collision_free(path, cart_ws, 0.1)


# ---------------------------------------------------------------------------
# path cost

CART_COST = quadratic_control_cost([1.0], 1000.0)


def test_path_cost_zero_force_is_time_cost():
    path = straight_path([0.0, 0.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0], 101)
    controls = seq(([0.0], 1.0))
    assert path_cost(path, controls, CART_COST) == pytest.approx(1000.0, rel=1e-12)


def test_path_cost_constant_force():
    path = straight_path([0.0] * 4, [1.0, 0.0, 0.0, 0.0], 101)
    controls = seq(([100.0], 1.0))
    assert path_cost(path, controls, CART_COST) == pytest.approx(11000.0, rel=1e-12)


def test_path_cost_piecewise_adds_segments():
    times = np.linspace(0.0, 2.0, 201)
    path = StatePath(times, np.zeros((201, 4)))
    controls = seq(([0.0], 1.0), ([100.0], 1.0))
    assert path_cost(path, controls, CART_COST) == pytest.approx(12000.0, rel=1e-12)


def test_path_cost_duration_mismatch():
    path = straight_path([0.0] * 4, [1.0, 0.0, 0.0, 0.0], 11)
    with pytest.raises(DurationMismatchError):
        path_cost(path, seq(([0.0], 2.0)), CART_COST)


@given(st.floats(0.1, 2.0), st.floats(0.1, 2.0), st.floats(-3, 3), st.floats(-3, 3))
@settings(max_examples=50, deadline=None)
def test_path_cost_additive_over_concatenation(d1, d2, u1, u2):
    cf = quadratic_control_cost([2.0], 5.0)

    def piece(duration, n=33):
        return StatePath(np.linspace(0.0, duration, n), np.zeros((n, 1)))

    p1, p2 = piece(d1), piece(d2)
    c1 = path_cost(p1, seq(([u1], d1)), cf)
    c2 = path_cost(p2, seq(([u2], d2)), cf)
    whole = path_cost(p1.concat(p2), seq(([u1], d1), ([u2], d2)), cf)
    assert whole == pytest.approx(c1 + c2, rel=1e-9)
