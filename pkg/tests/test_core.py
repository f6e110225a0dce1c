import numpy as np
import pytest

from validtraj.core import (
    AgentState,
    Arena,
    PhysicalLimits,
    Scenario,
    Trajectory,
    in_collision_set,
    is_kinematically_feasible,
    is_valid,
    min_pair_distance,
    pairwise_distance,
    scenario_from_json,
    scenario_to_json,
    timestep_validity,
)


def _traj(states, dt=0.1):
    return Trajectory(np.asarray(states, dtype=np.float64), dt)


def _two_agents_at(distance, horizon=1):
    """Two stationary agents separated by `distance` at every timestep."""
    states = np.zeros((2, horizon, 6))
    states[1, :, 0] = distance
    return _traj(states)


class TestTrajectory:
    def test_shape_validation(self):
        with pytest.raises(ValueError):
            Trajectory(np.zeros((2, 3)))
        with pytest.raises(ValueError):
            Trajectory(np.zeros((2, 3, 5)))
        with pytest.raises(ValueError):
            Trajectory(np.zeros((0, 3, 6)))
        with pytest.raises(ValueError):
            Trajectory(np.zeros((1, 3, 6)), dt=0.0)
        bad = np.zeros((1, 1, 6))
        bad[0, 0, 0] = np.nan
        with pytest.raises(ValueError):
            Trajectory(bad)

    def test_views(self):
        states = np.arange(2 * 3 * 6, dtype=np.float64).reshape(2, 3, 6)
        traj = _traj(states)
        assert traj.n_agents == 2 and traj.horizon == 3
        np.testing.assert_array_equal(traj.positions, states[:, :, 0:2])
        np.testing.assert_array_equal(traj.velocities, states[:, :, 2:4])
        np.testing.assert_array_equal(traj.accelerations, states[:, :, 4:6])

    def test_states_are_frozen(self):
        traj = _traj(np.zeros((1, 2, 6)))
        with pytest.raises(ValueError):
            traj.states[0, 0, 0] = 1.0

    def test_slice_time(self):
        traj = _traj(np.arange(24, dtype=np.float64).reshape(1, 4, 6))
        sub = traj.slice_time(1, 3)
        assert sub.horizon == 2
        np.testing.assert_array_equal(sub.states, traj.states[:, 1:3])
        with pytest.raises(ValueError):
            traj.slice_time(3, 3)
        with pytest.raises(ValueError):
            traj.slice_time(-1, 2)

    def test_with_states_keeps_dt(self):
        traj = _traj(np.zeros((1, 2, 6)), dt=0.25)
        assert traj.with_states(np.ones((1, 2, 6))).dt == 0.25


def test_pairwise_distance_345_triangle():
    states = np.zeros((2, 1, 6))
    states[1, 0, 0:2] = (3.0, 4.0)
    traj = _traj(states)
    assert pairwise_distance(traj, 0, 1, 0) == pytest.approx(5.0)
    with pytest.raises(ValueError):
        pairwise_distance(traj, 1, 1, 0)
    with pytest.raises(IndexError):
        pairwise_distance(traj, 0, 1, 5)


def test_min_pair_distance_single_agent_is_inf():
    assert min_pair_distance(_traj(np.zeros((1, 3, 6)))) == float("inf")


def test_collision_is_strict():
    limits = PhysicalLimits(d_safe=2.0)
    assert not in_collision_set(_two_agents_at(2.0), limits)
    assert in_collision_set(_two_agents_at(2.0 - 1e-9), limits)
    assert not in_collision_set(_two_agents_at(2.5), limits)


def test_kinematic_bounds_are_inclusive():
    limits = PhysicalLimits(v_max=30.0, a_max=8.0)
    states = np.zeros((1, 1, 6))
    states[0, 0, 2] = 30.0
    states[0, 0, 4] = 8.0
    assert is_kinematically_feasible(_traj(states), limits)
    states[0, 0, 2] = 30.0 + 1e-9
    assert not is_kinematically_feasible(_traj(states), limits)
    states[0, 0, 2] = 0.0
    states[0, 0, 4] = 8.0 + 1e-9
    assert not is_kinematically_feasible(_traj(states), limits)


def test_validity_is_the_conjunction():
    limits = PhysicalLimits(d_safe=2.0, v_max=1.0)
    near = _two_agents_at(1.0)
    assert not is_valid(near, limits)
    fast = _two_agents_at(5.0).states.copy()
    fast[0, 0, 2] = 2.0
    assert not is_valid(_traj(fast), limits)
    assert is_valid(_two_agents_at(5.0), limits)


def test_timestep_validity_pattern():
    limits = PhysicalLimits(d_safe=2.0, v_max=10.0)
    states = np.zeros((2, 3, 6))
    states[1, :, 0] = (5.0, 1.0, 5.0)   # collide only at t=1
    states[0, 2, 2] = 11.0              # speeding at t=2
    flags = timestep_validity(_traj(states), limits)
    np.testing.assert_array_equal(flags, [True, False, False])


def test_scenario_json_round_trip_is_byte_identical():
    scenario = Scenario(
        kind="intersection",
        initial=np.array([[0.0, 0.0, 1.0, 0.0, 0.0, 0.0], [5.0, 0.0, -1.0, 0.0, 0.0, 0.0]]),
        limits=PhysicalLimits(),
        arena=Arena(-10.0, -10.0, 10.0, 10.0),
        seed=3,
        dt=0.1,
        horizon=12,
    )
    text = scenario_to_json(scenario)
    again = scenario_to_json(scenario_from_json(text))
    assert text == again
    assert text.endswith("\n")


def test_arena_and_limits_validation():
    with pytest.raises(ValueError):
        Arena(0.0, 0.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        PhysicalLimits(d_safe=-1.0)
    assert Arena(0.0, 0.0, 4.0, 5.0).area == pytest.approx(20.0)


def test_agent_state_array_round_trip():
    state = AgentState(1.0, 2.0, 3.0, 4.0, 5.0, 6.0)
    np.testing.assert_array_equal(state.as_array(), [1, 2, 3, 4, 5, 6])
    assert AgentState.from_array(state.as_array()) == state


def test_scenario_rejects_bad_inputs():
    good = np.zeros((1, 6))
    limits, arena = PhysicalLimits(), Arena(-1.0, -1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        Scenario(kind="freeway", initial=good, limits=limits, arena=arena, seed=0)
    with pytest.raises(ValueError):
        Scenario(kind="intersection", initial=np.zeros((1, 5)), limits=limits, arena=arena, seed=0)
    with pytest.raises(ValueError):
        Scenario(kind="intersection", initial=good, limits=limits, arena=arena, seed=0, horizon=0)
