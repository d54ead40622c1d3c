import numpy as np
import pytest

from covplan.core.factors import range_bearing, wrap_angle
from covplan.core.world import (
    SensorModel,
    SimState,
    WorldConfig,
    WorldModel,
    advance_goal,
    goal_control,
    observe,
    step_world,
)

CONFIG = WorldConfig(width=200.0, height=100.0, landmarks=30, goals=5)


def test_world_generation_is_seeded():
    a = WorldModel.generate(CONFIG, 3)
    b = WorldModel.generate(CONFIG, 3)
    np.testing.assert_array_equal(a.landmarks, b.landmarks)
    np.testing.assert_array_equal(a.goals, b.goals)
    assert not np.array_equal(a.landmarks, WorldModel.generate(CONFIG, 4).landmarks)


def test_world_layout():
    world = WorldModel.generate(CONFIG, 0)
    assert world.landmarks.shape == (30, 2)
    assert np.all(world.landmarks >= 0.0)
    assert np.all(world.landmarks[:, 0] <= 200.0) and np.all(world.landmarks[:, 1] <= 100.0)
    assert world.goals.shape == (5, 2)
    np.testing.assert_array_equal(world.start[:2], world.goals[-1])
    to_first = world.goals[0] - world.goals[-1]
    assert world.start[2] == pytest.approx(np.arctan2(to_first[1], to_first[0]))


def test_visible_landmarks_are_within_radius():
    world = WorldModel.generate(CONFIG, 1)
    here = np.array([100.0, 50.0, 0.0])
    seen = world.visible(here, 30.0)
    d = np.hypot(*(world.landmarks - here[:2]).T)
    np.testing.assert_array_equal(seen, np.flatnonzero(d <= 30.0))
    assert list(seen) == sorted(seen)


def test_noise_free_observations_are_exact():
    world = WorldModel.generate(CONFIG, 2)
    sensor = SensorModel(radius=80.0, noise_scale=0.0)
    here = np.array([60.0, 40.0, 0.3])
    obs = observe(world, here, sensor, np.random.default_rng(0))
    assert [o.landmark for o in obs] == list(world.visible(here, 80.0))
    for o in obs:
        np.testing.assert_allclose(o.measured, range_bearing(here, world.landmarks[o.landmark]))


def test_step_world_moves_by_the_control():
    world = WorldModel.generate(CONFIG, 2)
    sensor = SensorModel(noise_scale=0.0)
    state = SimState.start(world, 2)
    start = state.pose.copy()
    truth, odometry, _ = step_world(state, np.array([5.0, 0.0, 0.1]), world, sensor)
    np.testing.assert_allclose(odometry, [5.0, 0.0, 0.1])
    assert truth[0] == pytest.approx(start[0] + 5.0 * np.cos(start[2]))
    assert truth[1] == pytest.approx(start[1] + 5.0 * np.sin(start[2]))
    assert truth[2] == pytest.approx(wrap_angle(start[2] + 0.1))
    assert state.steps == 1


def test_step_world_rejects_bad_controls():
    world = WorldModel.generate(CONFIG, 0)
    state = SimState.start(world, 0)
    with pytest.raises(ValueError):
        step_world(state, np.array([np.nan, 0.0, 0.0]), world, SensorModel())


def test_goal_control_bounds_the_turn():
    config = WorldConfig(step_length=10.0, max_turn=0.5)
    behind = goal_control(np.array([0.0, 0.0, 0.0]), np.array([-50.0, 1.0]), config)
    assert behind[2] == pytest.approx(0.5)
    assert np.hypot(behind[0], behind[1]) == pytest.approx(10.0)
    close = goal_control(np.array([0.0, 0.0, 0.0]), np.array([4.0, 0.0]), config)
    np.testing.assert_allclose(close, [4.0, 0.0, 0.0], atol=1e-12)


def test_goals_advance_cyclically():
    world = WorldModel.generate(CONFIG, 0)
    state = SimState.start(world, 0)
    state.goal_index = len(world.goals) - 1
    advance_goal(state, world, np.array([*world.goals[-1], 0.0]), reach=1.0)
    assert state.goal_index == 0
    advance_goal(state, world, np.array([*world.goals[-1], 0.0]), reach=1.0)
    assert state.goal_index == 0


@pytest.mark.parametrize(
    "kwargs",
    [{"radius": 0.0}, {"range_std": 0.0}, {"odometry_std": (0.5, -1.0, 0.02)}, {"noise_scale": -1}],
)
def test_sensor_model_validation(kwargs):
    with pytest.raises(ValueError):
        SensorModel(**kwargs)
