import dataclasses

import numpy as np
import pytest

from covplan.core.factors import wrap_angle
from covplan.core.layout import Kind, landmark, pose
from covplan.core.runner import Simulation
from covplan.core.slam import SlamEstimator
from covplan.core.slam_update import MarginalTable, Strategy, needs_fallback, slam_step_update
from covplan.core.verify import scripted_loop
from covplan.core.world import SensorModel, goal_control


@pytest.fixture
def noise_free(small_config):
    small_config.sensor = dataclasses.replace(small_config.sensor, noise_scale=0.0)
    return small_config


def test_step_before_initialize_fails():
    with pytest.raises(RuntimeError):
        SlamEstimator(SensorModel()).step(np.zeros(3), [])


def test_first_step_only_adds_variables(small_config):
    _, first = Simulation.start(small_config)
    change = first.change
    assert first.index == 0
    assert change.prev_pose is None
    assert change.new_keys[0] == pose(0)
    assert all(k.kind == Kind.landmark for k in change.new_keys[1:])
    assert change.obs_keys == ()
    assert first.prior.dim == 0
    assert first.posterior.layout.keys == change.new_keys


def test_steps_chain_poses_and_reobserve_landmarks(small_config):
    run, first = Simulation.start(small_config)
    mapped = set(first.new_landmarks)
    for k in range(1, 6):
        step = run.move(goal_control(run.sim.pose, run.goal, small_config.world))
        assert step.index == k
        assert step.change.prev_pose == pose(k - 1)
        assert step.change.new_keys[0] == pose(k)
        assert set(step.reobserved) <= mapped
        assert not set(step.new_landmarks) & mapped
        mapped |= set(step.new_landmarks)
        assert set(run.estimator.mapped_landmarks()) == mapped
        assert step.posterior.dim == step.prior.dim + 3 + 2 * len(step.new_landmarks)


def test_noise_free_run_recovers_the_truth(noise_free):
    run, _ = Simulation.start(noise_free)
    for _ in range(8):
        run.move(goal_control(run.sim.pose, run.goal, noise_free.world))
        estimate = run.estimator.belief.value(run.estimator.current_pose)
        np.testing.assert_allclose(estimate, run.sim.pose, atol=1e-8)
    for key in run.estimator.mapped_landmarks():
        np.testing.assert_allclose(
            run.estimator.belief.value(key), run.world.landmarks[key.index], atol=1e-8
        )


def test_landmark_keys_follow_world_indices(small_config):
    run, first = Simulation.start(small_config)
    visible = run.world.visible(run.sim.pose, small_config.sensor.radius)
    assert first.new_landmarks == [landmark(int(i)) for i in visible]


@pytest.fixture
def loop_closure():
    estimator, closure = scripted_loop(seed=3)
    return estimator, closure


def moved_keys(closure, threshold):
    prior, posterior = closure.prior, closure.posterior
    moved = []
    for key in prior.layout:
        delta = posterior.value(key) - prior.linearization_point[prior.layout.slice(key)]
        if key.kind == Kind.pose:
            delta[2] = wrap_angle(delta[2])
        if np.linalg.norm(delta) > threshold:
            moved.append(key)
    return moved


def test_loop_closure_relinearizes_factors_of_moved_variables(loop_closure):
    estimator, closure = loop_closure
    moved = moved_keys(closure, estimator.solver.relin_threshold)
    assert len(moved) >= 8
    assert closure.report.relinearized == moved

    old = set(closure.prior.layout)
    expected = [
        f.label
        for f in estimator.graph.factors
        if set(f.keys) <= old and set(f.keys) & set(moved)
    ]
    assert [f.label for f in closure.relinearized_factors] == expected
    assert closure.change.a_minus.shape[0] == sum(f.dim for f in closure.relinearized_factors)
    assert closure.change.a_plus.shape == closure.change.a_minus.shape


def test_loop_closure_triggers_the_fallback(loop_closure):
    _, closure = loop_closure
    table = MarginalTable.from_belief(closure.prior)
    assert needs_fallback(closure.change, closure.prior.dim, 1.0)
    update = slam_step_update(table, closure.prior, closure.change, closure.posterior)
    assert update.fallback
    reference = MarginalTable.from_belief(closure.posterior)
    assert update.table.max_difference(reference) == 0.0


@pytest.mark.parametrize("strategy", list(Strategy))
def test_loop_closure_updates_match_without_fallback(loop_closure, strategy):
    _, closure = loop_closure
    table = MarginalTable.from_belief(closure.prior)
    reference = MarginalTable.from_belief(closure.posterior)
    update = slam_step_update(
        table, closure.prior, closure.change, closure.posterior, strategy, np.inf
    )
    assert not update.fallback
    scale = max(1.0, max(float(np.abs(b).max()) for b in reference.blocks.values()))
    assert reference.max_difference(update.table) <= 1e-8 * scale
