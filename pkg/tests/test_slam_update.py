import numpy as np
import pytest

from covplan.core.layout import StateLayout, pose, scalar
from covplan.core.runner import Simulation
from covplan.core.slam_update import (
    MarginalTable,
    SlamStepChange,
    Strategy,
    needs_fallback,
    slam_step_update,
)
from covplan.core.solver import SolverConfig
from covplan.core.world import goal_control


def run_steps(config, count):
    run, first = Simulation.start(config)
    steps = [first]
    for _ in range(count):
        steps.append(run.move(goal_control(run.sim.pose, run.goal, config.world)))
    return steps


@pytest.fixture
def relinearizing(small_config):
    small_config.solver = SolverConfig(relin_threshold=0.01)
    return small_config


@pytest.mark.parametrize("strategy", list(Strategy))
def test_incremental_marginals_match_recovery(relinearizing, strategy):
    for step in run_steps(relinearizing, 8)[1:]:
        table = MarginalTable.from_belief(step.prior)
        reference = MarginalTable.from_belief(step.posterior)
        update = slam_step_update(table, step.prior, step.change, step.posterior, strategy, np.inf)
        assert not update.fallback
        assert set(update.table.blocks) == set(step.posterior.layout)
        scale = max(1.0, max(float(np.abs(b).max()) for b in reference.blocks.values()))
        assert reference.max_difference(update.table) <= 1e-8 * scale


def test_strategies_agree(small_config):
    for step in run_steps(small_config, 6)[1:]:
        table = MarginalTable.from_belief(step.prior)
        args = (table, step.prior, step.change, step.posterior)
        two = slam_step_update(*args, Strategy.two_stage, np.inf).table
        one = slam_step_update(*args, "onestage", np.inf).table
        assert two.max_difference(one) <= 1e-8


def test_large_changes_fall_back_to_full_recovery(small_config):
    step = run_steps(small_config, 2)[-1]
    table = MarginalTable.from_belief(step.prior)
    update = slam_step_update(table, step.prior, step.change, step.posterior, fallback_ratio=0.0)
    assert update.fallback
    assert update.table.max_difference(MarginalTable.from_belief(step.posterior)) == 0.0


def test_fallback_rule():
    change = SlamStepChange(
        new_keys=(pose(1),),
        a_s_new=np.eye(3),
        prev_pose=pose(0),
        a_s_prev=-np.eye(3),
    )
    assert change.m == 3
    assert change.old_involved == [pose(0)]
    assert not needs_fallback(change, prior_dim=0, ratio=0.0)
    assert not needs_fallback(change, prior_dim=30, ratio=1.0)
    assert needs_fallback(change, prior_dim=30, ratio=0.05)


def test_marginal_table_difference():
    layout = StateLayout([scalar(0), scalar(1)])
    a = MarginalTable.from_covariance(layout, np.array([[2.0, 0.5], [0.5, 1.0]]))
    b = MarginalTable(layout, {scalar(0): np.array([[2.5]])})
    assert len(a) == 2
    assert a[scalar(1)][0, 0] == 1.0
    assert a.max_difference(b) == pytest.approx(0.5)
