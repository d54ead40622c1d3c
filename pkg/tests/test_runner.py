import dataclasses
import statistics
from pathlib import Path

import pytest

from covplan.core import runner
from covplan.core.errors import MethodDisagreementError
from covplan.core.planner import PlannerConfig
from covplan.core.ramdl import QueryKind
from covplan.core.runner import Simulation, planning_query, run_active, run_passive
from covplan.core.settings import load_scenario
from covplan.core.slam_update import MarginalTable, StepUpdate

SCENARIOS = Path(__file__).parents[1] / "scenarios"


def test_passive_run_records_every_step(small_config):
    log = run_passive(small_config)
    assert [r.step for r in log.steps] == list(range(small_config.steps))
    assert log.cross_check
    dims = [r.n for r in log.steps]
    assert dims == sorted(dims) and dims[1] > dims[0]
    assert log.steps[0].involved == 0
    for r in log.steps:
        assert set(r.timings) == set(small_config.methods)
        assert r.disagreement <= small_config.tolerance


def test_passive_runs_are_reproducible(small_config):
    a = run_passive(small_config)
    b = run_passive(small_config)
    assert [(r.n, r.m, r.involved) for r in a.steps] == [(r.n, r.m, r.involved) for r in b.steps]


def test_disagreeing_methods_stop_the_run(small_config, monkeypatch):
    small_config.methods = ["backsub", "twostage"]
    real = runner.slam_step_update

    def skewed(*args, **kwargs):
        update = real(*args, **kwargs)
        table = MarginalTable(
            update.table.layout, {k: 1.01 * b for k, b in update.table.blocks.items()}
        )
        return StepUpdate(table, update.fallback, update.workspace)

    monkeypatch.setattr(runner, "slam_step_update", skewed)
    log = runner.RunLog("passive", small_config.methods, cross_check=True)
    with pytest.raises(MethodDisagreementError) as exc:
        run_passive(small_config, log)
    assert exc.value.step == 1
    assert set(exc.value.errors) == {"twostage"}
    assert len(log.steps) == 2
    assert log.aborted


def test_active_run_agrees_every_step(small_config):
    small_config.steps = 2
    trees = []
    log = run_active(small_config, on_tree=lambda k, tree: trees.append((k, len(tree.leaves))))
    assert log.decisions_agreed == 2
    assert [k for k, _ in trees] == [0, 1]
    assert len(log.candidates) == sum(n for _, n in trees)
    first = log.steps[0]
    assert first.chosen is not None
    assert first.best_score == pytest.approx(
        next(c.score for c in log.candidates if c.step == 0 and c.candidate == first.chosen)
    )
    # executing a segment adds its planned poses
    assert log.steps[1].n > first.n


@pytest.mark.parametrize("objective", ["focused-lastpose", "focused-landmarks"])
def test_active_focused_objectives(small_config, objective):
    small_config.steps = 1
    log = run_active(small_config, objective=objective)
    assert log.decisions_agreed == 1


def test_planning_queries(small_config):
    run, _ = Simulation.start(small_config)
    assert planning_query("unfocused", run).kind == QueryKind.unfocused
    assert planning_query("focused-lastpose", run).kind == QueryKind.focused_new
    query = planning_query("focused-landmarks", run)
    assert query.kind == QueryKind.focused_old
    assert list(query.focus) == run.estimator.mapped_landmarks()

    small_config.world = dataclasses.replace(small_config.world, landmarks=0)
    empty, _ = Simulation.start(small_config)
    assert planning_query("focused-landmarks", empty).kind == QueryKind.unfocused


def test_run_files_are_byte_identical(small_config, tmp_path):
    small_config.steps = 2
    for name in ("a", "b"):
        run_passive(small_config).write(tmp_path / name / "passive", "h", small_config.seed)
        run_active(small_config).write(tmp_path / name / "active", "h", small_config.seed)
    for rel in ("passive/runlog.csv", "active/runlog.csv", "active/candidates.csv"):
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()


def test_fallback_steps_still_agree(small_config):
    small_config.fallback_ratio = 0.01
    log = run_passive(small_config)
    assert all(r.fallback for r in log.steps[1:])
    assert max(r.disagreement for r in log.steps) <= small_config.tolerance


@pytest.mark.slow
def test_incremental_recovery_outpaces_backsubstitution_on_large_states():
    config = load_scenario(SCENARIOS / "large_loop.yaml")
    log = run_passive(config)
    large = [r for r in log.steps if r.n >= 1500 and not r.fallback]
    assert len(large) >= 10
    backsub = statistics.median(r.timings["backsub"] for r in large)
    twostage = statistics.median(r.timings["twostage"] for r in large)
    assert backsub >= 5.0 * twostage


@pytest.mark.slow
@pytest.mark.parametrize("objective", ["unfocused", "focused-lastpose", "focused-landmarks"])
def test_tree_evaluation_outpaces_flat_on_large_candidate_sets(small_config, objective):
    small_config.planner = PlannerConfig()
    small_config.steps = 3
    sizes = []
    log = run_active(
        small_config, objective=objective, on_tree=lambda k, tree: sizes.append(len(tree.leaves))
    )
    assert min(sizes) >= 100
    assert log.decisions_agreed == small_config.steps
    flat = sum(r.timings["flat"] for r in log.steps)
    tree = sum(r.timings["tree"] for r in log.steps)
    assert tree < flat
