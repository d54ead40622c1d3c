"""Passive covariance-recovery and active planning experiments."""

import time
from contextlib import nullcontext
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from rich.console import Console
from rich.progress import Progress, SpinnerColumn, TextColumn

from covplan.core.errors import DecisionMismatchError, MethodDisagreementError
from covplan.core.factors import between
from covplan.core.fgp import FGPTree, build_trajectory_tree, evaluate_tree
from covplan.core.layout import total_dim
from covplan.core.planner import CandidateAction, assemble_objective, generate_candidates
from covplan.core.ramdl import FocusedQuery, evaluate_candidates_flat
from covplan.core.runlog import CandidateRecord, RunLog, StepRecord
from covplan.core.settings import ScenarioConfig
from covplan.core.slam import SlamEstimator, SlamStep
from covplan.core.slam_update import MarginalTable, Strategy, needs_fallback, slam_step_update
from covplan.core.world import (
    SimState,
    WorldModel,
    advance_goal,
    goal_control,
    observe,
    step_world,
)

console = Console()

BASELINES = ("recursive", "backsub")
INCREMENTAL = {"twostage": Strategy.two_stage, "onestage": Strategy.one_stage}


@dataclass
class Simulation:
    """World, simulator state and estimator of one run."""

    world: WorldModel
    sim: SimState
    estimator: SlamEstimator
    config: ScenarioConfig

    @classmethod
    def start(cls, config: ScenarioConfig) -> tuple["Simulation", SlamStep]:
        world = WorldModel.generate(config.world, config.seed)
        sim = SimState.start(world, config.seed)
        estimator = SlamEstimator(config.sensor, config.solver)
        first = estimator.initialize(sim.pose, observe(world, sim.pose, config.sensor, sim.rng))
        return cls(world, sim, estimator, config), first

    @property
    def goal(self) -> np.ndarray:
        return self.world.goals[self.sim.goal_index]

    def move(self, control: np.ndarray) -> SlamStep:
        _, odometry, observations = step_world(
            self.sim, control, self.world, self.config.sensor
        )
        step = self.estimator.step(odometry, observations)
        advance_goal(self.sim, self.world, self.sim.pose, self.config.planner.goal_reach)
        return step


def _progress(quiet: bool):
    if quiet:
        return nullcontext(None)
    return Progress(
        SpinnerColumn(), TextColumn("[progress.description]{task.description}"), console=console
    )


# ============================================================================
# Passive
# ============================================================================


def _recover(
    step: SlamStep, tables: dict[str, MarginalTable], config: ScenarioConfig
) -> tuple[dict[str, MarginalTable], dict[str, float], bool]:
    """Marginals after one step by every enabled method, with wall times."""
    out: dict[str, MarginalTable] = {}
    timings: dict[str, float] = {}
    fallback = needs_fallback(step.change, step.prior.dim, config.fallback_ratio)
    for method in config.methods:
        start = time.perf_counter()
        if method in BASELINES:
            out[method] = MarginalTable.from_belief(step.posterior, method)
        elif step.prior.dim == 0:
            # nothing to update from on the first step
            out[method] = MarginalTable.from_belief(step.posterior, "backsub")
        else:
            update = slam_step_update(
                tables[method],
                step.prior,
                step.change,
                step.posterior,
                INCREMENTAL[method],
                config.fallback_ratio,
            )
            out[method] = update.table
            fallback = update.fallback
        timings[method] = time.perf_counter() - start
    return out, timings, fallback


def _disagreement(tables: dict[str, MarginalTable], methods: list[str]) -> dict[str, float]:
    reference = tables[methods[0]]
    return {m: reference.max_difference(tables[m]) for m in methods[1:]}


def run_passive(
    config: ScenarioConfig, log: Optional[RunLog] = None, quiet: bool = True
) -> RunLog:
    """Follow the goal route and recover every marginal each step by each enabled method.

    Raises MethodDisagreementError when two methods differ by more than
    ``config.tolerance`` on any marginal block; ``log`` keeps the steps run so far.
    """
    methods = list(config.methods)
    log = log if log is not None else RunLog("passive", methods, cross_check=len(methods) > 1)
    run, step = Simulation.start(config)
    tables: dict[str, MarginalTable] = {}

    with _progress(quiet) as progress:
        task = progress.add_task("Passive run...", total=None) if progress else None
        for k in range(config.steps):
            if k > 0:
                step = run.move(goal_control(run.sim.pose, run.goal, config.world))
            tables, timings, fallback = _recover(step, tables, config)
            errors = _disagreement(tables, methods)
            worst = max(errors.values(), default=None)
            log.append(
                StepRecord(
                    step=k,
                    n=step.posterior.dim,
                    m=step.change.m,
                    involved=total_dim(step.change.old_involved),
                    relinearized_poses=step.report.relinearized_poses,
                    relinearized_landmarks=step.report.relinearized_landmarks,
                    fallback=fallback,
                    disagreement=worst,
                    timings=timings,
                )
            )
            if worst is not None and worst > config.tolerance:
                log.aborted = f"method disagreement at step {k}"
                raise MethodDisagreementError(k, errors, config.tolerance)
            if progress:
                progress.update(
                    task, description=f"Step {k + 1}/{config.steps} (n={step.posterior.dim})"
                )
    return log


# ============================================================================
# Active
# ============================================================================


def planning_query(objective: str, run: Simulation) -> FocusedQuery:
    if objective == "focused-lastpose":
        return FocusedQuery.new()
    if objective == "focused-landmarks":
        marks = run.estimator.mapped_landmarks()
        if marks:
            return FocusedQuery.old(marks)
    return FocusedQuery.unfocused()


def _execute_first_segment(run: Simulation, candidate: CandidateAction) -> list[SlamStep]:
    """Drive through the planned poses of the first segment, one SLAM step each."""
    segment = candidate.segments[0]
    planned = [segment.values[k] for k in segment.new_keys]
    last = run.estimator.belief.value(run.estimator.current_pose)
    steps = []
    for target in planned:
        steps.append(run.move(between(last, target)))
        last = target
    return steps


def run_active(
    config: ScenarioConfig,
    log: Optional[RunLog] = None,
    quiet: bool = True,
    objective: Optional[str] = None,
    on_tree: Optional[Callable[[int, FGPTree], None]] = None,
) -> RunLog:
    """Plan with flat and tree evaluation each step, check they agree, execute the choice.

    Raises DecisionMismatchError when the two evaluations pick different candidates.
    """
    objective = objective or config.objective
    log = log if log is not None else RunLog("active", ["flat", "tree"])
    run, _ = Simulation.start(config)

    with _progress(quiet) as progress:
        task = progress.add_task("Active run...", total=None) if progress else None
        for k in range(config.steps):
            belief = run.estimator.belief
            goal = run.goal.copy()
            candidates = generate_candidates(
                belief, run.estimator.current_pose, run.world, goal, config.sensor,
                config.planner,
            )
            query = planning_query(objective, run)
            merged = [c.merged() for c in candidates]

            start = time.perf_counter()
            flat = evaluate_candidates_flat(merged, belief, query)
            flat_seconds = time.perf_counter() - start

            start = time.perf_counter()
            tree = build_trajectory_tree(candidates)
            ev = evaluate_tree(tree, belief, query, config.rectangular_method)
            tree_seconds = time.perf_counter() - start

            if on_tree is not None:
                on_tree(k, tree)

            rows, chosen = assemble_objective(candidates, flat.scores, config.weights, goal)
            _, chosen_tree = assemble_objective(candidates, ev.scores, config.weights, goal)
            if flat.best != ev.best or chosen != chosen_tree:
                log.aborted = f"decision mismatch at step {k}"
                raise DecisionMismatchError(
                    k,
                    {i: s.value for i, s in flat.scores.items()},
                    {i: s.value for i, s in ev.scores.items()},
                )
            log.decisions_agreed += 1

            executed = _execute_first_segment(run, candidates[chosen])
            log.add_candidates(
                [
                    CandidateRecord(
                        step=k,
                        candidate=r.id,
                        target=candidates[r.id].target,
                        score=flat.scores[r.id].value,
                        distance=r.distance,
                        path_length=r.path_length,
                        objective=r.cost,
                    )
                    for r in rows
                ]
            )
            log.append(
                StepRecord(
                    step=k,
                    n=belief.dim,
                    m=merged[chosen].m,
                    involved=total_dim(flat.requested),
                    relinearized_poses=sum(s.report.relinearized_poses for s in executed),
                    relinearized_landmarks=sum(
                        s.report.relinearized_landmarks for s in executed
                    ),
                    chosen=chosen,
                    best_score=flat.scores[chosen].value,
                    timings={"flat": flat_seconds, "tree": tree_seconds},
                )
            )
            if progress:
                text = f"Plan {k + 1}/{config.steps}: chose {chosen} of {len(candidates)}"
                progress.update(task, description=text)
    return log
