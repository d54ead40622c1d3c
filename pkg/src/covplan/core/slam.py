"""Incremental SLAM estimator producing per-step change bundles."""

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from covplan.core.belief import BeliefState
from covplan.core.factors import (
    FactorGraph,
    GaussianFactor,
    between_factor,
    compose,
    linearize_blocks,
    observed_point,
    prior_factor,
    range_bearing_factor,
)
from covplan.core.layout import Kind, StateLayout, VariableKey, landmark, pose, unique_keys
from covplan.core.slam_update import SlamStepChange
from covplan.core.solver import RelinearizationReport, SolverConfig, solve_map
from covplan.core.world import Observation, SensorModel


@dataclass
class SlamStep:
    index: int
    prior: BeliefState
    posterior: BeliefState
    change: SlamStepChange
    report: RelinearizationReport
    new_landmarks: list[VariableKey] = field(default_factory=list)
    reobserved: list[VariableKey] = field(default_factory=list)
    relinearized_factors: list[GaussianFactor] = field(default_factory=list)


def _values(belief_layout: StateLayout, point: np.ndarray, keys) -> dict:
    return {k: point[belief_layout.slice(k)] for k in keys}


def _jacobian(factors, values, keys) -> np.ndarray:
    if not factors:
        return np.zeros((0, sum(k.dim for k in keys)))
    return linearize_blocks(factors, values, keys)


def build_step_change(
    prior: BeliefState,
    posterior: BeliefState,
    prev_pose: Optional[VariableKey],
    new_keys: Sequence[VariableKey],
    squared_factors: Sequence[GaussianFactor],
    observation_factors: Sequence[GaussianFactor],
    relinearized_factors: Sequence[GaussianFactor],
) -> SlamStepChange:
    """Jacobian blocks of a step: squared part, re-observations and relinearized factors.

    New factors are linearized at the posterior linearization point, the
    relinearized ones at both the prior and the posterior point.
    """
    new_keys = list(new_keys)
    lin = posterior.linearization_point
    layout = posterior.layout
    prev = [prev_pose] if prev_pose is not None else []

    s_keys = prev + new_keys
    a_s = _jacobian(squared_factors, _values(layout, lin, s_keys), s_keys)
    n_prev = sum(k.dim for k in prev)

    obs_keys = unique_keys(*(f.keys for f in observation_factors))
    a_obs = _jacobian(observation_factors, _values(layout, lin, obs_keys), obs_keys)

    relin_keys = unique_keys(*(f.keys for f in relinearized_factors))
    old_values = _values(prior.layout, prior.linearization_point, relin_keys)
    a_minus = _jacobian(relinearized_factors, old_values, relin_keys)
    a_plus = _jacobian(relinearized_factors, _values(layout, lin, relin_keys), relin_keys)

    return SlamStepChange(
        new_keys=tuple(new_keys),
        a_s_new=a_s[:, n_prev:],
        prev_pose=prev_pose,
        a_s_prev=a_s[:, :n_prev],
        obs_keys=tuple(obs_keys),
        a_obs=a_obs,
        relin_keys=tuple(relin_keys),
        a_minus=a_minus,
        a_plus=a_plus,
    )


class SlamEstimator:
    """Pose-landmark SLAM with ground-truth data association.

    Keeps a factor graph and the current belief; each step adds one pose,
    the landmarks first seen from it and all factors of that step, then
    re-solves and reports which old factors were relinearized.
    """

    def __init__(self, sensor: SensorModel, solver: Optional[SolverConfig] = None):
        self.sensor = sensor
        self.solver = solver or SolverConfig()
        self.graph = FactorGraph(StateLayout())
        self.belief = BeliefState.empty()
        self.pose_index = -1

    @property
    def current_pose(self) -> VariableKey:
        return pose(self.pose_index)

    def mapped_landmarks(self) -> list[VariableKey]:
        return [k for k in self.belief.layout if k.kind == Kind.landmark]

    def _observation_factors(self, pose_key, pose_value, observations: Sequence[Observation]):
        new_keys, values, new_factors, old_factors = [], [], [], []
        cov = self.sensor.observation_covariance
        for obs in sorted(observations, key=lambda o: o.landmark):
            key = landmark(obs.landmark)
            label = f"obs {pose_key}-{key}"
            factor = range_bearing_factor(pose_key, key, obs.measured, cov, label)
            if key in self.belief.layout:
                old_factors.append(factor)
            else:
                new_keys.append(key)
                values.append(observed_point(pose_value, obs.measured))
                new_factors.append(factor)
        return new_keys, values, new_factors, old_factors

    def initialize(self, start: np.ndarray, observations: Sequence[Observation]) -> SlamStep:
        """First step: a prior on x0 and the landmarks seen from it."""
        self.pose_index = 0
        x0 = pose(0)
        prior = prior_factor(x0, start, self.sensor.prior_covariance, "prior x0")
        lm_keys, lm_values, lm_factors, _ = self._observation_factors(x0, start, observations)
        return self._advance(
            None, [x0] + lm_keys, [np.asarray(start, dtype=float)] + lm_values,
            [prior] + lm_factors, [],
        )

    def step(self, odometry: np.ndarray, observations: Sequence[Observation]) -> SlamStep:
        """Add a pose from odometry plus this step's observations, then re-solve."""
        if self.pose_index < 0:
            raise RuntimeError("Estimator not initialized")
        prev = self.current_pose
        self.pose_index += 1
        key = self.current_pose
        predicted = compose(self.belief.value(prev), odometry)
        odo = between_factor(
            prev, key, odometry, self.sensor.odometry_covariance, f"odo {prev}-{key}"
        )
        lm_keys, lm_values, lm_factors, reobs = self._observation_factors(
            key, predicted, observations
        )
        return self._advance(
            prev, [key] + lm_keys, [predicted] + lm_values, [odo] + lm_factors, reobs
        )

    def _advance(
        self, prev, new_keys, new_values, squared_factors, observation_factors
    ) -> SlamStep:
        prior_belief = self.belief
        old_count = len(self.graph.factors)
        old_lin = _values(
            prior_belief.layout, prior_belief.linearization_point, prior_belief.layout
        )

        self.graph.extend(new_keys, list(squared_factors) + list(observation_factors))
        initial = np.concatenate(
            [prior_belief.mean] + [np.asarray(v, dtype=float) for v in new_values]
        )
        posterior, report = solve_map(self.graph, initial, self.solver, old_lin)

        relinearized = [self.graph.factors[i] for i in report.factor_indices if i < old_count]
        change = build_step_change(
            prior_belief,
            posterior,
            prev,
            new_keys,
            squared_factors,
            observation_factors,
            relinearized,
        )
        self.belief = posterior
        return SlamStep(
            index=self.pose_index,
            prior=prior_belief,
            posterior=posterior,
            change=change,
            report=report,
            new_landmarks=[k for k in new_keys if k.kind == Kind.landmark],
            reobserved=[f.keys[1] for f in observation_factors],
            relinearized_factors=relinearized,
        )
