"""Candidate trajectories on a waypoint lattice and the planning objective.

A candidate goes from the current pose through a first-level waypoint (a fan
around the robot), a second-level waypoint (a few directions further out) and
ends at a target: the current goal or the centroid of a cluster of mapped
landmarks. Every leg is straight and sampled into a fixed number of poses, so
candidates through the same waypoints share their first segments exactly.
"""

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.cluster.vq import kmeans2

from covplan.core.belief import BeliefState
from covplan.core.factors import (
    GaussianFactor,
    between,
    between_factor,
    linearize_blocks,
    range_bearing,
    range_bearing_factor,
    wrap_angle,
)
from covplan.core.layout import Kind, VariableKey, pose, unique_keys
from covplan.core.ramdl import TIE_TOLERANCE, ActionIncrement, InfoScore, merge_increments
from covplan.core.world import SensorModel, WorldModel

MIN_RANGE = 1e-6


@dataclass
class ObjectiveWeights:
    """J(a) = distance * d(x_end, goal) + control * path length - information * utility."""

    distance: float = 1.0
    control: float = 0.2
    information: float = 20.0

    def __post_init__(self):
        if not all(np.isfinite([self.distance, self.control, self.information])):
            raise ValueError("Objective weights must be finite")


@dataclass
class PlannerConfig:
    candidate_target: int = 200
    level_two: int = 5
    clusters: int = 3
    poses_per_segment: int = 5
    segment_length: float = 50.0
    # half-width of the second-level fan, radians
    spread: float = 0.6
    max_observations_per_pose: int = 6
    goal_reach: float = 20.0

    def __post_init__(self):
        if self.candidate_target < 1 or self.level_two < 1 or self.poses_per_segment < 1:
            raise ValueError("candidate_target, level_two and poses_per_segment must be >= 1")
        if self.clusters < 0 or self.max_observations_per_pose < 0:
            raise ValueError("clusters and max_observations_per_pose must be >= 0")
        if self.segment_length <= 0:
            raise ValueError("segment_length must be positive")


@dataclass(eq=False)
class CandidateAction:
    id: int
    waypoints: list[np.ndarray]
    segments: list[ActionIncrement]
    terminal: np.ndarray
    path_length: float
    target: str = "goal"

    def merged(self) -> ActionIncrement:
        return merge_increments(self.id, self.segments, f"candidate {self.id}")


@dataclass
class PlanningContext:
    """What the lattice needs from the belief: current pose and mapped landmark means."""

    pose_key: VariableKey
    pose_value: np.ndarray
    landmarks: dict[VariableKey, np.ndarray] = field(default_factory=dict)

    @classmethod
    def from_belief(cls, belief: BeliefState, pose_key: VariableKey) -> "PlanningContext":
        marks = {k: belief.value(k) for k in belief.layout if k.kind == Kind.landmark}
        return cls(pose_key, belief.value(pose_key).copy(), marks)


# ============================================================================
# Lattice
# ============================================================================


def landmark_clusters(points: np.ndarray, k: int) -> np.ndarray:
    """k-means centroids of mapped landmark positions (fewer if there are few landmarks)."""
    k = min(k, len(points))
    if k == 0:
        return np.zeros((0, 2))
    # deterministic start: landmarks spread evenly over the sorted list
    start = points[np.linspace(0, len(points) - 1, k).round().astype(int)]
    centroids, labels = kmeans2(points, start, minit="matrix", missing="warn")
    used = sorted(set(labels.tolist()))
    return centroids[used]


def _clip(point: np.ndarray, world: WorldModel) -> np.ndarray:
    return np.clip(point, [0.0, 0.0], [world.width, world.height])


def _leg_poses(start: np.ndarray, end: np.ndarray, count: int) -> list[np.ndarray]:
    """``count`` poses evenly along a straight leg, heading along it."""
    heading = float(np.arctan2(end[1] - start[1], end[0] - start[0]))
    fractions = np.arange(1, count + 1) / count
    return [
        np.array([*(start[:2] + f * (end[:2] - start[:2])), wrap_angle(heading)])
        for f in fractions
    ]


def predicted_observations(
    pose_value: np.ndarray,
    landmarks: dict[VariableKey, np.ndarray],
    sensor: SensorModel,
    limit: int,
) -> list[VariableKey]:
    """Nearest mapped landmarks within the sensing radius, at most ``limit``."""
    if not landmarks or limit == 0:
        return []
    keys = sorted(landmarks)
    d = np.array([np.hypot(*(landmarks[k] - pose_value[:2])) for k in keys])
    order = np.lexsort((np.arange(len(keys)), d))
    # a pose on top of a landmark has no bearing
    visible = [i for i in order if MIN_RANGE < d[i] <= sensor.radius]
    return [keys[i] for i in visible[:limit]]


def segment_increment(
    label: str,
    prev_key: VariableKey,
    prev_value: np.ndarray,
    poses: Sequence[np.ndarray],
    first_index: int,
    context: PlanningContext,
    sensor: SensorModel,
    config: PlannerConfig,
) -> ActionIncrement:
    """Odometry and predicted observations of one leg, at maximum-likelihood measurements."""
    values: dict[VariableKey, np.ndarray] = {prev_key: prev_value}
    factors: list[GaussianFactor] = []
    new_keys: list[VariableKey] = []
    last_key, last_value = prev_key, prev_value
    for j, value in enumerate(poses):
        key = pose(first_index + j)
        new_keys.append(key)
        values[key] = value
        factors.append(
            between_factor(
                last_key, key, between(last_value, value), sensor.odometry_covariance,
                f"{label} odo",
            )
        )
        for mark in predicted_observations(
            value, context.landmarks, sensor, config.max_observations_per_pose
        ):
            values[mark] = context.landmarks[mark]
            factors.append(
                range_bearing_factor(
                    key, mark, range_bearing(value, context.landmarks[mark]),
                    sensor.observation_covariance, f"{label} obs",
                )
            )
        last_key, last_value = key, value

    new_set = set(new_keys)
    involved = [k for k in unique_keys(*(f.keys for f in factors)) if k not in new_set]
    a = linearize_blocks(factors, values, involved + new_keys)
    k = sum(key.dim for key in involved)
    return ActionIncrement(
        id=0,
        involved=tuple(involved),
        a_involved=a[:, :k],
        new_keys=tuple(new_keys),
        a_new=a[:, k:],
        factors=tuple(factors),
        values=values,
        label=label,
    )


def lattice_width(config: PlannerConfig, targets: int) -> int:
    return max(1, round(config.candidate_target / (config.level_two * targets)))


def generate_candidates(
    belief: BeliefState,
    pose_key: VariableKey,
    world: WorldModel,
    goal: np.ndarray,
    sensor: SensorModel,
    config: Optional[PlannerConfig] = None,
) -> list[CandidateAction]:
    """Three-leg candidates toward the goal and toward clusters of mapped landmarks."""
    config = config or PlannerConfig()
    context = PlanningContext.from_belief(belief, pose_key)
    points = (
        np.array([context.landmarks[k] for k in sorted(context.landmarks)])
        if context.landmarks
        else np.zeros((0, 2))
    )
    targets: list[tuple[str, np.ndarray]] = [("goal", np.asarray(goal, dtype=float))]
    for c, centroid in enumerate(landmark_clusters(points, config.clusters)):
        targets.append((f"c{c}", centroid))

    n1 = lattice_width(config, len(targets))
    pps = config.poses_per_segment
    base = pose_key.index + 1
    origin = context.pose_value
    toward_goal = float(np.arctan2(goal[1] - origin[1], goal[0] - origin[0]))
    offsets = (
        np.linspace(-config.spread, config.spread, config.level_two)
        if config.level_two > 1
        else np.zeros(1)
    )

    candidates: list[CandidateAction] = []
    for i in range(n1):
        angle = toward_goal + 2.0 * np.pi * i / n1
        heading = np.array([np.cos(angle), np.sin(angle)])
        w1 = _clip(origin[:2] + config.segment_length * heading, world)
        poses1 = _leg_poses(origin, w1, pps)
        seg1 = segment_increment(
            f"w{i}", pose_key, origin, poses1, base, context, sensor, config
        )
        for j, offset in enumerate(offsets):
            a2 = angle + offset
            w2 = _clip(w1 + config.segment_length * np.array([np.cos(a2), np.sin(a2)]), world)
            poses2 = _leg_poses(poses1[-1], w2, pps)
            seg2 = segment_increment(
                f"w{i}.{j}", seg1.new_keys[-1], poses1[-1], poses2, base + pps, context,
                sensor, config,
            )
            for name, target in targets:
                poses3 = _leg_poses(poses2[-1], target, pps)
                seg3 = segment_increment(
                    f"w{i}.{j}>{name}", seg2.new_keys[-1], poses2[-1], poses3,
                    base + 2 * pps, context, sensor, config,
                )
                length = (
                    float(np.hypot(*(w1 - origin[:2])))
                    + float(np.hypot(*(w2 - w1)))
                    + float(np.hypot(*(target - w2)))
                )
                candidates.append(
                    CandidateAction(
                        id=len(candidates),
                        waypoints=[w1, w2, np.asarray(target, dtype=float)],
                        segments=[seg1, seg2, seg3],
                        terminal=poses3[-1],
                        path_length=length,
                        target=name,
                    )
                )
    return candidates


# ============================================================================
# Objective
# ============================================================================


@dataclass
class ObjectiveRow:
    id: int
    distance: float
    path_length: float
    utility: float
    cost: float


def select_min(costs: dict[int, float]) -> int:
    """Lowest cost; near-ties resolved to the lowest id."""
    if not costs:
        raise ValueError("No candidates to select from")
    best = min(costs.values())
    tol = TIE_TOLERANCE * max(1.0, abs(best))
    return min(i for i, c in costs.items() if c <= best + tol)


def assemble_objective(
    candidates: Sequence[CandidateAction],
    scores: dict[int, InfoScore],
    weights: ObjectiveWeights,
    goal: np.ndarray,
) -> tuple[list[ObjectiveRow], int]:
    """Per-candidate J(a) and the id minimizing it."""
    missing = [c.id for c in candidates if c.id not in scores]
    if missing:
        raise ValueError(f"No information score for candidates {missing}")
    rows = []
    for cand in candidates:
        distance = float(np.hypot(*(cand.terminal[:2] - np.asarray(goal)[:2])))
        utility = scores[cand.id].utility
        cost = (
            weights.distance * distance
            + weights.control * cand.path_length
            - weights.information * utility
        )
        rows.append(ObjectiveRow(cand.id, distance, cand.path_length, utility, cost))
    best = select_min({r.id: r.cost for r in rows})
    return rows, best
