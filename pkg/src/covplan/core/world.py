"""Planar world with point landmarks, an odometry sensor and a range-bearing sensor."""

from dataclasses import dataclass

import numpy as np

from covplan.core.factors import compose, range_bearing, wrap_angle


@dataclass
class WorldConfig:
    width: float = 500.0
    height: float = 500.0
    landmarks: int = 300
    goals: int = 8
    # goals lie on a ring around the field centre, this fraction of the shorter side
    goal_ring: float = 0.35
    step_length: float = 10.0
    max_turn: float = 0.5


@dataclass
class SensorModel:
    radius: float = 75.0
    range_std: float = 1.0
    bearing_std: float = 0.02
    odometry_std: tuple[float, float, float] = (0.5, 0.5, 0.02)
    prior_std: tuple[float, float, float] = (0.1, 0.1, 0.01)
    # scales sampled noise only; factor covariances stay nominal
    noise_scale: float = 1.0

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("Sensing radius must be positive")
        stds = (self.range_std, self.bearing_std, *self.odometry_std, *self.prior_std)
        if any(s <= 0 for s in stds):
            raise ValueError("Noise standard deviations must be positive")
        if self.noise_scale < 0:
            raise ValueError("noise_scale must be non-negative")

    @property
    def odometry_covariance(self) -> np.ndarray:
        return np.diag(np.square(self.odometry_std))

    @property
    def observation_covariance(self) -> np.ndarray:
        return np.diag([self.range_std**2, self.bearing_std**2])

    @property
    def prior_covariance(self) -> np.ndarray:
        return np.diag(np.square(self.prior_std))


@dataclass
class WorldModel:
    landmarks: np.ndarray
    goals: np.ndarray
    start: np.ndarray
    width: float
    height: float
    seed: int

    @classmethod
    def generate(cls, config: WorldConfig, seed: int) -> "WorldModel":
        rng = np.random.default_rng(seed)
        landmarks = rng.uniform([0.0, 0.0], [config.width, config.height], (config.landmarks, 2))
        centre = np.array([config.width, config.height]) / 2.0
        radius = config.goal_ring * min(config.width, config.height)
        angles = np.linspace(0.0, 2.0 * np.pi, config.goals, endpoint=False)
        jitter = rng.uniform(-0.05, 0.05, (config.goals, 2)) * radius
        goals = centre + radius * np.column_stack([np.cos(angles), np.sin(angles)]) + jitter
        # start at the last goal facing the first, so the route closes a loop
        start_xy = goals[-1]
        heading = np.arctan2(*(goals[0] - start_xy)[::-1])
        start = np.array([start_xy[0], start_xy[1], wrap_angle(heading)])
        return cls(landmarks, goals, start, config.width, config.height, seed)

    def visible(self, pose_value: np.ndarray, radius: float) -> np.ndarray:
        """Indices of landmarks within the sensing radius, ascending."""
        d = np.hypot(*(self.landmarks - pose_value[:2]).T)
        return np.flatnonzero(d <= radius)


@dataclass
class Observation:
    landmark: int
    measured: np.ndarray


@dataclass
class SimState:
    pose: np.ndarray
    rng: np.random.Generator
    goal_index: int = 0
    steps: int = 0

    @classmethod
    def start(cls, world: WorldModel, seed: int) -> "SimState":
        # separate stream from world generation
        return cls(world.start.copy(), np.random.default_rng([seed, 1]))


def observe(
    world: WorldModel, pose_value: np.ndarray, sensor: SensorModel, rng: np.random.Generator
) -> list[Observation]:
    obs = []
    for idx in world.visible(pose_value, sensor.radius):
        noise = sensor.noise_scale * rng.normal(0.0, [sensor.range_std, sensor.bearing_std])
        z = range_bearing(pose_value, world.landmarks[idx]) + noise
        z[1] = wrap_angle(z[1])
        obs.append(Observation(int(idx), z))
    return obs


def step_world(
    state: SimState, control: np.ndarray, world: WorldModel, sensor: SensorModel
) -> tuple[np.ndarray, np.ndarray, list[Observation]]:
    """Move by ``control`` (relative motion), returning truth, noisy odometry and observations."""
    control = np.asarray(control, dtype=float)
    if not np.all(np.isfinite(control)):
        raise ValueError("Control must be finite")
    state.pose = compose(state.pose, control)
    state.steps += 1
    odometry = control + sensor.noise_scale * state.rng.normal(0.0, sensor.odometry_std)
    odometry[2] = wrap_angle(odometry[2])
    return state.pose.copy(), odometry, observe(world, state.pose, sensor, state.rng)


def goal_control(pose_value: np.ndarray, goal: np.ndarray, config: WorldConfig) -> np.ndarray:
    """Turn toward the goal (bounded), then move along the new heading."""
    bearing = np.arctan2(goal[1] - pose_value[1], goal[0] - pose_value[0])
    turn = float(np.clip(wrap_angle(bearing - pose_value[2]), -config.max_turn, config.max_turn))
    step = min(config.step_length, float(np.hypot(*(goal - pose_value[:2]))))
    return np.array([step * np.cos(turn), step * np.sin(turn), turn])


def advance_goal(state: SimState, world: WorldModel, pose_value: np.ndarray, reach: float) -> None:
    """Move on to the next goal (cyclically) once within ``reach`` of the current one."""
    if np.hypot(*(world.goals[state.goal_index] - pose_value[:2])) <= reach:
        state.goal_index = (state.goal_index + 1) % len(world.goals)
