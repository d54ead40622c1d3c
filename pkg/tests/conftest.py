"""Shared fixtures: random SPD systems, small scenarios, isolated settings."""

import numpy as np
import pytest

from covplan.core.planner import PlannerConfig
from covplan.core.settings import HOME_ENV, ScenarioConfig
from covplan.core.verify import random_information, scalar_belief
from covplan.core.world import SensorModel, WorldConfig

SMALL_SCENARIO_TOML = """\
seed = 1
steps = 5
methods = ["recursive", "backsub", "twostage", "onestage"]

[world]
width = 200.0
height = 200.0
landmarks = 40
goals = 4

[sensor]
radius = 60.0

[planner]
candidate_target = 24
level_two = 3
clusters = 1
poses_per_segment = 2
segment_length = 25.0
"""


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def spd_system():
    """Factory: (information matrix, belief over scalar variables) of size n."""

    def make(n: int, seed: int = 0):
        lam = random_information(np.random.default_rng(seed), n)
        return lam, scalar_belief(lam)

    return make


@pytest.fixture
def small_config() -> ScenarioConfig:
    return ScenarioConfig(
        world=WorldConfig(width=200.0, height=200.0, landmarks=40, goals=4),
        sensor=SensorModel(radius=60.0),
        planner=PlannerConfig(
            candidate_target=24, level_two=3, clusters=1, poses_per_segment=2,
            segment_length=25.0,
        ),
        seed=1,
        steps=5,
    )


@pytest.fixture
def scenario_file(tmp_path):
    path = tmp_path / "small.toml"
    path.write_text(SMALL_SCENARIO_TOML)
    return path


@pytest.fixture(autouse=True)
def isolated_home(tmp_path, monkeypatch):
    """Keep user settings out of the real home directory."""
    home = tmp_path / "home"
    monkeypatch.setenv(HOME_ENV, str(home))
    return home
