"""Scenario files and user settings."""

import hashlib
import os
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

import tomli_w
import yaml

from covplan.core.errors import ConfigError
from covplan.core.planner import ObjectiveWeights, PlannerConfig
from covplan.core.solver import SolverConfig
from covplan.core.world import SensorModel, WorldConfig

HOME_ENV = "COVPLAN_HOME"
THREADS_ENV = "COVPLAN_THREADS"
CONFIG_FILE_NAME = "config.toml"

RECOVERY_METHOD_NAMES = ("recursive", "backsub", "twostage", "onestage")
OBJECTIVES = ("unfocused", "focused-lastpose", "focused-landmarks")


@dataclass
class ScenarioConfig:
    world: WorldConfig = field(default_factory=WorldConfig)
    sensor: SensorModel = field(default_factory=SensorModel)
    solver: SolverConfig = field(default_factory=SolverConfig)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    weights: ObjectiveWeights = field(default_factory=ObjectiveWeights)
    methods: list[str] = field(default_factory=lambda: list(RECOVERY_METHOD_NAMES))
    objective: str = "unfocused"
    seed: int = 0
    steps: int = 100
    fallback_ratio: float = 1.0
    # absolute agreement required between recovery methods
    tolerance: float = 1e-6
    rectangular_method: int = 2


SECTIONS = {
    "world": WorldConfig,
    "sensor": SensorModel,
    "solver": SolverConfig,
    "planner": PlannerConfig,
    "weights": ObjectiveWeights,
}


# ============================================================================
# Scenario parsing
# ============================================================================


def _coerce(value: Any, default: Any, where: str, path: Any) -> Any:
    """Check ``value`` against the type of the field's default."""
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(path, f"{where}: expected true/false, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, f"{where}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"{where}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(path, f"{where}: expected a string, got {value!r}")
        return value
    if isinstance(default, (tuple, list)):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(path, f"{where}: expected a list, got {value!r}")
        if isinstance(default, tuple) and len(value) != len(default):
            raise ConfigError(path, f"{where}: expected {len(default)} entries, got {len(value)}")
        items = [_coerce(v, default[0], where, path) for v in value] if default else list(value)
        return tuple(items) if isinstance(default, tuple) else items
    return value


def _field_defaults(cls) -> dict[str, Any]:
    instance = cls()
    return {f.name: getattr(instance, f.name) for f in fields(cls)}


def _build(cls, data: Any, section: str, path: Any):
    if not isinstance(data, dict):
        raise ConfigError(path, f"[{section}] must be a table")
    defaults = _field_defaults(cls)
    unknown = sorted(set(data) - set(defaults))
    if unknown:
        raise ConfigError(path, f"[{section}] unknown keys: {', '.join(unknown)}")
    values = {
        name: _coerce(value, defaults[name], f"{section}.{name}", path)
        for name, value in data.items()
    }
    try:
        return cls(**values)
    except ValueError as e:
        raise ConfigError(path, f"[{section}] {e}") from e


def parse_scenario(data: Optional[dict[str, Any]], path: Any = "<scenario>") -> ScenarioConfig:
    """Typed scenario from a parsed TOML/YAML document; missing keys keep defaults."""
    data = dict(data or {})
    top = {f.name: getattr(ScenarioConfig(), f.name) for f in fields(ScenarioConfig)}
    unknown = sorted(set(data) - set(top))
    if unknown:
        raise ConfigError(path, f"unknown keys: {', '.join(unknown)}")

    kwargs: dict[str, Any] = {}
    for name, value in data.items():
        if name in SECTIONS:
            kwargs[name] = _build(SECTIONS[name], value, name, path)
        else:
            kwargs[name] = _coerce(value, top[name], name, path)
    config = ScenarioConfig(**kwargs)
    validate_scenario(config, path)
    return config


def validate_scenario(config: ScenarioConfig, path: Any = "<scenario>") -> None:
    bad = [m for m in config.methods if m not in RECOVERY_METHOD_NAMES]
    if bad or not config.methods:
        raise ConfigError(
            path, f"methods must be a non-empty subset of {', '.join(RECOVERY_METHOD_NAMES)}"
        )
    if config.objective not in OBJECTIVES:
        raise ConfigError(path, f"objective must be one of {', '.join(OBJECTIVES)}")
    if config.steps < 1:
        raise ConfigError(path, "steps must be >= 1")
    if config.fallback_ratio <= 0:
        raise ConfigError(path, "fallback_ratio must be positive")
    if config.tolerance <= 0:
        raise ConfigError(path, "tolerance must be positive")
    if config.rectangular_method not in (1, 2):
        raise ConfigError(path, "rectangular_method must be 1 or 2")
    if config.world.landmarks < 0 or config.world.goals < 1:
        raise ConfigError(path, "world needs landmarks >= 0 and goals >= 1")


def load_scenario(path: Path) -> ScenarioConfig:
    """Read a scenario from a .toml, .yaml or .yml file."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(path, "file not found")
    suffix = path.suffix.lower()
    try:
        if suffix == ".toml":
            with open(path, "rb") as f:
                data = tomllib.load(f)
        elif suffix in (".yaml", ".yml"):
            with open(path) as f:
                data = yaml.safe_load(f)
        else:
            raise ConfigError(path, f"unsupported scenario format '{suffix}' (use .toml or .yaml)")
    except (tomllib.TOMLDecodeError, yaml.YAMLError) as e:
        raise ConfigError(path, f"cannot parse: {e}") from e
    if data is not None and not isinstance(data, dict):
        raise ConfigError(path, "scenario must be a mapping")
    return parse_scenario(data, path)


def scenario_to_dict(config: ScenarioConfig) -> dict[str, Any]:
    """Plain nested dict (tuples as lists) suitable for TOML."""

    def plain(value):
        if isinstance(value, dict):
            return {k: plain(v) for k, v in value.items()}
        if isinstance(value, (list, tuple)):
            return [plain(v) for v in value]
        return value

    return plain(asdict(config))


def dump_scenario(config: ScenarioConfig) -> str:
    return tomli_w.dumps(scenario_to_dict(config))


def config_hash(config: ScenarioConfig) -> str:
    """SHA-256 of the canonical TOML dump of the resolved scenario."""
    return hashlib.sha256(dump_scenario(config).encode()).hexdigest()


def worker_count() -> int:
    """Worker processes for verification, capped by COVPLAN_THREADS."""
    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return os.cpu_count() or 1
    try:
        count = int(raw)
    except ValueError as e:
        raise ConfigError(THREADS_ENV, f"expected an integer, got {raw!r}") from e
    if count < 1:
        raise ConfigError(THREADS_ENV, "must be >= 1")
    return count


# ============================================================================
# User settings
# ============================================================================


def get_config_dir() -> Path:
    home = os.environ.get(HOME_ENV)
    return Path(home) if home else Path.home() / ".covplan"


def get_config_path() -> Path:
    """Get the settings file path."""
    return get_config_dir() / CONFIG_FILE_NAME


def load_config() -> dict[str, Any]:
    """Load settings from file."""
    path = get_config_path()
    if not path.exists():
        return {"profiles": {}}
    try:
        with open(path, "rb") as f:
            return tomllib.load(f)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(path, f"cannot parse: {e}") from e


def save_config(config: dict[str, Any]) -> None:
    """Save settings to file."""
    path = get_config_path()
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        tomli_w.dump(config, f)


def add_profile(name: str, profile: dict[str, Any]) -> None:
    """Add or update a run profile."""
    config = load_config()

    if "profiles" not in config:
        config["profiles"] = {}

    config["profiles"][name] = profile
    save_config(config)


def remove_profile(name: str) -> bool:
    """Remove a profile. Returns True if found and removed."""
    config = load_config()

    if name not in config.get("profiles", {}):
        return False

    del config["profiles"][name]
    save_config(config)
    return True


def get_profile(name: str) -> Optional[dict[str, Any]]:
    """Get a profile by name."""
    return load_config().get("profiles", {}).get(name)


def list_profiles() -> dict[str, Any]:
    """List all profiles."""
    return load_config().get("profiles", {})
