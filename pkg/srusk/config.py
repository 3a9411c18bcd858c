"""
Run configuration: TOML or JSON files plus command-line overrides.
"""

import json
import logging
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Optional

from srusk.exceptions import ConfigError
from srusk.integrator import IntegratorOptions, NewtonProjection, Scheme

# Configure logging
logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ModelConfig:
    name: str = "harmonic"
    params: Dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class InitialStateConfig:
    """Initial data; q and v default to the model's own choice, p to the Legendre map."""

    t0: float = 0.0
    q: Optional[List[float]] = None
    v: Optional[List[float]] = None
    p: Optional[List[float]] = None


@dataclass(frozen=True)
class IntegratorConfig:
    step: float = 1e-3
    t_end: float = 1.0
    scheme: str = "rk4"
    projection: str = "newton"
    projection_tol: float = 1e-10
    projection_max_iter: int = 20

    def to_options(self) -> IntegratorOptions:
        projection = None
        if self.projection == "newton":
            projection = NewtonProjection(self.projection_tol, self.projection_max_iter)
        return IntegratorOptions(self.step, self.t_end, Scheme(self.scheme), projection)


@dataclass(frozen=True)
class AnalysisConfig:
    max_levels: int = 8
    rank_tol: float = 1e-9
    sample_count: int = 32
    sample_box: float = 0.5


@dataclass(frozen=True)
class OutputsConfig:
    trajectory_csv: Optional[str] = None
    chain_report_json: Optional[str] = None


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    model: ModelConfig = field(default_factory=ModelConfig)
    initial_state: InitialStateConfig = field(default_factory=InitialStateConfig)
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    outputs: OutputsConfig = field(default_factory=OutputsConfig)

    def validate(self) -> "RunConfig":
        """
        Check tolerances, counts and enumerations.

        Returns:
            The configuration itself

        Raises:
            ConfigError: On the first invalid value
        """
        try:
            checks = self._checks()
        except TypeError as e:
            raise ConfigError(f"invalid value type: {e}") from e
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)
        return self

    def _checks(self) -> List[tuple]:
        return [
            (self.integrator.step > 0, "integrator.step must be positive"),
            (self.integrator.projection_tol > 0, "integrator.projection_tol must be positive"),
            (self.integrator.projection_max_iter >= 1, "integrator.projection_max_iter must be at least 1"),
            (self.integrator.scheme in {s.value for s in Scheme}, "integrator.scheme must be rk4 or euler"),
            (self.integrator.projection in {"off", "newton"}, "integrator.projection must be off or newton"),
            (self.analysis.rank_tol > 0, "analysis.rank_tol must be positive"),
            (self.analysis.max_levels >= 1, "analysis.max_levels must be at least 1"),
            (self.analysis.sample_count >= 1, "analysis.sample_count must be at least 1"),
            (self.analysis.sample_box > 0, "analysis.sample_box must be positive"),
        ]

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        model = data.pop("model")
        data["model"] = {"name": model["name"], **model["params"]}
        return data


_SECTIONS = {
    "initial_state": InitialStateConfig,
    "integrator": IntegratorConfig,
    "analysis": AnalysisConfig,
    "outputs": OutputsConfig,
}


def _build_section(cls: type, name: str, values: Dict[str, Any]) -> Any:
    if not isinstance(values, dict):
        raise ConfigError(f"[{name}] must be a table")
    known = {f.name for f in fields(cls)}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown key(s) in [{name}]: {', '.join(sorted(unknown))}")
    try:
        return cls(**values)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid [{name}]: {e}") from e


def from_dict(data: Dict[str, Any]) -> RunConfig:
    """
    Build a RunConfig from parsed TOML/JSON data.

    Args:
        data: Mapping with an optional top-level ``seed`` and the section tables

    Returns:
        The validated configuration
    """
    data = dict(data)
    unknown = set(data) - {"seed", "model", *_SECTIONS}
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(sorted(unknown))}")

    model_data = dict(data.pop("model", {}))
    if not isinstance(model_data, dict):
        raise ConfigError("[model] must be a table")
    model = ModelConfig(name=str(model_data.pop("name", "harmonic")), params=model_data)

    sections = {name: _build_section(cls, name, data.get(name, {})) for name, cls in _SECTIONS.items()}
    try:
        seed = int(data.get("seed", 0))
    except (TypeError, ValueError) as e:
        raise ConfigError(f"seed must be an integer: {e}") from e
    return RunConfig(seed=seed, model=model, **sections).validate()


def load_config(path: Optional[str] = None) -> RunConfig:
    """
    Load a run configuration, detecting TOML or JSON by extension.

    Args:
        path: Config file (defaults only when None)

    Returns:
        The validated configuration
    """
    if path is None:
        return RunConfig().validate()
    file = Path(path)
    if not file.exists():
        raise ConfigError(f"config file not found: {path}")
    suffix = file.suffix.lower()
    try:
        if suffix == ".toml":
            with file.open("rb") as f:
                data = tomllib.load(f)
        elif suffix == ".json":
            with file.open("r", encoding="utf-8") as f:
                data = json.load(f)
        else:
            raise ConfigError(f"unsupported config format '{suffix}' (use .toml or .json)")
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as e:
        raise ConfigError(f"could not parse {path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must contain a table at the top level")
    logger.debug(f"Loaded configuration from {path}")
    return from_dict(data)


def parse_assignment(assignment: str) -> tuple:
    """
    Split ``section.key=value``; the value is parsed as JSON, else kept as a string.

    Returns:
        Tuple of (dotted key, value)
    """
    key, sep, raw = assignment.partition("=")
    key = key.strip()
    if not sep or not key:
        raise ConfigError(f"expected section.key=value, got '{assignment}'")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, value


def apply_overrides(config: RunConfig, overrides: Dict[str, Any]) -> RunConfig:
    """
    Apply dotted-key overrides such as ``{"integrator.step": 1e-4}``.

    ``None`` values are skipped so unset command-line flags leave the file alone.

    Args:
        config: Base configuration
        overrides: Dotted key to value

    Returns:
        The new validated configuration
    """
    for key, value in overrides.items():
        if value is None:
            continue
        section, _, name = key.partition(".")
        if section == "seed" and not name:
            config = replace(config, seed=int(value))
        elif section == "model":
            if not name:
                raise ConfigError("model overrides need a key, e.g. model.name")
            if name == "name":
                config = replace(config, model=replace(config.model, name=str(value)))
            else:
                config = replace(config, model=replace(config.model, params={**config.model.params, name: value}))
        elif section in _SECTIONS:
            current = getattr(config, section)
            if name not in {f.name for f in fields(current)}:
                raise ConfigError(f"unknown key '{name}' in [{section}]")
            config = replace(config, **{section: replace(current, **{name: value})})
        else:
            raise ConfigError(f"unknown configuration key '{key}'")
    return config.validate()
