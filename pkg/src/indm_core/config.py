"""Environment settings and run configuration files."""

import dataclasses
import logging
import os
import typing
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

import yaml

from indm_core.exceptions.indm_exceptions import ConfigException, IndmException
from indm_core.models.config import (
    DatasetSpec,
    EvaluationConfig,
    FlowConfig,
    InterpolationTask,
    RunConfig,
    SamplerConfig,
    ScoreConfig,
    TrainingConfig,
)
from indm_core.models.schedule import SdeSchedule

logger = logging.getLogger(__name__)

# Default configurations
DEFAULT_ENV = "development"
DEFAULT_OUT_DIR = "runs/default"
CONFIG_DIR = Path(os.environ.get("INDM_CONFIG_DIR", Path(__file__).resolve().parents[2] / "config"))

DEFAULT_ENVIRONMENT: Dict[str, Any] = {
    "logging": {
        "level": "INFO",
        "format": "%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        "file": None,
    },
    "output": {"out_dir": DEFAULT_OUT_DIR},
    "runtime": {"threads": None},
}

SECTIONS: Dict[str, type] = {
    "schedule": SdeSchedule,
    "flow": FlowConfig,
    "score": ScoreConfig,
    "training": TrainingConfig,
    "sampler": SamplerConfig,
    "evaluation": EvaluationConfig,
    "dataset": DatasetSpec,
    "interpolation": InterpolationTask,
}
TOP_LEVEL_KEYS = ("seed", "out_dir")
# runtime-only fields that never appear in a config file
EXCLUDED_FIELDS = {("sampler", "prior")}


def _merge(base: Dict[str, Any], override: Mapping[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, Mapping) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_environment(env: Optional[str] = None, config_dir: Optional[Path] = None) -> Dict[str, Any]:
    """Environment settings from ``config/<env>.yml`` merged over the defaults.

    ``env`` defaults to ``$INDM_ENV`` or development; ``INDM_THREADS``
    overrides ``runtime.threads``.

    Raises:
        ConfigException: If the file exists but is not a YAML mapping
    """
    env = env or os.environ.get("INDM_ENV", DEFAULT_ENV)
    path = Path(config_dir or CONFIG_DIR) / f"{env}.yml"
    settings = dict(DEFAULT_ENVIRONMENT)
    if path.exists():
        with open(path, "r", encoding="utf-8") as handle:
            loaded = yaml.safe_load(handle) or {}
        if not isinstance(loaded, Mapping):
            raise ConfigException(f"Environment file {path} is not a mapping", key=env)
        settings = _merge(settings, loaded)
    else:
        logger.debug(f"No environment file at {path}; using defaults")
    threads = os.environ.get("INDM_THREADS")
    if threads:
        try:
            settings = _merge(settings, {"runtime": {"threads": int(threads)}})
        except ValueError:
            raise ConfigException(f"INDM_THREADS must be an integer, got {threads!r}", key="INDM_THREADS")
    settings["env"] = env
    return settings


def _coerce(value: Any, hint: Any, key: str) -> Any:
    """Convert YAML scalars to the field's numeric type (YAML reads ``1e-5`` as text)."""
    if value is None:
        return None
    target = hint
    if typing.get_origin(hint) is Union:
        args = [a for a in typing.get_args(hint) if a is not type(None)]
        target = args[0] if len(args) == 1 else hint
    try:
        if target is float and not isinstance(value, bool):
            return float(value)
        if target is int and not isinstance(value, bool):
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            return int(value)
    except (TypeError, ValueError):
        raise ConfigException(f"Expected a number for {key}, got {value!r}", key=key)
    return value


def _build(cls: type, section: str, values: Any) -> Any:
    if values is None:
        values = {}
    if not isinstance(values, Mapping):
        raise ConfigException(f"Section '{section}' must be a mapping", key=section)
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    kwargs: Dict[str, Any] = {}
    for key, value in values.items():
        if key not in names or (section, key) in EXCLUDED_FIELDS:
            raise ConfigException(f"Unknown configuration key '{section}.{key}'", key=f"{section}.{key}")
        if cls is InterpolationTask and key in ("source", "target"):
            kwargs[key] = _build(DatasetSpec, f"{section}.{key}", value)
        else:
            kwargs[key] = _coerce(value, hints.get(key), f"{section}.{key}")
    try:
        return cls(**kwargs)
    except ConfigException:
        raise
    except IndmException as e:
        raise ConfigException(f"Invalid section '{section}': {e.message}", key=section)
    except (TypeError, ValueError) as e:
        raise ConfigException(f"Invalid section '{section}': {e}", key=section)


def run_config_from_dict(data: Optional[Mapping[str, Any]]) -> RunConfig:
    """Build a validated RunConfig from nested sections.

    Raises:
        ConfigException: On unknown keys or invalid values
    """
    data = dict(data or {})
    kwargs: Dict[str, Any] = {}
    for key, value in data.items():
        if key in SECTIONS:
            if key == "interpolation" and value is None:
                continue
            kwargs[key] = _build(SECTIONS[key], key, value)
        elif key in TOP_LEVEL_KEYS:
            kwargs[key] = int(value) if key == "seed" else str(value)
        else:
            raise ConfigException(f"Unknown configuration key '{key}'", key=key)
    return RunConfig(**kwargs)


def load_run_config(
    path: Optional[Union[str, Path]] = None,
    seed: Optional[int] = None,
    out_dir: Optional[str] = None,
) -> RunConfig:
    """Read a run YAML file (or defaults) and apply command-line overrides.

    Raises:
        ConfigException: If the file is missing or malformed
    """
    data: Dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigException(f"Config file not found: {path}", key=str(path))
        with open(path, "r", encoding="utf-8") as handle:
            try:
                data = yaml.safe_load(handle) or {}
            except yaml.YAMLError as e:
                raise ConfigException(f"Malformed YAML in {path}: {e}", key=str(path))
        if not isinstance(data, Mapping):
            raise ConfigException(f"Config file {path} is not a mapping", key=str(path))
    config = run_config_from_dict(data)
    overrides: Dict[str, Any] = {}
    if seed is not None:
        overrides["seed"] = int(seed)
    if out_dir is not None:
        overrides["out_dir"] = str(out_dir)
    if overrides:
        config = dataclasses.replace(config, **overrides)
    logger.debug(f"Loaded run config (seed={config.seed}, out_dir={config.out_dir})")
    return config


def run_config_to_dict(config: RunConfig) -> Dict[str, Any]:
    """Plain nested mapping of a RunConfig, readable by ``run_config_from_dict``."""
    data = config.to_dict()
    data["sampler"].pop("prior", None)
    if data.get("interpolation") is None:
        data.pop("interpolation", None)
    return data


def dump_run_config(config: RunConfig) -> str:
    return yaml.safe_dump(run_config_to_dict(config), sort_keys=False)
