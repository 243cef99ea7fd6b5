"""Run configuration: CLI flags over environment over YAML over defaults."""
import logging
import os
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from boundary_trace.errors import ConfigError

load_dotenv()

logger = logging.getLogger(__name__)

COMMANDS = ("whitney", "metric", "boundary", "extend", "select", "check-fp", "render")
ENV_OVERRIDES = {"seed": "WHITNEY_SEED", "depth": "WHITNEY_DEPTH", "workers": "WHITNEY_WORKERS"}


class Tolerances(BaseModel):
    model_config = ConfigDict(extra="forbid")

    equiv: float = Field(1e-4, gt=0)
    lp: float = Field(1e-9, gt=0)
    probe: float = Field(1e-5, gt=0)
    consistency: float = Field(1e-9, gt=0)


class RunConfig(BaseModel):
    """Settings shared by every command."""

    model_config = ConfigDict(extra="forbid")

    command: str = "whitney"
    domain_path: Optional[str] = None
    depth: int = Field(6, ge=1, le=24)
    seed: int = 0
    budget: int = Field(200, ge=1)
    alpha: float = Field(8.0, ge=1)
    tolerances: Tolerances = Field(default_factory=Tolerances)
    max_skirt_fraction: float = Field(0.5, gt=0, le=1)
    workers: int = Field(1, ge=1)
    record_timings: bool = False
    outputs: Dict[str, str] = Field(default_factory=dict)


def _read_yaml(path: Union[str, Path]) -> Dict[str, Any]:
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f) or {}
    except (OSError, yaml.YAMLError) as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a mapping")
    return data


def _from_env() -> Dict[str, Any]:
    values = {}
    for name, var in ENV_OVERRIDES.items():
        raw = os.getenv(var)
        if raw is None or raw.strip() == "":
            continue
        try:
            values[name] = int(raw)
        except ValueError as e:
            raise ConfigError(f"{var} must be an integer, got {raw!r}") from e
    return values


def load_config(
    cli: Optional[Mapping[str, Any]] = None, config_path: Optional[Union[str, Path]] = None
) -> RunConfig:
    """Merge settings with precedence CLI > environment > YAML > defaults.

    Args:
        cli: Values given explicitly on the command line (None entries are ignored)
        config_path: Optional YAML file

    Raises:
        ConfigError: On unreadable files or invalid values
    """
    merged: Dict[str, Any] = {}
    if config_path:
        merged.update(_read_yaml(config_path))
    merged.update(_from_env())
    tolerances = dict(merged.get("tolerances") or {})
    for key, value in (cli or {}).items():
        if value is None:
            continue
        if key in Tolerances.model_fields:
            tolerances[key] = value
        else:
            merged[key] = value
    if tolerances:
        merged["tolerances"] = tolerances
    try:
        config = RunConfig(**merged)
    except (ValidationError, TypeError) as e:
        raise ConfigError(f"invalid configuration: {e}") from e
    logger.debug(f"Run configuration: {config.model_dump()}")
    return config
