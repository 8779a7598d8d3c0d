"""
Configuration loading.

Simulation parameters come from a KEY=VALUE text file (parsed with
python-dotenv) and from CLI flags, never from the environment. The one
environment override is MI_WORKERS, the worker process count.
"""

import logging
import os
from typing import Any, Dict, Mapping, Optional

from dotenv import dotenv_values
from pydantic import ValidationError

from utils.errors import ConfigurationError
from utils.schema import SimulationConfig

logger = logging.getLogger(__name__)

WORKERS_ENV = "MI_WORKERS"

# Config-file keys that hold comma-separated lists
LIST_KEYS = {"n_values", "rates", "methods", "estimands"}


def parse_config_file(path: str) -> Dict[str, Any]:
    """
    Read a KEY=VALUE file into SimulationConfig field names.

    Keys are case-insensitive; list fields are comma-separated.
    """
    if not os.path.isfile(path):
        raise ConfigurationError(f"config file not found: {path}")
    values = dotenv_values(path)
    parsed: Dict[str, Any] = {}
    for key, raw in values.items():
        name = key.strip().lower()
        if name not in SimulationConfig.model_fields:
            raise ConfigurationError(f"unknown config key '{key}' in {path}")
        if raw is None or raw.strip() == "":
            raise ConfigurationError(f"config key '{key}' in {path} has no value")
        if name in LIST_KEYS:
            parsed[name] = [item.strip() for item in raw.split(",") if item.strip()]
        else:
            parsed[name] = raw.strip()
    logger.info(f"Loaded {len(parsed)} settings from {path}")
    return parsed


def build_config(file_values: Optional[Mapping[str, Any]] = None,
                 overrides: Optional[Mapping[str, Any]] = None) -> SimulationConfig:
    """
    Merge file values and CLI overrides (overrides win) into a validated config.

    Overrides set to None are ignored.
    """
    merged: Dict[str, Any] = dict(file_values or {})
    for key, value in (overrides or {}).items():
        if value is not None:
            merged[key] = value
    try:
        return SimulationConfig(**merged)
    except ValidationError as e:
        raise ConfigurationError(f"invalid simulation config: {e}")


def worker_count(default: int = 1) -> int:
    """MI_WORKERS from the environment, or default"""
    raw = os.getenv(WORKERS_ENV)
    if raw is None or raw.strip() == "":
        return default
    try:
        workers = int(raw)
    except ValueError:
        raise ConfigurationError(f"{WORKERS_ENV} must be an integer, got '{raw}'")
    if workers < 1:
        raise ConfigurationError(f"{WORKERS_ENV} must be >= 1, got {workers}")
    return workers
