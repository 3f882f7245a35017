"""Workbench Feature - TOML run configuration loader"""
import logging
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, Dict, Union

from pydantic import ValidationError as PydanticValidationError

from app.features.workbench.models import RunConfig
from app.shared.exceptions import ConfigError


logger = logging.getLogger("macam_workbench")


def _key_path(loc: tuple) -> str:
    return ".".join(str(part) for part in loc)


def parse_config(raw: Dict[str, Any]) -> RunConfig:
    """
    Validate a parsed key-value tree into a RunConfig.

    Raises:
        ConfigError: On unknown keys, bad unit suffixes or violated invariants;
            the message carries the dotted key path of the first problem
    """
    try:
        return RunConfig.model_validate(raw)
    except PydanticValidationError as e:
        error = e.errors()[0]
        key_path = _key_path(error["loc"]) or None
        message = error["msg"]
        if error["type"] == "extra_forbidden":
            message = "unknown key"
        extra = f" (+{e.error_count() - 1} more)" if e.error_count() > 1 else ""
        raise ConfigError(f"{message}{extra}", key_path=key_path)


def load_config(path: Union[str, Path]) -> RunConfig:
    """
    Load and fully validate a TOML run configuration.

    Args:
        path: Config file path

    Returns:
        RunConfig with defaults applied and named hardware tables resolved

    Raises:
        ConfigError: If the file is missing, is not valid TOML, or fails validation
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"Config file not found: {path}")
    try:
        with path.open("rb") as f:
            raw = tomllib.load(f)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"Malformed TOML in {path}: {e}")

    config = parse_config(raw)
    logger.info(
        f"Loaded config {path}: hardware {config.hw.adc_name}/{config.hw.macam_name}, "
        f"dataset {config.dataset.kind}, seed {config.seed}"
    )
    return config
