"""
Configuration management for quasi-radial tree experiments.
Parses flat key=value (or JSON) experiment configs and experiment_config.json runner defaults.
"""

import hashlib
import json
import os
from pathlib import Path
from typing import Any, Dict, Optional, Union

from dotenv import load_dotenv
from pydantic import ValidationError

from src.config import constants
from src.core.models import ConfigError, ExperimentConfig


_ALIASES_BACK = {field: key for key, field in constants.KEY_ALIASES.items()}


def _field_name(key: str) -> str:
    key = key.strip()
    return constants.KEY_ALIASES.get(key, key.replace(".", "_"))


def _parse_value(field: str, value: str) -> Any:
    if field not in constants.LIST_KEYS:
        return value
    items = [item.strip() for item in value.split(",") if item.strip()]
    # "1:0" is a weight vector for a Z^m target
    return [item.split(":") if ":" in item else item for item in items]


def parse_key_values(text: str) -> Dict[str, Any]:
    """Flat UTF-8 key=value lines; '#' starts a comment, blank lines are skipped."""
    raw: Dict[str, Any] = {}
    names: Dict[str, str] = {}
    for number, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(line, f"line {number} is not key=value")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {number}", "missing key")
        if not value:
            raise ConfigError(key, "empty value")
        field = _field_name(key)
        if field in raw:
            raise ConfigError(key, f"duplicate key (first set as '{names[field]}')")
        names[field] = key
        raw[field] = _parse_value(field, value)
    return raw


def _flatten(data: Dict[str, Any], prefix: str = "") -> Dict[str, Any]:
    flat: Dict[str, Any] = {}
    for key, value in data.items():
        dotted = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(_flatten(value, f"{dotted}."))
        else:
            flat[_field_name(dotted)] = value
    return flat


def validate_config(raw: Dict[str, Any]) -> ExperimentConfig:
    """Build an ExperimentConfig; any problem becomes a ConfigError naming the key."""
    try:
        config = ExperimentConfig.model_validate(raw)
    except ValidationError as e:
        error = e.errors()[0]
        field = str(error["loc"][0]) if error["loc"] else "config"
        key = _ALIASES_BACK.get(field, field)
        raise ConfigError(key, error["msg"]) from e
    for key in constants.REQUIRED_KEYS[config.kind.value]:
        if key not in config.model_fields_set:
            raise ConfigError(key, f"required for kind={config.kind.value}")
    return config


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    """Load an experiment config; files ending in .json are read as JSON, everything else as key=value."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError("config", f"file {path} not found")
    if path.suffix == ".json":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError("config", f"invalid JSON in {path}: {e}")
        if not isinstance(data, dict):
            raise ConfigError("config", f"{path} must hold a JSON object")
        raw = _flatten(data)
    else:
        raw = parse_key_values(text)
    return validate_config(raw)


def apply_overrides(config: ExperimentConfig, **overrides: Any) -> ExperimentConfig:
    """Re-validate the config with command-line values; None means not given."""
    updates = {k: v for k, v in overrides.items() if v is not None}
    if not updates:
        return config
    data = config.model_dump()
    data.update(updates)
    return validate_config(data)


def config_hash(config: ExperimentConfig) -> str:
    """SHA-256 of the canonical JSON of the settings that change results."""
    payload = config.model_dump(mode="json", exclude={"output_dir", "threads"})
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=True)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def load_runner_defaults(config_path: str = "experiment_config.json") -> Dict[str, Dict[str, Any]]:
    """Load folder naming and runner options, falling back to constants."""
    try:
        with open(config_path, "r") as f:
            config = json.load(f)
    except FileNotFoundError:
        print(f"⚠️  Config file {config_path} not found, using constants")
        return {section: dict(values) for section, values in constants.RUNNER_DEFAULTS.items()}
    except json.JSONDecodeError:
        print(f"⚠️  Invalid JSON in {config_path}, using constants")
        return {section: dict(values) for section, values in constants.RUNNER_DEFAULTS.items()}

    defaults = {}
    for section, fallback in constants.RUNNER_DEFAULTS.items():
        values = dict(fallback)
        values.update(config.get(section, {}))
        defaults[section] = values
    return defaults


def resolve_output_dir(cli_out: Optional[str], config: Optional[ExperimentConfig] = None) -> Path:
    """--out, then QRTREE_OUTPUT_DIR (from the environment or .env), then the config, then results/."""
    if cli_out:
        return Path(cli_out)
    load_dotenv()
    env_dir = os.getenv(constants.ENV_OUTPUT_DIR)
    if env_dir:
        return Path(env_dir)
    if config is not None and config.output_dir:
        return Path(config.output_dir)
    return Path(constants.DEFAULT_OUTPUT_DIR)
