"""Configuration file handling for the command-line entry point.

Config files are YAML mirroring the Scenario structure; omitted keys fall
back to the full-scale defaults (4 BSs, 30 users, 12 RBGs, 20 MHz,
38/1 dBm, 100 ms slots, 20000 slots). Unknown keys are rejected with the
offending key path.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path

import yaml

from .environment import MobilityParams
from .experiment import Scenario
from .phy import SimParams
from .rl import TrainConfig


class ConfigError(ValueError):
    """Bad configuration; message carries the key path."""


_SECTIONS = {
    "params": SimParams,
    "mobility": MobilityParams,
    "train": TrainConfig,
}
_TOP_LEVEL = {"traffic_mean": float, "n_slots": int, "mode": str,
              "master_seed": int}


def _coerce(value, field_type):
    if field_type is bool and isinstance(value, str):
        if value.lower() in ("true", "1", "yes"):
            return True
        if value.lower() in ("false", "0", "no"):
            return False
        raise ValueError(f"not a boolean: {value!r}")
    if field_type in (int, float, str):
        return field_type(value)
    return value


def _section_kwargs(name: str, cls, data: dict) -> dict:
    fields = {f.name: f.type for f in dataclasses.fields(cls)}
    types = {f.name: type(getattr(cls(), f.name)) for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in fields:
            raise ConfigError(f"unknown key {name}.{key}")
        try:
            kwargs[key] = _coerce(value, types[key])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {name}.{key}: {exc}") from exc
    return kwargs


def _merge_overrides(data: dict, overrides) -> dict:
    """Apply ``key=value`` / ``section.key=value`` strings on top."""
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override must look like key=value: {item!r}")
        path, value = item.split("=", 1)
        value = yaml.safe_load(value)
        parts = path.split(".")
        if len(parts) == 1:
            data[parts[0]] = value
        elif len(parts) == 2:
            data.setdefault(parts[0], {})
            if not isinstance(data[parts[0]], dict):
                raise ConfigError(f"{parts[0]} is not a section")
            data[parts[0]][parts[1]] = value
        else:
            raise ConfigError(f"override path too deep: {path!r}")
    return data


def parse_config(path=None, overrides=None) -> Scenario:
    """Build a Scenario from defaults, an optional YAML file and overrides.

    Raises ConfigError with the key path on unknown keys or invalid
    values (dataclass invariants included).
    """
    data: dict = {}
    if path is not None:
        text = Path(path).read_text()
        loaded = yaml.safe_load(text)
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a mapping")
        data = loaded
    data = _merge_overrides(data, overrides)

    for key in data:
        if key not in _SECTIONS and key not in _TOP_LEVEL:
            raise ConfigError(f"unknown key {key}")

    kwargs = {}
    for name, cls in _SECTIONS.items():
        section = data.get(name, {})
        if not isinstance(section, dict):
            raise ConfigError(f"{name} must be a mapping")
        try:
            obj = cls(**_section_kwargs(name, cls, section))
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"invalid {name}: {exc}") from exc
        key = {"params": "params", "mobility": "mobility",
               "train": "train_cfg"}[name]
        kwargs[key] = obj

    for key, field_type in _TOP_LEVEL.items():
        if key in data:
            try:
                kwargs[key] = _coerce(data[key], field_type)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {key}: {exc}") from exc
    try:
        return Scenario(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid scenario: {exc}") from exc
