"""Plain-text ``key=value`` configuration files."""
from __future__ import annotations

import dataclasses
from pathlib import Path

from .constraint import ConstraintSchedule
from .separation import SeparationConfig

# accepted spellings -> SeparationConfig / ConstraintSchedule field
ALIASES = {
    "bases": "bases_per_instrument",
    "iters": "iterations",
    "init": "init_mode",
    "recon": "reconstruction_mode",
    "lpc-order": "lpc_order",
    "alpha-step": "alpha_step",
    "alpha-start": "alpha_start",
    "frame-size": "frame_size",
    "hop-size": "hop_size",
    "sample-rate": "sample_rate",
}

_CONFIG_FIELDS = {f.name: f.type for f in dataclasses.fields(SeparationConfig) if f.name != "schedule"}
_SCHEDULE_FIELDS = {f.name: f.type for f in dataclasses.fields(ConstraintSchedule)}


def read_kv(path) -> dict:
    """Parse ``key=value`` lines; ``#`` starts a comment."""
    out = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{n}: expected key=value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


def normalize_key(key: str) -> str:
    key = key.strip()
    return ALIASES.get(key, key.replace("-", "_"))


def _convert(name: str, value):
    kind = _CONFIG_FIELDS.get(name) or _SCHEDULE_FIELDS.get(name)
    if isinstance(value, str):
        if kind in ("int", int):
            return int(value)
        if kind in ("float", float):
            return float(value)
    return value


def config_from_mapping(mapping: dict, base: SeparationConfig | None = None,
                        strict: bool = False) -> SeparationConfig:
    """Build a config from string values; unknown keys are ignored unless ``strict``."""
    base = base or SeparationConfig()
    changes = {}
    for key, value in mapping.items():
        if value is None:
            continue
        name = normalize_key(key)
        if name in _CONFIG_FIELDS or name in _SCHEDULE_FIELDS:
            changes[name] = _convert(name, value)
        elif strict:
            raise ValueError(f"unknown configuration key {key!r}")
    return base.replace(**changes)


def write_kv(path, mapping: dict) -> None:
    with open(path, "w") as fh:
        for k, v in mapping.items():
            fh.write(f"{k}={v}\n")
