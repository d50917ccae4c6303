"""JSON experiment configs with dotted-key overrides.

A config file is one JSON object.  Top-level keys are ``ExperimentConfig``
fields; ``model``, ``completion`` and ``jointsparse`` are nested objects for
the corresponding parameter dataclasses.  Overrides use dotted paths, e.g.
``model.n_primary=3`` or ``trials=50``; values are parsed as JSON and fall
back to plain strings.
"""
from __future__ import annotations

import copy
import dataclasses
import json
from pathlib import Path

from .harness import ExperimentConfig, InfeasibleRateError
from .jointsparse import JointSparseParams
from .matcomp import CompletionParams
from .scenario import ModelConfig

SECTIONS = {"model": ModelConfig, "completion": CompletionParams, "jointsparse": JointSparseParams}


class ConfigError(ValueError):
    pass


def _field_names(cls) -> set[str]:
    return {f.name for f in dataclasses.fields(cls)}


def parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(raw: dict, overrides: list[str]) -> dict:
    raw = copy.deepcopy(raw)
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"override {item!r} is not KEY=VALUE")
        parts = key.strip().split(".")
        node = raw
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {key!r}: {part!r} is not a section")
        node[parts[-1]] = parse_value(value.strip())
    return raw


def build_config(raw: dict) -> ExperimentConfig:
    top = _field_names(ExperimentConfig)
    unknown = set(raw) - top
    if unknown:
        raise ConfigError(f"unknown config field(s): {', '.join(sorted(unknown))}")
    kwargs = {}
    for key, value in raw.items():
        if key in SECTIONS:
            cls = SECTIONS[key]
            if not isinstance(value, dict):
                raise ConfigError(f"field {key!r} must be an object")
            bad = set(value) - _field_names(cls)
            if bad:
                raise ConfigError(f"unknown field(s) in {key!r}: {', '.join(sorted(bad))}")
            try:
                kwargs[key] = cls(**value)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"field {key!r}: {exc}") from exc
        elif key in ("sampling_rates", "n_primary_values"):
            kwargs[key] = tuple(value) if isinstance(value, (list, tuple)) else (value,)
        else:
            kwargs[key] = value
    try:
        return ExperimentConfig(**kwargs)
    except InfeasibleRateError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_raw(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return raw


def load_config(path, overrides=()) -> tuple[ExperimentConfig, dict]:
    raw = apply_overrides(load_raw(path), list(overrides))
    return build_config(raw), raw
