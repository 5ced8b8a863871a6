"""Strict construction of config dataclasses from nested mappings."""

from __future__ import annotations

import dataclasses
from typing import Any

from .errors import ConfigError


def strict_kwargs(cls, data: Any, where: str) -> dict:
    """Validate ``data`` against ``cls``'s fields and return it as kwargs.

    Unknown keys are errors, reported by dotted path.
    """
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(data).__name__}")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(f'{where}.{k}' for k in unknown)}")
    required = {
        f.name
        for f in dataclasses.fields(cls)
        if f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING
    }
    missing = sorted(required - set(data))
    if missing:
        raise ConfigError(f"{where}: missing key(s) {', '.join(f'{where}.{k}' for k in missing)}")
    return dict(data)


def build(cls, data: Any, where: str):
    kwargs = strict_kwargs(cls, data, where)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{where}: {exc}") from exc
