"""Strict dataclass construction from JSON-like dicts."""

from __future__ import annotations

import dataclasses
import typing


class ConfigError(ValueError):
    pass


def from_dict(cls, d, section: str):
    """Build dataclass ``cls`` from ``d``; unknown keys are an error, missing keys take defaults."""
    if d is None:
        d = {}
    if not isinstance(d, dict):
        raise ConfigError(f"[{section}] must be an object, got {type(d).__name__}")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(d) - names)
    if unknown:
        raise ConfigError(f"[{section}] unknown key(s): {', '.join(unknown)}; allowed: {', '.join(sorted(names))}")
    hints = typing.get_type_hints(cls)
    kwargs = {}
    for k, v in d.items():
        hint = hints.get(k)
        if hint is float and isinstance(v, int) and not isinstance(v, bool):
            v = float(v)
        elif hint is int and isinstance(v, float) and v.is_integer():
            v = int(v)
        kwargs[k] = v
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"[{section}] {e}") from None
