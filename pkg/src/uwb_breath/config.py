"""Plain-text ``key = value`` configuration files.

Blank lines and lines starting with ``#`` are ignored. Keys are normalised
to lower case with dashes turned into underscores, so ``learning-rate`` and
``learning_rate`` name the same setting.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path


class ConfigError(ValueError):
    """A config file or override that cannot be used."""


def normalize_key(key: str) -> str:
    return key.strip().lower().replace("-", "_")


def parse_kv(text: str, source: str = "<config>") -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = normalize_key(key)
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = value.strip()
    return out


def load_kv(path) -> dict[str, str]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_kv(text, str(path))


def coerce(value: str, kind, key: str = "value"):
    """Convert a config string to ``kind`` (bool, int, float or str)."""
    try:
        if kind is bool:
            low = value.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        if kind is int:
            return int(value)
        if kind is float:
            return float(value)
        return str(value)
    except ValueError:
        raise ConfigError(f"{key}: cannot read {value!r} as {kind.__name__}") from None


def apply_to_dataclass(instance, values: dict[str, str], skip=()):
    """Copy of ``instance`` with the matching fields replaced; unknown keys raise."""
    fields = {f.name: f for f in dataclasses.fields(instance) if f.name not in skip}
    changes = {}
    for key, raw in values.items():
        if key not in fields:
            known = ", ".join(sorted(fields))
            raise ConfigError(f"unknown setting {key!r}; known settings: {known}")
        kind = type(getattr(instance, key))
        changes[key] = coerce(raw, kind, key)
    return dataclasses.replace(instance, **changes)
