"""Shared key-value config file format.

All config files (machine, controller, scenario, identify, train) use the
same plain-text layout: one `key = value` per line, `#` starts a comment,
blank lines ignored.  Some keys are repeatable (`pole`, `event`).
"""

from __future__ import annotations

import os


class ConfigError(ValueError):
    """Malformed config file or unknown/invalid key."""


def read_pairs(path) -> list[tuple[str, str]]:
    """Parse a config file into an ordered list of (key, value) pairs."""
    pairs = []
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}")
                key, value = line.split("=", 1)
                key = key.strip()
                value = value.strip()
                if not key or not value:
                    raise ConfigError(f"{path}:{lineno}: empty key or value")
                pairs.append((key, value))
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return pairs


def as_map(pairs, *, repeatable=()) -> dict:
    """Collapse pairs to a dict; repeatable keys become lists, duplicates of
    other keys are an error."""
    out: dict = {}
    for key, value in pairs:
        if key in repeatable:
            out.setdefault(key, []).append(value)
        elif key in out:
            raise ConfigError(f"duplicate key {key!r}")
        else:
            out[key] = value
    return out


def parse_float(key, value) -> float:
    try:
        return float(value)
    except ValueError as exc:
        raise ConfigError(f"key {key!r}: not a number: {value!r}") from exc


def parse_int(key, value) -> int:
    try:
        return int(value)
    except ValueError as exc:
        raise ConfigError(f"key {key!r}: not an integer: {value!r}") from exc


def parse_bool(key, value) -> bool:
    lowered = value.lower()
    if lowered in ("true", "yes", "on", "1"):
        return True
    if lowered in ("false", "no", "off", "0"):
        return False
    raise ConfigError(f"key {key!r}: not a boolean: {value!r}")


def resolve_path(base_file, value) -> str:
    """Resolve a path value relative to the directory of the config file."""
    if os.path.isabs(value):
        return value
    return os.path.normpath(os.path.join(os.path.dirname(os.path.abspath(base_file)), value))
