"""Line-oriented key/value config parsing shared by taxonomy, scene, and material-map files.

Format: one ``key = value`` pair per line, ``#`` starts a comment, blank
lines ignored. Keys may repeat (e.g. one ``class = ...`` record per class).
"""

from __future__ import annotations

from pathlib import Path


class ConfigError(ValueError):
    """Malformed config file; message carries path and line number."""


def read_kv_lines(path: str | Path) -> list[tuple[int, str, str]]:
    """Parse a key/value config file into (lineno, key, value) triples."""
    path = Path(path)
    out = []
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        value = value.strip()
        if not key:
            raise ConfigError(f"{path}:{lineno}: empty key")
        out.append((lineno, key, value))
    return out


def parse_floats(value: str, n: int, where: str) -> list[float]:
    parts = value.split()
    if len(parts) != n:
        raise ConfigError(f"{where}: expected {n} numbers, got {len(parts)}")
    try:
        return [float(p) for p in parts]
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def parse_ints(value: str, n: int, where: str) -> list[int]:
    parts = value.split()
    if len(parts) != n:
        raise ConfigError(f"{where}: expected {n} integers, got {len(parts)}")
    try:
        return [int(p) for p in parts]
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc
