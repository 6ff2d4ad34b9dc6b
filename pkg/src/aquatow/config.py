"""Flat structured-text configuration (dotted key = value, SI units)."""

import os


class ConfigError(Exception):
    pass


def parse_flat(text: str) -> dict[str, str]:
    """Parse `a.b.c = value` lines; '#' starts a comment; blank lines ignored."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        out[key] = value.strip()
    return out


def load_flat(path: str | os.PathLike) -> dict[str, str]:
    try:
        with open(path) as f:
            return parse_flat(f.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def dump_flat(values: dict[str, str]) -> str:
    return "".join(f"{k} = {v}\n" for k, v in values.items())


def get_float(cfg: dict[str, str], key: str, default: float) -> float:
    if key not in cfg:
        return default
    try:
        return float(cfg[key])
    except ValueError as exc:
        raise ConfigError(f"{key}: not a number: {cfg[key]!r}") from exc


def get_int(cfg: dict[str, str], key: str, default: int) -> int:
    if key not in cfg:
        return default
    try:
        return int(cfg[key])
    except ValueError as exc:
        raise ConfigError(f"{key}: not an integer: {cfg[key]!r}") from exc


def get_str(cfg: dict[str, str], key: str, default: str) -> str:
    return cfg.get(key, default)


def get_floats(cfg: dict[str, str], key: str, default: list[float]) -> list[float]:
    if key not in cfg:
        return list(default)
    try:
        return [float(v) for v in cfg[key].split(",")]
    except ValueError as exc:
        raise ConfigError(f"{key}: not a comma-separated number list") from exc
