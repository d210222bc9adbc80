"""Application settings resolved from CLI flags, environment, a config file and defaults.

The config file is flat ``key = value`` text; blank lines and lines starting
with ``#`` are ignored. Every key can also be set through the environment as
``HIERGRAPH_<KEY>`` (upper case). Precedence, highest first: command-line flag,
environment variable, config file, built-in default.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Mapping

ENV_PREFIX = "HIERGRAPH_"
CONFIG_ENV = ENV_PREFIX + "CONFIG"


class ConfigError(ValueError):
    """Bad configuration value or file."""


@dataclass(frozen=True)
class AppConfig:
    # provider endpoints; empty means "use the offline mock"
    embed_url: str = ""
    rerank_fast_url: str = ""
    rerank_fine_url: str = ""
    generate_url: str = ""
    api_key: str = ""
    timeout: float = 30.0
    dim: int = 256
    # index and build
    index: str = ""
    chunk_size: int = 600
    overlap: int = 100
    tau: float = 0.95
    gamma: float = 1.0
    levels: int = 3
    seed: int = 0
    # retrieval
    k: int = 3
    m: int = 10
    budget: int = 4000
    # reward scheduling
    window: int = 16
    temperature: float = 1.0
    advantage_mode: str = "standard"
    log_level: str = "WARNING"

    def __post_init__(self):
        if self.k < 1 or self.m < 1:
            raise ConfigError(f"k and m must be >= 1 (k={self.k}, m={self.m})")
        if self.dim < 1:
            raise ConfigError("dim must be >= 1")
        if self.advantage_mode not in ("standard", "literal"):
            raise ConfigError(f"advantage_mode must be 'standard' or 'literal', got {self.advantage_mode!r}")


KEYS = {f.name: f.type for f in fields(AppConfig)}
_CASTS = {"int": int, "float": float, "str": str}


def _cast(key: str, raw, origin: str):
    if key not in KEYS:
        raise ConfigError(f"{origin}: unknown config key {key!r}; known keys: {', '.join(sorted(KEYS))}")
    try:
        return _CASTS[KEYS[key]](raw)
    except (TypeError, ValueError):
        raise ConfigError(f"{origin}: {key} expects {KEYS[key]}, got {raw!r}") from None


def read_config_file(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    values = {}
    for lineno, line in enumerate(p.read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{p}:{lineno}: expected 'key = value', got {line!r}")
        key = key.strip().lower().replace("-", "_")
        values[key] = _cast(key, value.strip(), f"{p}:{lineno}")
    return values


def env_values(environ: Mapping[str, str] | None = None) -> dict:
    environ = os.environ if environ is None else environ
    return {key: _cast(key, environ[ENV_PREFIX + key.upper()], ENV_PREFIX + key.upper())
            for key in KEYS if ENV_PREFIX + key.upper() in environ}


def load_config(cli: Mapping | None = None, config_path=None,
                environ: Mapping[str, str] | None = None) -> AppConfig:
    """Merge the four sources. ``cli`` entries set to None count as absent."""
    environ = os.environ if environ is None else environ
    merged: dict = {}
    path = config_path or environ.get(CONFIG_ENV)
    if path:
        merged.update(read_config_file(path))
    merged.update(env_values(environ))
    merged.update({k: _cast(k, v, "command line") for k, v in (cli or {}).items() if v is not None})
    return AppConfig(**merged)
