"""Run configuration: defaults, JSON config file, environment, CLI flags.

Precedence, lowest to highest: built-in defaults, config file values,
environment (SGCR_BASE_URL / SGCR_API_KEY), command-line flags. The merge
is table-driven off the dataclass fields so a new knob only needs to be
declared once.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Mapping, Optional

from .errors import ConfigError
from .implicit import MAX_PROPOSALS
from .ingestion import DEFAULT_CONTEXT_LINES
from .retrieval import DEFAULT_MOCK_DIMENSION, DEFAULT_SCORE_THRESHOLD, DEFAULT_TOP_K
from .specs import DEFAULT_CHUNK_BUDGET

logger = logging.getLogger(__name__)

MODES = ("full", "explicit_only", "implicit_only", "baseline")
BACKENDS = ("mock", "replay", "record", "http")
EMBEDDINGS = ("mock", "http")
FORMATS = ("json", "markdown")
AGGREGATIONS = ("deterministic", "model")

ENV_BASE_URL = "SGCR_BASE_URL"
ENV_API_KEY = "SGCR_API_KEY"

# Config keys that never appear in report echoes or run identity.
_PRIVATE_KEYS = ("api_key", "base_url", "output")


@dataclass(frozen=True)
class RunConfig:
    mode: str = "full"
    backend: str = "mock"
    specs_dir: Optional[str] = None
    language: Optional[str] = None
    chunk_budget: int = DEFAULT_CHUNK_BUDGET
    ensemble_size: int = 3
    quorum: int = 2
    temperature: float = 0.7
    seed: int = 0
    top_k: int = DEFAULT_TOP_K
    score_threshold: float = DEFAULT_SCORE_THRESHOLD
    context_lines: int = DEFAULT_CONTEXT_LINES
    aggregation: str = "deterministic"
    format: str = "json"
    max_proposals: int = MAX_PROPOSALS
    implicit_soft_fail: bool = True
    allow_ungrounded: bool = False
    patches: bool = False
    model_summary: bool = False
    fixtures_dir: Optional[str] = None
    index_path: Optional[str] = None
    embedding: str = "mock"
    embedding_dimension: int = DEFAULT_MOCK_DIMENSION
    base_url: Optional[str] = None
    api_key: Optional[str] = None
    model: str = "default"
    repo_root: str = "."
    output: Optional[str] = None

    def echo(self) -> dict[str, object]:
        """Config as reported in output: everything except private keys."""
        payload = {
            f.name: getattr(self, f.name)
            for f in fields(self)
            if f.name not in _PRIVATE_KEYS
        }
        return payload


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}

_BOOL_FIELDS = {"implicit_soft_fail", "allow_ungrounded", "patches", "model_summary"}
_INT_FIELDS = {
    "chunk_budget",
    "ensemble_size",
    "quorum",
    "seed",
    "top_k",
    "context_lines",
    "max_proposals",
    "embedding_dimension",
}
_FLOAT_FIELDS = {"temperature", "score_threshold"}


def _coerce(key: str, value: object) -> object:
    if value is None:
        return None
    if key in _BOOL_FIELDS:
        if not isinstance(value, bool):
            raise ConfigError(f"config key {key!r} must be a boolean")
        return value
    if key in _INT_FIELDS:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"config key {key!r} must be an integer")
        return value
    if key in _FLOAT_FIELDS:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"config key {key!r} must be a number")
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(f"config key {key!r} must be a string")
    return value


def load_config_file(path: Path) -> dict[str, object]:
    """Read a JSON config file, rejecting unknown keys."""
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}")
    if not isinstance(raw, dict):
        raise ConfigError(f"config file {path} must contain a JSON object")
    unknown = sorted(set(raw) - set(_FIELD_TYPES))
    if unknown:
        raise ConfigError(f"unknown config keys in {path}: {', '.join(unknown)}")
    return {key: _coerce(key, value) for key, value in raw.items()}


def env_overrides(environ: Optional[Mapping[str, str]] = None) -> dict[str, object]:
    env = os.environ if environ is None else environ
    overrides: dict[str, object] = {}
    if env.get(ENV_BASE_URL):
        overrides["base_url"] = env[ENV_BASE_URL]
    if env.get(ENV_API_KEY):
        overrides["api_key"] = env[ENV_API_KEY]
    return overrides


def merge_config(
    file_values: Optional[Mapping[str, object]] = None,
    env_values: Optional[Mapping[str, object]] = None,
    flag_values: Optional[Mapping[str, object]] = None,
) -> RunConfig:
    """Layer the three sources over the defaults; later sources win.

    flag_values must omit (not None out) flags the user did not pass.
    """
    config = RunConfig()
    for source in (file_values, env_values, flag_values):
        if not source:
            continue
        unknown = sorted(set(source) - set(_FIELD_TYPES))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        config = replace(config, **dict(source))
    return config


def validate_config(config: RunConfig) -> None:
    """Reject impossible or incomplete configurations up front."""
    if config.mode not in MODES:
        raise ConfigError(f"mode must be one of {', '.join(MODES)}; got {config.mode!r}")
    if config.backend not in BACKENDS:
        raise ConfigError(
            f"backend must be one of {', '.join(BACKENDS)}; got {config.backend!r}"
        )
    if config.embedding not in EMBEDDINGS:
        raise ConfigError(
            f"embedding must be one of {', '.join(EMBEDDINGS)}; got {config.embedding!r}"
        )
    if config.format not in FORMATS:
        raise ConfigError(
            f"format must be one of {', '.join(FORMATS)}; got {config.format!r}"
        )
    if config.aggregation not in AGGREGATIONS:
        raise ConfigError(
            f"aggregation must be one of {', '.join(AGGREGATIONS)};"
            f" got {config.aggregation!r}"
        )
    if config.ensemble_size < 1:
        raise ConfigError("ensemble_size must be at least 1")
    if not 1 <= config.quorum <= config.ensemble_size:
        raise ConfigError(
            f"quorum must be between 1 and ensemble_size"
            f" ({config.ensemble_size}); got {config.quorum}"
        )
    if config.chunk_budget < 1:
        raise ConfigError("chunk_budget must be at least 1")
    if config.temperature < 0:
        raise ConfigError("temperature must be non-negative")
    if config.context_lines < 0:
        raise ConfigError("context_lines must be non-negative")
    if config.max_proposals < 0:
        raise ConfigError("max_proposals must be non-negative")
    if config.embedding_dimension < 1:
        raise ConfigError("embedding_dimension must be at least 1")
    if not -1.0 <= config.score_threshold <= 1.0:
        raise ConfigError("score_threshold must be within [-1, 1]")

    if config.mode != "baseline" and not config.specs_dir:
        raise ConfigError(f"mode {config.mode!r} requires --specs-dir")
    if config.backend in ("replay", "record") and not config.fixtures_dir:
        raise ConfigError(f"backend {config.backend!r} requires --fixtures")
    if config.backend in ("http", "record"):
        if not config.base_url:
            raise ConfigError(
                f"backend {config.backend!r} requires a base URL"
                f" (--base-url or {ENV_BASE_URL})"
            )
        if not config.api_key:
            raise ConfigError(
                f"backend {config.backend!r} requires an API key ({ENV_API_KEY})"
            )
    # Queries are embedded at review time, so implicit modes always need
    # a provider, prebuilt index or not.
    needs_embedder = config.mode in ("full", "implicit_only")
    if needs_embedder and config.embedding == "http":
        if not config.base_url:
            raise ConfigError(
                f"http embedding requires a base URL (--base-url or {ENV_BASE_URL})"
            )
        if not config.api_key:
            raise ConfigError(f"http embedding requires an API key ({ENV_API_KEY})")
