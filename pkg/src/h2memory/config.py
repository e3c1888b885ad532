"""Run settings: command-line flags over environment over a JSON config file."""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any, Mapping

from .llm.backends import MockBackend, OpenAICompatibleBackend
from .llm.gateway import Gateway
from .vectors import Embedder, HashingEmbedder, HttpEmbedder

logger = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Settings:
    chat_url: str | None = None
    chat_model: str | None = None
    chat_api_key: str | None = None
    judge_model: str | None = None
    embed_url: str | None = None
    embed_model: str | None = None
    embed_api_key: str | None = None
    embed_dim: int | None = None
    mock: bool = False
    k: int = 3
    n_clusters: int = 8
    seed: int = 0
    workers: int = 1
    retry_budget: int = 3
    max_concurrency: int = 4
    rate_per_second: float | None = None
    requery_each_turn: bool = True
    tokenizer: str = "whitespace"


ENV_VARS = {
    "chat_url": "H2MEMORY_CHAT_URL",
    "chat_model": "H2MEMORY_CHAT_MODEL",
    "chat_api_key": "H2MEMORY_CHAT_API_KEY",
    "judge_model": "H2MEMORY_JUDGE_MODEL",
    "embed_url": "H2MEMORY_EMBED_URL",
    "embed_model": "H2MEMORY_EMBED_MODEL",
    "embed_api_key": "H2MEMORY_EMBED_API_KEY",
    "embed_dim": "H2MEMORY_EMBED_DIM",
}

_TYPES = {f.name: f.type for f in fields(Settings)}


def _coerce(name: str, value: Any) -> Any:
    kind = str(_TYPES[name])
    if value is None:
        return None
    try:
        if kind.startswith("bool"):
            if isinstance(value, str):
                return value.strip().lower() in {"1", "true", "yes", "on"}
            return bool(value)
        if kind.startswith("int"):
            return int(value)
        if kind.startswith("float"):
            return float(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"setting {name!r}: cannot use {value!r}") from exc
    return str(value)


def load_settings(
    config_path: str | Path | None = None,
    env: Mapping[str, str] | None = None,
    overrides: Mapping[str, Any] | None = None,
) -> Settings:
    """Merge the three layers; ``None`` in ``overrides`` means the flag was not given."""
    values: dict[str, Any] = {}
    if config_path:
        try:
            with open(config_path, encoding="utf-8") as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file {config_path}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = set(doc) - set(_TYPES)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        values.update({k: _coerce(k, v) for k, v in doc.items()})
    env = os.environ if env is None else env
    for name, var in ENV_VARS.items():
        if env.get(var):
            values[name] = _coerce(name, env[var])
    for name, value in (overrides or {}).items():
        if value is not None:
            values[name] = _coerce(name, value)
    settings = Settings(**values)
    if settings.k < 1 or settings.n_clusters < 1 or settings.workers < 1 or settings.retry_budget < 1:
        raise ConfigError("k, n_clusters, workers and retry_budget must all be >= 1")
    return settings


def make_backend(settings: Settings, model: str | None = None):
    if settings.mock:
        return MockBackend()
    if not settings.chat_url or not (model or settings.chat_model):
        raise ConfigError(
            f"no chat backend configured: set {ENV_VARS['chat_url']} and {ENV_VARS['chat_model']} or pass --mock"
        )
    return OpenAICompatibleBackend(settings.chat_url, model or settings.chat_model, settings.chat_api_key)


def make_gateway(settings: Settings, transcript_path: str | Path | None = None, judge: bool = False) -> Gateway:
    backend = make_backend(settings, settings.judge_model if judge else None)
    return Gateway(
        backend,
        retry_budget=settings.retry_budget,
        max_concurrency=settings.max_concurrency,
        rate_per_second=settings.rate_per_second,
        transcript_path=transcript_path,
    )


def make_embedder(settings: Settings) -> Embedder:
    if settings.embed_url:
        if not settings.embed_dim:
            raise ConfigError(f"{ENV_VARS['embed_dim']} is required with an embedding endpoint")
        return HttpEmbedder(settings.embed_url, settings.embed_dim, settings.embed_model, settings.embed_api_key)
    return HashingEmbedder()


def with_mock(settings: Settings) -> Settings:
    return replace(settings, mock=True)
