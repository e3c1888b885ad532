"""Chat-completion backends.

A backend turns a :class:`CompletionRequest` into raw reply text. The HTTP
backend speaks the OpenAI-compatible chat-completions protocol; the mock
backend is a pure function of (template id, bindings, attempt).
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Protocol, Union

import httpx

logger = logging.getLogger(__name__)


class BackendError(RuntimeError):
    """Transport or service failure. ``retryable`` marks transient errors."""

    def __init__(self, message: str, retryable: bool = True):
        super().__init__(message)
        self.retryable = retryable


@dataclass(frozen=True)
class CompletionRequest:
    template_id: str
    bindings: Mapping[str, str]
    prompt: str
    attempt: int = 1
    temperature: float | None = None
    max_tokens: int | None = None
    seed: int | None = None


class Backend(Protocol):
    backend_id: str

    def complete(self, request: CompletionRequest) -> str: ...


def bindings_hash(bindings: Mapping[str, str]) -> str:
    canonical = json.dumps(dict(bindings), sort_keys=True, ensure_ascii=False, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


# --------------------------------------------------------------------------- HTTP


class OpenAICompatibleBackend:
    """POSTs ``{base_url}/chat/completions`` and returns the first choice's content."""

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key: str | None = None,
        timeout: float = 60.0,
        client: httpx.Client | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key = api_key
        self.backend_id = f"openai-compatible:{model}"
        self._client = client or httpx.Client(timeout=timeout)

    @classmethod
    def from_env(cls, prefix: str = "H2MEMORY_CHAT") -> "OpenAICompatibleBackend":
        url = os.environ.get(f"{prefix}_URL")
        model = os.environ.get(f"{prefix}_MODEL")
        if not url or not model:
            raise BackendError(f"{prefix}_URL and {prefix}_MODEL must be set", retryable=False)
        return cls(url, model, os.environ.get(f"{prefix}_API_KEY"))

    def complete(self, request: CompletionRequest) -> str:
        payload: dict[str, Any] = {
            "model": self.model,
            "messages": [{"role": "user", "content": request.prompt}],
        }
        if request.temperature is not None:
            payload["temperature"] = request.temperature
        if request.max_tokens is not None:
            payload["max_tokens"] = request.max_tokens
        if request.seed is not None:
            payload["seed"] = request.seed
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            resp = self._client.post(f"{self.base_url}/chat/completions", json=payload, headers=headers)
        except httpx.HTTPError as exc:
            raise BackendError(f"chat request failed: {exc}") from exc
        if resp.status_code == 429 or resp.status_code >= 500:
            raise BackendError(f"chat endpoint returned {resp.status_code}")
        if resp.status_code >= 400:
            raise BackendError(f"chat endpoint returned {resp.status_code}: {resp.text[:200]}", retryable=False)
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"malformed chat response: {exc}") from exc


# --------------------------------------------------------------------------- mock

Responder = Callable[[Mapping[str, str], int], str]
FixtureValue = Union[str, list]


@dataclass
class MockBackend:
    """Deterministic stand-in for a chat model.

    Lookup order: ``fixtures[(template_id, bindings_hash)]``, then
    ``overrides[template_id]``, then the generative fallback in
    :mod:`h2memory.llm.mock`. A fixture may be a list, indexed by attempt
    (the last entry repeats).
    """

    fixtures: dict[tuple[str, str], FixtureValue] = field(default_factory=dict)
    overrides: dict[str, Responder] = field(default_factory=dict)
    backend_id: str = "mock"

    def complete(self, request: CompletionRequest) -> str:
        key = (request.template_id, bindings_hash(request.bindings))
        if key in self.fixtures:
            value = self.fixtures[key]
            if isinstance(value, list):
                return value[min(request.attempt, len(value)) - 1]
            return value
        if request.template_id in self.overrides:
            return self.overrides[request.template_id](request.bindings, request.attempt)
        from . import mock

        return mock.respond(request.template_id, request.bindings, request.attempt)


def scripted(*replies: str) -> Responder:
    """Override that answers attempt ``i`` with ``replies[i-1]`` (last one repeats)."""

    def responder(bindings: Mapping[str, str], attempt: int) -> str:
        return replies[min(attempt, len(replies)) - 1]

    return responder
