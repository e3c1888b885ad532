"""The single entry point for model calls.

Every structured call renders a registered template, sends it to a backend,
extracts and validates the JSON reply, and regenerates on contract violations
until the retry budget is spent. Transport failures are retried separately
with exponential backoff and do not consume the regeneration budget.
"""

from __future__ import annotations

import json
import logging
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Mapping

from .backends import Backend, BackendError, CompletionRequest, bindings_hash
from .jsonext import JSONExtractionError, extract_json
from .prompts import render_prompt
from .schemas import SchemaViolation, validate_output

logger = logging.getLogger(__name__)

DEFAULT_RETRY_BUDGET = 3


class ValidationFailure(RuntimeError):
    """No reply satisfied the output contract within the retry budget."""

    def __init__(self, template_id: str, attempts: int, last_raw: str, last_error: str):
        super().__init__(f"{template_id}: no valid reply after {attempts} attempts ({last_error})")
        self.template_id = template_id
        self.attempts = attempts
        self.last_raw = last_raw
        self.last_error = last_error


@dataclass(frozen=True)
class CompletionResult:
    template_id: str
    raw: str
    parsed: Any
    attempts: int


class TokenBucket:
    """Blocking token bucket; ``rate`` tokens per second, burst ``capacity``."""

    def __init__(self, rate: float, capacity: float | None = None, clock: Callable[[], float] = time.monotonic):
        self.rate = rate
        self.capacity = capacity if capacity is not None else max(1.0, rate)
        self._tokens = self.capacity
        self._clock = clock
        self._last = clock()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self._clock()
                self._tokens = min(self.capacity, self._tokens + (now - self._last) * self.rate)
                self._last = now
                if self._tokens >= 1:
                    self._tokens -= 1
                    return
                wait = (1 - self._tokens) / self.rate
            time.sleep(wait)


class Gateway:
    def __init__(
        self,
        backend: Backend,
        *,
        retry_budget: int = DEFAULT_RETRY_BUDGET,
        transport_retries: int = 3,
        backoff: float = 0.5,
        max_concurrency: int = 4,
        rate_per_second: float | None = None,
        transcript_path: str | Path | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if retry_budget < 1:
            raise ValueError("retry_budget must be >= 1")
        self.backend = backend
        self.retry_budget = retry_budget
        self.transport_retries = transport_retries
        self.backoff = backoff
        self._slots = threading.BoundedSemaphore(max_concurrency)
        self._bucket = TokenBucket(rate_per_second) if rate_per_second else None
        self._sleep = sleep
        self._lock = threading.Lock()
        self.transcript: list[dict[str, Any]] = []
        self.transcript_path = Path(transcript_path) if transcript_path else None
        if self.transcript_path is not None:
            self.transcript_path.parent.mkdir(parents=True, exist_ok=True)

    def _record(self, record: dict[str, Any]) -> None:
        with self._lock:
            self.transcript.append(record)
            if self.transcript_path is not None:
                with open(self.transcript_path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")

    def _send(self, request: CompletionRequest) -> str:
        delay = self.backoff
        for n in range(self.transport_retries + 1):
            try:
                if self._bucket is not None:
                    self._bucket.acquire()
                with self._slots:
                    return self.backend.complete(request)
            except BackendError as exc:
                if not exc.retryable or n == self.transport_retries:
                    raise
                logger.warning("%s: transport error (%s), retrying in %.2fs", request.template_id, exc, delay)
                self._sleep(delay)
                delay *= 2
        raise AssertionError("unreachable")

    def complete_validated(
        self,
        template_id: str,
        bindings: Mapping[str, str],
        *,
        check: Callable[[Any], None] | None = None,
        retry_budget: int | None = None,
        temperature: float | None = None,
        max_tokens: int | None = None,
    ) -> CompletionResult:
        """Return the first reply whose JSON passes the template contract and ``check``."""
        budget = self.retry_budget if retry_budget is None else retry_budget
        if budget < 1:
            raise ValueError("retry_budget must be >= 1")
        prompt = render_prompt(template_id, bindings)
        bhash = bindings_hash(bindings)
        raw, error = "", ""
        for attempt in range(1, budget + 1):
            request = CompletionRequest(
                template_id, dict(bindings), prompt, attempt=attempt,
                temperature=temperature, max_tokens=max_tokens,
            )
            raw = self._send(request)
            record: dict[str, Any] = {
                "template_id": template_id, "bindings_hash": bhash, "attempt": attempt, "raw": raw,
            }
            try:
                parsed = extract_json(raw)
                validate_output(template_id, parsed)
                if check is not None:
                    check(parsed)
            except (JSONExtractionError, SchemaViolation) as exc:
                error = str(exc)
                record["error"] = error
                self._record(record)
                logger.debug("%s attempt %d rejected: %s", template_id, attempt, error)
                continue
            record["parsed"] = parsed
            self._record(record)
            return CompletionResult(template_id, raw, parsed, attempt)
        raise ValidationFailure(template_id, budget, raw, error)

    def calls(self, template_id: str | None = None) -> list[dict[str, Any]]:
        with self._lock:
            return [r for r in self.transcript if template_id is None or r["template_id"] == template_id]


class CallCapture:
    """Backend wrapper that keeps every request it forwards; for assertions in tests and audits."""

    def __init__(self, inner: Backend):
        self.inner = inner
        self.backend_id = getattr(inner, "backend_id", "captured")
        self.requests: list[CompletionRequest] = []
        self._lock = threading.Lock()

    def complete(self, request: CompletionRequest) -> str:
        with self._lock:
            self.requests.append(request)
        return self.inner.complete(request)

    def template_ids(self) -> list[str]:
        return [r.template_id for r in self.requests]

    def prompts(self, template_id: str | None = None) -> list[str]:
        return [r.prompt for r in self.requests if template_id is None or r.template_id == template_id]
