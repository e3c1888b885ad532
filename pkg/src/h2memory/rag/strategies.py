"""Memory strategies behind a common session-stream interface.

A strategy sees a user's sessions in order: ``begin`` digests the history,
``enter_session`` exposes the logs gathered before the current dialogue,
``context`` returns the memory text for a query, and ``finish_session``
absorbs the finished dialogue.
"""

from __future__ import annotations

import logging
from abc import ABC, abstractmethod
from enum import Enum
from typing import Sequence

from ..corpus import UserCorpus, collect_latest_logs, render_dialogue
from ..llm.gateway import Gateway
from ..memory.bank import MemoryBank
from ..memory.builder import BuildConfig, MemoryBuilder
from ..memory.graph import format_log
from ..vectors import Embedder, HashingEmbedder, VectorStore
from .retrieval import (
    DEFAULT_K,
    EMPTY_SENTINEL,
    RetrievalMode,
    compose_retrieval,
    generate_response,
    serialize_context,
)

logger = logging.getLogger(__name__)

SESSION_CHAR_BUDGET = 2000


class BaselineStrategy(str, Enum):
    VANILLA_NO_LOG = "vanilla_no_log"
    VANILLA_WITH_LOG = "vanilla_with_log"
    TURN_RAG = "turn_rag"
    SESSION_RAG = "session_rag"
    RECURSIVE_SUMMARY = "recursive_summary"


H2MEMORY = "h2memory"
STRATEGY_NAMES = (H2MEMORY, *(b.value for b in BaselineStrategy))


class Strategy(ABC):
    name: str

    def __init__(self, gateway: Gateway, embedder: Embedder | None = None, k: int = DEFAULT_K):
        self.gateway = gateway
        self.embedder = embedder or HashingEmbedder()
        self.k = k
        self.corpus: UserCorpus | None = None
        self.current: int | None = None

    def begin(self, corpus: UserCorpus, history: Sequence[int]) -> None:
        self.corpus = corpus
        for j in history:
            self.enter_session(j)
            self.finish_session(j)

    def enter_session(self, j: int) -> None:
        self.current = j

    def finish_session(self, j: int) -> None:
        self.current = None

    @abstractmethod
    def context(self, query: str, mode: RetrievalMode | str = RetrievalMode.PREFERENCE_FOCUSED) -> str: ...

    def respond(self, query: str, mode: RetrievalMode | str = RetrievalMode.PREFERENCE_FOCUSED) -> str:
        return generate_response(self.context(query, mode), query, self.gateway)

    def current_logs_text(self) -> str:
        if self.corpus is None or self.current is None:
            return ""
        return "\n".join(format_log(l) for l in collect_latest_logs(self.corpus, self.current))


def _sections(*parts: tuple[str, str]) -> str:
    return "\n\n".join(f"## {title}\n{body or EMPTY_SENTINEL}" for title, body in parts)


class VanillaNoLog(Strategy):
    name = BaselineStrategy.VANILLA_NO_LOG.value

    def begin(self, corpus: UserCorpus, history: Sequence[int]) -> None:
        self.corpus = corpus  # history is deliberately ignored

    def context(self, query, mode=RetrievalMode.PREFERENCE_FOCUSED) -> str:
        return EMPTY_SENTINEL


class VanillaWithLog(Strategy):
    name = BaselineStrategy.VANILLA_WITH_LOG.value

    def begin(self, corpus: UserCorpus, history: Sequence[int]) -> None:
        self.corpus = corpus

    def context(self, query, mode=RetrievalMode.PREFERENCE_FOCUSED) -> str:
        return _sections(("Current session logs", self.current_logs_text()))


class _IndexedRag(Strategy):
    """Shared machinery for the two granularity baselines: embed units, retrieve top-k."""

    def __init__(self, gateway, embedder=None, k=DEFAULT_K):
        super().__init__(gateway, embedder, k)
        self.store = VectorStore(self.embedder.dimension)
        self.texts: dict[str, str] = {}

    def _add(self, unit_id: str, text: str) -> None:
        self.store.add(unit_id, self.embedder.embed([text])[0])
        self.texts[unit_id] = text

    def retrieve(self, query: str) -> list[str]:
        if not len(self.store):
            return []
        return [eid for eid, _ in self.store.top_k(self.embedder.embed([query])[0], self.k)]

    def context(self, query, mode=RetrievalMode.PREFERENCE_FOCUSED) -> str:
        hits = "\n\n".join(self.texts[eid] for eid in self.retrieve(query))
        return _sections(("Related history", hits), ("Current session logs", self.current_logs_text()))


class TurnRag(_IndexedRag):
    name = BaselineStrategy.TURN_RAG.value

    def finish_session(self, j: int) -> None:
        for t in self.corpus.sessions[j].dialogue:
            self._add(f"U{j:04d}_{t.turn_index:04d}", f"user: {t.user_utterance}\nassistant: {t.assistant_utterance}")
        super().finish_session(j)


class SessionRag(_IndexedRag):
    name = BaselineStrategy.SESSION_RAG.value

    def __init__(self, gateway, embedder=None, k=DEFAULT_K, char_budget: int = SESSION_CHAR_BUDGET):
        super().__init__(gateway, embedder, k)
        self.char_budget = char_budget

    def finish_session(self, j: int) -> None:
        dialogue = self.corpus.sessions[j].dialogue
        if dialogue:
            transcript = "\n".join(f"user: {t.user_utterance}\nassistant: {t.assistant_utterance}" for t in dialogue)
            self._add(f"S{j:04d}", transcript[: self.char_budget])
        super().finish_session(j)


class RecursiveSummary(Strategy):
    name = BaselineStrategy.RECURSIVE_SUMMARY.value

    def __init__(self, gateway, embedder=None, k=DEFAULT_K):
        super().__init__(gateway, embedder, k)
        self.dialogue_summary = ""
        self.log_summary = ""

    def finish_session(self, j: int) -> None:
        session = self.corpus.sessions[j]
        logs = collect_latest_logs(self.corpus, j)
        if logs:
            self.log_summary = self.gateway.complete_validated(
                "baseline.log_summary",
                {"previous_summary": self.log_summary or "(empty)", "logs": "\n".join(format_log(l) for l in logs)},
                temperature=0.0,
            ).parsed["summary"]
        if session.dialogue:
            self.dialogue_summary = self.gateway.complete_validated(
                "baseline.dialogue_summary",
                {"previous_summary": self.dialogue_summary or "(empty)", "dialogue": render_dialogue(session.dialogue)},
                temperature=0.0,
            ).parsed["summary"]
        super().finish_session(j)

    def context(self, query, mode=RetrievalMode.PREFERENCE_FOCUSED) -> str:
        return _sections(
            ("Dialogue history summary", self.dialogue_summary),
            ("Log history summary", self.log_summary),
            ("Current session logs", self.current_logs_text()),
        )


class H2MemoryStrategy(Strategy):
    """The four-part memory: built once over the history, then updated session by session."""

    name = H2MEMORY

    def __init__(self, gateway, embedder=None, k=DEFAULT_K, config: BuildConfig | None = None,
                 bank: MemoryBank | None = None):
        super().__init__(gateway, embedder, k)
        cfg = config or BuildConfig(k=k)
        self.builder = MemoryBuilder(gateway, self.embedder, cfg)
        self.bank = bank

    def begin(self, corpus: UserCorpus, history: Sequence[int]) -> None:
        self.corpus = corpus
        if self.bank is None:
            self.bank = self.builder.build(corpus, history)
        else:
            logger.info("using a preloaded memory bank for %s", corpus.user_id)

    def enter_session(self, j: int) -> None:
        super().enter_session(j)
        self.builder.enter_session(self.bank, self.corpus, j)

    def finish_session(self, j: int) -> None:
        self.builder.finish_session(self.bank, self.corpus, j)
        super().finish_session(j)

    def retrieve(self, query: str, mode=RetrievalMode.PREFERENCE_FOCUSED):
        session = self.current if self.current is not None else -1
        return compose_retrieval(query, self.bank, session, self.k, mode, self.embedder)

    def context(self, query, mode=RetrievalMode.PREFERENCE_FOCUSED) -> str:
        return serialize_context(self.retrieve(query, mode))


_CLASSES: dict[str, type[Strategy]] = {
    H2MEMORY: H2MemoryStrategy,
    BaselineStrategy.VANILLA_NO_LOG.value: VanillaNoLog,
    BaselineStrategy.VANILLA_WITH_LOG.value: VanillaWithLog,
    BaselineStrategy.TURN_RAG.value: TurnRag,
    BaselineStrategy.SESSION_RAG.value: SessionRag,
    BaselineStrategy.RECURSIVE_SUMMARY.value: RecursiveSummary,
}


def make_strategy(name: str, gateway: Gateway, embedder: Embedder | None = None, k: int = DEFAULT_K,
                  **kwargs) -> Strategy:
    try:
        cls = _CLASSES[name]
    except KeyError:
        raise ValueError(f"unknown strategy {name!r}; choose from {', '.join(STRATEGY_NAMES)}") from None
    return cls(gateway, embedder, k, **kwargs)


def run_baseline(
    strategy: BaselineStrategy | str,
    corpus: UserCorpus,
    session_index: int,
    query: str,
    gateway: Gateway,
    k: int = DEFAULT_K,
    embedder: Embedder | None = None,
) -> str:
    """Answer ``query`` in session ``session_index`` using only earlier sessions as history."""
    name = strategy.value if isinstance(strategy, BaselineStrategy) else BaselineStrategy(strategy).value
    s = make_strategy(name, gateway, embedder, k)
    s.begin(corpus, range(session_index))
    s.enter_session(session_index)
    return s.respond(query)
