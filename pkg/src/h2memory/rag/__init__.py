"""Retrieval over the memory bank, response generation and the comparison strategies."""

from .retrieval import (
    DEFAULT_K, EMPTY_SENTINEL, RetrievalMode, RetrievedContext, compose_retrieval, form_retrieval_query,
    generate_response, render_dialogue_context, serialize_context,
)
from .strategies import (
    H2MEMORY, STRATEGY_NAMES, BaselineStrategy, H2MemoryStrategy, RecursiveSummary, SessionRag, Strategy, TurnRag,
    VanillaNoLog, VanillaWithLog, make_strategy, run_baseline,
)

__all__ = [
    "DEFAULT_K", "EMPTY_SENTINEL", "H2MEMORY", "STRATEGY_NAMES", "BaselineStrategy", "H2MemoryStrategy",
    "RecursiveSummary", "RetrievalMode", "RetrievedContext", "SessionRag", "Strategy", "TurnRag", "VanillaNoLog",
    "VanillaWithLog", "compose_retrieval", "form_retrieval_query", "generate_response", "make_strategy",
    "render_dialogue_context", "run_baseline", "serialize_context",
]
