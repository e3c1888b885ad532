"""Composed retrieval over the memory bank and prompt serialization of the result."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from ..corpus import ASSISTANT_ACTION_DESCRIPTIONS, AssistantAction
from ..llm.gateway import Gateway
from ..llm.schemas import ASPECTS
from ..memory.bank import MemoryBank, PrincipleEntry, SituationEntry, TopicOutline
from ..vectors import Embedder, HashingEmbedder

logger = logging.getLogger(__name__)

EMPTY_SENTINEL = "(no personalized information)"
DEFAULT_K = 3


class RetrievalMode(str, Enum):
    REQUIREMENT_FOCUSED = "requirement_focused"
    PREFERENCE_FOCUSED = "preference_focused"

    @classmethod
    def parse(cls, raw: "str | RetrievalMode") -> "RetrievalMode":
        if isinstance(raw, cls):
            return raw
        key = str(raw).strip().lower()
        aliases = {"requirement": cls.REQUIREMENT_FOCUSED, "preference": cls.PREFERENCE_FOCUSED}
        return aliases.get(key) or cls(key)


@dataclass(frozen=True)
class RetrievedContext:
    situations: tuple[SituationEntry, ...] = ()
    backgrounds: tuple[tuple[str, str], ...] = ()  # (aspect, text) in fixed aspect order
    outlines: tuple[TopicOutline, ...] = ()
    principles: tuple[PrincipleEntry, ...] = ()
    mode: RetrievalMode = RetrievalMode.PREFERENCE_FOCUSED

    def is_empty(self) -> bool:
        return not (self.situations or self.backgrounds or self.outlines or self.principles)


def compose_retrieval(
    query_text: str,
    memory: MemoryBank,
    session_index: int,
    k: int = DEFAULT_K,
    mode: RetrievalMode | str = RetrievalMode.PREFERENCE_FOCUSED,
    embedder: Embedder | None = None,
) -> RetrievedContext:
    """Top-k situations of the current session, top-k outlines overall, and what they map to.

    Backgrounds are the F_GB images of the retrieved situations and principles
    the F_TP images of the retrieved outlines. Dialogue-only banks skip the
    log-side parts entirely.
    """
    mode = RetrievalMode.parse(mode)
    embedder = embedder or HashingEmbedder()
    q = embedder.embed([query_text])[0]

    situations: list[SituationEntry] = []
    backgrounds: list[tuple[str, str]] = []
    if not memory.dialogue_only:
        store = memory.situation_store(session_index)
        by_id = {e.entry_id: e for e in memory.situations_in(session_index)}
        situations = [by_id[eid] for eid, _ in store.top_k(q, k)]
        wanted = {a for s in situations for a in memory.f_gb[s.entry_id]}
        backgrounds = [(a, memory.background.aspects[a]) for a in ASPECTS if a in wanted and memory.background.aspects[a]]

    outlines = [memory.outline(eid) for eid, _ in memory.outline_store().top_k(q, k)]
    cluster_ids = []
    for o in outlines:
        cid = memory.f_tp.get(o.entry_id)
        if cid is not None and cid not in cluster_ids:
            cluster_ids.append(cid)
    principles = [memory.principle(c) for c in cluster_ids]
    return RetrievedContext(tuple(situations), tuple(backgrounds), tuple(outlines), tuple(principles), mode)


def _section(title: str, lines: Sequence[str]) -> str:
    return f"## {title}\n" + ("\n".join(lines) if lines else EMPTY_SENTINEL)


def serialize_context(m: RetrievedContext) -> str:
    """Fixed-order text sections; requirement-focused mode keeps only requirement fields."""
    pref = m.mode is RetrievalMode.PREFERENCE_FOCUSED
    outline_lines = []
    for o in m.outlines:
        outline_lines.append(f"- requirement: {o.rewritten}")
        if pref:
            for s in o.solutions:
                outline_lines.append(f"  solution: {s.solution} (user feedback, {s.feedback_type}: {s.user_feedback})")
            outline_lines.append(f"  preference: {o.preference}")
    principle_lines = []
    for p in m.principles:
        principle_lines.append(f"- requirement type: {p.requirement_type}")
        if pref:
            principle_lines.append(f"  principle: {p.principle}")
    return "\n\n".join([
        _section("Recent situations", [f"- {s.text}" for s in m.situations]),
        _section("Background", [f"- {a}: {t}" for a, t in m.backgrounds]),
        _section("Topic outlines", outline_lines),
        _section("Principles", principle_lines),
    ])


def render_dialogue_context(turns: Sequence[tuple[str, str]]) -> str:
    """``[(role, text), ...]`` as ``role: text`` lines."""
    return "\n".join(f"{role}: {text}" for role, text in turns)


def form_retrieval_query(
    dialogue_context: str | Sequence[tuple[str, str]],
    gateway: Gateway | None = None,
) -> str:
    """Plain strings are task questions and are used as-is; a dialogue is summarised into one requirement."""
    if isinstance(dialogue_context, str):
        if not dialogue_context.strip():
            raise ValueError("empty query")
        return dialogue_context
    if not dialogue_context:
        raise ValueError("empty dialogue context")
    if gateway is None:
        raise ValueError("a gateway is needed to summarise a multi-turn context")
    parsed = gateway.complete_validated(
        "rag.query_formation", {"dialogue_context": render_dialogue_context(dialogue_context)}, temperature=0.0
    ).parsed
    return parsed["requirement"]


def generate_response(
    m: RetrievedContext | str,
    query: str,
    gateway: Gateway,
    action: AssistantAction | None = None,
    dialogue_context: Sequence[tuple[str, str]] = (),
    current_turn: str = "turn_1",
) -> str:
    """R = LLM(m, Q). With an action, the reply follows the multi-turn assistant template."""
    memory = m if isinstance(m, str) else serialize_context(m)
    if action is None:
        return gateway.complete_validated("rag.respond", {"memory": memory, "query": query}).parsed["content"]
    context = list(dialogue_context) + ([("user", query)] if query else [])
    return gateway.complete_validated(
        "sim.assistant",
        {
            "memory": memory,
            "dialogue_context": render_dialogue_context(context),
            "current_turn": current_turn,
            "action": action.value,
            "action_description": ASSISTANT_ACTION_DESCRIPTIONS[action],
        },
    ).parsed["content"]
