"""LLM-driven construction steps for each memory part.

Each function takes the gateway and embedder explicitly and mutates or
returns memory records; orchestration across sessions lives in
:mod:`h2memory.memory.builder`.
"""

from __future__ import annotations

import json
import logging
from typing import Sequence

from ..corpus import DialogueTurn, LogEntry, render_dialogue
from ..llm.gateway import Gateway
from ..llm.schemas import ASPECTS, background_update_check, topic_outline_check
from ..vectors import Embedder, kmeans_cluster
from .bank import (
    BackgroundMemory,
    LogRelation,
    MemoryBank,
    PrincipleEntry,
    SituationEntry,
    SolutionRecord,
    TopicOutline,
    with_rewrite,
)
from .graph import format_log, ordered_map

logger = logging.getLogger(__name__)

CONSTRUCTION_TEMPERATURE = 0.0


def _embed(embedder: Embedder, text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in embedder.embed([text])[0])


def _dumps(obj) -> str:
    return json.dumps(obj, ensure_ascii=False, indent=1)


# --------------------------------------------------------------------------- M_G


def summarize_situations(
    session_index: int,
    logs: Sequence[LogEntry],
    subgraphs: Sequence[Sequence[int]],
    relations: Sequence[LogRelation],
    gateway: Gateway,
    embedder: Embedder,
    *,
    workers: int = 1,
) -> list[SituationEntry]:
    """One situation per subgraph, in subgraph order."""
    covered = sorted(i for g in subgraphs for i in g)
    if covered != list(range(len(logs))):
        raise ValueError("subgraphs must partition the session's logs")

    def summarize(item: tuple[int, Sequence[int]]) -> SituationEntry:
        idx, members = item
        member_set = set(members)
        lines = [format_log(logs[i]) for i in members]
        rel_lines = [
            f"log_{r.to_log} {r.kind.value} log_{r.from_log}"
            for r in relations
            if r.to_log in member_set and r.from_log in member_set
        ]
        subgraph = "\n".join(lines) + "\n\nRelations:\n" + ("\n".join(rel_lines) if rel_lines else "(none)")
        parsed = gateway.complete_validated(
            "mem.situation", {"subgraph": subgraph}, temperature=CONSTRUCTION_TEMPERATURE
        ).parsed
        aspects = tuple(a for a in ASPECTS if a in parsed["situation_aspects"])
        return SituationEntry(
            entry_id=f"G{session_index:04d}_{idx:04d}",
            session_index=session_index,
            member_log_ids=tuple(members),
            text=parsed["situation"],
            aspects=aspects,
            embedding=_embed(embedder, parsed["situation"]),
        )

    return ordered_map(summarize, list(enumerate(subgraphs)), workers)


# --------------------------------------------------------------------------- M_B


def update_background(
    background: BackgroundMemory,
    situations: Sequence[SituationEntry],
    gateway: Gateway,
    *,
    session_index: int | None = None,
    time_span: tuple[str, str] | None = None,
    previous_span: tuple[str, str] | None = None,
) -> tuple[BackgroundMemory, dict[str, tuple[str, ...]]]:
    """Recursive background update from one session's situations.

    Returns the new background and the F_GB additions. Aspects the model does
    not list as updated keep their previous text byte for byte. With no
    situations the background is returned unchanged and no call is made.
    """
    if not situations:
        return background, {}
    last = {"background": dict(background.aspects), "time_span": list(previous_span or [])}
    cur = {
        "time_span": list(time_span or []),
        "situation_list": [{"situation": s.text, "aspects": list(s.aspects)} for s in situations],
    }
    parsed = gateway.complete_validated(
        "mem.background_update",
        {"last_background": _dumps(last), "cur_situations": _dumps(cur)},
        check=background_update_check,
        temperature=CONSTRUCTION_TEMPERATURE,
    ).parsed
    aspects = dict(background.aspects)
    for a in parsed["updating_aspects"]:
        aspects[a] = parsed["updating_content"][a]
    new = BackgroundMemory(aspects, session_index if session_index is not None else background.last_updated_session)
    return new, {s.entry_id: s.aspects for s in situations}


# --------------------------------------------------------------------------- M_T


def _turn_no(turn_id: str) -> int:
    return int(turn_id.split("_", 1)[1])


def extract_topic_outlines(
    session_index: int, dialogue: Sequence[DialogueTurn], gateway: Gateway, *, first_ordinal: int = 0
) -> list[TopicOutline]:
    """Segment a dialogue into topics; r̂ starts as a copy of r and has no embedding yet."""
    if not dialogue:
        raise ValueError("dialogue must be non-empty")
    parsed = gateway.complete_validated(
        "mem.topic_outline",
        {"dialogue": render_dialogue(dialogue)},
        check=topic_outline_check(len(dialogue)),
        temperature=CONSTRUCTION_TEMPERATURE,
    ).parsed
    out = []
    for i, topic in enumerate(parsed):
        out.append(
            TopicOutline(
                entry_id=f"T{session_index:04d}_{first_ordinal + i:04d}",
                session_index=session_index,
                turn_span=(_turn_no(topic["turn_span"][0]), _turn_no(topic["turn_span"][1])),
                requirement=topic["requirement"],
                rewritten=topic["requirement"],
                solutions=tuple(
                    SolutionRecord(s["solution"], s["user_feedback"], s["feedback_type"]) for s in topic["solution_list"]
                ),
                preference=topic["preference"],
            )
        )
    return out


def _background_text(aspects: dict[str, str], wanted: Sequence[str]) -> str:
    lines = [f"{a}: {aspects[a]}" for a in ASPECTS if a in wanted and aspects.get(a)]
    return "\n".join(lines) if lines else "(empty)"


def rewrite_requirement(
    outline: TopicOutline, bank: MemoryBank, gateway: Gateway, embedder: Embedder, k: int = 3
) -> TopicOutline:
    """Enrich r with the k closest situations of the same session (and their background aspects).

    Falls back to r̂ = r without a model call when that session has no situations.
    """
    store = bank.situation_store(outline.session_index)
    if not len(store):
        return with_rewrite(outline, outline.requirement, _embed(embedder, outline.requirement))
    hits = store.top_k(embedder.embed([outline.requirement])[0], k)
    by_id = {e.entry_id: e for e in bank.situations_in(outline.session_index)}
    chosen = [by_id[eid] for eid, _ in hits]
    wanted = sorted({a for e in chosen for a in bank.f_gb.get(e.entry_id, e.aspects)})
    parsed = gateway.complete_validated(
        "mem.requirement_rewrite",
        {
            "background": _background_text(bank.background.aspects, wanted),
            "situation": "\n".join(f"- {e.text}" for e in chosen),
            "requirement": outline.requirement,
        },
        temperature=CONSTRUCTION_TEMPERATURE,
    ).parsed
    return with_rewrite(outline, parsed["requirement"], _embed(embedder, parsed["requirement"]))


# --------------------------------------------------------------------------- M_P


def abstract_principle(cluster_id: int, members: Sequence[TopicOutline], gateway: Gateway) -> PrincipleEntry:
    gamma = gateway.complete_validated(
        "mem.req_abstraction",
        {"requirements": _dumps([o.rewritten for o in members])},
        temperature=CONSTRUCTION_TEMPERATURE,
    ).parsed["general_requirement"]
    rho = gateway.complete_validated(
        "mem.pref_abstraction",
        {"general_requirement": gamma, "preferences": _dumps([o.preference for o in members])},
        temperature=CONSTRUCTION_TEMPERATURE,
    ).parsed["principle"]
    return PrincipleEntry(cluster_id, gamma, rho)


def init_principles(bank: MemoryBank, gateway: Gateway, n: int = 8, seed: int = 0, *, workers: int = 1) -> None:
    """Cluster all outline embeddings and abstract one principle per cluster.

    ``n`` shrinks to the number of outlines when there are fewer. A bank with
    no outlines gets an empty principle set.
    """
    bank.principles, bank.f_tp, bank.clusters = [], {}, None
    if not bank.outlines:
        return
    n_eff = min(n, len(bank.outlines))
    if n_eff < n:
        logger.info("only %d outlines; using %d clusters instead of %d", len(bank.outlines), n_eff, n)
    model = kmeans_cluster({o.entry_id: o.vector() for o in bank.outlines}, n_eff, seed=seed)
    groups = [[o for o in bank.outlines if model.assignments[o.entry_id] == c] for c in range(n_eff)]
    entries = ordered_map(
        lambda item: abstract_principle(item[0], item[1], gateway),
        [(c, g) for c, g in enumerate(groups) if g],
        workers,
    )
    bank.clusters = model
    bank.principles = list(entries)
    bank.f_tp = dict(model.assignments)


def update_principles(bank: MemoryBank, outline: TopicOutline, gateway: Gateway) -> int:
    """Fold one new outline into its nearest cluster and let the model revise γ and ρ if needed."""
    if bank.clusters is None or not bank.principles:
        raise ValueError("principles are not initialised")
    v = outline.vector()
    cid = bank.clusters.assign(v)
    bank.clusters.online_update(cid, v, entry_id=outline.entry_id)
    old = bank.principle(cid)
    req = gateway.complete_validated(
        "mem.req_update",
        {"general_requirement": old.requirement_type, "requirements": _dumps([outline.rewritten])},
        temperature=CONSTRUCTION_TEMPERATURE,
    ).parsed
    gamma = req["general_requirement"] if req["adjust"] == "Yes" else old.requirement_type
    pref = gateway.complete_validated(
        "mem.pref_update",
        {"general_requirement": gamma, "principle": old.principle, "preferences": _dumps([outline.preference])},
        temperature=CONSTRUCTION_TEMPERATURE,
    ).parsed
    rho = pref["principle"] if pref["adjust"] == "Yes" else old.principle
    bank.set_principle(PrincipleEntry(cid, gamma, rho))
    bank.f_tp[outline.entry_id] = cid
    return cid
