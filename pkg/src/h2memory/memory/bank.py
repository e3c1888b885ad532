"""Memory bank records and their JSON form."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Mapping

import numpy as np

from ..llm.schemas import ASPECTS
from ..vectors import ClusterModel, VectorStore


class RelationKind(str, Enum):
    CAUSED_BY = "caused_by"
    FOLLOWS = "follows"


@dataclass(frozen=True)
class LogRelation:
    """Directed edge: ``to_log`` was caused by / follows the earlier ``from_log``."""

    from_log: int
    to_log: int
    kind: RelationKind

    def __post_init__(self) -> None:
        if self.from_log >= self.to_log:
            raise ValueError(f"relation must point backward in time: {self.from_log} -> {self.to_log}")


@dataclass(frozen=True)
class SituationEntry:
    entry_id: str
    session_index: int
    member_log_ids: tuple[int, ...]
    text: str
    aspects: tuple[str, ...]
    embedding: tuple[float, ...]

    def vector(self) -> np.ndarray:
        return np.asarray(self.embedding)


@dataclass(frozen=True)
class SolutionRecord:
    solution: str
    user_feedback: str
    feedback_type: str


@dataclass(frozen=True)
class TopicOutline:
    entry_id: str
    session_index: int
    turn_span: tuple[int, int]
    requirement: str
    rewritten: str
    solutions: tuple[SolutionRecord, ...]
    preference: str
    embedding: tuple[float, ...] = ()

    def vector(self) -> np.ndarray:
        return np.asarray(self.embedding)


@dataclass(frozen=True)
class PrincipleEntry:
    cluster_id: int
    requirement_type: str
    principle: str


def _empty_background() -> dict[str, str]:
    return {a: "" for a in ASPECTS}


@dataclass
class BackgroundMemory:
    aspects: dict[str, str] = field(default_factory=_empty_background)
    last_updated_session: int | None = None

    def __post_init__(self) -> None:
        if set(self.aspects) != set(ASPECTS):
            raise ValueError(f"background must have exactly the aspects {ASPECTS}")


@dataclass
class MemoryBank:
    """The four memory parts of one user plus the cross-part mappings.

    ``situations`` is keyed by session index. ``f_gb`` maps situation ids to
    background aspects and ``f_tp`` maps outline ids to principle clusters.
    """

    user_id: str
    embedder: dict[str, Any]
    situations: dict[int, list[SituationEntry]] = field(default_factory=dict)
    relations: dict[int, list[LogRelation]] = field(default_factory=dict)
    background: BackgroundMemory = field(default_factory=BackgroundMemory)
    outlines: list[TopicOutline] = field(default_factory=list)
    principles: list[PrincipleEntry] = field(default_factory=list)
    clusters: ClusterModel | None = None
    f_gb: dict[str, tuple[str, ...]] = field(default_factory=dict)
    f_tp: dict[str, int] = field(default_factory=dict)
    sessions_seen: list[int] = field(default_factory=list)
    dialogue_only: bool = False

    # ------------------------------------------------------------------ lookups

    def situations_in(self, session_index: int) -> list[SituationEntry]:
        return list(self.situations.get(session_index, []))

    def all_situations(self) -> list[SituationEntry]:
        return [e for j in sorted(self.situations) for e in self.situations[j]]

    def outline(self, entry_id: str) -> TopicOutline:
        for o in self.outlines:
            if o.entry_id == entry_id:
                return o
        raise KeyError(entry_id)

    def principle(self, cluster_id: int) -> PrincipleEntry:
        for p in self.principles:
            if p.cluster_id == cluster_id:
                return p
        raise KeyError(cluster_id)

    def situation_store(self, session_index: int) -> VectorStore:
        store = VectorStore(int(self.embedder["dimension"]))
        for e in self.situations_in(session_index):
            store.add(e.entry_id, e.vector(), tag=str(session_index))
        return store

    def outline_store(self) -> VectorStore:
        store = VectorStore(int(self.embedder["dimension"]))
        for o in self.outlines:
            store.add(o.entry_id, o.vector(), tag=str(o.session_index))
        return store

    def replace_outline(self, outline: TopicOutline) -> None:
        for i, o in enumerate(self.outlines):
            if o.entry_id == outline.entry_id:
                self.outlines[i] = outline
                return
        raise KeyError(outline.entry_id)

    def set_principle(self, entry: PrincipleEntry) -> None:
        for i, p in enumerate(self.principles):
            if p.cluster_id == entry.cluster_id:
                self.principles[i] = entry
                return
        self.principles.append(entry)
        self.principles.sort(key=lambda p: p.cluster_id)

    # ------------------------------------------------------------------ integrity

    def consistency_errors(self) -> list[str]:
        """Every way the bank breaks its mapping and partition rules, as messages naming the entry."""
        errors = []
        sit_ids = {e.entry_id for e in self.all_situations()}
        for eid in sit_ids - set(self.f_gb):
            errors.append(f"situation {eid} has no F_GB image")
        for eid, aspects in self.f_gb.items():
            if eid not in sit_ids:
                errors.append(f"F_GB references unknown situation {eid}")
            elif not aspects or set(aspects) - set(ASPECTS):
                errors.append(f"F_GB image of {eid} is not a non-empty aspect subset")
        outline_ids = {o.entry_id for o in self.outlines}
        cluster_ids = {p.cluster_id for p in self.principles}
        for eid, cid in self.f_tp.items():
            if eid not in outline_ids:
                errors.append(f"F_TP references unknown outline {eid}")
            if cid not in cluster_ids:
                errors.append(f"F_TP maps {eid} to unknown principle cluster {cid}")
        if self.principles:
            for eid in outline_ids - set(self.f_tp):
                errors.append(f"outline {eid} has no F_TP image")
        if set(self.background.aspects) != set(ASPECTS):
            errors.append("background aspects are not exactly the four fixed aspects")
        return errors

    # ------------------------------------------------------------------ serialization

    def to_dict(self) -> dict[str, Any]:
        return {
            "user_id": self.user_id,
            "embedder": dict(self.embedder),
            "dialogue_only": self.dialogue_only,
            "sessions_seen": list(self.sessions_seen),
            "situations": {
                str(j): [
                    {
                        "entry_id": e.entry_id,
                        "session_index": e.session_index,
                        "member_log_ids": list(e.member_log_ids),
                        "text": e.text,
                        "aspects": list(e.aspects),
                        "embedding": list(e.embedding),
                    }
                    for e in self.situations[j]
                ]
                for j in sorted(self.situations)
            },
            "relations": {
                str(j): [[r.from_log, r.to_log, r.kind.value] for r in self.relations[j]]
                for j in sorted(self.relations)
            },
            "background": {
                "aspects": dict(self.background.aspects),
                "last_updated_session": self.background.last_updated_session,
            },
            "outlines": [
                {
                    "entry_id": o.entry_id,
                    "session_index": o.session_index,
                    "turn_span": list(o.turn_span),
                    "requirement": o.requirement,
                    "rewritten": o.rewritten,
                    "solutions": [
                        {"solution": s.solution, "user_feedback": s.user_feedback, "feedback_type": s.feedback_type}
                        for s in o.solutions
                    ],
                    "preference": o.preference,
                    "embedding": list(o.embedding),
                }
                for o in self.outlines
            ],
            "principles": [
                {"cluster_id": p.cluster_id, "requirement_type": p.requirement_type, "principle": p.principle}
                for p in self.principles
            ],
            "clusters": self.clusters.to_dict() if self.clusters is not None else None,
            "f_gb": {k: list(v) for k, v in sorted(self.f_gb.items())},
            "f_tp": dict(sorted(self.f_tp.items())),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "MemoryBank":
        situations = {
            int(j): [
                SituationEntry(
                    e["entry_id"], int(e["session_index"]), tuple(e["member_log_ids"]), e["text"],
                    tuple(e["aspects"]), tuple(float(x) for x in e["embedding"]),
                )
                for e in entries
            ]
            for j, entries in d["situations"].items()
        }
        relations = {
            int(j): [LogRelation(int(a), int(b), RelationKind(k)) for a, b, k in rels]
            for j, rels in d.get("relations", {}).items()
        }
        outlines = [
            TopicOutline(
                o["entry_id"], int(o["session_index"]), tuple(o["turn_span"]), o["requirement"], o["rewritten"],
                tuple(SolutionRecord(**s) for s in o["solutions"]), o["preference"],
                tuple(float(x) for x in o["embedding"]),
            )
            for o in d["outlines"]
        ]
        bg = d["background"]
        return cls(
            user_id=d["user_id"],
            embedder=dict(d["embedder"]),
            situations=situations,
            relations=relations,
            background=BackgroundMemory(dict(bg["aspects"]), bg.get("last_updated_session")),
            outlines=outlines,
            principles=[PrincipleEntry(int(p["cluster_id"]), p["requirement_type"], p["principle"]) for p in d["principles"]],
            clusters=ClusterModel.from_dict(d["clusters"]) if d.get("clusters") else None,
            f_gb={k: tuple(v) for k, v in d["f_gb"].items()},
            f_tp={k: int(v) for k, v in d["f_tp"].items()},
            sessions_seen=[int(x) for x in d.get("sessions_seen", [])],
            dialogue_only=bool(d.get("dialogue_only", False)),
        )


def with_rewrite(outline: TopicOutline, rewritten: str, embedding: tuple[float, ...]) -> TopicOutline:
    return replace(outline, rewritten=rewritten, embedding=embedding)
