"""Session-by-session orchestration of memory construction for one user."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Sequence

from ..corpus import DATE_FORMAT, DialogueTurn, LogEntry, UserCorpus, collect_latest_logs
from ..llm.gateway import Gateway
from ..vectors import Embedder, HashingEmbedder, fingerprint
from .bank import MemoryBank, TopicOutline
from .construction import (
    abstract_principle,
    extract_topic_outlines,
    init_principles,
    rewrite_requirement,
    summarize_situations,
    update_background,
    update_principles,
)
from .graph import CHUNK, CONTEXT, build_log_graph

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BuildConfig:
    k: int = 3
    n_clusters: int = 8
    seed: int = 0
    workers: int = 1
    dialogue_only: bool = False
    chunk: int = CHUNK
    context: int = CONTEXT


class MemoryBuilder:
    """Feeds sessions into a :class:`MemoryBank` strictly in order.

    Only session logs and dialogues reach the model; persona annotations on
    the corpus are never read here.
    """

    def __init__(self, gateway: Gateway, embedder: Embedder | None = None, config: BuildConfig | None = None):
        self.gateway = gateway
        self.embedder = embedder or HashingEmbedder()
        self.config = config or BuildConfig()

    def new_bank(self, user_id: str) -> MemoryBank:
        return MemoryBank(user_id=user_id, embedder=fingerprint(self.embedder), dialogue_only=self.config.dialogue_only)

    # ------------------------------------------------------------------ per-session steps

    def ingest_logs(
        self,
        bank: MemoryBank,
        session_index: int,
        logs: Sequence[LogEntry],
        time_span: tuple[str, str] | None = None,
    ) -> None:
        """Log graph, situations and the recursive background update for one session."""
        if bank.dialogue_only:
            raise RuntimeError("dialogue-only banks do not take logs")
        cfg = self.config
        relations, subgraphs = (
            build_log_graph(logs, self.gateway, workers=cfg.workers, chunk=cfg.chunk, context=cfg.context)
            if logs else ([], [])
        )
        entries = summarize_situations(
            session_index, logs, subgraphs, relations, self.gateway, self.embedder, workers=cfg.workers
        )
        bank.relations[session_index] = relations
        bank.situations[session_index] = entries
        bank.background, f_gb = update_background(
            bank.background, entries, self.gateway, session_index=session_index, time_span=time_span,
        )
        bank.f_gb.update(f_gb)
        logger.info("session %d: %d logs -> %d situations", session_index, len(logs), len(entries))

    def ingest_dialogue(
        self, bank: MemoryBank, session_index: int, dialogue: Sequence[DialogueTurn], update_principles_now: bool = True
    ) -> list[TopicOutline]:
        """Topic outlines with rewritten requirements, appended to M_T.

        When principles already exist (and ``update_principles_now``), each new
        outline is folded into its nearest cluster. In dialogue-only mode each
        dialogue becomes its own principle instead.
        """
        if not dialogue:
            return []
        existing = sum(1 for o in bank.outlines if o.session_index == session_index)
        outlines = extract_topic_outlines(session_index, dialogue, self.gateway, first_ordinal=existing)
        outlines = [rewrite_requirement(o, bank, self.gateway, self.embedder, self.config.k) for o in outlines]
        bank.outlines.extend(outlines)
        if bank.dialogue_only:
            cid = len(bank.principles)
            bank.principles.append(abstract_principle(cid, outlines, self.gateway))
            bank.f_tp.update({o.entry_id: cid for o in outlines})
        elif update_principles_now and bank.principles:
            for o in outlines:
                update_principles(bank, o, self.gateway)
        return outlines

    def mark_seen(self, bank: MemoryBank, session_index: int) -> None:
        if session_index not in bank.sessions_seen:
            bank.sessions_seen.append(session_index)

    def process_session(self, bank: MemoryBank, corpus: UserCorpus, session_index: int) -> None:
        """Logs then dialogue of one session, updating principles incrementally."""
        self.enter_session(bank, corpus, session_index)
        self.finish_session(bank, corpus, session_index)

    def enter_session(self, bank: MemoryBank, corpus: UserCorpus, session_index: int) -> None:
        if not bank.dialogue_only:
            s = corpus.sessions[session_index]
            span = tuple(d.strftime(DATE_FORMAT) for d in s.time_span)
            self.ingest_logs(bank, session_index, collect_latest_logs(corpus, session_index), span)

    def finish_session(self, bank: MemoryBank, corpus: UserCorpus, session_index: int) -> None:
        self.ingest_dialogue(bank, session_index, corpus.sessions[session_index].dialogue)
        self.mark_seen(bank, session_index)

    # ------------------------------------------------------------------ whole history

    def build(self, corpus: UserCorpus, session_indices: Iterable[int] | None = None) -> MemoryBank:
        """Memory over the given sessions (default: all), clustering principles once at the end."""
        bank = self.new_bank(corpus.user_id)
        indices = list(range(len(corpus.sessions)) if session_indices is None else session_indices)
        if indices != sorted(indices):
            raise ValueError("sessions must be processed in order")
        for j in indices:
            self.enter_session(bank, corpus, j)
            self.ingest_dialogue(bank, j, corpus.sessions[j].dialogue, update_principles_now=False)
            self.mark_seen(bank, j)
        if not bank.dialogue_only:
            init_principles(bank, self.gateway, self.config.n_clusters, self.config.seed, workers=self.config.workers)
        return bank
