"""Log relation graph: windowed relation extraction and connected subgraphs."""

from __future__ import annotations

import logging
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence, TypeVar

from ..corpus import TIMESTAMP_FORMAT, LogEntry
from ..llm.gateway import Gateway, ValidationFailure
from ..llm.schemas import log_relations_check
from .bank import LogRelation, RelationKind

logger = logging.getLogger(__name__)

CHUNK = 10
CONTEXT = 10

T = TypeVar("T")
R = TypeVar("R")


class ConstructionError(RuntimeError):
    pass


def ordered_map(fn: Callable[[T], R], items: Sequence[T], workers: int = 1) -> list[R]:
    """``map`` with an optional thread pool; results always come back in input order."""
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


@dataclass(frozen=True)
class Window:
    context: tuple[int, ...]
    span: tuple[int, ...]

    @property
    def visible(self) -> tuple[int, ...]:
        return self.context + self.span

    def label(self) -> str:
        return f"log_{self.span[0]} - log_{self.span[-1]}"


def window_layout(n_logs: int, chunk: int = CHUNK, context: int = CONTEXT) -> list[Window]:
    """Fixed chunks of ``chunk`` logs, each preceded by up to ``context`` earlier logs."""
    out = []
    for start in range(0, n_logs, chunk):
        span = tuple(range(start, min(start + chunk, n_logs)))
        ctx = tuple(range(max(0, start - context), start))
        out.append(Window(ctx, span))
    return out


def format_log(log: LogEntry) -> str:
    return f"{log.log_id} | {log.timestamp.strftime(TIMESTAMP_FORMAT)} | {log.log_type.label} | {log.content}"


def connected_components(n: int, edges: Iterable[tuple[int, int]]) -> list[list[int]]:
    """Components of the undirected graph on ``0..n-1``, each sorted, ordered by smallest member."""
    adj: list[list[int]] = [[] for _ in range(n)]
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    seen = [False] * n
    comps = []
    for root in range(n):
        if seen[root]:
            continue
        seen[root] = True
        comp, queue = [], deque([root])
        while queue:
            v = queue.popleft()
            comp.append(v)
            for w in adj[v]:
                if not seen[w]:
                    seen[w] = True
                    queue.append(w)
        comps.append(sorted(comp))
    return comps


def parse_relations(parsed: dict) -> list[LogRelation]:
    rels: dict[tuple[int, int], RelationKind] = {}
    for key in sorted(parsed, key=lambda k: int(k[4:])):
        to = int(key[4:])
        for kind in (RelationKind.CAUSED_BY, RelationKind.FOLLOWS):
            for ref in parsed[key][kind.value]:
                # caused_by wins when a pair is listed under both kinds
                rels.setdefault((int(ref[4:]), to), kind)
    return [LogRelation(a, b, k) for (a, b), k in sorted(rels.items())]


def build_log_graph(
    logs: Sequence[LogEntry],
    gateway: Gateway,
    *,
    workers: int = 1,
    chunk: int = CHUNK,
    context: int = CONTEXT,
    temperature: float | None = 0.0,
) -> tuple[list[LogRelation], list[list[int]]]:
    """Relations from one LLM call per window, then connected subgraphs of the log ids."""
    if any(b.timestamp < a.timestamp for a, b in zip(logs, logs[1:])):
        raise ConstructionError("logs must be in timestamp order")

    def analyse(window: Window) -> list[LogRelation]:
        bindings = {
            "logs": "\n".join(format_log(logs[i]) for i in window.visible),
            "logs_id_span": window.label(),
        }
        try:
            result = gateway.complete_validated(
                "mem.log_relations", bindings,
                check=log_relations_check(window.span, window.visible), temperature=temperature,
            )
        except ValidationFailure as exc:
            raise ConstructionError(f"log relation window {window.label()} failed: {exc}") from exc
        return parse_relations(result.parsed)

    per_window = ordered_map(analyse, window_layout(len(logs), chunk, context), workers)
    relations = sorted({r for rs in per_window for r in rs}, key=lambda r: (r.to_log, r.from_log))
    subgraphs = connected_components(len(logs), ((r.from_log, r.to_log) for r in relations))
    return relations, subgraphs
