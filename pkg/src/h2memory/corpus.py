"""Domain model for long-term user-agent interaction records.

A user corpus is an ordered list of sessions. Each session pairs the
behaviour logs collected before a dialogue with the dialogue itself, and may
carry a ground-truth dialogue framework used only for evaluation.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from datetime import date, datetime
from enum import Enum
from pathlib import Path
from typing import Any, Mapping, Sequence

logger = logging.getLogger(__name__)

TIMESTAMP_FORMAT = "%Y-%m-%d %H:%M"
DATE_FORMAT = "%Y-%m-%d"


class CorpusError(ValueError):
    """Base class for corpus ingestion errors."""


class CorpusParseError(CorpusError):
    """A value in the corpus file could not be parsed."""


class CorpusSchemaError(CorpusError):
    """The corpus file violates the documented schema or a type invariant."""


class LogType(str, Enum):
    WEB_SEARCH = "web_search"
    CONTENT_PUBLISHING = "content_publishing"
    CONTENT_BROWSING = "content_browsing"
    MESSAGE_SENDING = "message_sending"
    MESSAGE_RECEIVING = "message_receiving"
    SCHEDULE_MANAGEMENT = "schedule_management"
    TRANSACTION_RECORD = "transaction_record"
    DEVICE_OPERATION = "device_operation"

    @classmethod
    def parse(cls, raw: str) -> "LogType":
        key = str(raw).strip().lower().replace(" ", "_").replace("-", "_")
        try:
            return cls(key)
        except ValueError:
            raise CorpusSchemaError(f"unknown log type {raw!r}") from None

    @property
    def label(self) -> str:
        return self.value.replace("_", " ").title()


class UserAction(str, Enum):
    TOPIC_INQUIRY = "topic_inquiry"
    REQUIREMENT_CONFIRMATION = "requirement_confirmation"
    SOLUTION_DISCUSSION = "solution_discussion"
    SOLUTION_FEEDBACK = "solution_feedback"


class AssistantAction(str, Enum):
    REQUIREMENT_PREDICTION = "requirement_prediction"
    SOLUTION_PROPOSAL = "solution_proposal"
    SOLUTION_DISCUSSION = "solution_discussion"
    FEEDBACK_RESPONSE = "feedback_response"


USER_ACTION_DESCRIPTIONS = {
    UserAction.TOPIC_INQUIRY: (
        "The user initiates an inquiry to the assistant about a certain topic, "
        "which is usually brief and somewhat vague."
    ),
    UserAction.REQUIREMENT_CONFIRMATION: (
        "The user effectively responds to the assistant's requirement inference, "
        "confirming their actual requirement."
    ),
    UserAction.SOLUTION_DISCUSSION: (
        "In response to a proposal provided by the assistant, the user does not give a "
        "clear positive or negative evaluation of the overall proposal, but instead "
        "discusses specific details of the proposal with the assistant."
    ),
    UserAction.SOLUTION_FEEDBACK: (
        "The user expresses a clear positive approval or negative disapproval attitude "
        "toward the proposal suggested by the assistant."
    ),
}

ASSISTANT_ACTION_DESCRIPTIONS = {
    AssistantAction.REQUIREMENT_PREDICTION: (
        "The assistant proactively infers the user's implicit requirement behind their "
        "inquiry, based on the user's profile or relevant experience."
    ),
    AssistantAction.SOLUTION_PROPOSAL: (
        "The assistant proposes a solution as a suggestion for the user, based on the "
        "user's specific requirement under the current topic."
    ),
    AssistantAction.SOLUTION_DISCUSSION: (
        "The assistant responds to the user's opinions or inquiries about the current "
        "proposal, further discussing the proposal with the user based on the user's "
        "profile or relevant experience, and tries to persuade the user to accept the proposal."
    ),
    AssistantAction.FEEDBACK_RESPONSE: (
        "The assistant responds to the user's expressed positive or negative attitude. "
        "No other solutions outside those specified in the dialogue framework should be "
        "offered here. When the user expresses a negative attitude, the assistant should "
        "only express apology or regret, and should not recommend other solutions."
    ),
}


def _parse_action(raw: Any, enum: type[Enum], where: str) -> Enum | None:
    if raw is None or raw == "":
        return None
    key = str(raw).strip().lower().replace(" ", "_").replace("-", "_")
    try:
        return enum(key)
    except ValueError:
        raise CorpusSchemaError(f"{where}: unknown action {raw!r}") from None


@dataclass(frozen=True)
class LogEntry:
    timestamp: datetime
    log_type: LogType
    content: str
    local_id: int

    @property
    def log_id(self) -> str:
        return f"log_{self.local_id}"

    def render(self) -> str:
        return f"[{self.log_id}] {self.timestamp.strftime(TIMESTAMP_FORMAT)} ({self.log_type.label}) {self.content}"


@dataclass(frozen=True)
class DialogueTurn:
    turn_index: int
    user_utterance: str
    assistant_utterance: str
    user_action: UserAction | None = None
    assistant_action: AssistantAction | None = None

    @property
    def turn_id(self) -> str:
        return f"turn_{self.turn_index}"


@dataclass(frozen=True)
class ImplicitNeed:
    need: str
    evidence: tuple[str, ...] = ()


@dataclass(frozen=True)
class CandidateSolution:
    id: str
    content: str


@dataclass(frozen=True)
class FrameworkTopic:
    """Ground-truth requirement and solution records for one dialogue topic."""

    topic_id: str
    user_query: str
    implicit_needs: tuple[ImplicitNeed, ...]
    requirement: str
    candidate_solutions: tuple[CandidateSolution, ...]
    pos_ids: tuple[str, ...]
    neg_ids: tuple[str, ...]
    preference: Mapping[str, str] = field(default_factory=dict)
    extra: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        where = f"framework topic {self.topic_id!r}"
        if len(self.implicit_needs) != 2:
            raise CorpusSchemaError(f"{where}: expected 2 implicit needs, got {len(self.implicit_needs)}")
        if len(self.candidate_solutions) != 8:
            raise CorpusSchemaError(f"{where}: expected 8 candidate solutions, got {len(self.candidate_solutions)}")
        ids = [c.id for c in self.candidate_solutions]
        if len(set(ids)) != 8:
            raise CorpusSchemaError(f"{where}: candidate solution ids are not unique")
        if len(set(self.pos_ids)) != 2 or len(set(self.neg_ids)) != 2:
            raise CorpusSchemaError(f"{where}: expected 2 positive and 2 negative solution ids")
        if set(self.pos_ids) & set(self.neg_ids):
            raise CorpusSchemaError(f"{where}: positive and negative solution ids overlap")
        unknown = (set(self.pos_ids) | set(self.neg_ids)) - set(ids)
        if unknown:
            raise CorpusSchemaError(f"{where}: labelled ids {sorted(unknown)} are not candidates")

    @property
    def candidate_ids(self) -> tuple[str, ...]:
        return tuple(c.id for c in self.candidate_solutions)

    def solution_text(self, solution_id: str) -> str:
        for c in self.candidate_solutions:
            if c.id == solution_id:
                return c.content
        raise KeyError(solution_id)

    @property
    def positive_texts(self) -> list[str]:
        return [self.solution_text(i) for i in self.pos_ids]

    @property
    def negative_texts(self) -> list[str]:
        return [self.solution_text(i) for i in self.neg_ids]


@dataclass(frozen=True)
class GroundTruthFramework:
    topics: tuple[FrameworkTopic, ...]


@dataclass(frozen=True)
class Session:
    session_id: str
    time_span: tuple[date, date]
    logs: tuple[LogEntry, ...] = ()
    dialogue: tuple[DialogueTurn, ...] = ()
    framework: GroundTruthFramework | None = None
    # optional (start, end) of the dialogue itself, minute precision
    dialogue_span: tuple[datetime, datetime] | None = None
    extra: Mapping[str, Any] = field(default_factory=dict)

    @property
    def start(self) -> date:
        return self.time_span[0]


@dataclass(frozen=True)
class UserCorpus:
    """All sessions of one user, ordered by session start.

    ``persona`` is ground truth for the user simulator and judges only; the
    memory pipeline never reads it.
    """

    user_id: str
    sessions: tuple[Session, ...]
    persona: Mapping[str, Any] | None = None
    extra: Mapping[str, Any] = field(default_factory=dict)

    def session_index(self, session_id: str) -> int:
        for i, s in enumerate(self.sessions):
            if s.session_id == session_id:
                return i
        raise KeyError(session_id)


# --------------------------------------------------------------------------- ingestion


def _parse_timestamp(raw: Any, where: str) -> datetime:
    try:
        return datetime.strptime(str(raw), TIMESTAMP_FORMAT)
    except ValueError:
        raise CorpusParseError(f"{where}: malformed timestamp {raw!r}") from None


def _parse_date(raw: Any, where: str) -> date:
    try:
        return datetime.strptime(str(raw), DATE_FORMAT).date()
    except ValueError:
        raise CorpusParseError(f"{where}: malformed date {raw!r}") from None


def _require(obj: Mapping[str, Any], key: str, where: str) -> Any:
    if not isinstance(obj, Mapping) or key not in obj:
        raise CorpusSchemaError(f"{where}: missing required field {key!r}")
    return obj[key]


def _extra(obj: Mapping[str, Any], known: set[str]) -> dict[str, Any]:
    return {k: v for k, v in obj.items() if k not in known}


def _parse_logs(raw_logs: Any, sid: str, span: tuple[date, date]) -> tuple[LogEntry, ...]:
    if not isinstance(raw_logs, list):
        raise CorpusSchemaError(f"session {sid}: 'logs' must be a list")
    logs = []
    prev: datetime | None = None
    for i, raw in enumerate(raw_logs):
        where = f"session {sid}, log {i}"
        ts = _parse_timestamp(_require(raw, "timestamp", where), where)
        log_type = LogType.parse(_require(raw, "type", where))
        content = str(_require(raw, "content", where))
        if prev is not None and ts < prev:
            raise CorpusSchemaError(f"{where}: timestamps must be non-decreasing")
        if not span[0] <= ts.date() <= span[1]:
            raise CorpusSchemaError(f"{where}: timestamp {ts} outside session time span")
        prev = ts
        logs.append(LogEntry(ts, log_type, content, i))
    return tuple(logs)


def _parse_dialogue(raw_dialogue: Any, sid: str) -> tuple[DialogueTurn, ...]:
    if raw_dialogue in (None, {}, []):
        return ()
    if not isinstance(raw_dialogue, Mapping):
        raise CorpusSchemaError(f"session {sid}: 'dialogue' must be an object keyed turn_<n>")
    indexed = []
    for key, turn in raw_dialogue.items():
        if not str(key).startswith("turn_") or not str(key)[5:].isdigit():
            raise CorpusSchemaError(f"session {sid}: bad dialogue key {key!r}")
        indexed.append((int(str(key)[5:]), turn))
    indexed.sort(key=lambda kv: kv[0])
    if [i for i, _ in indexed] != list(range(1, len(indexed) + 1)):
        raise CorpusSchemaError(f"session {sid}: dialogue turn indices must be dense from 1")
    turns = []
    for idx, turn in indexed:
        where = f"session {sid}, turn_{idx}"
        user = _require(turn, "user", where)
        assistant = _require(turn, "assistant", where)
        turns.append(
            DialogueTurn(
                turn_index=idx,
                user_utterance=str(_require(user, "content", where)),
                assistant_utterance=str(_require(assistant, "content", where)),
                user_action=_parse_action(user.get("action"), UserAction, where),
                assistant_action=_parse_action(assistant.get("action"), AssistantAction, where),
            )
        )
    return tuple(turns)


def _parse_candidates(raw: Any, where: str) -> tuple[CandidateSolution, ...]:
    if isinstance(raw, Mapping):
        items = [CandidateSolution(str(k), str(v)) for k, v in raw.items()]
    elif isinstance(raw, list):
        items = []
        for c in raw:
            items.append(CandidateSolution(str(_require(c, "id", where)), str(_require(c, "content", where))))
    else:
        raise CorpusSchemaError(f"{where}: 'candidate_solutions' must be a list or object")
    return tuple(items)


def _parse_topic(raw: Mapping[str, Any], topic_id: str, where: str) -> FrameworkTopic:
    needs = []
    for n in _require(raw, "implicit_needs", where):
        if isinstance(n, Mapping):
            needs.append(ImplicitNeed(str(_require(n, "need", where)), tuple(str(e) for e in n.get("evidence", ()))))
        else:
            needs.append(ImplicitNeed(str(n)))
    known = {
        "topic_id", "user_query", "implicit_needs", "requirement",
        "candidate_solutions", "pos_ids", "neg_ids", "preference",
    }
    try:
        return FrameworkTopic(
            topic_id=str(raw.get("topic_id", topic_id)),
            user_query=str(_require(raw, "user_query", where)),
            implicit_needs=tuple(needs),
            requirement=str(_require(raw, "requirement", where)),
            candidate_solutions=_parse_candidates(_require(raw, "candidate_solutions", where), where),
            pos_ids=tuple(str(i) for i in _require(raw, "pos_ids", where)),
            neg_ids=tuple(str(i) for i in _require(raw, "neg_ids", where)),
            preference={str(k): str(v) for k, v in (raw.get("preference") or {}).items()},
            extra=_extra(raw, known),
        )
    except CorpusSchemaError as exc:
        raise CorpusSchemaError(f"{where}: {exc}") from None


def _parse_framework(raw: Any, sid: str) -> GroundTruthFramework | None:
    if raw is None:
        return None
    # accepted layouts: [topic, ...], {"topics": [...]}, {"topic_1": {...}, ...}
    if isinstance(raw, Mapping) and "topics" in raw:
        raw = raw["topics"]
    if isinstance(raw, Mapping):
        pairs = list(raw.items())
    elif isinstance(raw, list):
        pairs = [(f"topic_{i + 1}", t) for i, t in enumerate(raw)]
    else:
        raise CorpusSchemaError(f"session {sid}: unsupported framework layout")
    topics = tuple(_parse_topic(t, str(tid), f"session {sid}, {tid}") for tid, t in pairs)
    return GroundTruthFramework(topics)


def _parse_session(raw: Mapping[str, Any]) -> Session:
    sid = str(_require(raw, "session_id", "session"))
    span_raw = _require(raw, "time_span", f"session {sid}")
    if not isinstance(span_raw, (list, tuple)) or len(span_raw) != 2:
        raise CorpusSchemaError(f"session {sid}: time_span must be [start, end]")
    span = (_parse_date(span_raw[0], f"session {sid}"), _parse_date(span_raw[1], f"session {sid}"))
    if span[1] < span[0]:
        raise CorpusSchemaError(f"session {sid}: time_span end precedes start")
    dialogue_span = None
    if raw.get("dialogue_span") is not None:
        ds = raw["dialogue_span"]
        dialogue_span = (_parse_timestamp(ds[0], f"session {sid}"), _parse_timestamp(ds[1], f"session {sid}"))
    known = {"session_id", "time_span", "logs", "dialogue", "framework", "dialogue_span"}
    return Session(
        session_id=sid,
        time_span=span,
        logs=_parse_logs(raw.get("logs", []), sid, span),
        dialogue=_parse_dialogue(raw.get("dialogue"), sid),
        framework=_parse_framework(raw.get("framework"), sid),
        dialogue_span=dialogue_span,
        extra=_extra(raw, known),
    )


def ingest_corpus(source: str | Path | Mapping[str, Any]) -> UserCorpus:
    """Read one user's corpus file (or an already-decoded document).

    Raises CorpusParseError for malformed timestamps/dates and
    CorpusSchemaError for structural violations; both name the session.
    """
    if isinstance(source, Mapping):
        doc = source
    else:
        with open(source, encoding="utf-8") as fh:
            doc = json.load(fh)
    user_id = str(_require(doc, "user_id", "corpus"))
    raw_sessions = _require(doc, "sessions", "corpus")
    if not isinstance(raw_sessions, list):
        raise CorpusSchemaError("corpus: 'sessions' must be a list")
    sessions = [_parse_session(s) for s in raw_sessions]
    # stable sort keeps file order for equal start dates
    sessions.sort(key=lambda s: s.start)
    if len({s.session_id for s in sessions}) != len(sessions):
        raise CorpusSchemaError("corpus: duplicate session ids")
    return UserCorpus(
        user_id=user_id,
        sessions=tuple(sessions),
        persona=doc.get("persona"),
        extra=_extra(doc, {"user_id", "sessions", "persona"}),
    )


def corpus_to_dict(corpus: UserCorpus) -> dict[str, Any]:
    """Inverse of :func:`ingest_corpus` on every modelled field."""
    sessions = []
    for s in corpus.sessions:
        d: dict[str, Any] = dict(s.extra)
        d["session_id"] = s.session_id
        d["time_span"] = [s.time_span[0].strftime(DATE_FORMAT), s.time_span[1].strftime(DATE_FORMAT)]
        d["logs"] = [
            {"timestamp": l.timestamp.strftime(TIMESTAMP_FORMAT), "type": l.log_type.value, "content": l.content}
            for l in s.logs
        ]
        dialogue = {}
        for t in s.dialogue:
            user: dict[str, Any] = {"content": t.user_utterance}
            assistant: dict[str, Any] = {"content": t.assistant_utterance}
            if t.user_action is not None:
                user["action"] = t.user_action.value
            if t.assistant_action is not None:
                assistant["action"] = t.assistant_action.value
            dialogue[t.turn_id] = {"user": user, "assistant": assistant}
        d["dialogue"] = dialogue
        if s.dialogue_span is not None:
            d["dialogue_span"] = [x.strftime(TIMESTAMP_FORMAT) for x in s.dialogue_span]
        if s.framework is not None:
            d["framework"] = {"topics": [topic_to_dict(t) for t in s.framework.topics]}
        sessions.append(d)
    out: dict[str, Any] = dict(corpus.extra)
    out["user_id"] = corpus.user_id
    out["sessions"] = sessions
    if corpus.persona is not None:
        out["persona"] = corpus.persona
    return out


def topic_to_dict(t: FrameworkTopic) -> dict[str, Any]:
    d = dict(t.extra)
    d.update(
        topic_id=t.topic_id,
        user_query=t.user_query,
        implicit_needs=[{"need": n.need, "evidence": list(n.evidence)} for n in t.implicit_needs],
        requirement=t.requirement,
        candidate_solutions=[{"id": c.id, "content": c.content} for c in t.candidate_solutions],
        pos_ids=list(t.pos_ids),
        neg_ids=list(t.neg_ids),
        preference=dict(t.preference),
    )
    return d


# --------------------------------------------------------------------------- history / query


def split_history_query(corpus: UserCorpus) -> tuple[list[Session], list[Session]]:
    """Partition sessions into history and query sets.

    The query set is every session starting in the last calendar month that
    appears in the corpus. Within the query set, sessions keep corpus order so
    an earlier query session can act as history for a later one.
    """
    if not corpus.sessions:
        raise CorpusSchemaError("corpus has no sessions")
    last = max((s.start.year, s.start.month) for s in corpus.sessions)
    history = [s for s in corpus.sessions if (s.start.year, s.start.month) != last]
    query = [s for s in corpus.sessions if (s.start.year, s.start.month) == last]
    return history, query


def collect_latest_logs(corpus: UserCorpus, current_session_index: int) -> list[LogEntry]:
    """Logs collected between the end of the previous dialogue and the start of the current one.

    ``current_session_index`` is 0-based. Bounds come from ``dialogue_span``
    when the corpus records it; otherwise the session's own log list is used.
    """
    session = corpus.sessions[current_session_index]
    lower = None
    if current_session_index > 0:
        prev = corpus.sessions[current_session_index - 1]
        if prev.dialogue_span is not None:
            lower = prev.dialogue_span[1]
    upper = session.dialogue_span[0] if session.dialogue_span is not None else None
    return [
        log
        for log in session.logs
        if (lower is None or log.timestamp > lower) and (upper is None or log.timestamp <= upper)
    ]


def load_fixture_corpus() -> UserCorpus:
    """The small bundled corpus used by tests, demos and ``--mock`` runs."""
    return ingest_corpus(Path(__file__).parent / "data" / "fixture_corpus.json")


def render_dialogue(turns: Sequence[DialogueTurn]) -> str:
    """JSON rendering of a dialogue, keyed turn_<n>, used in prompts."""
    doc = {t.turn_id: {"user": t.user_utterance, "assistant": t.assistant_utterance} for t in turns}
    return json.dumps(doc, ensure_ascii=False, indent=1)
