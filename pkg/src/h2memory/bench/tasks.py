"""The three benchmark tasks: requirement restatement, solution proposal, multi-turn interaction.

Every runner streams the user's sessions through a strategy in time order.
History sessions are digested up front; each query session is entered (its
latest logs become visible), its topics are evaluated, and then its
dialogue is absorbed so it counts as history for later query sessions.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Sequence

from ..corpus import (
    ASSISTANT_ACTION_DESCRIPTIONS,
    USER_ACTION_DESCRIPTIONS,
    AssistantAction,
    FrameworkTopic,
    UserAction,
    UserCorpus,
    split_history_query,
)
from ..llm.backends import BackendError
from ..llm.gateway import Gateway, ValidationFailure
from ..llm.schemas import selection_check
from ..memory.builder import BuildConfig
from ..memory.graph import ordered_map
from ..rag.retrieval import DEFAULT_K, RetrievalMode, form_retrieval_query, render_dialogue_context
from ..rag.strategies import H2MEMORY, Strategy, make_strategy
from ..vectors import Embedder
from .judge import Dimension, Outcome, judge_pairwise
from .metrics import Tokenizer, bleu_score, g_score, max_reference_bleu, selection_score, whitespace_tokenize
from .report import ScoreReport

logger = logging.getLogger(__name__)

DEFAULT_SCRIPT: tuple[tuple[UserAction, AssistantAction], ...] = (
    (UserAction.TOPIC_INQUIRY, AssistantAction.REQUIREMENT_PREDICTION),
    (UserAction.REQUIREMENT_CONFIRMATION, AssistantAction.SOLUTION_PROPOSAL),
    (UserAction.SOLUTION_FEEDBACK, AssistantAction.SOLUTION_PROPOSAL),
    (UserAction.SOLUTION_FEEDBACK, AssistantAction.FEEDBACK_RESPONSE),
)

_FAILURES = (ValidationFailure, BackendError)


@dataclass(frozen=True)
class TaskSample:
    user_id: str
    session_index: int
    session_id: str
    topic_id: str
    topic: FrameworkTopic

    def key(self) -> dict[str, Any]:
        return {
            "user_id": self.user_id, "session_index": self.session_index,
            "session_id": self.session_id, "topic_id": self.topic_id,
        }


@dataclass(frozen=True)
class RunConfig:
    k: int = DEFAULT_K
    workers: int = 1
    max_n: int = 4
    requery_each_turn: bool = True
    script: tuple[tuple[UserAction, AssistantAction], ...] = DEFAULT_SCRIPT
    build: BuildConfig = field(default_factory=BuildConfig)

    def describe(self) -> dict[str, Any]:
        d = asdict(self)
        d["script"] = [[u.value, a.value] for u, a in self.script]
        return d


def task_samples(corpus: UserCorpus) -> list[TaskSample]:
    """Framework topics of the query-set sessions, in session then topic order."""
    _, query = split_history_query(corpus)
    out = []
    for s in query:
        if s.framework is None:
            continue
        j = corpus.session_index(s.session_id)
        out.extend(TaskSample(corpus.user_id, j, s.session_id, t.topic_id, t) for t in s.framework.topics)
    return out


def _resolve(strategy: str | Strategy, gateway: Gateway, embedder: Embedder | None, cfg: RunConfig) -> Strategy:
    if isinstance(strategy, Strategy):
        return strategy
    extra = {"config": cfg.build} if strategy == H2MEMORY else {}
    return make_strategy(strategy, gateway, embedder, cfg.k, **extra)


def stream_samples(
    strategy: Strategy,
    corpus: UserCorpus,
    evaluate: Callable[[TaskSample], dict[str, Any]],
    workers: int = 1,
) -> list[dict[str, Any]]:
    """Drive ``strategy`` through the corpus and evaluate each query topic while its session is open."""
    history, query = split_history_query(corpus)
    samples = task_samples(corpus)
    strategy.begin(corpus, [corpus.session_index(s.session_id) for s in history])
    records: list[dict[str, Any]] = []
    for s in query:
        j = corpus.session_index(s.session_id)
        strategy.enter_session(j)
        todo = [x for x in samples if x.session_index == j]
        records.extend(ordered_map(evaluate, todo, workers))
        strategy.finish_session(j)
    return records


def _guard(sample: TaskSample, strategy: str, fn: Callable[[], dict[str, Any]]) -> dict[str, Any]:
    record = {**sample.key(), "strategy": strategy}
    try:
        record.update(fn())
        record.setdefault("status", "ok")
    except _FAILURES as exc:
        logger.warning("%s/%s failed: %s", strategy, sample.topic_id, exc)
        record.update(status="failed", error=str(exc))
    return record


# --------------------------------------------------------------------------- task 1


def run_requirement_restatement(
    strategy: str | Strategy,
    corpus: UserCorpus,
    gateway: Gateway,
    *,
    judge: Gateway | None = None,
    embedder: Embedder | None = None,
    tokenizer: Tokenizer = whitespace_tokenize,
    config: RunConfig | None = None,
) -> ScoreReport:
    cfg = config or RunConfig()
    judge = judge or gateway
    strat = _resolve(strategy, gateway, embedder, cfg)

    def evaluate(sample: TaskSample) -> dict[str, Any]:
        def work() -> dict[str, Any]:
            t = sample.topic
            query = form_retrieval_query(t.user_query)
            memory = strat.context(query, RetrievalMode.REQUIREMENT_FOCUSED)
            prediction = gateway.complete_validated(
                "task.restate", {"memory": memory, "user_query": t.user_query}
            ).parsed["requirement"]
            bleu = bleu_score(tokenizer(prediction), [tokenizer(t.requirement)], cfg.max_n)
            scaled, raw = g_score(
                prediction, [n.need for n in t.implicit_needs], judge,
                user_query=t.user_query, requirement=t.requirement,
            )
            rec: dict[str, Any] = {"prediction": prediction, "g_score": scaled, "g_raw": raw}
            rec.update({f"bleu_{n + 1}": b for n, b in enumerate(bleu)})
            if scaled is None:
                rec["status"] = "unscored"
            return rec

        return _guard(sample, strat.name, work)

    records = stream_samples(strat, corpus, evaluate, cfg.workers)
    metrics = [f"bleu_{n}" for n in range(1, cfg.max_n + 1)] + ["g_score"]
    return ScoreReport("restate", [strat.name], metrics, records, config=cfg.describe())


# --------------------------------------------------------------------------- task 2


def run_solution_proposal(
    strategy: str | Strategy,
    corpus: UserCorpus,
    gateway: Gateway,
    *,
    embedder: Embedder | None = None,
    tokenizer: Tokenizer = whitespace_tokenize,
    config: RunConfig | None = None,
) -> ScoreReport:
    cfg = config or RunConfig()
    strat = _resolve(strategy, gateway, embedder, cfg)

    def evaluate(sample: TaskSample) -> dict[str, Any]:
        def work() -> dict[str, Any]:
            t = sample.topic
            memory = strat.context(form_retrieval_query(t.requirement), RetrievalMode.PREFERENCE_FOCUSED)
            solution = gateway.complete_validated(
                "task.solution_generate", {"memory": memory, "requirement": t.requirement}
            ).parsed["solution"]
            gen = max_reference_bleu(tokenizer(solution), [tokenizer(x) for x in t.positive_texts], cfg.max_n)
            candidates = json.dumps([{"id": c.id, "content": c.content} for c in t.candidate_solutions],
                                    ensure_ascii=False, indent=1)
            try:
                picked = gateway.complete_validated(
                    "task.solution_select",
                    {"memory": memory, "requirement": t.requirement, "candidate_solutions": candidates},
                    check=selection_check(t.candidate_ids),
                ).parsed["selected_solutions"]
            except ValidationFailure as exc:
                logger.warning("selection for %s never validated: %s", t.topic_id, exc)
                picked = []
            sel = selection_score(picked, t.pos_ids, t.neg_ids, t.candidate_ids)
            rec: dict[str, Any] = {
                "solution": solution,
                "selected": [str(p) for p in picked],
                "s_score": sel.score,
                "s_raw": sel.raw,
                "selection_valid": sel.valid,
            }
            if not sel.valid:
                rec["selection_error"] = sel.reason
            rec.update({f"gen_bleu_{n + 1}": b for n, b in enumerate(gen)})
            return rec

        return _guard(sample, strat.name, work)

    records = stream_samples(strat, corpus, evaluate, cfg.workers)
    metrics = [f"gen_bleu_{n}" for n in range(1, cfg.max_n + 1)] + ["s_score"]
    return ScoreReport("solution", [strat.name], metrics, records, config=cfg.describe())


# --------------------------------------------------------------------------- task 3


def simulator_persona(corpus: UserCorpus, sample: TaskSample) -> dict[str, Any]:
    """What the simulated user knows about themself for one topic."""
    persona = dict(corpus.persona or {})
    t = sample.topic
    return {
        "profile": persona.get("profile", {}),
        "background": persona.get("background", ""),
        "personality": persona.get("personality", ""),
        "situation": corpus.sessions[sample.session_index].extra.get("situation", ""),
        "user_query": t.user_query,
        "implicit_needs": [n.need for n in t.implicit_needs],
        "requirement": t.requirement,
        "preference": dict(t.preference),
    }


def judge_profile(corpus: UserCorpus, sample: TaskSample) -> dict[str, str]:
    persona = corpus.persona or {}
    t = sample.topic
    requirement = {"user_query": t.user_query, "implicit_needs": [n.need for n in t.implicit_needs],
                   "requirement": t.requirement}
    preference = {
        "requirement": t.requirement,
        "general_preference": dict(t.preference),
        "candidate_solutions": {"pos_list": t.positive_texts, "neg_list": t.negative_texts},
    }
    return {
        "background": str(persona.get("background", "")) or "(unknown)",
        "personality": str(persona.get("personality", "")) or "(unknown)",
        "situation": str(corpus.sessions[sample.session_index].extra.get("situation", "")) or "(unknown)",
        "requirement": json.dumps(requirement, ensure_ascii=False, indent=1),
        "preference": json.dumps(preference, ensure_ascii=False, indent=1),
    }


def simulate_dialogue(
    strategy: Strategy,
    persona: dict[str, Any],
    gateway: Gateway,
    script: Sequence[tuple[UserAction, AssistantAction]] = DEFAULT_SCRIPT,
    requery_each_turn: bool = True,
) -> list[dict[str, str]]:
    """Alternate simulated user and strategy-backed assistant turns following ``script``."""
    context: list[tuple[str, str]] = []
    turns = []
    query = None
    persona_text = json.dumps(persona, ensure_ascii=False, indent=1)
    for i, (u_act, a_act) in enumerate(script, start=1):
        turn_id = f"turn_{i}"
        user = gateway.complete_validated("sim.user", {
            "persona": persona_text,
            "dialogue_context": render_dialogue_context(context) or "(start of conversation)",
            "current_turn": turn_id,
            "action": u_act.value,
            "action_description": USER_ACTION_DESCRIPTIONS[u_act],
        }).parsed["content"]
        context.append(("user", user))
        if query is None or requery_each_turn:
            query = form_retrieval_query(list(context), gateway)
        memory = strategy.context(query, RetrievalMode.PREFERENCE_FOCUSED)
        assistant = gateway.complete_validated("sim.assistant", {
            "memory": memory,
            "dialogue_context": render_dialogue_context(context),
            "current_turn": turn_id,
            "action": a_act.value,
            "action_description": ASSISTANT_ACTION_DESCRIPTIONS[a_act],
        }).parsed["content"]
        context.append(("assistant", assistant))
        turns.append({
            "turn": turn_id, "user": user, "user_action": u_act.value,
            "assistant": assistant, "assistant_action": a_act.value,
        })
    return turns


def render_transcript(turns: Sequence[dict[str, str]]) -> str:
    return "\n".join(f"user: {t['user']}\nassistant: {t['assistant']}" for t in turns)


def tally(outcomes: Sequence[Outcome]) -> dict[str, int]:
    return {
        "win": sum(o is Outcome.WIN_A for o in outcomes),
        "tie": sum(o is Outcome.TIE for o in outcomes),
        "lose": sum(o is Outcome.WIN_B for o in outcomes),
        "unevaluated": sum(o is Outcome.UNEVALUATED for o in outcomes),
    }


def run_multiturn_interaction(
    strategy_a: str | Strategy,
    strategy_b: str | Strategy,
    corpus: UserCorpus,
    gateway: Gateway,
    *,
    judge: Gateway | None = None,
    embedder: Embedder | None = None,
    config: RunConfig | None = None,
) -> ScoreReport:
    """Simulate every query topic with both strategies, then judge each pair on both dimensions.

    Tallies are from A's point of view; a topic whose dialogue could not be
    generated for either side is unevaluated on both dimensions.
    """
    cfg = config or RunConfig()
    judge = judge or gateway
    sides = [_resolve(strategy_a, gateway, embedder, cfg), _resolve(strategy_b, gateway, embedder, cfg)]

    def dialogues_for(strat: Strategy) -> list[dict[str, Any]]:
        def evaluate(sample: TaskSample) -> dict[str, Any]:
            return _guard(sample, strat.name, lambda: {"dialogue": simulate_dialogue(
                strat, simulator_persona(corpus, sample), gateway, cfg.script, cfg.requery_each_turn,
            )})

        return stream_samples(strat, corpus, evaluate, cfg.workers)

    runs = [dialogues_for(s) for s in sides]
    samples = task_samples(corpus)

    def compare(item: tuple[TaskSample, dict[str, Any], dict[str, Any]]) -> dict[str, Any]:
        sample, ra, rb = item
        rec: dict[str, Any] = {**sample.key(), "strategy_a": sides[0].name, "strategy_b": sides[1].name,
                               "dialogue_a": ra.get("dialogue"), "dialogue_b": rb.get("dialogue")}
        if ra["status"] != "ok" or rb["status"] != "ok":
            rec["status"] = "failed"
            rec["error"] = ra.get("error") or rb.get("error")
            for dim in Dimension:
                rec[dim.value] = {"outcome": Outcome.UNEVALUATED.value, "trace": []}
            return rec
        profile = judge_profile(corpus, sample)
        ta, tb = render_transcript(ra["dialogue"]), render_transcript(rb["dialogue"])
        rec["status"] = "ok"
        for dim in Dimension:
            try:
                res = judge_pairwise(ta, tb, dim, judge, profile)
            except BackendError as exc:
                logger.warning("judge backend failed on %s: %s", sample.topic_id, exc)
                rec[dim.value] = {"outcome": Outcome.UNEVALUATED.value, "trace": []}
                continue
            rec[dim.value] = {
                "outcome": res.outcome.value,
                "mean_a": res.mean_a if res.trace else None,
                "mean_b": res.mean_b if res.trace else None,
                "trace": [asdict(c) for c in res.trace],
                "redraws": res.redraws,
            }
        return rec

    records = ordered_map(compare, list(zip(samples, runs[0], runs[1])), cfg.workers)
    pairs = {dim.value: tally([Outcome(r[dim.value]["outcome"]) for r in records]) for dim in Dimension}
    return ScoreReport("interact", [sides[0].name, sides[1].name], [], records, pairs, config=cfg.describe())
