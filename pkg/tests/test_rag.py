import pytest

from h2memory.corpus import collect_latest_logs, split_history_query
from h2memory.llm import CallCapture, Gateway, MockBackend
from h2memory.memory import BuildConfig, MemoryBank, format_log
from h2memory.rag import (
    EMPTY_SENTINEL,
    STRATEGY_NAMES,
    H2MemoryStrategy,
    RetrievalMode,
    compose_retrieval,
    form_retrieval_query,
    generate_response,
    make_strategy,
    run_baseline,
    serialize_context,
)
from h2memory.rag.retrieval import RetrievedContext
from h2memory.rag.strategies import SessionRag, TurnRag
from h2memory.vectors import HashingEmbedder

SECTIONS = ["## Recent situations", "## Background", "## Topic outlines", "## Principles"]


def _query_index(corpus):
    _, query = split_history_query(corpus)
    return corpus.session_index(query[0].session_id)


def test_empty_bank_serializes_to_sentinels():
    bank = MemoryBank("u", {"name": "hashing-char3gram", "dimension": 256})
    m = compose_retrieval("anything", bank, 0)
    assert m.is_empty()
    text = serialize_context(m)
    assert [l for l in text.splitlines() if l.startswith("## ")] == SECTIONS
    assert text.count(EMPTY_SENTINEL) == 4


def test_retrieval_respects_k_and_mappings(history_bank):
    j = history_bank.sessions_seen[-1]
    m = compose_retrieval("weekend hiking trip with family", history_bank, j, k=2)
    assert len(m.situations) <= 2 and len(m.outlines) == 2
    assert all(s.session_index == j for s in m.situations)
    wanted = {a for s in m.situations for a in history_bank.f_gb[s.entry_id]}
    assert {a for a, _ in m.backgrounds} <= wanted
    assert {p.cluster_id for p in m.principles} == {history_bank.f_tp[o.entry_id] for o in m.outlines}


def test_outline_order_matches_cosine_ranking(history_bank):
    q = "presentation slides for the leadership review"
    m = compose_retrieval(q, history_bank, 0, k=len(history_bank.outlines))
    v = HashingEmbedder().embed_one(q)
    scores = [(-(o.vector() @ v), o.entry_id) for o in history_bank.outlines]
    assert [o.entry_id for o in m.outlines] == [eid for _, eid in sorted(scores)]


def test_requirement_mode_hides_preferences(history_bank):
    q = "help me relax after work"
    pref = serialize_context(compose_retrieval(q, history_bank, 0, mode="preference"))
    req = serialize_context(compose_retrieval(q, history_bank, 0, mode=RetrievalMode.REQUIREMENT_FOCUSED))
    assert "principle:" in pref and "preference:" in pref
    assert "principle:" not in req and "preference:" not in req and "solution:" not in req
    for p in history_bank.principles:
        assert p.principle not in req


def test_dialogue_only_bank_skips_log_parts(corpus):
    from h2memory.memory import MemoryBuilder

    bank = MemoryBuilder(Gateway(MockBackend()), config=BuildConfig(dialogue_only=True)).build(corpus)
    m = compose_retrieval("sleep", bank, 0)
    assert m.situations == () and m.backgrounds == () and m.outlines


def test_mode_parse():
    assert RetrievalMode.parse("requirement") is RetrievalMode.REQUIREMENT_FOCUSED
    assert RetrievalMode.parse("preference_focused") is RetrievalMode.PREFERENCE_FOCUSED
    with pytest.raises(ValueError):
        RetrievalMode.parse("both")


def test_form_retrieval_query(gateway, capture):
    assert form_retrieval_query("plain question") == "plain question"
    assert capture.requests == []
    q = form_retrieval_query([("user", "How do I sleep better?"), ("assistant", "Is it work?")], gateway)
    assert q and capture.template_ids() == ["rag.query_formation"]
    assert capture.requests[0].temperature == 0.0
    with pytest.raises(ValueError):
        form_retrieval_query([])
    with pytest.raises(ValueError):
        form_retrieval_query([("user", "x")])


def test_generate_response_uses_serialized_memory(gateway, capture):
    out = generate_response(RetrievedContext(), "What should I cook?", gateway)
    assert out
    assert capture.requests[0].bindings["memory"].count(EMPTY_SENTINEL) == 4


# ---------------------------------------------------------------- strategies


@pytest.mark.parametrize("name", STRATEGY_NAMES)
def test_every_strategy_answers(name, corpus):
    gw = Gateway(MockBackend())
    s = make_strategy(name, gw, k=2)
    j = _query_index(corpus)
    s.begin(corpus, range(j))
    s.enter_session(j)
    assert s.respond("How can I sleep better?")
    s.finish_session(j)


def test_unknown_strategy():
    with pytest.raises(ValueError, match="unknown strategy"):
        make_strategy("oracle", Gateway(MockBackend()))


def _history_strings(corpus, upto):
    out = []
    for s in corpus.sessions[:upto]:
        out += [l.content for l in s.logs]
        out += [t.user_utterance for t in s.dialogue] + [t.assistant_utterance for t in s.dialogue]
    return out


def test_vanilla_no_log_has_zero_history_bytes(corpus):
    cap = CallCapture(MockBackend())
    j = _query_index(corpus)
    run_baseline("vanilla_no_log", corpus, j, "How can I sleep better?", Gateway(cap))
    (req,) = cap.requests
    assert req.bindings["memory"] == EMPTY_SENTINEL
    for text in _history_strings(corpus, j) + [l.content for l in corpus.sessions[j].logs]:
        assert text not in req.prompt


def test_vanilla_with_log_shows_exactly_current_logs(corpus):
    cap = CallCapture(MockBackend())
    j = _query_index(corpus)
    run_baseline("vanilla_with_log", corpus, j, "How can I sleep better?", Gateway(cap))
    memory = cap.requests[0].bindings["memory"]
    lines = memory.splitlines()
    assert lines[0] == "## Current session logs"
    assert lines[1:] == [format_log(l) for l in collect_latest_logs(corpus, j)]


def test_turn_rag_units_are_turn_pairs(corpus):
    s = TurnRag(Gateway(MockBackend()), k=3)
    s.begin(corpus, [0, 1])
    assert len(s.store) == len(corpus.sessions[0].dialogue) + len(corpus.sessions[1].dialogue)
    assert s.store.ids[0] == "U0000_0001"
    assert all(t.startswith("user: ") and "\nassistant: " in t for t in s.texts.values())


def test_session_rag_truncates(corpus):
    s = SessionRag(Gateway(MockBackend()), k=1, char_budget=50)
    s.begin(corpus, [0, 1, 2])
    assert s.store.ids == ["S0000", "S0001", "S0002"]
    assert all(len(t) <= 50 for t in s.texts.values())


def test_recursive_summary_updates_each_session(corpus):
    cap = CallCapture(MockBackend())
    s = make_strategy("recursive_summary", Gateway(cap))
    s.begin(corpus, [0, 1])
    assert cap.template_ids() == ["baseline.log_summary", "baseline.dialogue_summary"] * 2
    assert s.dialogue_summary and s.log_summary
    assert cap.requests[2].bindings["previous_summary"] != "(empty)"


def test_h2memory_strategy_reuses_preloaded_bank(corpus, history_bank, history_indices):
    cap = CallCapture(MockBackend())
    bank = MemoryBank.from_dict(history_bank.to_dict())
    s = H2MemoryStrategy(Gateway(cap), bank=bank)
    s.begin(corpus, history_indices)
    assert cap.requests == []
    j = _query_index(corpus)
    s.enter_session(j)
    assert bank.situations_in(j)
    assert "## Recent situations\n- " in s.context("sleep")
