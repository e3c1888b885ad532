import json

import numpy as np
import pytest

from h2memory.corpus import collect_latest_logs, split_history_query
from h2memory.llm import ASPECTS, CallCapture, Gateway, MockBackend, scripted
from h2memory.memory import (
    BackgroundMemory,
    BuildConfig,
    MemoryBank,
    MemoryBuilder,
    SituationEntry,
    TopicOutline,
    extract_topic_outlines,
    init_principles,
    rewrite_requirement,
    update_background,
    update_principles,
)
from h2memory.vectors import HashingEmbedder


def _sit(eid, text, aspects, session=0):
    return SituationEntry(eid, session, (0,), text, tuple(aspects), tuple(HashingEmbedder().embed_one(text)))


# ---------------------------------------------------------------- fixture build invariants


def test_background_has_exactly_four_aspects(history_bank):
    assert tuple(history_bank.background.aspects) == ASPECTS


def test_situations_partition_session_logs(corpus, history_bank, history_indices):
    for j in history_indices:
        members = sorted(i for e in history_bank.situations_in(j) for i in e.member_log_ids)
        assert members == list(range(len(collect_latest_logs(corpus, j))))


def test_mappings_total(history_bank):
    assert history_bank.consistency_errors() == []
    assert set(history_bank.f_gb) == {e.entry_id for e in history_bank.all_situations()}
    assert set(history_bank.f_tp) == {o.entry_id for o in history_bank.outlines}
    assert all(history_bank.f_gb[e.entry_id] for e in history_bank.all_situations())


def test_outline_count_matches_topic_segmentation(corpus, history_bank, history_indices, capture, gateway):
    # each history session's dialogue is segmented once; the bank holds every resulting topic
    expected = 0
    for j in history_indices:
        expected += len(extract_topic_outlines(j, corpus.sessions[j].dialogue, gateway))
    assert len(history_bank.outlines) == expected
    for j in history_indices:
        spans = [o.turn_span for o in history_bank.outlines if o.session_index == j]
        assert spans[0][0] == 1 and spans[-1][1] == len(corpus.sessions[j].dialogue)


def test_entry_ids_are_zero_padded(history_bank):
    assert all(len(e.entry_id) == len("G0000_0000") for e in history_bank.all_situations())
    assert history_bank.outlines[0].entry_id == "T0000_0000"


def test_principle_count(history_bank):
    assert len(history_bank.principles) == min(8, len(history_bank.outlines))
    assert history_bank.clusters.n == len(history_bank.principles)


def test_bank_round_trip(history_bank):
    d = history_bank.to_dict()
    assert MemoryBank.from_dict(json.loads(json.dumps(d))).to_dict() == d


# ---------------------------------------------------------------- background


def test_background_skipped_without_situations(capture, gateway):
    bg = BackgroundMemory()
    new, f_gb = update_background(bg, [], gateway)
    assert new is bg and f_gb == {} and capture.requests == []


def test_background_patches_only_declared_aspects():
    reply = json.dumps({"updating_aspects": ["health"], "updating_content": {"health": "Sleeps badly."}})
    gw = Gateway(MockBackend(overrides={"mem.background_update": scripted(reply)}))
    old = BackgroundMemory({"work": "W", "health": "H", "family": "F", "leisure": "L"})
    new, f_gb = update_background(old, [_sit("G0001_0000", "late night overtime", ["work", "health"])], gw, session_index=1)
    assert new.aspects == {"work": "W", "health": "Sleeps badly.", "family": "F", "leisure": "L"}
    assert f_gb == {"G0001_0000": ("work", "health")}
    assert new.last_updated_session == 1


def test_background_rejects_mismatched_keys():
    bad = json.dumps({"updating_aspects": ["work", "health"], "updating_content": {"work": "x"}})
    good = json.dumps({"updating_aspects": ["work"], "updating_content": {"work": "x"}})
    gw = Gateway(MockBackend(overrides={"mem.background_update": scripted(bad, good)}))
    new, _ = update_background(BackgroundMemory(), [_sit("G0000_0000", "office", ["work"])], gw)
    assert new.aspects["work"] == "x" and len(gw.calls()) == 2


# ---------------------------------------------------------------- topic outlines and rewrite


def test_rewrite_without_situations_makes_no_call(capture, gateway):
    bank = MemoryBank("u", {"name": "hashing-char3gram", "dimension": 256})
    o = TopicOutline("T0003_0000", 3, (1, 2), "find a gym", "find a gym", (), "likes: cheap")
    out = rewrite_requirement(o, bank, gateway, HashingEmbedder())
    assert out.rewritten == "find a gym" and capture.requests == []
    np.testing.assert_allclose(out.vector(), HashingEmbedder().embed_one("find a gym"))


def test_rewrite_uses_same_session_situations_and_their_aspects(capture, gateway):
    bank = MemoryBank("u", {"name": "hashing-char3gram", "dimension": 256})
    bank.situations[2] = [_sit("G0002_0000", "marathon training schedule", ["leisure"], 2)]
    bank.situations[1] = [_sit("G0001_0000", "board meeting prep", ["work"], 1)]
    bank.f_gb = {"G0002_0000": ("leisure",), "G0001_0000": ("work",)}
    bank.background = BackgroundMemory({"work": "WORK-BG", "health": "", "family": "", "leisure": "RUNS-BG"})
    o = TopicOutline("T0002_0000", 2, (1, 1), "plan my runs", "plan my runs", (), "p")
    out = rewrite_requirement(o, bank, gateway, HashingEmbedder(), k=3)
    b = capture.requests[0].bindings
    assert b["situation"] == "- marathon training schedule"
    assert b["background"] == "leisure: RUNS-BG"
    assert out.rewritten != o.requirement
    np.testing.assert_allclose(out.vector(), HashingEmbedder().embed_one(out.rewritten))


def test_topic_outline_gap_is_regenerated(corpus):
    d = corpus.sessions[0].dialogue
    n = len(d)
    topic = lambda a, b: {"turn_span": [f"turn_{a}", f"turn_{b}"], "requirement": "r", "preference": "p",
                               "solution_list": [{"solution": "s", "user_feedback": "ok", "feedback_type": "pos"}]}
    gap = json.dumps([topic(1, 1), topic(3, n)])
    ok = json.dumps([topic(1, n)])
    gw = Gateway(MockBackend(overrides={"mem.topic_outline": scripted(gap, ok)}))
    out = extract_topic_outlines(4, d, gw, first_ordinal=2)
    assert [o.entry_id for o in out] == ["T0004_0002"] and out[0].turn_span == (1, n)


# ---------------------------------------------------------------- principles


def test_init_principles_shrinks_n(fresh_bank, gateway):
    init_principles(fresh_bank, gateway, n=50)
    assert len(fresh_bank.principles) == len(fresh_bank.outlines)


def test_init_principles_empty_bank(gateway):
    bank = MemoryBank("u", {"name": "x", "dimension": 256})
    init_principles(bank, gateway)
    assert bank.principles == [] and bank.clusters is None


def test_update_principles_keeps_text_on_no(fresh_bank, gateway):
    o = fresh_bank.outlines[0]
    new = TopicOutline("T0009_0000", 9, (1, 1), o.requirement, o.rewritten, (), "likes: quiet")
    new = type(new)(**{**new.__dict__, "embedding": o.embedding})
    before = {p.cluster_id: (p.requirement_type, p.principle) for p in fresh_bank.principles}
    count_before = fresh_bank.clusters.counts.copy()
    fresh_bank.outlines.append(new)
    cid = update_principles(fresh_bank, new, gateway)
    assert cid == fresh_bank.f_tp[o.entry_id]
    assert fresh_bank.f_tp[new.entry_id] == cid
    assert fresh_bank.clusters.counts[cid] == count_before[cid] + 1
    assert {p.cluster_id: (p.requirement_type, p.principle) for p in fresh_bank.principles} == before


def test_update_principles_yes_replaces_gamma_before_pref(fresh_bank):
    req = json.dumps({"adjust": "Yes", "general_requirement": "NEW GAMMA"})
    cap = CallCapture(MockBackend(overrides={"mem.req_update": scripted(req)}))
    gw = Gateway(cap)
    o = fresh_bank.outlines[0]
    new = TopicOutline("T0009_0000", 9, (1, 1), "r", "r", (), "p", o.embedding)
    fresh_bank.outlines.append(new)
    cid = update_principles(fresh_bank, new, gw)
    assert fresh_bank.principle(cid).requirement_type == "NEW GAMMA"
    pref_call = [r for r in cap.requests if r.template_id == "mem.pref_update"][0]
    assert pref_call.bindings["general_requirement"] == "NEW GAMMA"


# ---------------------------------------------------------------- builder


def test_dialogue_only_build_touches_no_log_paths(corpus):
    cap = CallCapture(MockBackend())
    builder = MemoryBuilder(Gateway(cap), config=BuildConfig(dialogue_only=True))
    bank = builder.build(corpus)
    used = set(cap.template_ids())
    assert not used & {"mem.log_relations", "mem.situation", "mem.background_update", "mem.requirement_rewrite"}
    assert bank.all_situations() == [] and bank.f_gb == {}
    assert bank.clusters is None
    assert len(bank.principles) == sum(1 for s in corpus.sessions if s.dialogue)
    assert bank.consistency_errors() == []
    with pytest.raises(RuntimeError):
        builder.ingest_logs(bank, 0, corpus.sessions[0].logs)


def test_sessions_must_be_in_order(corpus):
    with pytest.raises(ValueError):
        MemoryBuilder(Gateway(MockBackend())).build(corpus, [2, 1])


def test_incremental_session_updates_principles(corpus, fresh_bank):
    _, query = split_history_query(corpus)
    j = corpus.session_index(query[0].session_id)
    builder = MemoryBuilder(Gateway(MockBackend()))
    n_out = len(fresh_bank.outlines)
    builder.process_session(fresh_bank, corpus, j)
    assert j in fresh_bank.sessions_seen
    assert len(fresh_bank.outlines) > n_out
    assert fresh_bank.situations_in(j)
    assert fresh_bank.consistency_errors() == []


def test_consistency_errors_name_entries(fresh_bank):
    fresh_bank.f_tp["T0099_0000"] = 0
    fresh_bank.f_gb.pop(fresh_bank.all_situations()[0].entry_id)
    errors = " | ".join(fresh_bank.consistency_errors())
    assert "T0099_0000" in errors and fresh_bank.all_situations()[0].entry_id in errors
