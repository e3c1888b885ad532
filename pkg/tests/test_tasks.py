import csv
import json

from h2memory.bench import (
    DEFAULT_SCRIPT,
    RunConfig,
    ScoreReport,
    run_multiturn_interaction,
    run_requirement_restatement,
    run_solution_proposal,
    task_samples,
)
from h2memory.bench.report import mean_of
from h2memory.bench.tasks import simulate_dialogue, simulator_persona
from h2memory.llm import BackendError, CallCapture, Gateway, MockBackend, scripted
from h2memory.rag import EMPTY_SENTINEL, make_strategy


def test_task_samples_cover_query_topics(corpus):
    samples = task_samples(corpus)
    assert len(samples) == 3
    assert [s.session_id for s in samples] == ["S05", "S05", "S06"]


def test_restate_records(corpus):
    cap = CallCapture(MockBackend())
    report = run_requirement_restatement("h2memory", corpus, Gateway(cap))
    assert len(report.records) == 3
    for r in report.records:
        assert r["status"] == "ok" and 0 <= r["bleu_1"] <= 100 and r["g_score"] in (0, 25, 50, 75, 100)
    agg = report.aggregates()["h2memory"]
    assert agg["samples"]["n"] == 3 and agg["g_score"]["n"] == 3
    restate_memories = [r.bindings["memory"] for r in cap.requests if r.template_id == "task.restate"]
    assert all("principle:" not in m and "preference:" not in m for m in restate_memories)


def test_restate_unscored_when_judge_fails(corpus):
    judge = Gateway(MockBackend(overrides={"judge.gscore": scripted("nope")}), retry_budget=1)
    report = run_requirement_restatement("vanilla_no_log", corpus, Gateway(MockBackend()), judge=judge)
    assert {r["status"] for r in report.records} == {"unscored"}
    assert report.aggregates()["vanilla_no_log"]["g_score"] == {"mean": None, "n": 0}


def test_solution_records(corpus):
    report = run_solution_proposal("vanilla_with_log", corpus, Gateway(MockBackend()))
    for r in report.records:
        assert r["selection_valid"] and r["s_score"] in (-100, -50, 0, 50, 100)
        assert len(r["selected"]) == 2


def test_invalid_selection_scores_worst(corpus):
    gw = Gateway(MockBackend(overrides={"task.solution_select": scripted('{"selected_solutions": ["1", "1"]}')}))
    report = run_solution_proposal("vanilla_no_log", corpus, gw)
    assert {r["s_score"] for r in report.records} == {-100}
    assert not any(r["selection_valid"] for r in report.records)
    assert report.aggregates()["vanilla_no_log"]["s_score"]["mean"] == -100


class _Down:
    backend_id = "down"

    def complete(self, request):
        raise BackendError("offline", retryable=False)


def test_backend_failure_marks_sample_failed(corpus):
    report = run_solution_proposal("vanilla_no_log", corpus, Gateway(_Down()))
    assert {r["status"] for r in report.records} == {"failed"}
    assert report.aggregates()["vanilla_no_log"]["failed"]["n"] == 3


def test_workers_do_not_change_records(corpus):
    one = run_solution_proposal("h2memory", corpus, Gateway(MockBackend()), config=RunConfig(workers=1))
    four = run_solution_proposal("h2memory", corpus, Gateway(MockBackend()), config=RunConfig(workers=4))
    assert one.records == four.records


def test_simulated_dialogue_follows_script(corpus):
    cap = CallCapture(MockBackend())
    gw = Gateway(cap)
    s = make_strategy("vanilla_no_log", gw)
    sample = task_samples(corpus)[0]
    s.begin(corpus, [])
    s.enter_session(sample.session_index)
    turns = simulate_dialogue(s, simulator_persona(corpus, sample), gw)
    assert [t["user_action"] for t in turns] == [u.value for u, _ in DEFAULT_SCRIPT]
    assert cap.template_ids().count("rag.query_formation") == len(DEFAULT_SCRIPT)
    assert all(r.bindings["memory"] == EMPTY_SENTINEL for r in cap.requests if r.template_id == "sim.assistant")


def test_query_formed_once_when_requery_disabled(corpus):
    cap = CallCapture(MockBackend())
    gw = Gateway(cap)
    s = make_strategy("vanilla_no_log", gw)
    sample = task_samples(corpus)[0]
    simulate_dialogue(s, simulator_persona(corpus, sample), gw, requery_each_turn=False)
    assert cap.template_ids().count("rag.query_formation") == 1


def test_interaction_tallies(corpus):
    report = run_multiturn_interaction("h2memory", "vanilla_no_log", corpus, Gateway(MockBackend()))
    evaluated = sum(1 for r in report.records if r["status"] == "ok")
    for dim, t in report.pairs.items():
        assert t["win"] + t["tie"] + t["lose"] == evaluated
        assert t["unevaluated"] == len(report.records) - evaluated
        for r in report.records:
            assert len(r[dim]["trace"]) == 6


def test_interaction_self_comparison_ties(corpus):
    report = run_multiturn_interaction("vanilla_no_log", "vanilla_no_log", corpus, Gateway(MockBackend()))
    assert report.pairs["requirement"]["tie"] == report.pairs["preference"]["tie"] == 3


# ---------------------------------------------------------------- reports


def test_mean_of_skips_missing():
    assert mean_of([{"x": 1}, {"x": None}, {"y": 3}, {"x": 2}], "x") == (1.5, 2)
    assert mean_of([], "x") == (None, 0)


def test_report_write(tmp_path):
    rep = ScoreReport("solution", ["a", "b"], ["s_score"], [
        {"strategy": "a", "s_score": 50, "status": "ok"},
        {"strategy": "a", "s_score": -50, "status": "ok"},
        {"strategy": "b", "s_score": 100, "status": "failed"},
    ])
    js, cs = rep.write(tmp_path / "out" / "r.json")
    doc = json.loads(js.read_text())
    assert doc["aggregates"]["a"]["s_score"] == {"mean": 0.0, "n": 2}
    assert doc["aggregates"]["b"]["failed"]["n"] == 1
    rows = list(csv.reader(cs.open()))
    assert rows[0] == ["task", "strategy", "metric", "value", "n"]
    assert ["solution", "a", "s_score", "0.000000", "2"] in rows


def test_interact_report_has_pair_rows_only():
    rep = ScoreReport("interact", ["a", "b"], [], [], {"requirement": {"win": 1, "tie": 0, "lose": 2, "unevaluated": 0}})
    assert rep.aggregates() == {}
    assert ["interact", "a vs b", "requirement.lose", 2, 2] in rep.csv_rows()
