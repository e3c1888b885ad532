import json

import httpx
import pytest
from hypothesis import given
from hypothesis import strategies as st

from h2memory.llm import (
    BackendError,
    CallCapture,
    CompletionRequest,
    Gateway,
    JSONExtractionError,
    MissingBindingError,
    MockBackend,
    OpenAICompatibleBackend,
    SchemaViolation,
    TokenBucket,
    UnknownTemplateError,
    ValidationFailure,
    extract_json,
    get_template,
    render_prompt,
    scripted,
    template_ids,
    validate_output,
)
from h2memory.llm.schemas import (
    OUTPUT_SCHEMAS,
    background_update_check,
    log_relations_check,
    selection_check,
    topic_outline_check,
)

LOGS = "\n".join(f"log_{i} | 2024-05-06 09:0{i} | Web Search | searched item {i}" for i in range(3))


def _bindings(tid):
    return {p: f"<value of {p}>" for p in get_template(tid).placeholders}


# ---------------------------------------------------------------- prompts


@pytest.mark.parametrize("tid", template_ids())
def test_every_template_renders_and_has_schema(tid):
    text = render_prompt(tid, _bindings(tid))
    for p in get_template(tid).placeholders:
        assert f"<value of {p}>" in text
        assert f"<{p}>" not in text
    assert tid in OUTPUT_SCHEMAS


def test_registry_size():
    assert len(template_ids()) == 21


def test_missing_binding():
    with pytest.raises(MissingBindingError, match="logs_id_span"):
        render_prompt("mem.log_relations", {"logs": LOGS})


def test_unknown_template():
    with pytest.raises(UnknownTemplateError):
        render_prompt("mem.nope", {})


def test_binding_values_are_not_reexpanded():
    text = render_prompt("rag.respond", {"memory": "<query>", "query": "Q"})
    assert text.count("<query>") == 1


# ---------------------------------------------------------------- JSON extraction


@pytest.mark.parametrize("raw,expected", [
    ('{"a": 1}', {"a": 1}),
    ('Sure! ```json\n{"a": [1, 2]}\n``` hope this helps', {"a": [1, 2]}),
    ("[1, 2, 3]", [1, 2, 3]),
    ('prefix {not json} then {"ok": true}', {"ok": True}),
])
def test_extract_json(raw, expected):
    assert extract_json(raw) == expected


@pytest.mark.parametrize("raw", ["no json here", '{"a": 1} and {"b": 2}', "{broken"])
def test_extract_json_rejects(raw):
    with pytest.raises(JSONExtractionError):
        extract_json(raw)


@given(st.dictionaries(st.text(max_size=5), st.integers(), max_size=4), st.text(alphabet="abc .\n", max_size=20))
def test_extract_json_finds_embedded_object(obj, prose):
    assert extract_json(prose + json.dumps(obj) + prose) == obj


# ---------------------------------------------------------------- schemas and checks


def test_judge_scores_must_be_integers():
    validate_output("judge.requirement", {"scores": {"assistant-1": 7, "assistant-2": 3}, "reason": "x"})
    with pytest.raises(SchemaViolation):
        validate_output("judge.requirement", {"scores": {"assistant-1": 7.0, "assistant-2": 3}, "reason": "x"})
    with pytest.raises(SchemaViolation):
        validate_output("judge.requirement", {"scores": {"assistant-1": 11, "assistant-2": 3}, "reason": "x"})


@pytest.mark.parametrize("score,ok", [(0, True), (0.5, True), (2, True), (0.25, False), (3, False)])
def test_gscore_values(score, ok):
    doc = {"score": score, "reason": "r"}
    if ok:
        validate_output("judge.gscore", doc)
    else:
        with pytest.raises(SchemaViolation):
            validate_output("judge.gscore", doc)


def _rel(**entries):
    return {k: {"caused_by": list(v[0]), "follows": list(v[1])} for k, v in entries.items()}


def test_log_relations_check():
    check = log_relations_check([10, 11], range(0, 12))
    check(_rel(log_10=(["log_3"], []), log_11=([], ["log_10"])))
    with pytest.raises(SchemaViolation, match="precede"):
        check(_rel(log_10=(["log_11"], []), log_11=([], [])))
    with pytest.raises(SchemaViolation, match="expected entries"):
        check(_rel(log_10=([], [])))
    narrow = log_relations_check([10, 11], range(5, 12))
    with pytest.raises(SchemaViolation, match="outside"):
        narrow(_rel(log_10=(["log_2"], []), log_11=([], [])))


def test_topic_outline_check():
    span = lambda a, b: {"turn_span": [f"turn_{a}", f"turn_{b}"]}
    topic_outline_check(4)([span(1, 2), span(3, 4)])
    for bad in ([span(1, 2), span(4, 4)], [span(1, 3), span(3, 4)], [span(1, 3)]):
        with pytest.raises(SchemaViolation):
            topic_outline_check(4)(bad)


def test_background_and_selection_checks():
    background_update_check({"updating_aspects": ["work"], "updating_content": {"work": "x"}})
    with pytest.raises(SchemaViolation):
        background_update_check({"updating_aspects": ["work", "health"], "updating_content": {"work": "x"}})
    check = selection_check([str(i) for i in range(1, 9)])
    check({"selected_solutions": ["1", "2"]})
    for picked in (["1", "1"], ["1", "9"]):
        with pytest.raises(SchemaViolation):
            check({"selected_solutions": picked})


# ---------------------------------------------------------------- gateway


def _relations_reply(forward=False):
    ref = "log_2" if forward else "log_0"
    return json.dumps(_rel(log_0=([], []), log_1=([ref], []), log_2=([], ["log_1"])))


def test_fail_twice_then_pass():
    backend = MockBackend(overrides={"mem.log_relations": scripted("not json", _relations_reply(True), _relations_reply())})
    gw = Gateway(backend, retry_budget=3)
    res = gw.complete_validated("mem.log_relations", {"logs": LOGS, "logs_id_span": "log_0 - log_2"},
                                check=log_relations_check([0, 1, 2], [0, 1, 2]))
    assert res.attempts == 3
    assert res.parsed["log_1"]["caused_by"] == ["log_0"]
    records = gw.calls("mem.log_relations")
    assert [r["attempt"] for r in records] == [1, 2, 3]
    assert "error" in records[0] and "precede" in records[1]["error"] and "parsed" in records[2]


def test_forward_edge_exhausts_budget():
    backend = MockBackend(overrides={"mem.log_relations": scripted(_relations_reply(True))})
    gw = Gateway(backend, retry_budget=2)
    with pytest.raises(ValidationFailure) as info:
        gw.complete_validated("mem.log_relations", {"logs": LOGS, "logs_id_span": "log_0 - log_2"},
                              check=log_relations_check([0, 1, 2], [0, 1, 2]))
    assert info.value.attempts == 2
    assert "precede" in info.value.last_error


def test_fixture_lookup_by_bindings_hash():
    from h2memory.llm import bindings_hash

    b = {"memory": "m", "query": "q"}
    backend = MockBackend(fixtures={("rag.respond", bindings_hash(b)): ['{"bad": 1}', '{"content": "fixed"}']})
    res = Gateway(backend).complete_validated("rag.respond", b)
    assert res.parsed == {"content": "fixed"} and res.attempts == 2


class _Flaky:
    backend_id = "flaky"

    def __init__(self, failures, retryable=True):
        self.failures = failures
        self.retryable = retryable
        self.calls = 0

    def complete(self, request):
        self.calls += 1
        if self.calls <= self.failures:
            raise BackendError("boom", retryable=self.retryable)
        return '{"content": "ok"}'


def test_transport_retries_do_not_consume_budget():
    sleeps = []
    backend = _Flaky(2)
    gw = Gateway(backend, retry_budget=1, transport_retries=3, backoff=0.1, sleep=sleeps.append)
    assert gw.complete_validated("rag.respond", {"memory": "m", "query": "q"}).parsed["content"] == "ok"
    assert sleeps == [0.1, 0.2]


def test_non_retryable_transport_error_propagates():
    gw = Gateway(_Flaky(1, retryable=False), sleep=lambda s: None)
    with pytest.raises(BackendError):
        gw.complete_validated("rag.respond", {"memory": "m", "query": "q"})


def test_transcript_file(tmp_path):
    path = tmp_path / "t.jsonl"
    gw = Gateway(MockBackend(), transcript_path=path)
    gw.complete_validated("rag.respond", {"memory": "m", "query": "q"})
    rows = [json.loads(l) for l in path.read_text().splitlines()]
    assert rows[0]["template_id"] == "rag.respond" and rows[0]["attempt"] == 1


def test_token_bucket_waits_when_empty(monkeypatch):
    now = [0.0]
    slept = []

    def fake_sleep(s):
        slept.append(s)
        now[0] += s

    monkeypatch.setattr("h2memory.llm.gateway.time.sleep", fake_sleep)
    bucket = TokenBucket(2.0, capacity=1, clock=lambda: now[0])
    bucket.acquire()
    bucket.acquire()
    assert slept == [pytest.approx(0.5)]


def test_call_capture_records_prompts():
    cap = CallCapture(MockBackend())
    Gateway(cap).complete_validated("rag.respond", {"memory": "MEM", "query": "Q"})
    assert cap.template_ids() == ["rag.respond"]
    assert "MEM" in cap.prompts("rag.respond")[0]


# ---------------------------------------------------------------- HTTP backend


def _client(handler):
    return httpx.Client(transport=httpx.MockTransport(handler))


def test_openai_backend_payload():
    seen = {}

    def handler(request):
        seen["url"] = str(request.url)
        seen["auth"] = request.headers.get("authorization")
        seen["body"] = json.loads(request.content)
        return httpx.Response(200, json={"choices": [{"message": {"content": '{"content": "hi"}'}}]})

    b = OpenAICompatibleBackend("http://x/v1/", "m1", "k", client=_client(handler))
    out = b.complete(CompletionRequest("rag.respond", {}, "PROMPT", temperature=0.0))
    assert out == '{"content": "hi"}'
    assert seen["url"] == "http://x/v1/chat/completions" and seen["auth"] == "Bearer k"
    assert seen["body"]["temperature"] == 0.0 and seen["body"]["messages"][0]["content"] == "PROMPT"


@pytest.mark.parametrize("status,retryable", [(429, True), (503, True), (400, False)])
def test_openai_backend_errors(status, retryable):
    b = OpenAICompatibleBackend("http://x", "m", client=_client(lambda r: httpx.Response(status, text="no")))
    with pytest.raises(BackendError) as info:
        b.complete(CompletionRequest("rag.respond", {}, "p"))
    assert info.value.retryable is retryable


# ---------------------------------------------------------------- mock backend


@pytest.mark.parametrize("tid", ["rag.respond", "rag.query_formation", "judge.requirement", "baseline.log_summary"])
def test_mock_is_deterministic_and_valid(tid):
    b = _bindings(tid)
    gw1, gw2 = Gateway(MockBackend()), Gateway(MockBackend())
    r1 = gw1.complete_validated(tid, b)
    r2 = gw2.complete_validated(tid, b)
    assert r1.raw == r2.raw and r1.attempts == 1
