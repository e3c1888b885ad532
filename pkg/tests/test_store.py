import json
import random

import pytest

from h2memory.rag import compose_retrieval, serialize_context
from h2memory.store import (
    FingerprintMismatch,
    IntegrityError,
    MigrationError,
    SnapshotError,
    canonical_json,
    content_hash,
    load_memory,
    read_snapshot,
    save_memory,
)
from h2memory.vectors import HashingEmbedder


@pytest.fixture
def snap(tmp_path, history_bank):
    path = tmp_path / "mem" / "u.json"
    manifest = save_memory(history_bank, path)
    return path, manifest


def test_round_trip(snap, history_bank):
    path, manifest = snap
    bank = load_memory(path, HashingEmbedder())
    assert bank.to_dict() == history_bank.to_dict()
    assert manifest.n_bytes == path.stat().st_size
    assert manifest.content_hash == content_hash(history_bank.to_dict())
    assert [p.name for p in path.parent.iterdir()] == ["u.json"]


def test_saving_twice_is_byte_identical(tmp_path, history_bank):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    save_memory(history_bank, a)
    save_memory(load_memory(a), b)
    assert a.read_bytes() == b.read_bytes()


def test_probe_queries_match(snap, history_bank):
    path, _ = snap
    loaded = load_memory(path)
    rng = random.Random(0)
    words = "sleep work family trip slides budget run cook gift meeting neck weekend".split()
    for _ in range(50):
        q = " ".join(rng.sample(words, 3))
        j = rng.choice(history_bank.sessions_seen)
        a = serialize_context(compose_retrieval(q, history_bank, j))
        b = serialize_context(compose_retrieval(q, loaded, j))
        assert a == b


def test_dangling_f_tp_names_entry(snap):
    path, _ = snap
    doc = read_snapshot(path)
    doc["memory"]["f_tp"]["T0042_0007"] = 0
    doc["content_hash"] = content_hash(doc["memory"])
    with pytest.raises(IntegrityError, match="T0042_0007"):
        load_memory(doc)


def test_tampered_content_fails_hash(snap):
    path, _ = snap
    doc = read_snapshot(path)
    doc["memory"]["outlines"][0]["preference"] = "edited by hand"
    with pytest.raises(IntegrityError, match="hash"):
        load_memory(doc)


def test_version_mismatch(snap):
    path, _ = snap
    doc = read_snapshot(path)
    doc["schema_version"] = 2
    with pytest.raises(MigrationError):
        load_memory(doc)


def test_fingerprint_mismatch_and_override(snap):
    path, _ = snap
    other = HashingEmbedder(dimension=128)
    with pytest.raises(FingerprintMismatch):
        load_memory(path, other)
    assert load_memory(path, other, allow_fingerprint_mismatch=True).user_id


def test_corrupt_file(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{oops")
    with pytest.raises(SnapshotError):
        load_memory(p)


def test_refuses_to_save_inconsistent_bank(tmp_path, fresh_bank):
    fresh_bank.f_tp["T0000_0000"] = 99
    with pytest.raises(IntegrityError, match="99"):
        save_memory(fresh_bank, tmp_path / "x.json")
    assert not (tmp_path / "x.json").exists()


def test_canonical_json_rejects_nan():
    with pytest.raises(ValueError):
        canonical_json({"x": float("nan")})
    assert canonical_json({"b": 1, "a": 2}) == json.dumps({"a": 2, "b": 1}, indent=1)
