import itertools
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from h2memory.bench import (
    bleu_score,
    brevity_penalty,
    g_score,
    get_tokenizer,
    max_reference_bleu,
    scale_gscore,
    selection_score,
    whitespace_tokenize,
)
from h2memory.llm import Gateway, MockBackend, scripted
from oracles import GOLDEN, fraction_bleu

@pytest.mark.parametrize("cand,refs,expected", GOLDEN)
def test_bleu_golden(cand, refs, expected):
    got = bleu_score(cand.split(), [r.split() for r in refs])
    assert got == pytest.approx(expected, abs=1e-6)


@pytest.mark.parametrize("cand,refs,expected", GOLDEN)
def test_golden_table_agrees_with_fraction_oracle(cand, refs, expected):
    assert fraction_bleu(cand.split(), [r.split() for r in refs]) == pytest.approx(expected, abs=1e-6)


@pytest.mark.filterwarnings("ignore::UserWarning")
@pytest.mark.parametrize("cand,refs,expected", GOLDEN)
def test_bleu_matches_nltk(cand, refs, expected):
    nltk_bleu = pytest.importorskip("nltk.translate.bleu_score")
    ours = bleu_score(cand.split(), [r.split() for r in refs])
    for n in range(1, 5):
        theirs = 100 * nltk_bleu.sentence_bleu([r.split() for r in refs], cand.split(), weights=(1 / n,) * n)
        assert ours[n - 1] == pytest.approx(theirs, abs=1e-6)


_tok = st.lists(st.sampled_from("a b c d e".split()), min_size=1, max_size=9)


@given(_tok, st.lists(_tok, min_size=1, max_size=3))
def test_bleu_matches_fraction_oracle(cand, refs):
    assert bleu_score(cand, refs) == pytest.approx(fraction_bleu(cand, refs), abs=1e-9)


@given(_tok, st.lists(_tok, min_size=1, max_size=3))
def test_max_reference_bleu_bounds(cand, refs):
    best = max_reference_bleu(cand, refs)
    for r in refs:
        single = bleu_score(cand, [r])
        assert all(b >= s - 1e-12 for b, s in zip(best, single))
    assert all(0 <= x <= 100 + 1e-9 for x in best)


def test_bleu_edge_cases():
    assert bleu_score([], [["a"]]) == [0.0] * 4
    with pytest.raises(ValueError):
        bleu_score(["a"], [])
    assert brevity_penalty(3, [["x"] * 3]) == 1.0


def test_tokenizers():
    assert whitespace_tokenize("  a  b\tc ") == ["a", "b", "c"]
    assert get_tokenizer("whitespace") is whitespace_tokenize
    with pytest.raises(ValueError):
        get_tokenizer("klingon")


# ---------------------------------------------------------------- selection


IDS = [str(i) for i in range(1, 9)]


def test_selection_exhaustive():
    rng = random.Random(42)
    pairs = list(itertools.combinations(IDS, 2))
    assert len(pairs) == 28
    for _ in range(100):
        shuffled = rng.sample(IDS, 8)
        pos, neg = shuffled[:2], shuffled[2:4]
        for pair in pairs:
            raw = len(set(pair) & set(pos)) - len(set(pair) & set(neg))
            res = selection_score(pair, pos, neg, IDS)
            assert res.valid and res.raw == raw and res.score == 50 * raw


@pytest.mark.parametrize("picked", [["1"], ["1", "1"], ["1", "2", "3"], ["1", "99"]])
def test_invalid_selection_is_worst_case(picked):
    res = selection_score(picked, ["1", "2"], ["3", "4"], IDS)
    assert not res.valid and res.raw == -2 and res.score == -100 and res.reason


# ---------------------------------------------------------------- G-score


@pytest.mark.parametrize("raw,scaled", [(0, 0), (0.5, 25), (1, 50), (1.5, 75), (2, 100)])
def test_gscore_scaling(raw, scaled):
    assert scale_gscore(raw) == scaled


def test_gscore_rejects_other_values():
    with pytest.raises(ValueError):
        scale_gscore(0.75)


def test_g_score_end_to_end():
    gw = Gateway(MockBackend(overrides={"judge.gscore": scripted('{"score": 1.5, "reason": "most"}')}))
    assert g_score("pred", ["n1", "n2"], gw, user_query="q", requirement="r") == (75.0, 1.5)


def test_g_score_unscored_after_budget():
    gw = Gateway(MockBackend(overrides={"judge.gscore": scripted('{"score": 3}')}), retry_budget=2)
    assert g_score("pred", ["n1", "n2"], gw) == (None, None)
    with pytest.raises(ValueError):
        g_score("pred", ["only one"], gw)
