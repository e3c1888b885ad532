"""Scoring functions: sentence BLEU, the selection score and G-score scaling."""

from __future__ import annotations

import json
import logging
import math
from collections import Counter
from dataclasses import dataclass
from typing import Callable, Sequence

from ..llm.gateway import Gateway, ValidationFailure
from ..llm.schemas import GSCORE_VALUES

logger = logging.getLogger(__name__)

Tokenizer = Callable[[str], list[str]]


def whitespace_tokenize(text: str) -> list[str]:
    return text.split()


class JiebaTokenizer:
    """Chinese word segmentation through jieba, imported on first use (``pip install h2memory[zh]``)."""

    def __init__(self) -> None:
        self._cut = None

    def __call__(self, text: str) -> list[str]:
        if self._cut is None:
            try:
                import jieba
            except ImportError as exc:
                raise RuntimeError("the jieba tokenizer needs the optional 'jieba' package") from exc
            self._cut = jieba.lcut
        return [t for t in self._cut(text) if t.strip()]


def get_tokenizer(name: str) -> Tokenizer:
    if name == "whitespace":
        return whitespace_tokenize
    if name == "jieba":
        return JiebaTokenizer()
    raise ValueError(f"unknown tokenizer {name!r}")


# --------------------------------------------------------------------------- BLEU


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def modified_precision(candidate: Sequence[str], references: Sequence[Sequence[str]], n: int) -> tuple[int, int]:
    """(clipped matches, candidate n-gram count) for order ``n``."""
    cand = _ngrams(candidate, n)
    if not cand:
        return 0, 0
    max_ref: Counter = Counter()
    for ref in references:
        for gram, c in _ngrams(ref, n).items():
            max_ref[gram] = max(max_ref[gram], c)
    clipped = sum(min(c, max_ref[g]) for g, c in cand.items())
    return clipped, sum(cand.values())


def brevity_penalty(c: int, references: Sequence[Sequence[str]]) -> float:
    # closest reference length, shorter one on ties
    r = min((len(ref) for ref in references), key=lambda L: (abs(L - c), L))
    if c > r:
        return 1.0
    return math.exp(1 - r / c)


def bleu_score(candidate: Sequence[str], references: Sequence[Sequence[str]], max_n: int = 4) -> list[float]:
    """Sentence BLEU B-1..B-max_n on a 0-100 scale, unsmoothed.

    B-n is the brevity penalty times the geometric mean of the modified
    precisions of orders 1..n, so it is 0 as soon as one of them is 0.
    """
    if not references:
        raise ValueError("bleu_score needs at least one reference")
    if max_n < 1:
        raise ValueError("max_n must be >= 1")
    if not candidate:
        return [0.0] * max_n
    bp = brevity_penalty(len(candidate), references)
    scores, log_sum = [], 0.0
    for n in range(1, max_n + 1):
        num, den = modified_precision(candidate, references, n)
        if num == 0 or log_sum == -math.inf:
            log_sum = -math.inf
            scores.append(0.0)
            continue
        log_sum += math.log(num / den)
        scores.append(100.0 * bp * math.exp(log_sum / n))
    return scores


def max_reference_bleu(candidate: Sequence[str], references: Sequence[Sequence[str]], max_n: int = 4) -> list[float]:
    """Score against each reference on its own and keep the best value per order."""
    if not references:
        raise ValueError("max_reference_bleu needs at least one reference")
    per_ref = [bleu_score(candidate, [r], max_n) for r in references]
    return [max(col) for col in zip(*per_ref)]


# --------------------------------------------------------------------------- selection


@dataclass(frozen=True)
class SelectionResult:
    score: float
    raw: int
    valid: bool
    reason: str = ""


INVALID_SELECTION_RAW = -2


def selection_score(
    selected: Sequence[str],
    pos_ids: Sequence[str],
    neg_ids: Sequence[str],
    candidate_ids: Sequence[str] | None = None,
) -> SelectionResult:
    """+1 per selected positive, -1 per selected negative, times 50.

    Anything other than two distinct known ids is scored as the worst case
    (raw -2) and flagged invalid.
    """
    picked = [str(x) for x in selected]
    reason = ""
    if len(picked) != 2 or len(set(picked)) != 2:
        reason = f"expected 2 distinct ids, got {picked}"
    elif candidate_ids is not None and set(picked) - {str(c) for c in candidate_ids}:
        reason = f"unknown ids {sorted(set(picked) - {str(c) for c in candidate_ids})}"
    if reason:
        logger.warning("invalid selection: %s", reason)
        return SelectionResult(INVALID_SELECTION_RAW * 50.0, INVALID_SELECTION_RAW, False, reason)
    pos, neg = {str(x) for x in pos_ids}, {str(x) for x in neg_ids}
    raw = sum(1 if p in pos else -1 if p in neg else 0 for p in picked)
    return SelectionResult(raw * 50.0, raw, True)


# --------------------------------------------------------------------------- G-score


def scale_gscore(raw: float) -> float:
    if raw not in GSCORE_VALUES:
        raise ValueError(f"G-score raw value must be one of {GSCORE_VALUES}, got {raw!r}")
    return float(raw) * 50.0


def g_score(
    prediction: str,
    implicit_needs: Sequence[str],
    gateway: Gateway,
    *,
    user_query: str = "",
    requirement: str = "",
) -> tuple[float | None, float | None]:
    """Judge how many of the 2 implicit needs the prediction covers; returns (scaled, raw).

    Both are None when the judge never produced a valid score.
    """
    if len(implicit_needs) != 2:
        raise ValueError("g_score needs exactly 2 implicit needs")
    reference = json.dumps({"requirement": requirement, "implicit_needs": list(implicit_needs)}, ensure_ascii=False, indent=1)
    try:
        parsed = gateway.complete_validated(
            "judge.gscore", {"user_query": user_query, "reference": reference, "prediction": prediction}
        ).parsed
    except ValidationFailure as exc:
        logger.warning("G-score judge gave up: %s", exc)
        return None, None
    raw = parsed["score"]
    return scale_gscore(raw), float(raw)
