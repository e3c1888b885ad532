"""Order-balanced pairwise judging of two dialogues."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping

from ..llm.gateway import Gateway, ValidationFailure

logger = logging.getLogger(__name__)

RUNS_PER_ORDER = 3


class Dimension(str, Enum):
    REQUIREMENT = "requirement"
    PREFERENCE = "preference"

    @property
    def template_id(self) -> str:
        return f"judge.{self.value}"


class Outcome(str, Enum):
    WIN_A = "win_A"
    TIE = "tie"
    WIN_B = "win_B"
    UNEVALUATED = "unevaluated"

    def mirrored(self) -> "Outcome":
        return {Outcome.WIN_A: Outcome.WIN_B, Outcome.WIN_B: Outcome.WIN_A}.get(self, self)


@dataclass(frozen=True)
class JudgeCall:
    a_first: bool
    score_a: int
    score_b: int
    attempts: int

    def mirrored(self) -> "JudgeCall":
        return JudgeCall(not self.a_first, self.score_b, self.score_a, self.attempts)


@dataclass
class PairwiseResult:
    outcome: Outcome
    trace: list[JudgeCall] = field(default_factory=list)
    redraws: int = 0

    @property
    def mean_a(self) -> float:
        return sum(c.score_a for c in self.trace) / len(self.trace) if self.trace else float("nan")

    @property
    def mean_b(self) -> float:
        return sum(c.score_b for c in self.trace) / len(self.trace) if self.trace else float("nan")


def judge_pairwise(
    dialogue_a: str,
    dialogue_b: str,
    dimension: Dimension | str,
    gateway: Gateway,
    profile: Mapping[str, str],
    *,
    extra_budget: int = 3,
    temperature: float | None = None,
) -> PairwiseResult:
    """Six judge calls, three with A shown first then three with B first; higher mean wins.

    ``profile`` supplies the background, personality and situation slots plus
    the dimension's target slot (``requirement`` or ``preference``). A call
    whose output never validates is redrawn, at most ``extra_budget`` times in
    total; past that the pair is unevaluated.
    """
    dimension = Dimension(dimension)
    base = {
        "background": profile["background"],
        "personality": profile["personality"],
        "situation": profile["situation"],
        dimension.value: profile[dimension.value],
    }
    trace: list[JudgeCall] = []
    redraws = 0
    for a_first in [True] * RUNS_PER_ORDER + [False] * RUNS_PER_ORDER:
        first, second = (dialogue_a, dialogue_b) if a_first else (dialogue_b, dialogue_a)
        bindings = {**base, "dialogue_assistant_1": first, "dialogue_assistant_2": second}
        while True:
            try:
                res = gateway.complete_validated(dimension.template_id, bindings, temperature=temperature)
                break
            except ValidationFailure as exc:
                if redraws >= extra_budget:
                    logger.warning("pairwise judge abandoned after %d redraws: %s", redraws, exc)
                    return PairwiseResult(Outcome.UNEVALUATED, trace, redraws)
                redraws += 1
        s1, s2 = res.parsed["scores"]["assistant-1"], res.parsed["scores"]["assistant-2"]
        trace.append(JudgeCall(a_first, s1 if a_first else s2, s2 if a_first else s1, res.attempts))
    # integer sums over the same number of calls compare exactly like the means
    total_a = sum(c.score_a for c in trace)
    total_b = sum(c.score_b for c in trace)
    outcome = Outcome.WIN_A if total_a > total_b else Outcome.WIN_B if total_b > total_a else Outcome.TIE
    return PairwiseResult(outcome, trace, redraws)
