"""Benchmark tasks, metrics, pairwise judging and score reports."""

from .judge import Dimension, JudgeCall, Outcome, PairwiseResult, judge_pairwise
from .metrics import (
    JiebaTokenizer, SelectionResult, bleu_score, brevity_penalty, g_score, get_tokenizer, max_reference_bleu,
    modified_precision, scale_gscore, selection_score, whitespace_tokenize,
)
from .report import ScoreReport, atomic_write_text
from .tasks import (
    DEFAULT_SCRIPT, RunConfig, TaskSample, run_multiturn_interaction, run_requirement_restatement,
    run_solution_proposal, simulate_dialogue, task_samples,
)

__all__ = [
    "DEFAULT_SCRIPT", "Dimension", "JiebaTokenizer", "JudgeCall", "Outcome", "PairwiseResult", "RunConfig",
    "ScoreReport", "SelectionResult", "TaskSample", "atomic_write_text", "bleu_score", "brevity_penalty", "g_score",
    "get_tokenizer", "judge_pairwise", "max_reference_bleu", "modified_precision", "run_multiturn_interaction",
    "run_requirement_restatement", "run_solution_proposal", "scale_gscore", "selection_score", "simulate_dialogue",
    "task_samples", "whitespace_tokenize",
]
