"""
Running the three benchmark tasks
=================================

Requirement restatement, solution proposal and simulated multi-turn
interaction, with the memory strategy against the log-only baseline.
The mock model makes these numbers reproducible, not meaningful: they show
the plumbing, and say nothing about how a real model would score.
"""

from h2memory.bench import (
    RunConfig,
    run_multiturn_interaction,
    run_requirement_restatement,
    run_solution_proposal,
)
from h2memory.corpus import load_fixture_corpus
from h2memory.llm import Gateway, MockBackend

corpus = load_fixture_corpus()
gateway = Gateway(MockBackend())
config = RunConfig(k=3)
strategies = ["h2memory", "vanilla_with_log"]

###############################################################################
# Restatement: the assistant writes down the user's full requirement. BLEU
# compares it with the reference and a judge scores implicit-need coverage.
for name in strategies:
    agg = run_requirement_restatement(name, corpus, gateway, config=config).aggregates()[name]
    print(f"{name:18s} BLEU-1 {agg['bleu_1']['mean']:6.2f}   G-score {agg['g_score']['mean']:6.2f}")

###############################################################################
# Solution proposal: one free-form solution (BLEU against the positive
# candidates) and a pick of 2 out of 8 candidates (S-score in [-100, 100]).
for name in strategies:
    agg = run_solution_proposal(name, corpus, gateway, config=config).aggregates()[name]
    print(f"{name:18s} gen BLEU-1 {agg['gen_bleu_1']['mean']:6.2f}   S-score {agg['s_score']['mean']:7.2f}")

###############################################################################
# Interaction: a simulated user talks to both assistants; a judge compares the
# two dialogues six times with the order swapped halfway.
report = run_multiturn_interaction(*strategies, corpus, gateway, config=config)
for dim, t in report.pairs.items():
    print(f"{dim:12s} win {t['win']}  tie {t['tie']}  lose {t['lose']}  unevaluated {t['unevaluated']}")

first = report.records[0]
for turn in first["dialogue_a"]:
    print(f"[{turn['turn']}] user: {turn['user']}")
    print(f"         assistant: {turn['assistant']}")
