"""Command-line entry point.

Store layout: ``<store>/corpus/<user>.json`` holds normalized corpora and
``<store>/memory/<user>.json`` the memory snapshots built from their history.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from .bench.metrics import get_tokenizer
from .bench.report import ScoreReport, atomic_write_text
from .bench.tasks import RunConfig, run_multiturn_interaction, run_requirement_restatement, run_solution_proposal
from .config import ConfigError, Settings, load_settings, make_embedder, make_gateway
from .corpus import CorpusError, UserCorpus, corpus_to_dict, ingest_corpus, split_history_query
from .llm.backends import BackendError
from .llm.gateway import ValidationFailure
from .llm.schemas import SchemaViolation
from .memory.builder import BuildConfig, MemoryBuilder
from .memory.graph import ConstructionError
from .rag.retrieval import RetrievalMode, compose_retrieval, generate_response, serialize_context
from .rag.strategies import H2MEMORY, STRATEGY_NAMES, H2MemoryStrategy
from .store import FingerprintMismatch, IntegrityError, MigrationError, SnapshotError, load_memory, read_snapshot, save_memory

logger = logging.getLogger("h2memory")

EXIT_OK, EXIT_VALIDATION, EXIT_BACKEND, EXIT_CONFIG = 0, 1, 2, 3


# --------------------------------------------------------------------------- store helpers


def corpus_path(store: Path, user: str) -> Path:
    return store / "corpus" / f"{user}.json"


def memory_path(store: Path, user: str) -> Path:
    return store / "memory" / f"{user}.json"


def store_users(store: Path, user: str | None) -> list[str]:
    if user:
        if not corpus_path(store, user).exists():
            raise ConfigError(f"user {user!r} is not in store {store}")
        return [user]
    users = sorted(p.stem for p in (store / "corpus").glob("*.json"))
    if not users:
        raise ConfigError(f"store {store} holds no corpora; run ingest first")
    return users


def load_user(store: Path, user: str) -> UserCorpus:
    return ingest_corpus(corpus_path(store, user))


def settings_from(args: argparse.Namespace) -> Settings:
    overrides = {
        "mock": True if getattr(args, "mock", False) else None,
        "k": getattr(args, "k", None),
        "workers": getattr(args, "workers", None),
        "seed": getattr(args, "seed", None),
        "n_clusters": getattr(args, "n_clusters", None),
        "retry_budget": getattr(args, "retry_budget", None),
        "tokenizer": getattr(args, "tokenizer", None),
    }
    return load_settings(args.config, overrides=overrides)


def run_config(settings: Settings, dialogue_only: bool = False) -> RunConfig:
    build = BuildConfig(k=settings.k, n_clusters=settings.n_clusters, seed=settings.seed,
                        workers=settings.workers, dialogue_only=dialogue_only)
    return RunConfig(k=settings.k, workers=settings.workers, requery_each_turn=settings.requery_each_turn, build=build)


# --------------------------------------------------------------------------- commands


def cmd_ingest(args: argparse.Namespace) -> int:
    store = Path(args.out)
    for source in args.corpus:
        corpus = ingest_corpus(source)
        atomic_write_text(corpus_path(store, corpus.user_id),
                          json.dumps(corpus_to_dict(corpus), ensure_ascii=False, indent=1, sort_keys=True) + "\n")
        history, query = split_history_query(corpus)
        print(f"{corpus.user_id}: {len(corpus.sessions)} sessions "
              f"({len(history)} history, {len(query)} query), "
              f"{sum(len(s.logs) for s in corpus.sessions)} logs, {sum(len(s.dialogue) for s in corpus.sessions)} turns")
    return EXIT_OK


def cmd_build_memory(args: argparse.Namespace) -> int:
    settings = settings_from(args)
    store = Path(args.store)
    gateway = make_gateway(settings, args.transcript)
    embedder = make_embedder(settings)
    for user in store_users(store, args.user):
        corpus = load_user(store, user)
        history, _ = split_history_query(corpus)
        builder = MemoryBuilder(gateway, embedder, run_config(settings, args.dialogue_only).build)
        bank = builder.build(corpus, [corpus.session_index(s.session_id) for s in history])
        manifest = save_memory(bank, memory_path(store, user))
        print(f"{user}: {len(bank.all_situations())} situations, {len(bank.outlines)} outlines, "
              f"{len(bank.principles)} principles -> {manifest.path} sha256={manifest.content_hash}")
    return EXIT_OK


def cmd_query(args: argparse.Namespace) -> int:
    settings = settings_from(args)
    store = Path(args.store)
    embedder = make_embedder(settings)
    bank = load_memory(memory_path(store, args.user), embedder, allow_fingerprint_mismatch=args.allow_embedder_mismatch)
    session = max(bank.sessions_seen) if bank.sessions_seen else -1
    m = compose_retrieval(args.text, bank, session, settings.k, RetrievalMode.parse(args.mode), embedder)
    print(serialize_context(m))
    if args.respond:
        gateway = make_gateway(settings, args.transcript)
        print("\n## Response\n" + generate_response(m, args.text, gateway))
    return EXIT_OK


def _preloaded(store: Path, user: str, name: str, gateway, embedder, cfg: RunConfig, allow: bool):
    """An h2memory strategy seeded from the saved snapshot when one exists."""
    if name != H2MEMORY or not memory_path(store, user).exists():
        return name
    bank = load_memory(memory_path(store, user), embedder, allow_fingerprint_mismatch=allow)
    return H2MemoryStrategy(gateway, embedder, cfg.k, config=cfg.build, bank=bank)


def _run(task: str, a: str, b: str | None, args: argparse.Namespace) -> ScoreReport:
    settings = settings_from(args)
    store = Path(args.store)
    transcript = args.transcript or str(Path(args.report).with_suffix(".transcript.jsonl"))
    gateway = make_gateway(settings, transcript)
    judge = make_gateway(settings, transcript, judge=True) if settings.judge_model else gateway
    embedder = make_embedder(settings)
    tokenizer = get_tokenizer(settings.tokenizer)
    cfg = run_config(settings)
    merged: ScoreReport | None = None
    for user in store_users(store, getattr(args, "user", None)):
        corpus = load_user(store, user)
        sa = _preloaded(store, user, a, gateway, embedder, cfg, args.allow_embedder_mismatch)
        if task == "restate":
            rep = run_requirement_restatement(sa, corpus, gateway, judge=judge, embedder=embedder,
                                              tokenizer=tokenizer, config=cfg)
        elif task == "solution":
            rep = run_solution_proposal(sa, corpus, gateway, embedder=embedder, tokenizer=tokenizer, config=cfg)
        else:
            sb = _preloaded(store, user, b, gateway, embedder, cfg, args.allow_embedder_mismatch)
            rep = run_multiturn_interaction(sa, sb, corpus, gateway, judge=judge, embedder=embedder, config=cfg)
        if merged is None:
            merged = rep
        else:
            merged.records.extend(rep.records)
            for dim, counts in rep.pairs.items():
                for key, n in counts.items():
                    merged.pairs[dim][key] += n
    return merged


def _summarize(report: ScoreReport) -> None:
    for strategy, metrics in report.aggregates().items():
        parts = [f"{m}={v['mean']:.2f}" for m, v in metrics.items() if v["mean"] is not None]
        print(f"[{report.task}] {strategy}: " + " ".join(parts) + f" (samples={metrics['samples']['n']})")
    for dim, t in report.pairs.items():
        print(f"[{report.task}] {' vs '.join(report.strategies)} {dim}: "
              f"W/T/L = {t['win']}/{t['tie']}/{t['lose']} (unevaluated {t['unevaluated']})")


def cmd_run_task(args: argparse.Namespace) -> int:
    report = _run(args.task, args.strategy, args.against, args)
    json_path, csv_path = report.write(args.report)
    _summarize(report)
    print(f"report: {json_path} and {csv_path}")
    return EXIT_OK


def cmd_compare(args: argparse.Namespace) -> int:
    reports = []
    for task in ("restate", "solution"):
        for name in (args.a, args.b):
            reports.append(_run(task, name, None, args))
    reports.append(_run("interact", args.a, args.b, args))
    doc = {"reports": [r.to_dict() for r in reports]}
    path = Path(args.report)
    atomic_write_text(path, json.dumps(doc, ensure_ascii=False, indent=2, sort_keys=True) + "\n")
    rows = [r.csv_rows() for r in reports]
    lines = [",".join(map(str, rows[0][0]))] + [",".join(map(str, row)) for rs in rows for row in rs[1:]]
    atomic_write_text(path.with_suffix(".csv"), "\n".join(lines) + "\n")
    for r in reports:
        _summarize(r)
    print(f"report: {path} and {path.with_suffix('.csv')}")
    return EXIT_OK


def cmd_inspect(args: argparse.Namespace) -> int:
    doc = read_snapshot(args.snapshot)
    bank = load_memory(doc)
    print(f"user {bank.user_id}  schema v{doc['schema_version']}  embedder {bank.embedder}  "
          f"sha256 {doc['content_hash']}{'  (dialogue-only)' if bank.dialogue_only else ''}")
    print("\n# Situations (M_G)")
    for j in sorted(bank.situations):
        for e in bank.situations[j]:
            print(f"  {e.entry_id} logs={list(e.member_log_ids)} aspects={list(bank.f_gb[e.entry_id])}\n    {e.text}")
    print("\n# Background (M_B)")
    for a, text in bank.background.aspects.items():
        print(f"  {a}: {text or '(empty)'}")
    print("\n# Topic outlines (M_T)")
    for o in bank.outlines:
        print(f"  {o.entry_id} turns {o.turn_span[0]}-{o.turn_span[1]} -> principle {bank.f_tp.get(o.entry_id)}")
        print(f"    requirement: {o.rewritten}")
        for s in o.solutions:
            print(f"    [{s.feedback_type}] {s.solution}")
        print(f"    preference: {o.preference}")
    print("\n# Principles (M_P)")
    for p in bank.principles:
        print(f"  {p.cluster_id}: {p.requirement_type}\n    {p.principle}")
    return EXIT_OK


# --------------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="h2memory", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    model = argparse.ArgumentParser(add_help=False)
    model.add_argument("--config", help="JSON settings file (flags > environment > file)")
    model.add_argument("--mock", action="store_true", help="use the deterministic offline backend")
    model.add_argument("--k", type=int)
    model.add_argument("--workers", type=int)
    model.add_argument("--seed", type=int)
    model.add_argument("--n-clusters", dest="n_clusters", type=int)
    model.add_argument("--retry-budget", dest="retry_budget", type=int)
    model.add_argument("--transcript", help="append every model call to this JSON-lines file")
    model.add_argument("--allow-embedder-mismatch", action="store_true")

    p = sub.add_parser("ingest", help="validate corpus files and copy them into a store")
    p.add_argument("corpus", nargs="+")
    p.add_argument("--out", required=True, help="store directory")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("build-memory", parents=[model], help="build and save memory over each user's history")
    p.add_argument("store")
    p.add_argument("--user")
    p.add_argument("--dialogue-only", action="store_true", help="outlines and principles only, no log memory")
    p.set_defaults(func=cmd_build_memory)

    p = sub.add_parser("query", parents=[model], help="show what memory retrieves for a query")
    p.add_argument("store")
    p.add_argument("--user", required=True)
    p.add_argument("--text", required=True)
    p.add_argument("--mode", choices=["requirement", "preference"], default="preference")
    p.add_argument("--respond", action="store_true", help="also generate a reply with the retrieved memory")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("run-task", parents=[model], help="run one benchmark task and write a report")
    p.add_argument("task", choices=["restate", "solution", "interact"])
    p.add_argument("--strategy", required=True, choices=STRATEGY_NAMES)
    p.add_argument("--against", default="vanilla_no_log", choices=STRATEGY_NAMES, help="opponent for interact")
    p.add_argument("--store", required=True)
    p.add_argument("--user")
    p.add_argument("--report", required=True)
    p.add_argument("--tokenizer", choices=["whitespace", "jieba"])
    p.set_defaults(func=cmd_run_task)

    p = sub.add_parser("compare", parents=[model], help="all three tasks for two strategies")
    p.add_argument("--a", required=True, choices=STRATEGY_NAMES)
    p.add_argument("--b", required=True, choices=STRATEGY_NAMES)
    p.add_argument("--store", required=True)
    p.add_argument("--user")
    p.add_argument("--report", required=True)
    p.add_argument("--tokenizer", choices=["whitespace", "jieba"])
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("inspect", help="print the four memory parts of a snapshot")
    p.add_argument("snapshot")
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not hasattr(args, "config"):
        args.config = None
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, MigrationError, FingerprintMismatch) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except (ValidationFailure, SchemaViolation, ConstructionError, CorpusError, IntegrityError, SnapshotError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
