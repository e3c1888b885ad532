"""Memory snapshots: one canonical JSON document per user, written atomically."""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

from .bench.report import atomic_write_text
from .memory.bank import MemoryBank
from .vectors import Embedder, fingerprint

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1


class SnapshotError(ValueError):
    pass


class IntegrityError(SnapshotError):
    """The bank's mappings or partitions are broken; the message names the entry."""


class MigrationError(SnapshotError):
    pass


class FingerprintMismatch(SnapshotError):
    pass


@dataclass(frozen=True)
class SnapshotManifest:
    path: Path
    user_id: str
    schema_version: int
    content_hash: str
    n_bytes: int


def canonical_json(obj: Any) -> str:
    # sort_keys + repr-exact floats make equal banks serialize to equal bytes
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, indent=1, allow_nan=False)


def content_hash(memory: Mapping[str, Any]) -> str:
    return hashlib.sha256(canonical_json(memory).encode("utf-8")).hexdigest()


def snapshot_document(bank: MemoryBank) -> dict[str, Any]:
    errors = bank.consistency_errors()
    if errors:
        raise IntegrityError("; ".join(errors))
    memory = bank.to_dict()
    return {
        "schema_version": SCHEMA_VERSION,
        "user_id": bank.user_id,
        "embedder": dict(bank.embedder),
        "content_hash": content_hash(memory),
        "memory": memory,
    }


def save_memory(bank: MemoryBank, destination: str | Path) -> SnapshotManifest:
    """Refuses inconsistent banks; otherwise writes temp-then-rename and returns the manifest."""
    doc = snapshot_document(bank)
    text = canonical_json(doc) + "\n"
    path = Path(destination)
    atomic_write_text(path, text)
    logger.info("saved memory for %s to %s (%s)", bank.user_id, path, doc["content_hash"][:12])
    return SnapshotManifest(path, bank.user_id, SCHEMA_VERSION, doc["content_hash"], len(text.encode("utf-8")))


def read_snapshot(source: str | Path) -> dict[str, Any]:
    try:
        with open(source, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise SnapshotError(f"{source}: not valid JSON ({exc})") from exc


def load_memory(
    source: str | Path | Mapping[str, Any],
    embedder: Embedder | None = None,
    *,
    allow_fingerprint_mismatch: bool = False,
) -> MemoryBank:
    """Validated bank from a snapshot.

    The embedder the snapshot was built with must match ``embedder`` (name and
    dimension) unless the override flag is set, since stored vectors would be
    meaningless against a different encoder.
    """
    doc = dict(source) if isinstance(source, Mapping) else read_snapshot(source)
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise MigrationError(
            f"snapshot schema version {version!r} is not supported (expected {SCHEMA_VERSION}); re-run build-memory"
        )
    if embedder is not None:
        want, have = fingerprint(embedder), dict(doc.get("embedder", {}))
        if want != have:
            msg = f"snapshot was built with embedder {have}, active embedder is {want}"
            if not allow_fingerprint_mismatch:
                raise FingerprintMismatch(msg)
            logger.warning("%s (override in effect)", msg)
    try:
        bank = MemoryBank.from_dict(doc["memory"])
    except (KeyError, TypeError, ValueError) as exc:
        raise SnapshotError(f"malformed snapshot: {exc}") from exc
    errors = bank.consistency_errors()
    if errors:
        raise IntegrityError("; ".join(errors))
    if content_hash(doc["memory"]) != doc.get("content_hash"):
        raise IntegrityError("content hash does not match the stored memory")
    return bank
