"""
Building a user's memory from logs and dialogues
=================================================

Walks one user's history through the four memory parts with the offline
mock model, then saves and reloads the snapshot.
"""

import tempfile
from pathlib import Path

from h2memory.corpus import load_fixture_corpus, split_history_query
from h2memory.llm import Gateway, MockBackend
from h2memory.memory import BuildConfig, MemoryBuilder
from h2memory.store import load_memory, save_memory

# The bundled corpus has one user with six sessions. The last month is held
# out as the query set, everything before it is history.
corpus = load_fixture_corpus()
history, query = split_history_query(corpus)
print(f"user {corpus.user_id}: {len(history)} history sessions, {len(query)} query sessions")

###############################################################################
# Every model call goes through a gateway. The mock backend answers each
# template deterministically, so this script always prints the same memory.
gateway = Gateway(MockBackend())
builder = MemoryBuilder(gateway, config=BuildConfig(n_clusters=8, seed=0))
bank = builder.build(corpus, [corpus.session_index(s.session_id) for s in history])

###############################################################################
# Situations come from connected groups of related logs, one summary per group.
for j in bank.sessions_seen[:2]:
    for entry in bank.situations_in(j)[:3]:
        print(entry.entry_id, list(entry.member_log_ids), bank.f_gb[entry.entry_id])
        print("   ", entry.text[:100])

###############################################################################
# The background keeps one running summary per life aspect.
for aspect, text in bank.background.aspects.items():
    print(f"{aspect:8s} {text[:90] or '(empty)'}")

###############################################################################
# Topic outlines hold the rewritten requirement, the solutions discussed with
# their feedback, and a preference summary. Principles sit one level higher:
# each cluster of outlines gets a requirement type and a preference principle.
for outline in bank.outlines:
    print(outline.entry_id, "->", bank.f_tp[outline.entry_id], "|", outline.rewritten[:80])
for p in bank.principles:
    print(p.cluster_id, p.requirement_type, "|", p.principle[:80])

###############################################################################
# Snapshots are canonical JSON with a content hash. Loading checks the schema
# version, the embedder fingerprint and every mapping before returning.
with tempfile.TemporaryDirectory() as tmp:
    manifest = save_memory(bank, Path(tmp) / "memory.json")
    again = load_memory(manifest.path)
    print("saved", manifest.n_bytes, "bytes, sha256", manifest.content_hash[:16])
    print("reloaded bank identical:", again.to_dict() == bank.to_dict())
