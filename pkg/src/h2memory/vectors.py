"""Embeddings, cosine top-k retrieval and spherical KMeans.

All vectors handled here are unit length, so cosine similarity is a plain
inner product and squared Euclidean distance is ``2 - 2 cos``.
"""

from __future__ import annotations

import hashlib
import logging
import os
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Iterable, Mapping, Protocol, Sequence

import httpx
import numpy as np

from .llm.backends import BackendError

logger = logging.getLogger(__name__)

NORM_TOL = 1e-6


class StoreError(ValueError):
    pass


def normalize(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    n = np.linalg.norm(v)
    if n == 0 or not np.isfinite(n):
        raise ValueError("cannot normalize a zero or non-finite vector")
    return v / n


# --------------------------------------------------------------------------- embedders


class Embedder(Protocol):
    name: str
    dimension: int

    def embed(self, texts: Sequence[str]) -> np.ndarray: ...


def fingerprint(embedder: Embedder) -> dict[str, Any]:
    return {"name": embedder.name, "dimension": int(embedder.dimension)}


@lru_cache(maxsize=65536)
def _gram_index(gram: str, dimension: int) -> int:
    digest = hashlib.blake2b(gram.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") % dimension


@dataclass(frozen=True)
class HashingEmbedder:
    """Character n-gram feature hashing. Deterministic and dependency-free, for tests and offline runs."""

    dimension: int = 256
    n: int = 3

    @property
    def name(self) -> str:
        return f"hashing-char{self.n}gram"

    def embed_one(self, text: str) -> np.ndarray:
        if not text or not text.strip():
            raise ValueError("cannot embed empty text")
        padded = f" {' '.join(text.lower().split())} "
        v = np.zeros(self.dimension)
        for i in range(len(padded) - self.n + 1):
            v[_gram_index(padded[i : i + self.n], self.dimension)] += 1.0
        return normalize(v)

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        if not texts:
            return np.zeros((0, self.dimension))
        return np.stack([self.embed_one(t) for t in texts])


class HttpEmbedder:
    """Posts ``{"input": [...]}`` to an embedding endpoint and expects ``{"vectors": [[...], ...]}``."""

    def __init__(self, url: str, dimension: int, model: str | None = None, api_key: str | None = None,
                 timeout: float = 60.0, client: httpx.Client | None = None):
        self.url = url
        self.dimension = dimension
        self.model = model
        self.api_key = api_key
        self.name = f"http:{model or url}"
        self._client = client or httpx.Client(timeout=timeout)

    @classmethod
    def from_env(cls, prefix: str = "H2MEMORY_EMBED") -> "HttpEmbedder":
        url = os.environ.get(f"{prefix}_URL")
        dim = os.environ.get(f"{prefix}_DIM")
        if not url or not dim:
            raise BackendError(f"{prefix}_URL and {prefix}_DIM must be set", retryable=False)
        return cls(url, int(dim), os.environ.get(f"{prefix}_MODEL"), os.environ.get(f"{prefix}_API_KEY"))

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        if any(not t or not t.strip() for t in texts):
            raise ValueError("cannot embed empty text")
        payload: dict[str, Any] = {"input": list(texts)}
        if self.model:
            payload["model"] = self.model
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        try:
            resp = self._client.post(self.url, json=payload, headers=headers)
        except httpx.HTTPError as exc:
            raise BackendError(f"embedding request failed: {exc}") from exc
        if resp.status_code == 429 or resp.status_code >= 500:
            raise BackendError(f"embedding endpoint returned {resp.status_code}")
        if resp.status_code >= 400:
            raise BackendError(f"embedding endpoint returned {resp.status_code}", retryable=False)
        body = resp.json()
        vectors = body.get("vectors")
        if vectors is None and "data" in body:  # OpenAI-style payloads
            vectors = [d["embedding"] for d in body["data"]]
        arr = np.asarray(vectors, dtype=np.float64)
        if arr.shape != (len(texts), self.dimension):
            raise BackendError(f"embedding endpoint returned shape {arr.shape}", retryable=False)
        return np.stack([normalize(v) for v in arr])


_DEFAULT = HashingEmbedder()


def embed_text(text: str, embedder: Embedder | None = None) -> np.ndarray:
    return (embedder or _DEFAULT).embed([text])[0]


# --------------------------------------------------------------------------- retrieval


@dataclass
class VectorStore:
    """In-memory (entry_id, unit vector, tag) table with exact cosine search."""

    dimension: int
    _ids: list[str] = field(default_factory=list)
    _tags: list[str] = field(default_factory=list)
    _rows: list[np.ndarray] = field(default_factory=list)
    _matrix: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self._ids)

    @property
    def ids(self) -> list[str]:
        return list(self._ids)

    def add(self, entry_id: str, vector: np.ndarray, tag: str = "") -> None:
        vector = np.asarray(vector, dtype=np.float64)
        if vector.shape != (self.dimension,):
            raise StoreError(f"vector for {entry_id!r} has shape {vector.shape}, store dimension is {self.dimension}")
        if entry_id in self._ids:
            raise StoreError(f"duplicate entry id {entry_id!r}")
        self._ids.append(entry_id)
        self._tags.append(tag)
        self._rows.append(normalize(vector))
        self._matrix = None

    def vector(self, entry_id: str) -> np.ndarray:
        return self._rows[self._ids.index(entry_id)]

    def tag(self, entry_id: str) -> str:
        return self._tags[self._ids.index(entry_id)]

    def matrix(self) -> np.ndarray:
        if self._matrix is None:
            self._matrix = np.stack(self._rows) if self._rows else np.zeros((0, self.dimension))
        return self._matrix

    def top_k(self, query: np.ndarray, k: int, tag: str | None = None) -> list[tuple[str, float]]:
        return top_k_similar(query, self, k, tag=tag)


def top_k_similar(query: np.ndarray, store: VectorStore, k: int, tag: str | None = None) -> list[tuple[str, float]]:
    """Best ``k`` entries by cosine similarity, highest first; equal scores go to the smaller entry id."""
    if k < 1:
        raise ValueError("k must be >= 1")
    query = np.asarray(query, dtype=np.float64)
    if query.shape != (store.dimension,):
        raise StoreError(f"query has shape {query.shape}, store dimension is {store.dimension}")
    if not len(store):
        return []
    scores = store.matrix() @ query
    rows = [
        (-float(s), eid)
        for s, eid, t in zip(scores, store._ids, store._tags)
        if tag is None or t == tag
    ]
    rows.sort()
    return [(eid, -neg) for neg, eid in rows[:k]]


# --------------------------------------------------------------------------- clustering


@dataclass
class ClusterModel:
    """Centroids plus the running per-cluster sums that define them.

    A centroid is always ``normalize(sum / count)``, the normalized mean of the
    vectors assigned to it, so online updates and batch recomputation agree.
    """

    centroids: np.ndarray
    sums: np.ndarray
    counts: np.ndarray
    assignments: dict[str, int] = field(default_factory=dict)
    inertia_history: list[float] = field(default_factory=list)

    @property
    def n(self) -> int:
        return int(self.centroids.shape[0])

    def assign(self, vector: np.ndarray) -> int:
        d = np.sum((self.centroids - np.asarray(vector)[None, :]) ** 2, axis=1)
        return int(np.argmin(d))

    def online_update(self, cluster: int, vector: np.ndarray, entry_id: str | None = None) -> None:
        if not 0 <= cluster < self.n:
            raise IndexError(f"cluster {cluster} out of range")
        self.sums[cluster] += np.asarray(vector, dtype=np.float64)
        self.counts[cluster] += 1
        self.centroids[cluster] = normalize(self.sums[cluster] / self.counts[cluster])
        if entry_id is not None:
            self.assignments[entry_id] = cluster

    def members(self, cluster: int) -> list[str]:
        return [eid for eid, c in self.assignments.items() if c == cluster]

    def to_dict(self) -> dict[str, Any]:
        return {
            "centroids": self.centroids.tolist(),
            "sums": self.sums.tolist(),
            "counts": [int(c) for c in self.counts],
            "assignments": dict(sorted(self.assignments.items())),
            "inertia_history": list(self.inertia_history),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ClusterModel":
        return cls(
            centroids=np.asarray(d["centroids"], dtype=np.float64),
            sums=np.asarray(d["sums"], dtype=np.float64),
            counts=np.asarray(d["counts"], dtype=np.int64),
            assignments={str(k): int(v) for k, v in d["assignments"].items()},
            inertia_history=[float(x) for x in d.get("inertia_history", [])],
        )


def _sq_dist(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    return np.maximum(((x[:, None, :] - c[None, :, :]) ** 2).sum(axis=2), 0.0)


def _kmeanspp(x: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    chosen = [int(rng.integers(len(x)))]
    closest = _sq_dist(x, x[chosen])[:, 0]
    for _ in range(1, n):
        total = closest.sum()
        if total <= 0:
            remaining = [i for i in range(len(x)) if i not in chosen]
            idx = int(remaining[rng.integers(len(remaining))])
        else:
            idx = int(rng.choice(len(x), p=closest / total))
        chosen.append(idx)
        closest = np.minimum(closest, _sq_dist(x, x[idx : idx + 1])[:, 0])
    return x[chosen].copy()


def kmeans_cluster(vectors: Mapping[str, np.ndarray], n: int, seed: int = 0, max_iter: int = 100) -> ClusterModel:
    """Seeded Lloyd iterations with kmeans++ initialisation over unit vectors.

    Centroids are kept on the unit sphere (normalized means). Stops when
    assignments stop changing or after ``max_iter`` rounds.
    """
    ids = list(vectors)
    if n < 1:
        raise ValueError("n must be >= 1")
    if len(ids) < n:
        raise ValueError(f"need at least n={n} vectors, got {len(ids)}")
    x = np.stack([normalize(vectors[i]) for i in ids])
    rng = np.random.default_rng(seed)
    centroids = _kmeanspp(x, n, rng)
    labels = np.full(len(ids), -1)
    history: list[float] = []
    for it in range(max_iter):
        d = _sq_dist(x, centroids)
        new = np.argmin(d, axis=1)
        counts = np.bincount(new, minlength=n)
        for c in np.flatnonzero(counts == 0):
            # reseed from the worst-fitting point of a cluster that can spare one
            cost = d[np.arange(len(x)), new]
            donors = np.isin(new, np.flatnonzero(counts > 1))
            j = int(np.argmax(np.where(donors, cost, -1.0)))
            counts[new[j]] -= 1
            new[j] = c
            counts[c] = 1
        sums = np.zeros_like(centroids)
        np.add.at(sums, new, x)
        for c in range(n):
            norm = np.linalg.norm(sums[c])
            if norm > 0:
                centroids[c] = sums[c] / norm
        history.append(float(((x - centroids[new]) ** 2).sum()))
        if np.array_equal(new, labels):
            break
        labels = new
    logger.debug("kmeans converged after %d iterations, inertia %.6f", it + 1, history[-1])
    counts = np.bincount(labels, minlength=n).astype(np.int64)
    sums = np.zeros_like(centroids)
    np.add.at(sums, labels, x)
    return ClusterModel(
        centroids=centroids,
        sums=sums,
        counts=counts,
        assignments={eid: int(c) for eid, c in zip(ids, labels)},
        inertia_history=history,
    )


def purity(labels: Iterable[int], truth: Iterable[int]) -> float:
    """Fraction of points whose cluster's majority true label matches their own."""
    labels, truth = list(labels), list(truth)
    total = 0
    for c in set(labels):
        members = [t for l, t in zip(labels, truth) if l == c]
        total += max(members.count(t) for t in set(members))
    return total / len(labels)
