"""Example store with cosine-similarity retrieval.

Stores (description, candidate-config) pairs with their embeddings and
retrieves the top-N most similar to a query description by exhaustive scan;
stores at this scale are tiny, so no approximate index is needed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

STORE_FORMAT_VERSION = 1


class StoreFingerprintError(ValueError):
    """Query embedder does not match the store's embedder."""


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity in [-1, 1]; rejects zero-norm inputs."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine similarity undefined for zero-norm vectors")
    return float(np.dot(a, b) / (na * nb))


@dataclass
class ExamplePair:
    id: str
    description: str
    config: str
    embedding: np.ndarray

    def __post_init__(self):
        self.embedding = np.asarray(self.embedding, dtype=float)
        if self.embedding.ndim != 1 or np.linalg.norm(self.embedding) == 0.0:
            raise ValueError(f"example {self.id!r} needs a non-zero 1-d embedding")


def transport_fingerprint(transport) -> str:
    """Identifier of the embedder a transport provides."""
    model_id = getattr(transport, "embed_model_id", "") or "hashed-bow"
    return model_id


@dataclass
class ExampleStore:
    fingerprint: str
    pairs: list[ExamplePair] = field(default_factory=list)

    @property
    def dimension(self) -> int | None:
        return None if not self.pairs else int(self.pairs[0].embedding.shape[0])

    def check_embedding(self, embedding: np.ndarray) -> None:
        if self.dimension is not None and embedding.shape[0] != self.dimension:
            raise StoreFingerprintError(
                f"embedding dimension {embedding.shape[0]} does not match "
                f"store dimension {self.dimension}"
            )

    def check_transport(self, transport) -> None:
        fingerprint = transport_fingerprint(transport)
        if fingerprint != self.fingerprint:
            raise StoreFingerprintError(
                f"store was embedded with {self.fingerprint!r}, "
                f"query transport provides {fingerprint!r}"
            )


def new_store(transport) -> ExampleStore:
    return ExampleStore(fingerprint=transport_fingerprint(transport))


def add_example(
    store: ExampleStore, description: str, config: str, transport, pair_id: str | None = None
) -> str:
    """Embed the description and append the pair; returns the pair id."""
    store.check_transport(transport)
    vector = transport.embed([description])[0]
    store.check_embedding(vector)
    if pair_id is None:
        pair_id = f"ex-{len(store.pairs) + 1}"
    if any(p.id == pair_id for p in store.pairs):
        raise ValueError(f"duplicate example id {pair_id!r}")
    store.pairs.append(
        ExamplePair(id=pair_id, description=description, config=config, embedding=vector)
    )
    return pair_id


def retrieve(
    store: ExampleStore,
    query: str,
    n: int,
    transport,
    exclude_ids: set[str] | None = None,
) -> list[ExamplePair]:
    """Top-n pairs by cosine similarity, descending; ties keep insertion order.

    Returns fewer than n pairs when the store is smaller; an empty store
    yields an empty result.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    candidates = [
        p for p in store.pairs if exclude_ids is None or p.id not in exclude_ids
    ]
    if not candidates:
        return []
    store.check_transport(transport)
    query_vec = transport.embed([query])[0]
    store.check_embedding(query_vec)
    sims = np.array([cosine(query_vec, p.embedding) for p in candidates])
    order = np.argsort(-sims, kind="stable")
    return [candidates[i] for i in order[:n]]


def save_store(store: ExampleStore, path: str | Path) -> None:
    doc = {
        "format_version": STORE_FORMAT_VERSION,
        "fingerprint": store.fingerprint,
        "dimension": store.dimension,
        "pairs": [
            {
                "id": p.id,
                "description": p.description,
                "config": p.config,
                "embedding": p.embedding.tolist(),
            }
            for p in store.pairs
        ],
    }
    Path(path).write_text(json.dumps(doc))


def load_store(path: str | Path) -> ExampleStore:
    doc = json.loads(Path(path).read_text())
    if doc.get("format_version") != STORE_FORMAT_VERSION:
        raise ValueError(f"unsupported store format {doc.get('format_version')!r}")
    if "fingerprint" not in doc:
        raise ValueError("store file missing embedder fingerprint")
    store = ExampleStore(fingerprint=doc["fingerprint"])
    for item in doc["pairs"]:
        pair = ExamplePair(
            id=item["id"],
            description=item["description"],
            config=item["config"],
            embedding=np.asarray(item["embedding"], dtype=float),
        )
        store.check_embedding(pair.embedding)
        store.pairs.append(pair)
    expected = doc.get("dimension")
    if expected is not None and store.dimension not in (None, expected):
        raise ValueError("store dimension header disagrees with pair embeddings")
    return store
