"""Embedding-based classification and label-space-conditioned inference.

Class names are represented by externally computed text embeddings; an
image-side embedding is classified by temperature-scaled softmax over its
dot products with the class embeddings plus an all-zero "no object" slot.
Per-dataset query residuals condition a (pluggable) decoder, which is run
once per selected training label space at test time.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

import numpy as np
from scipy.special import softmax

from .maskcore import LabelSpace, SoftMask

__all__ = [
    "DEFAULT_TAU",
    "TIE_TOLERANCE",
    "normalize_embedding",
    "ClassEmbeddingTable",
    "QuerySet",
    "Prediction",
    "DecoderInterface",
    "StubDecoder",
    "class_probabilities",
    "compose_queries",
    "select_label_spaces",
    "multi_pass_inference",
]

DEFAULT_TAU = 0.01
# two similarities count as tied when they differ by less than this
TIE_TOLERANCE = 1e-6


def normalize_embedding(v: np.ndarray, *, warn: bool = False) -> np.ndarray:
    """L2-normalize an embedding vector. Zero vectors are rejected."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"embedding must be 1-D, got shape {v.shape}")
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        raise ValueError("cannot normalize a zero embedding vector")
    if warn and abs(norm - 1.0) > 1e-6:
        warnings.warn(f"embedding had norm {norm:.6g}; normalizing", stacklevel=2)
    return v / norm


@dataclass(frozen=True)
class ClassEmbeddingTable:
    """Normalized text embeddings for every category of one label space.

    The no-object slot is the all-zero vector and is appended implicitly as
    the last logit during classification.
    """

    labelspace: LabelSpace
    entries: tuple[np.ndarray, ...]  # one per category, in label-space order

    def __post_init__(self):
        if len(self.entries) != self.labelspace.size:
            raise ValueError(
                f"expected {self.labelspace.size} embeddings, got {len(self.entries)}"
            )
        dims = {e.shape[0] for e in self.entries}
        if len(dims) != 1:
            raise ValueError(f"inconsistent embedding dimensions: {sorted(dims)}")
        normed = tuple(normalize_embedding(e, warn=True) for e in self.entries)
        for e in normed:
            e.setflags(write=False)
        object.__setattr__(self, "entries", normed)

    @property
    def dim(self) -> int:
        return self.entries[0].shape[0]

    @property
    def size(self) -> int:
        return len(self.entries)

    def matrix(self) -> np.ndarray:
        return np.stack(self.entries)


@dataclass(frozen=True)
class QuerySet:
    """N object queries plus K per-dataset residual query embeddings."""

    object_queries: np.ndarray  # (N, d)
    lsqe_table: np.ndarray  # (K, d)

    def __post_init__(self):
        oq = np.asarray(self.object_queries, dtype=np.float64)
        lq = np.asarray(self.lsqe_table, dtype=np.float64)
        if oq.ndim != 2 or oq.shape[0] < 1:
            raise ValueError("object_queries must be a non-empty (N, d) array")
        if lq.ndim != 2 or lq.shape[0] < 1:
            raise ValueError("lsqe_table must be a non-empty (K, d) array")
        if oq.shape[1] != lq.shape[1]:
            raise ValueError("object queries and residuals must share dimension d")
        oq.setflags(write=False)
        lq.setflags(write=False)
        object.__setattr__(self, "object_queries", oq)
        object.__setattr__(self, "lsqe_table", lq)

    @property
    def n_queries(self) -> int:
        return self.object_queries.shape[0]

    @property
    def n_labelspaces(self) -> int:
        return self.lsqe_table.shape[0]


@dataclass
class Prediction:
    """One decoder output: a soft mask plus its image-side embedding."""

    soft_mask: SoftMask
    image_embedding: np.ndarray
    source_labelspace: int
    class_probs: Optional[np.ndarray] = None
    score: Optional[float] = None

    def __post_init__(self):
        if self.class_probs is not None:
            p = np.asarray(self.class_probs, dtype=np.float64)
            if abs(p.sum() - 1.0) > 1e-6:
                raise ValueError(f"class_probs sums to {p.sum()}, expected 1")
            self.class_probs = p


# (composed queries (N, d), opaque image handle) -> N predictions
DecoderInterface = Callable[[np.ndarray, Any], list]


class StubDecoder:
    """Deterministic stand-in for the neural decoder, for tests and simulation.

    Masks and embeddings are derived from a seeded hash of the composed
    query values, so two runs with identical inputs are bit-identical.
    """

    def __init__(self, n_queries: int, height: int = 16, width: int = 16, seed: int = 0):
        self.n_queries = n_queries
        self.height = height
        self.width = width
        self.seed = seed

    def __call__(self, composed_queries: np.ndarray, image: Any) -> list[Prediction]:
        q = np.asarray(composed_queries, dtype=np.float64)
        if q.shape[0] != self.n_queries:
            raise ValueError(f"expected {self.n_queries} queries, got {q.shape[0]}")
        preds = []
        for i in range(self.n_queries):
            digest = hash((self.seed, round(float(q[i].sum()), 9), i)) & 0xFFFFFFFF
            rng = np.random.default_rng(digest)
            vals = rng.random((self.height, self.width))
            emb = normalize_embedding(rng.standard_normal(q.shape[1]))
            preds.append(
                Prediction(
                    soft_mask=SoftMask(self.height, self.width, vals),
                    image_embedding=emb,
                    source_labelspace=-1,
                )
            )
        return preds


def class_probabilities(
    e_img: np.ndarray, table: ClassEmbeddingTable, tau: float = DEFAULT_TAU
) -> np.ndarray:
    """Softmax over dot products with the class embeddings plus the zero slot.

    Returns a distribution of length C + 1; the last slot is no-object.
    """
    if tau <= 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    e = np.asarray(e_img, dtype=np.float64)
    if e.shape != (table.dim,):
        raise ValueError(f"embedding dim {e.shape} does not match table dim {table.dim}")
    dots = table.matrix() @ e
    logits = np.concatenate([dots, [0.0]]) / tau  # zero null vector -> zero logit
    return softmax(logits)


def compose_queries(queries: QuerySet, k: int) -> np.ndarray:
    """Add label space k's residual embedding to every object query (1-based k)."""
    if not 1 <= k <= queries.n_labelspaces:
        raise ValueError(f"label space index {k} out of range 1..{queries.n_labelspaces}")
    return queries.object_queries + queries.lsqe_table[k - 1]


def select_label_spaces(
    test_table: ClassEmbeddingTable,
    train_tables: list[ClassEmbeddingTable],
    tie_tolerance: float = TIE_TOLERANCE,
) -> list[int]:
    """Select the training label spaces needed to serve a test label space.

    For each test class, the training class with the highest dot-product
    similarity contributes its label space index; indices whose best class
    ties within `tie_tolerance` (e.g. the same category name appearing in
    two datasets) are all included. Returns sorted indices.
    """
    if not train_tables:
        raise ValueError("at least one training table is required")
    if test_table.size < 1:
        raise ValueError("test label space is empty")
    selected: set[int] = set()
    for e in test_table.entries:
        best_per_space: dict[int, float] = {}
        for table in train_tables:
            sims = table.matrix() @ e
            best_per_space[int(table.labelspace.index)] = float(sims.max())
        top = max(best_per_space.values())
        for k, sim in best_per_space.items():
            if top - sim < tie_tolerance:
                selected.add(k)
    return sorted(selected)


def multi_pass_inference(
    decoder: DecoderInterface,
    queries: QuerySet,
    image: Any,
    test_table: ClassEmbeddingTable,
    train_tables: list[ClassEmbeddingTable],
    tau: float = DEFAULT_TAU,
) -> list[Prediction]:
    """Run the decoder once per selected label space and classify the outputs.

    Returns N * |D| predictions in ascending label-space order, each tagged
    with its source index and carrying a distribution over the test classes
    plus the no-object slot.
    """
    selected = select_label_spaces(test_table, train_tables)
    all_preds: list[Prediction] = []
    n = queries.n_queries
    for k in selected:
        preds = decoder(compose_queries(queries, k), image)
        if len(preds) != n:
            raise ValueError(
                f"decoder contract violation: expected {n} predictions, got {len(preds)}"
            )
        for p in preds:
            probs = class_probabilities(p.image_embedding, test_table, tau)
            all_preds.append(
                Prediction(
                    soft_mask=p.soft_mask,
                    image_embedding=p.image_embedding,
                    source_labelspace=k,
                    class_probs=probs,
                    score=float(probs[:-1].max()),
                )
            )
    return all_preds
