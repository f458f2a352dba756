"""Weighted-fusion retrieval over the knowledge store.

Every entry is scored against the target by a weighted sum of code and
description cosine similarities, then the top-k entries are returned. Two
scoring routes exist on purpose: ``retrieve_top_k`` is the vectorized
production path, ``brute_force_rank`` is a straight-loop reference used to
cross-check it. Do not merge them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .embedding import EmbeddingVector
from .errors import (
    DimensionMismatchError,
    EmptyStoreError,
    OutOfRangeError,
    StoreNotEmbeddedError,
    ValidationError,
    ZeroVectorError,
)
from .knowledge_base import KnowledgeStore
from .models import KnowledgeEntry

DEFAULT_PHI = 0.6
DEFAULT_K = 5


@dataclass(frozen=True)
class RetrievalConfig:
    """phi weights code similarity; 1-phi weights description similarity."""

    phi: float = DEFAULT_PHI
    k: int = DEFAULT_K
    exclude_ids: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self):
        if not (isinstance(self.phi, (int, float)) and math.isfinite(self.phi)):
            raise OutOfRangeError(f"phi must be a finite real, got {self.phi!r}")
        if not 0.0 <= self.phi <= 1.0:
            raise OutOfRangeError(f"phi must be in [0, 1], got {self.phi}")
        if not isinstance(self.k, int) or isinstance(self.k, bool) or self.k < 0:
            raise ValidationError(f"k must be a non-negative integer, got {self.k!r}")
        object.__setattr__(self, "exclude_ids", frozenset(self.exclude_ids))


@dataclass(frozen=True)
class RetrievalTarget:
    """Embedded query. code_embedding is None for description-only targets."""

    desc_embedding: EmbeddingVector
    code_embedding: EmbeddingVector | None = None


@dataclass(frozen=True)
class ScoredEntry:
    entry: KnowledgeEntry
    code_sim: float
    desc_sim: float
    combined: float

    @property
    def cve_id(self) -> str:
        return self.entry.record.cve_id


def combined_similarity(code_sim: float, desc_sim: float, phi: float) -> float:
    """phi * code_sim + (1 - phi) * desc_sim."""
    for name, value in (("code_sim", code_sim), ("desc_sim", desc_sim)):
        if not math.isfinite(value) or not -1.0 <= value <= 1.0:
            raise OutOfRangeError(f"{name} must be in [-1, 1], got {value!r}")
    if not math.isfinite(phi) or not 0.0 <= phi <= 1.0:
        raise OutOfRangeError(f"phi must be in [0, 1], got {phi!r}")
    return phi * code_sim + (1.0 - phi) * desc_sim


def _candidates(store: KnowledgeStore, config: RetrievalConfig) -> list[KnowledgeEntry]:
    out = []
    for entry in store.entries:
        if entry.record.cve_id in config.exclude_ids:
            continue
        if entry.desc_embedding is None:
            raise StoreNotEmbeddedError(
                f"entry {entry.record.cve_id} has no description embedding; "
                "run the embed step before retrieval"
            )
        out.append(entry)
    return out


def _check_dims(target: RetrievalTarget, candidates: list[KnowledgeEntry]) -> None:
    for entry in candidates:
        if entry.desc_embedding.dimension != target.desc_embedding.dimension:
            raise DimensionMismatchError(
                f"description dimension {entry.desc_embedding.dimension} of "
                f"{entry.record.cve_id} != target {target.desc_embedding.dimension}"
            )
        if (
            target.code_embedding is not None
            and entry.code_embedding is not None
            and entry.code_embedding.dimension != target.code_embedding.dimension
        ):
            raise DimensionMismatchError(
                f"code dimension {entry.code_embedding.dimension} of "
                f"{entry.record.cve_id} != target {target.code_embedding.dimension}"
            )


def retrieve_top_k(
    target: RetrievalTarget, store: KnowledgeStore, config: RetrievalConfig
) -> list[ScoredEntry]:
    """Top-k entries by combined similarity, ties broken by cve_id ascending.

    Description-only entries (or targets) contribute code_sim = 0 rather
    than erroring, so they stay retrievable on textual merit.
    """
    if config.k == 0:
        return []
    candidates = _candidates(store, config)
    if not candidates:
        raise EmptyStoreError("no knowledge entries left to retrieve from after exclusions")
    _check_dims(target, candidates)

    desc_matrix = np.array([e.desc_embedding.values for e in candidates], dtype=np.float64)
    desc_target = np.asarray(target.desc_embedding.values, dtype=np.float64)
    desc_sims = _cosine_rows(desc_matrix, desc_target)

    code_sims = np.zeros(len(candidates), dtype=np.float64)
    if target.code_embedding is not None:
        code_rows = [i for i, e in enumerate(candidates) if e.code_embedding is not None]
        if code_rows:
            code_matrix = np.array(
                [candidates[i].code_embedding.values for i in code_rows], dtype=np.float64
            )
            code_target = np.asarray(target.code_embedding.values, dtype=np.float64)
            code_sims[code_rows] = _cosine_rows(code_matrix, code_target)

    combined = config.phi * code_sims + (1.0 - config.phi) * desc_sims
    order = sorted(
        range(len(candidates)),
        key=lambda i: (-combined[i], candidates[i].record.cve_id),
    )
    return [
        ScoredEntry(
            entry=candidates[i],
            code_sim=float(code_sims[i]),
            desc_sim=float(desc_sims[i]),
            combined=float(combined[i]),
        )
        for i in order[: config.k]
    ]


def _cosine_rows(matrix: np.ndarray, target: np.ndarray) -> np.ndarray:
    target_norm = float(np.linalg.norm(target))
    if target_norm == 0.0:
        raise ZeroVectorError("target embedding has zero norm")
    row_norms = np.linalg.norm(matrix, axis=1)
    zero_rows = np.flatnonzero(row_norms == 0.0)
    if zero_rows.size:
        raise ZeroVectorError(f"stored embedding at row {int(zero_rows[0])} has zero norm")
    sims = (matrix @ target) / (row_norms * target_norm)
    return np.clip(sims, -1.0, 1.0)


def brute_force_rank(
    target: RetrievalTarget, store: KnowledgeStore, config: RetrievalConfig
) -> list[ScoredEntry]:
    """Reference ranking of the whole store via plain loops and math.fsum.

    Kept free of numpy so it fails independently of retrieve_top_k; tests
    assert the production path equals a prefix of this ranking.
    """
    candidates = _candidates(store, config)
    if not candidates:
        if config.k == 0:
            return []
        raise EmptyStoreError("no knowledge entries left to retrieve from after exclusions")
    _check_dims(target, candidates)

    scored = []
    for entry in candidates:
        desc_sim = _pure_cosine(target.desc_embedding.values, entry.desc_embedding.values)
        if target.code_embedding is not None and entry.code_embedding is not None:
            code_sim = _pure_cosine(target.code_embedding.values, entry.code_embedding.values)
        else:
            code_sim = 0.0
        combined = config.phi * code_sim + (1.0 - config.phi) * desc_sim
        scored.append(
            ScoredEntry(entry=entry, code_sim=code_sim, desc_sim=desc_sim, combined=combined)
        )
    scored.sort(key=lambda s: (-s.combined, s.cve_id))
    return scored


def _pure_cosine(a, b) -> float:
    if len(a) != len(b):
        raise DimensionMismatchError(f"cosine on dimensions {len(a)} and {len(b)}")
    dot = math.fsum(x * y for x, y in zip(a, b))
    norm_a = math.sqrt(math.fsum(x * x for x in a))
    norm_b = math.sqrt(math.fsum(y * y for y in b))
    if norm_a == 0.0 or norm_b == 0.0:
        raise ZeroVectorError("cosine similarity is undefined for zero vectors")
    return max(-1.0, min(1.0, dot / (norm_a * norm_b)))
