"""Embedding vectors, providers, and cosine similarity.

Code and descriptions are mapped to fixed-dimension vectors by a provider.
Two providers ship with the package:

* :class:`FallbackEmbedder` — an offline, deterministic n-gram hashing
  embedder. No model weights, no network; identical input always yields a
  bitwise-identical vector, and texts sharing token n-grams score higher
  cosine than disjoint texts. Good enough to exercise the whole pipeline.
* :class:`RemoteEmbeddingProvider` — a thin client for any HTTP service
  speaking the embedding contract below (the bundled sidecar does):

      POST {endpoint}/embed
          {"texts": [...], "modality": "code" | "description"}
      ->  {"vectors": [[...], ...], "dimension": D, "provider_id": "..."}

      GET {endpoint}/health
      ->  {"status": "ok", "provider_id": "...",
           "code_dimension": D1, "desc_dimension": D2}

Similarity is only ever computed code-to-code and description-to-description,
so the two modalities may use different dimensions.
"""

from __future__ import annotations

import enum
import math
import os
import re
from dataclasses import dataclass
from hashlib import blake2b
from typing import Protocol, Sequence

import numpy as np
import requests

from .errors import (
    DimensionMismatchError,
    EmptyInputError,
    ProviderUnavailableError,
    ValidationError,
    ZeroVectorError,
)

ENV_EMBED_ENDPOINT = "SVA_EMBED_ENDPOINT"

_TOKEN_RE = re.compile(r"[a-z0-9]+")
_NGRAM_SIZE = 3


class Modality(str, enum.Enum):
    CODE = "code"
    DESCRIPTION = "description"


@dataclass
class EmbeddingVector:
    """A fixed-dimension real vector for one modality.

    All components must be finite; the length is whatever the producing
    provider declared for the modality.
    """

    values: list[float]
    modality: Modality

    def __post_init__(self):
        self.values = [float(v) for v in self.values]
        self.modality = Modality(self.modality)
        if not self.values:
            raise ValidationError("embedding vector must not be empty")
        if not all(math.isfinite(v) for v in self.values):
            raise ValidationError("embedding vector contains NaN or Inf")

    @property
    def dimension(self) -> int:
        return len(self.values)


@dataclass
class EmbeddingProviderConfig:
    """Static description of a provider: id, optional endpoint, dimensions."""

    provider_id: str
    code_dimension: int
    desc_dimension: int
    endpoint: str | None = None

    def __post_init__(self):
        if not self.provider_id:
            raise ValidationError("provider_id must be non-empty")
        if self.code_dimension < 1 or self.desc_dimension < 1:
            raise ValidationError("embedding dimensions must be >= 1")


class EmbeddingProvider(Protocol):
    """Anything that can embed both modalities at fixed dimensions."""

    @property
    def provider_id(self) -> str: ...

    @property
    def code_dimension(self) -> int: ...

    @property
    def desc_dimension(self) -> int: ...

    def embed_code(self, code: str) -> EmbeddingVector: ...

    def embed_description(self, text: str) -> EmbeddingVector: ...


def _token_ngrams(text: str) -> list[str]:
    """Lowercase, split on non-alphanumerics, then character 3-grams.

    Tokens shorter than the n-gram size are used whole.
    """
    grams: list[str] = []
    for token in _TOKEN_RE.findall(text.lower()):
        if len(token) < _NGRAM_SIZE:
            grams.append(token)
        else:
            grams.extend(
                token[i : i + _NGRAM_SIZE]
                for i in range(len(token) - _NGRAM_SIZE + 1)
            )
    return grams


def fallback_embed(
    text: str,
    dimension: int,
    seed: int,
    modality: Modality = Modality.DESCRIPTION,
) -> EmbeddingVector:
    """Deterministic hashing embedder: signed n-gram counts, L2-normalized.

    Each n-gram is hashed (keyed by ``seed``) to a bucket and a sign; the
    signed counts are accumulated and the result normalized to unit L2 norm.
    """
    if dimension < 1:
        raise ValidationError("dimension must be >= 1")
    grams = _token_ngrams(text)
    if not grams:
        raise EmptyInputError("no tokens to embed (empty or non-alphanumeric text)")
    acc = [0.0] * dimension
    for gram in grams:
        digest = blake2b(f"{seed}|{gram}".encode("utf-8"), digest_size=8).digest()
        h = int.from_bytes(digest, "big")
        sign = 1.0 if (h & 1) == 0 else -1.0
        acc[(h >> 1) % dimension] += sign
    norm = math.sqrt(math.fsum(v * v for v in acc))
    if norm == 0.0:
        # Signed counts cancelled out entirely; pathological but possible.
        raise ZeroVectorError("hashed n-gram counts cancelled to the zero vector")
    return EmbeddingVector([v / norm for v in acc], modality)


class FallbackEmbedder:
    """Offline provider backed by :func:`fallback_embed`."""

    def __init__(self, code_dimension: int = 256, desc_dimension: int = 256, seed: int = 0):
        self._config = EmbeddingProviderConfig(
            provider_id=f"fallback-ngram{_NGRAM_SIZE}:c{code_dimension}:d{desc_dimension}:s{seed}",
            code_dimension=code_dimension,
            desc_dimension=desc_dimension,
        )
        self._seed = seed

    @property
    def config(self) -> EmbeddingProviderConfig:
        return self._config

    @property
    def provider_id(self) -> str:
        return self._config.provider_id

    @property
    def code_dimension(self) -> int:
        return self._config.code_dimension

    @property
    def desc_dimension(self) -> int:
        return self._config.desc_dimension

    def embed_code(self, code: str) -> EmbeddingVector:
        if not code.strip():
            raise EmptyInputError("cannot embed empty code")
        return fallback_embed(code, self.code_dimension, self._seed, Modality.CODE)

    def embed_description(self, text: str) -> EmbeddingVector:
        if not text.strip():
            raise EmptyInputError("cannot embed empty description")
        return fallback_embed(text, self.desc_dimension, self._seed, Modality.DESCRIPTION)


class RemoteEmbeddingProvider:
    """Client for an embedding HTTP service (see module docstring contract).

    Dimensions and provider id are learned lazily from ``GET /health``.
    A ``requests.Session``-like object may be injected for testing.
    """

    def __init__(self, endpoint: str | None = None, session=None, timeout: float = 30.0):
        endpoint = endpoint or os.environ.get(ENV_EMBED_ENDPOINT, "")
        if not endpoint:
            raise ProviderUnavailableError(
                f"no embedding endpoint configured (set {ENV_EMBED_ENDPOINT})"
            )
        self._endpoint = endpoint.rstrip("/")
        self._session = session or requests.Session()
        self._timeout = timeout
        self._config: EmbeddingProviderConfig | None = None

    def _health(self) -> EmbeddingProviderConfig:
        if self._config is None:
            try:
                resp = self._session.get(f"{self._endpoint}/health", timeout=self._timeout)
            except requests.RequestException as exc:
                raise ProviderUnavailableError(f"embedding service unreachable: {exc}") from exc
            if resp.status_code != 200:
                raise ProviderUnavailableError(
                    f"embedding service not ready (HTTP {resp.status_code})"
                )
            body = resp.json()
            self._config = EmbeddingProviderConfig(
                provider_id=str(body["provider_id"]),
                code_dimension=int(body["code_dimension"]),
                desc_dimension=int(body["desc_dimension"]),
                endpoint=self._endpoint,
            )
        return self._config

    @property
    def config(self) -> EmbeddingProviderConfig:
        return self._health()

    @property
    def provider_id(self) -> str:
        return self._health().provider_id

    @property
    def code_dimension(self) -> int:
        return self._health().code_dimension

    @property
    def desc_dimension(self) -> int:
        return self._health().desc_dimension

    def embed_batch(self, texts: Sequence[str], modality: Modality) -> list[EmbeddingVector]:
        if any(not t.strip() for t in texts):
            raise EmptyInputError("cannot embed empty text")
        expected = (
            self.code_dimension if modality is Modality.CODE else self.desc_dimension
        )
        try:
            resp = self._session.post(
                f"{self._endpoint}/embed",
                json={"texts": list(texts), "modality": modality.value},
                timeout=self._timeout,
            )
        except requests.RequestException as exc:
            raise ProviderUnavailableError(f"embedding service unreachable: {exc}") from exc
        if resp.status_code != 200:
            raise ProviderUnavailableError(
                f"embedding request failed (HTTP {resp.status_code}): {resp.text[:200]}"
            )
        body = resp.json()
        vectors = body.get("vectors", [])
        if len(vectors) != len(texts):
            raise DimensionMismatchError(
                f"service returned {len(vectors)} vectors for {len(texts)} texts"
            )
        out = []
        for vec in vectors:
            if len(vec) != expected:
                raise DimensionMismatchError(
                    f"service returned length {len(vec)}, declared {expected}"
                )
            out.append(EmbeddingVector(vec, modality))
        return out

    def embed_code(self, code: str) -> EmbeddingVector:
        return self.embed_batch([code], Modality.CODE)[0]

    def embed_description(self, text: str) -> EmbeddingVector:
        return self.embed_batch([text], Modality.DESCRIPTION)[0]


def cosine_similarity(
    a: EmbeddingVector | Sequence[float],
    b: EmbeddingVector | Sequence[float],
) -> float:
    """Cosine of the angle between two vectors, clamped to [-1, 1].

    Accepts :class:`EmbeddingVector` or any float sequence. Modalities are
    not checked here; call sites keep code and description comparisons apart.
    """
    av = a.values if isinstance(a, EmbeddingVector) else a
    bv = b.values if isinstance(b, EmbeddingVector) else b
    if len(av) != len(bv):
        raise DimensionMismatchError(f"vector lengths differ: {len(av)} vs {len(bv)}")
    x = np.asarray(av, dtype=np.float64)
    y = np.asarray(bv, dtype=np.float64)
    nx = float(np.linalg.norm(x))
    ny = float(np.linalg.norm(y))
    if nx == 0.0 or ny == 0.0:
        raise ZeroVectorError("cosine similarity is undefined for zero vectors")
    value = float(np.dot(x, y)) / (nx * ny)
    return max(-1.0, min(1.0, value))
