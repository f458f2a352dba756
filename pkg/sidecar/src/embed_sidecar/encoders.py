"""Encoders: a deterministic hashing fallback and mean-pooled transformers.

Both produce L2-normalized vectors. ``encode`` returns the vectors plus the
indices of inputs that were truncated to the encoder's max sequence length.
"""

from __future__ import annotations

import hashlib
import logging
import re
import threading

import numpy as np

logger = logging.getLogger(__name__)

_TOKEN_RE = re.compile(r"[A-Za-z0-9_]+")

HASH_PREFIX = "hash:"
HASH_MAX_TOKENS = 512
# three signed buckets per token spread mass enough that short inputs
# do not collapse onto a single axis
_PROJECTIONS = 3


class EncoderError(RuntimeError):
    """An encoder could not be loaded or could not embed the input."""


class EmptyTextError(EncoderError):
    """Input text contained no tokens to embed."""


class HashEncoder:
    """Deterministic token-hashing encoder; mean-pools per-token vectors.

    Each token maps to a few signed buckets via a keyed blake2b hash; token
    vectors are averaged and the result L2-normalized. No weights, no
    network, bitwise-stable across processes.
    """

    def __init__(self, spec: str):
        if not spec.startswith(HASH_PREFIX):
            raise EncoderError(f"not a hash encoder spec: {spec!r}")
        try:
            dimension = int(spec[len(HASH_PREFIX):])
        except ValueError:
            raise EncoderError(f"bad hash encoder spec {spec!r}; expected hash:<dim>") from None
        if dimension < 1:
            raise EncoderError(f"hash encoder dimension must be >= 1, got {dimension}")
        self.name = spec
        self.dimension = dimension
        self.max_tokens = HASH_MAX_TOKENS
        self._token_cache: dict[str, np.ndarray] = {}

    def _token_vector(self, token: str) -> np.ndarray:
        cached = self._token_cache.get(token)
        if cached is not None:
            return cached
        vec = np.zeros(self.dimension, dtype=np.float64)
        for i in range(_PROJECTIONS):
            digest = hashlib.blake2b(
                f"{self.name}|{i}|{token}".encode("utf-8"), digest_size=8
            ).digest()
            h = int.from_bytes(digest, "big")
            sign = 1.0 if (h & 1) == 0 else -1.0
            vec[(h >> 1) % self.dimension] += sign
        if len(self._token_cache) < 65536:
            self._token_cache[token] = vec
        return vec

    def encode(self, texts: list[str]) -> tuple[list[list[float]], list[int]]:
        vectors: list[list[float]] = []
        truncated: list[int] = []
        for i, text in enumerate(texts):
            tokens = _TOKEN_RE.findall(text.lower())
            if not tokens:
                raise EmptyTextError(f"texts[{i}] has no tokens to embed")
            if len(tokens) > self.max_tokens:
                tokens = tokens[: self.max_tokens]
                truncated.append(i)
            pooled = np.mean([self._token_vector(t) for t in tokens], axis=0)
            norm = float(np.linalg.norm(pooled))
            if norm == 0.0:
                # signed buckets cancelled; nudge deterministically off zero
                pooled = self._token_vector(tokens[0] + "\x00salt")
                norm = float(np.linalg.norm(pooled))
            vectors.append((pooled / norm).tolist())
        return vectors, truncated


class TransformerEncoder:
    """Mean-pooled transformer encoder over the final hidden layer.

    Loads ``transformers`` lazily so the hash-only configuration needs no
    torch install. Inference runs under a lock: the service stays safe for
    concurrent requests while the model executes one batch at a time.
    """

    def __init__(self, checkpoint: str):
        try:
            import torch  # noqa: F401 (presence check)
            from transformers import AutoModel, AutoTokenizer
        except ImportError as exc:
            raise EncoderError(
                f"checkpoint {checkpoint!r} needs the [models] extra (torch + transformers)"
            ) from exc
        try:
            self._tokenizer = AutoTokenizer.from_pretrained(checkpoint)
            self._model = AutoModel.from_pretrained(checkpoint)
        except Exception as exc:  # transformers raises many concrete types
            raise EncoderError(f"could not load checkpoint {checkpoint!r}: {exc}") from exc
        self._model.eval()
        self._lock = threading.Lock()
        self.name = checkpoint
        self.dimension = int(self._model.config.hidden_size)
        self.max_tokens = int(self._tokenizer.model_max_length)

    def encode(self, texts: list[str]) -> tuple[list[list[float]], list[int]]:
        import torch

        for i, text in enumerate(texts):
            if not text.strip():
                raise EmptyTextError(f"texts[{i}] has no tokens to embed")
        truncated = [
            i
            for i, text in enumerate(texts)
            if len(self._tokenizer(text, truncation=False)["input_ids"]) > self.max_tokens
        ]
        with self._lock, torch.inference_mode():
            batch = self._tokenizer(
                texts, padding=True, truncation=True, return_tensors="pt"
            )
            hidden = self._model(**batch).last_hidden_state
            mask = batch["attention_mask"].unsqueeze(-1).float()
            pooled = (hidden * mask).sum(dim=1) / mask.sum(dim=1).clamp(min=1.0)
            normed = torch.nn.functional.normalize(pooled, p=2, dim=1)
        return normed.tolist(), truncated


def load_encoder(spec: str):
    """``hash:<dim>`` builds the hashing encoder; anything else is treated
    as a transformer checkpoint name."""
    if spec.startswith(HASH_PREFIX):
        return HashEncoder(spec)
    logger.info("loading transformer checkpoint %s", spec)
    return TransformerEncoder(spec)
