"""Encoder backends.

The default backend wraps a pretrained sentence encoder (loaded through
sentence-transformers) in deterministic inference mode. A self-contained
hashing backend ("hash:<dim>[:<seed>]") serves tests and deployments where no
model download is possible; it satisfies the same wire contract.
"""

from __future__ import annotations

import hashlib
import re
from typing import Protocol, Sequence

import numpy as np

DEFAULT_MODEL = "sentence-transformers/all-MiniLM-L6-v2"

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


class Encoder(Protocol):
    name: str
    dimension: int

    def encode(self, texts: Sequence[str]) -> np.ndarray: ...


class HashEncoder:
    """Deterministic, dependency-free encoder: signed token hashing."""

    def __init__(self, dimension: int = 384, seed: int = 0):
        if dimension < 8:
            raise ValueError("dimension must be at least 8")
        self.dimension = dimension
        self.seed = seed
        self.name = f"hash:{dimension}:{seed}"
        self._key = seed.to_bytes(8, "little", signed=True)

    def _one(self, text: str) -> np.ndarray:
        acc = np.zeros(self.dimension, dtype=np.float64)
        for token in _TOKEN_RE.findall(text.lower()):
            digest = hashlib.blake2b(token.encode("utf-8"), key=self._key, digest_size=16).digest()
            value = int.from_bytes(digest, "big")
            acc[value % self.dimension] += 1.0 if (value >> 64) & 1 else -1.0
        norm = float(np.linalg.norm(acc))
        if norm == 0.0:
            acc[0] = 1.0
            return acc
        return acc / norm

    def encode(self, texts: Sequence[str]) -> np.ndarray:
        if not texts:
            return np.zeros((0, self.dimension))
        return np.stack([self._one(t) for t in texts])


class SentenceTransformerEncoder:
    """Pretrained sentence encoder in deterministic (no-grad, eval) mode."""

    def __init__(self, model_id: str = DEFAULT_MODEL):
        import torch
        from sentence_transformers import SentenceTransformer

        torch.set_grad_enabled(False)
        self._model = SentenceTransformer(model_id, device="cpu")
        self._model.eval()
        self.name = model_id
        self.dimension = int(self._model.get_sentence_embedding_dimension())

    def encode(self, texts: Sequence[str]) -> np.ndarray:
        vectors = self._model.encode(
            list(texts),
            convert_to_numpy=True,
            normalize_embeddings=True,
            show_progress_bar=False,
        )
        return np.asarray(vectors, dtype=np.float64)


def make_encoder(model_id: str) -> Encoder:
    if model_id.startswith("hash:"):
        parts = model_id.split(":")
        dimension = int(parts[1]) if len(parts) > 1 and parts[1] else 384
        seed = int(parts[2]) if len(parts) > 2 and parts[2] else 0
        return HashEncoder(dimension=dimension, seed=seed)
    return SentenceTransformerEncoder(model_id)
