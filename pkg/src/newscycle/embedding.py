"""Unit-norm document embeddings via pluggable providers.

Two providers ship with the package: a deterministic hashing embedder used as
the default (and in tests), and an HTTP client speaking the sidecar protocol
(POST /embed with {"texts": [...]}, GET /health). Matrices persist to a binary
file: 4-byte magic, u32 version, u32 dimension, u64 row count, then rows of
little-endian float32. A .ids sidecar keeps the row-aligned document ids.
"""

from __future__ import annotations

import hashlib
import logging
import struct
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .corpus import Document
from .preprocess import tokenize

logger = logging.getLogger(__name__)

MATRIX_MAGIC = b"EMBM"
MATRIX_VERSION = 1
UNIT_TOL = 1e-6
DEFAULT_DIMENSION = 384
DEFAULT_BATCH_SIZE = 64


class EmbeddingError(Exception):
    pass


class EmbeddingProvider(Protocol):
    name: str
    dimension: int
    concurrency: int

    def embed_batch(self, texts: Sequence[str]) -> np.ndarray: ...


def hash_embed(text: str, dimension: int = DEFAULT_DIMENSION, seed: int = 0) -> np.ndarray:
    """Deterministic unit vector: tokens signed-hashed into dimension buckets.

    An empty token list (or full cancellation) maps to the basis vector e_0.
    """
    if dimension < 8:
        raise ValueError(f"hash embedding dimension must be >= 8, got {dimension}")
    acc = np.zeros(dimension, dtype=np.float64)
    key = seed.to_bytes(8, "little", signed=True)
    for token in tokenize(text):
        digest = hashlib.blake2b(token.encode("utf-8"), key=key, digest_size=16).digest()
        value = int.from_bytes(digest, "little")
        bucket = value % dimension
        sign = 1.0 if (value >> 64) & 1 else -1.0
        acc[bucket] += sign
    norm = float(np.linalg.norm(acc))
    if norm == 0.0:
        basis = np.zeros(dimension, dtype=np.float64)
        basis[0] = 1.0
        return basis
    return acc / norm


class HashEmbedder:
    """Built-in provider: pure, reentrant, no external dependencies."""

    concurrency = 1

    def __init__(self, dimension: int = DEFAULT_DIMENSION, seed: int = 0):
        self.dimension = dimension
        self.seed = seed
        self.name = f"hash-{dimension}-seed{seed}"

    def embed_batch(self, texts: Sequence[str]) -> np.ndarray:
        return np.stack([hash_embed(t, self.dimension, self.seed) for t in texts]) \
            if texts else np.zeros((0, self.dimension))


class HttpEmbedder:
    """Client for the embedding sidecar wire protocol."""

    def __init__(
        self,
        endpoint: str,
        dimension: int = DEFAULT_DIMENSION,
        timeout: float = 60.0,
        max_attempts: int = 3,
        backoff: float = 0.5,
        concurrency: int = 4,
        session=None,
    ):
        import requests

        self.endpoint = endpoint.rstrip("/")
        self.dimension = dimension
        self.timeout = timeout
        self.max_attempts = max_attempts
        self.backoff = backoff
        self.concurrency = concurrency
        self.name = f"http:{self.endpoint}"
        self._session = session or requests.Session()

    def health(self) -> dict:
        response = self._session.get(f"{self.endpoint}/health", timeout=self.timeout)
        if response.status_code != 200:
            raise EmbeddingError(f"embedding service unhealthy: HTTP {response.status_code}")
        return response.json()

    def embed_batch(self, texts: Sequence[str]) -> np.ndarray:
        last_error: Exception | None = None
        for attempt in range(self.max_attempts):
            if attempt:
                time.sleep(self.backoff * (2 ** (attempt - 1)))
            try:
                response = self._session.post(
                    f"{self.endpoint}/embed", json={"texts": list(texts)}, timeout=self.timeout
                )
            except OSError as exc:
                last_error = exc
                continue
            if response.status_code in (429, 500, 502, 503, 504):
                last_error = EmbeddingError(f"transient HTTP {response.status_code}")
                continue
            if response.status_code != 200:
                raise EmbeddingError(f"embedding request failed: HTTP {response.status_code}")
            payload = response.json()
            vectors = np.asarray(payload["vectors"], dtype=np.float64)
            if vectors.shape != (len(texts), self.dimension):
                raise EmbeddingError(
                    f"embedding response shape {vectors.shape} does not match "
                    f"({len(texts)}, {self.dimension})"
                )
            return vectors
        raise EmbeddingError(f"embedding request failed after {self.max_attempts} attempts: {last_error}")


@dataclass
class EmbeddingMatrix:
    """Document-id-aligned unit vectors, one row per document."""

    ids: list[str]
    vectors: np.ndarray  # (n, dimension) float64

    def __post_init__(self) -> None:
        if self.vectors.ndim != 2 or self.vectors.shape[0] != len(self.ids):
            raise EmbeddingError(
                f"matrix rows {self.vectors.shape} misaligned with {len(self.ids)} ids"
            )

    @property
    def dimension(self) -> int:
        return int(self.vectors.shape[1])

    def row(self, doc_id: str) -> np.ndarray:
        try:
            return self.vectors[self.ids.index(doc_id)]
        except ValueError:
            raise KeyError(doc_id) from None

    def subset(self, doc_ids: Sequence[str]) -> "EmbeddingMatrix":
        index = {doc_id: i for i, doc_id in enumerate(self.ids)}
        missing = [d for d in doc_ids if d not in index]
        if missing:
            raise EmbeddingError(f"matrix is missing rows for ids {missing[:5]}")
        rows = [index[d] for d in doc_ids]
        return EmbeddingMatrix(ids=list(doc_ids), vectors=self.vectors[rows])

    def save(self, path: str | Path) -> None:
        path = Path(path)
        n, dim = self.vectors.shape
        header = MATRIX_MAGIC + struct.pack("<IIQ", MATRIX_VERSION, dim, n)
        body = self.vectors.astype("<f4").tobytes(order="C")
        path.write_bytes(header + body)
        ids_path = path.with_suffix(path.suffix + ".ids")
        ids_path.write_text("\n".join(self.ids) + ("\n" if self.ids else ""), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "EmbeddingMatrix":
        path = Path(path)
        blob = path.read_bytes()
        if blob[:4] != MATRIX_MAGIC:
            raise EmbeddingError(f"{path}: bad magic {blob[:4]!r}")
        version, dim, rows = struct.unpack("<IIQ", blob[4:20])
        if version != MATRIX_VERSION:
            raise EmbeddingError(f"{path}: unsupported matrix version {version}")
        data = np.frombuffer(blob[20:], dtype="<f4")
        if data.size != rows * dim:
            raise EmbeddingError(f"{path}: expected {rows * dim} floats, found {data.size}")
        vectors = data.reshape(rows, dim).astype(np.float64)
        ids_path = path.with_suffix(path.suffix + ".ids")
        ids = ids_path.read_text(encoding="utf-8").splitlines() if ids_path.exists() else [
            str(i) for i in range(rows)
        ]
        return cls(ids=ids, vectors=vectors)


def embed_corpus(
    provider: EmbeddingProvider,
    documents: Sequence[Document],
    batch_size: int = DEFAULT_BATCH_SIZE,
) -> EmbeddingMatrix:
    """Embed documents in batches, preserving input order.

    Batches may run concurrently (per the provider's concurrency hint); rows are
    reassembled in input order and defensively re-normalized.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be positive")
    texts = [doc.raw_text for doc in documents]
    ids = [doc.id for doc in documents]
    if not texts:
        return EmbeddingMatrix(ids=[], vectors=np.zeros((0, provider.dimension)))

    batches = [(i, texts[i : i + batch_size]) for i in range(0, len(texts), batch_size)]
    results: dict[int, np.ndarray] = {}

    def run(batch_index: int, start: int, chunk: list[str]) -> None:
        try:
            results[start] = np.asarray(provider.embed_batch(chunk), dtype=np.float64)
        except Exception as exc:
            raise EmbeddingError(f"provider {provider.name} failed on batch {batch_index}: {exc}") from exc

    workers = max(1, getattr(provider, "concurrency", 1))
    if workers == 1 or len(batches) == 1:
        for bi, (start, chunk) in enumerate(batches):
            run(bi, start, chunk)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(run, bi, start, chunk) for bi, (start, chunk) in enumerate(batches)]
            for future in futures:
                future.result()

    vectors = np.concatenate([results[start] for start, _ in batches], axis=0)
    norms = np.linalg.norm(vectors, axis=1)
    if np.any(norms == 0.0):
        bad = int(np.argmax(norms == 0.0))
        raise EmbeddingError(f"provider {provider.name} returned a zero vector for document {ids[bad]}")
    vectors = vectors / norms[:, None]
    return EmbeddingMatrix(ids=ids, vectors=vectors)


def cosine_distance(u: np.ndarray, v: np.ndarray) -> float:
    """1 - dot(u, v) for unit vectors, clamped to [0, 2]."""
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if abs(nu - 1.0) > UNIT_TOL or abs(nv - 1.0) > UNIT_TOL:
        raise ValueError(f"cosine_distance requires unit vectors (norms {nu}, {nv})")
    return min(2.0, max(0.0, 1.0 - float(np.dot(u, v))))
