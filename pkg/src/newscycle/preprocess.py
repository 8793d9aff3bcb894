"""Tokenization, normalization, stopword removal, tf-idf and near-duplicate removal.

The tf-idf variant is raw term counts times smoothed idf, ln((1+N)/(1+df)) + 1,
with L2-normalized vectors; near duplicates are dropped by a greedy
earliest-first pass whenever cosine similarity to a retained document exceeds
the threshold (0.9 by default).
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from math import log, sqrt
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse

from .corpus import Document
from .stem import porter_stem

logger = logging.getLogger(__name__)

NORM_TOL = 1e-9

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)
_DIGITS_RE = re.compile(r"\d+\Z")


def tokenize(text: str) -> list[str]:
    """Lowercase and split on non-alphanumeric boundaries.

    Tokens shorter than two characters are dropped unless they are pure digits.
    """
    tokens = []
    for tok in _TOKEN_RE.findall(text.lower()):
        if len(tok) >= 2 or _DIGITS_RE.match(tok):
            tokens.append(tok)
    return tokens


def normalize_token(token: str) -> str:
    """Normalize one lowercase token via the suffix-stripping stemmer."""
    return porter_stem(token)


def remove_stopwords(tokens: Sequence[str], stoplist: set[str]) -> list[str]:
    return [tok for tok in tokens if tok not in stoplist]


def load_stoplist(path: str | Path) -> set[str]:
    """Load a one-token-per-line stoplist; entries are normalized on load."""
    stoplist: set[str] = set()
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        word = line.strip().lower()
        if not word or word.startswith("#"):
            continue
        stoplist.add(word)
        stoplist.add(normalize_token(word))
    return stoplist


def preprocess_text(text: str, stoplist: set[str]) -> list[str]:
    """Full normalization chain: tokenize, stem, filter stopwords."""
    return remove_stopwords([normalize_token(t) for t in tokenize(text)], stoplist)


def preprocess_documents(documents: Iterable[Document], stoplist: set[str]) -> list[Document]:
    return [doc.with_tokens(preprocess_text(doc.raw_text, stoplist)) for doc in documents]


@dataclass
class SparseVector:
    """L2-normalized tf-idf vector; zero-weight entries are never stored."""

    entries: dict[int, float]
    norm: float
    degenerate: bool = False

    def dot(self, other: "SparseVector") -> float:
        a, b = self.entries, other.entries
        if len(b) < len(a):
            a, b = b, a
        return sum(w * b[t] for t, w in a.items() if t in b)

    def cosine(self, other: "SparseVector") -> float:
        if self.degenerate or other.degenerate:
            return 0.0
        return self.dot(other)


@dataclass
class Vocabulary:
    term_ids: dict[str, int] = field(default_factory=dict)
    doc_freq: dict[str, int] = field(default_factory=dict)
    n_docs: int = 0

    def idf(self, term: str) -> float:
        df = self.doc_freq.get(term, 0)
        return log((1 + self.n_docs) / (1 + df)) + 1.0

    def export_csv(self, path: str | Path) -> None:
        lines = ["term,term_id,df"]
        for term, term_id in sorted(self.term_ids.items(), key=lambda kv: kv[1]):
            lines.append(f"{term},{term_id},{self.doc_freq[term]}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def tfidf_vectorize(token_lists: Sequence[Sequence[str]]) -> tuple[Vocabulary, list[SparseVector]]:
    """Vectorize tokenized documents with tf * idf and L2 normalization.

    Term ids follow first-seen order over a sequential scan, so the result is
    independent of any parallel execution upstream.
    """
    if len(token_lists) == 0:
        raise ValueError("tfidf_vectorize requires at least one document")

    vocab = Vocabulary(n_docs=len(token_lists))
    for tokens in token_lists:
        seen = set()
        for tok in tokens:
            if tok not in vocab.term_ids:
                vocab.term_ids[tok] = len(vocab.term_ids)
            if tok not in seen:
                vocab.doc_freq[tok] = vocab.doc_freq.get(tok, 0) + 1
                seen.add(tok)

    idf_by_id = {vocab.term_ids[t]: vocab.idf(t) for t in vocab.term_ids}

    vectors = []
    for tokens in token_lists:
        counts: dict[int, float] = {}
        for tok in tokens:
            tid = vocab.term_ids[tok]
            counts[tid] = counts.get(tid, 0.0) + 1.0
        weights = {tid: tf * idf_by_id[tid] for tid, tf in counts.items()}
        norm = sqrt(sum(w * w for w in weights.values()))
        if norm == 0.0:
            vectors.append(SparseVector(entries={}, norm=0.0, degenerate=True))
            continue
        entries = {tid: w / norm for tid, w in weights.items()}
        vectors.append(SparseVector(entries=entries, norm=1.0))
    return vocab, vectors


def _to_csr(vectors: Sequence[SparseVector], n_terms: int) -> sparse.csr_matrix:
    rows, cols, data = [], [], []
    for i, vec in enumerate(vectors):
        for tid, w in vec.entries.items():
            rows.append(i)
            cols.append(tid)
            data.append(w)
    return sparse.csr_matrix(
        (data, (rows, cols)), shape=(len(vectors), max(n_terms, 1)), dtype=np.float64
    )


def dedup(
    documents: Sequence[Document],
    vectors: Sequence[SparseVector],
    threshold: float = 0.9,
) -> list[Document]:
    """Drop near duplicates by a greedy pass in ascending published_at order.

    A document is dropped when its cosine similarity to any already-retained
    document exceeds the threshold. Output keeps the pass order, so the
    retained set does not depend on the input permutation when timestamps
    are distinct.
    """
    if len(documents) != len(vectors):
        raise ValueError(
            f"dedup alignment error: {len(documents)} documents vs {len(vectors)} vectors"
        )
    if not 0.0 < threshold <= 1.0:
        raise ValueError(f"dedup threshold {threshold} outside (0, 1]")
    if not documents:
        return []

    order = sorted(range(len(documents)), key=lambda i: (documents[i].published_at, documents[i].id))
    n_terms = 1 + max((max(v.entries) for v in vectors if v.entries), default=0)
    matrix = _to_csr(vectors, n_terms)

    retained_idx: list[int] = []
    retained_rows: list[int] = []
    block = 512
    for start in range(0, len(order), block):
        chunk = order[start : start + block]
        chunk_matrix = matrix[chunk]
        against_retained = (
            (chunk_matrix @ matrix[retained_rows].T).toarray()
            if retained_rows
            else np.zeros((len(chunk), 0))
        )
        within = (chunk_matrix @ chunk_matrix.T).toarray()
        kept_in_chunk: list[int] = []
        for local, idx in enumerate(chunk):
            if against_retained.shape[1] and float(against_retained[local].max()) > threshold:
                continue
            if kept_in_chunk and float(within[local, kept_in_chunk].max()) > threshold:
                continue
            kept_in_chunk.append(local)
            retained_idx.append(idx)
        retained_rows.extend(chunk[i] for i in kept_in_chunk)

    dropped = len(documents) - len(retained_idx)
    if dropped:
        logger.info("dedup: dropped %d of %d documents", dropped, len(documents))
    return [documents[i] for i in retained_idx]
