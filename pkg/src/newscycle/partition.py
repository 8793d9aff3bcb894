"""Event/baseline corpus split: keyword rule plus kNN majority-vote refinement.

A document joins the event subset when its raw text contains two or more of
the event's keyword phrases. Baseline documents are then promoted in a single
simultaneous pass when at least `quorum` of their k nearest neighbors (cosine
similarity over the whole corpus, labels frozen from the initial assignment)
are event-labeled. Movement is one-directional, baseline to event.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import Corpus, Document
from .embedding import EmbeddingMatrix

DEFAULT_KEYWORD_THRESHOLD = 2
DEFAULT_K = 10
DEFAULT_QUORUM = 6


class PartitionError(Exception):
    pass


@dataclass
class PartitionResult:
    event_ids: set[str]
    baseline_ids: set[str]
    moved_ids: set[str] = field(default_factory=set)
    keyword_counts: dict[str, int] = field(default_factory=dict)

    def label_of(self, doc_id: str) -> str:
        return "event" if doc_id in self.event_ids else "baseline"

    def export_csv(self, path: str | Path, doc_order: Sequence[str]) -> None:
        lines = ["id,label,keyword_count,moved"]
        for doc_id in doc_order:
            lines.append(
                f"{doc_id},{self.label_of(doc_id)},"
                f"{self.keyword_counts.get(doc_id, 0)},"
                f"{str(doc_id in self.moved_ids).lower()}"
            )
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _keyword_pattern(keyword: str) -> re.Pattern:
    # word-boundary anchoring on both ends; boundaries are non-alphanumerics
    return re.compile(rf"(?<![^\W_]){re.escape(keyword)}(?![^\W_])", re.UNICODE)


def keyword_match_count(doc: Document, keywords: Sequence[str]) -> int:
    """Number of distinct keyword phrases present in the lowercased raw text."""
    text = doc.raw_text.lower()
    count = 0
    for keyword in keywords:
        if _keyword_pattern(keyword).search(text):
            count += 1
    return count


def initial_assign(corpus: Corpus, threshold: int = DEFAULT_KEYWORD_THRESHOLD) -> PartitionResult:
    """Keyword rule: >= threshold distinct keyword matches puts a doc in the event subset."""
    result = PartitionResult(event_ids=set(), baseline_ids=set())
    for doc in corpus.documents:
        count = keyword_match_count(doc, corpus.event.keywords)
        result.keyword_counts[doc.id] = count
        if count >= threshold:
            result.event_ids.add(doc.id)
        else:
            result.baseline_ids.add(doc.id)
    return result


def _top_k_neighbors(
    sims: np.ndarray, self_index: int, k: int, id_rank: np.ndarray
) -> np.ndarray:
    """Indices of the k most similar rows, ties at the boundary broken by ascending doc id."""
    sims = sims.copy()
    sims[self_index] = -np.inf
    kth = np.partition(sims, -k)[-k]
    above = np.flatnonzero(sims > kth)
    ties = np.flatnonzero(sims == kth)
    need = k - above.size
    if need < ties.size:
        ties = ties[np.argsort(id_rank[ties], kind="stable")[:need]]
    return np.concatenate([above, ties])


def knn_refine(
    partition: PartitionResult,
    corpus: Corpus,
    embeddings: EmbeddingMatrix,
    k: int = DEFAULT_K,
    quorum: int = DEFAULT_QUORUM,
) -> PartitionResult:
    """Promote baseline documents whose neighborhoods vote event.

    One simultaneous pass with labels frozen from the initial assignment, so
    the outcome does not depend on document order.
    """
    documents = corpus.documents
    n = len(documents)
    if n <= k:
        raise PartitionError(
            f"corpus of {n} documents cannot support k={k} neighbors; choose a smaller k"
        )
    doc_ids = [doc.id for doc in documents]
    matrix = embeddings.subset(doc_ids)

    # ranks of ascending doc id, used for deterministic tie-breaks at rank k
    id_rank = np.empty(n, dtype=np.int64)
    id_rank[sorted(range(n), key=lambda i: doc_ids[i])] = np.arange(n)

    frozen_event = np.array([doc_id in partition.event_ids for doc_id in doc_ids])
    baseline_indices = [i for i, doc_id in enumerate(doc_ids) if doc_id in partition.baseline_ids]

    promoted: set[str] = set()
    block = 256
    vectors = matrix.vectors
    for start in range(0, len(baseline_indices), block):
        chunk = baseline_indices[start : start + block]
        sims = vectors[chunk] @ vectors.T
        for row, i in enumerate(chunk):
            neighbors = _top_k_neighbors(sims[row], i, k, id_rank)
            if int(frozen_event[neighbors].sum()) >= quorum:
                promoted.add(doc_ids[i])

    return PartitionResult(
        event_ids=partition.event_ids | promoted,
        baseline_ids=partition.baseline_ids - promoted,
        moved_ids=set(promoted),
        keyword_counts=dict(partition.keyword_counts),
    )


def partition_corpus(
    corpus: Corpus,
    embeddings: EmbeddingMatrix,
    threshold: int = DEFAULT_KEYWORD_THRESHOLD,
    k: int = DEFAULT_K,
    quorum: int = DEFAULT_QUORUM,
) -> PartitionResult:
    return knn_refine(initial_assign(corpus, threshold), corpus, embeddings, k=k, quorum=quorum)
