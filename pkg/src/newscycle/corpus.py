"""Domain types and ingestion of pre-extracted article corpora.

Records arrive as line-delimited JSON with fields url, domain, title,
first_paragraph and published_at (ISO-8601). Ingestion validates each line,
derives a stable document id when one is not supplied, and leaves documents
unlabeled with empty tokens and no embedding.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
from dataclasses import dataclass, field
from datetime import date, datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional
from urllib.parse import urlparse

import numpy as np

from . import WINDOW_END, WINDOW_START

logger = logging.getLogger(__name__)

UNIT_NORM_TOL = 1e-6


class Label(Enum):
    UNASSIGNED = "unassigned"
    EVENT = "event"
    BASELINE = "baseline"


class Category(Enum):
    DISASTER = "Disaster"
    VIOLENCE = "Violence"


class CorpusError(Exception):
    """Fatal ingestion or validation failure."""


@dataclass
class Document:
    """One article record: title + first paragraph plus derived state."""

    id: str
    url: str
    domain: str
    title: str
    first_paragraph: str
    published_at: datetime  # UTC, second precision
    raw_text: str = ""
    tokens: list[str] = field(default_factory=list)
    embedding: Optional[np.ndarray] = None
    label: Label = Label.UNASSIGNED

    def __post_init__(self) -> None:
        expected = self.title + " " + self.first_paragraph
        if not self.raw_text:
            self.raw_text = expected
        elif self.raw_text != expected:
            raise CorpusError(f"document {self.id}: raw_text does not match title + ' ' + first_paragraph")
        if self.published_at.tzinfo is None:
            raise CorpusError(f"document {self.id}: published_at must be timezone-aware")
        self.published_at = self.published_at.astimezone(timezone.utc).replace(microsecond=0)
        if self.embedding is not None:
            norm = float(np.linalg.norm(self.embedding))
            if abs(norm - 1.0) > UNIT_NORM_TOL:
                raise CorpusError(f"document {self.id}: embedding norm {norm} is not unit")

    def with_tokens(self, tokens: list[str]) -> "Document":
        return dataclasses.replace(self, tokens=tokens)

    def with_label(self, label: Label) -> "Document":
        return dataclasses.replace(self, label=label)


@dataclass(frozen=True)
class EventSpec:
    """An event's identity, onset date, category and its ten keyword phrases."""

    event_id: str
    name: str
    onset_date: date
    category: Category
    keywords: tuple[str, ...]
    location_query: Optional[str] = None

    def __post_init__(self) -> None:
        if len(self.keywords) != 10:
            raise CorpusError(
                f"event {self.event_id}: expected exactly 10 keywords, got {len(self.keywords)}"
            )
        for kw in self.keywords:
            if not kw:
                raise CorpusError(f"event {self.event_id}: empty keyword")
            if kw != kw.lower():
                raise CorpusError(f"event {self.event_id}: keyword {kw!r} is not lowercase")


@dataclass
class Corpus:
    event: EventSpec
    documents: list[Document]

    def __post_init__(self) -> None:
        from .signals import day_offset  # deferred: signals owns the offset rule

        seen: set[str] = set()
        for doc in self.documents:
            if doc.id in seen:
                raise CorpusError(f"duplicate document id {doc.id}")
            seen.add(doc.id)
            offset = day_offset(doc.published_at, self.event.onset_date)
            if offset < WINDOW_START or offset > WINDOW_END:
                raise CorpusError(
                    f"document {doc.id}: day offset {offset} outside [{WINDOW_START}, {WINDOW_END}]"
                )


@dataclass
class IngestResult:
    documents: list[Document]
    skipped: int
    skip_reasons: list[str] = field(default_factory=list)


def derive_doc_id(url: str, published_at: datetime) -> str:
    payload = f"{url}|{format_timestamp(published_at)}".encode("utf-8")
    return hashlib.sha256(payload).hexdigest()[:16]


def parse_timestamp(value: str) -> datetime:
    """Parse an ISO-8601 timestamp; naive values are rejected."""
    text = value.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    ts = datetime.fromisoformat(text)
    if ts.tzinfo is None:
        raise ValueError(f"timestamp {value!r} has no timezone")
    return ts.astimezone(timezone.utc).replace(microsecond=0)


def format_timestamp(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).replace(microsecond=0).strftime("%Y-%m-%dT%H:%M:%SZ")


def _record_to_document(record: dict) -> Document:
    if not isinstance(record, dict):
        raise ValueError("record is not an object")
    url = record.get("url")
    if not url:
        raise ValueError("missing url")
    raw_ts = record.get("published_at")
    if not raw_ts:
        raise ValueError("missing published_at")
    published_at = parse_timestamp(str(raw_ts))
    title = record.get("title") or ""
    first_paragraph = record.get("first_paragraph") or ""
    if not title and not first_paragraph:
        raise ValueError("missing both title and first_paragraph")
    domain = record.get("domain") or urlparse(url).netloc
    doc_id = record.get("id") or derive_doc_id(url, published_at)
    return Document(
        id=str(doc_id),
        url=str(url),
        domain=str(domain),
        title=str(title),
        first_paragraph=str(first_paragraph),
        published_at=published_at,
    )


def ingest_jsonl(path: str | Path) -> IngestResult:
    """Read one JSONL corpus file into unlabeled Documents.

    Malformed lines are skipped and counted; an unreadable file is fatal.
    """
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise CorpusError(f"cannot read corpus file {path}: {exc}") from exc

    documents: list[Document] = []
    reasons: list[str] = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            documents.append(_record_to_document(record))
        except (ValueError, CorpusError) as exc:
            reasons.append(f"line {lineno}: {exc}")
    if reasons:
        logger.info("ingest %s: skipped %d of %d lines", path.name, len(reasons), len(lines))
    return IngestResult(documents=documents, skipped=len(reasons), skip_reasons=reasons)


def document_to_record(doc: Document) -> dict:
    record = {
        "id": doc.id,
        "url": doc.url,
        "domain": doc.domain,
        "title": doc.title,
        "first_paragraph": doc.first_paragraph,
        "published_at": format_timestamp(doc.published_at),
    }
    if doc.tokens:
        record["tokens"] = list(doc.tokens)
    if doc.label is not Label.UNASSIGNED:
        record["label"] = doc.label.value
    if doc.embedding is not None:
        record["embedding"] = [float(x) for x in doc.embedding]
    return record


def export_jsonl(documents: Iterable[Document], path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as handle:
        for doc in documents:
            handle.write(json.dumps(document_to_record(doc), ensure_ascii=False, sort_keys=True))
            handle.write("\n")


def read_exported_jsonl(path: str | Path) -> list[Document]:
    """Reload documents written by export_jsonl, preserving tokens and labels.

    Internal pipeline loader; ingest_jsonl is the validating entry point for
    external corpora.
    """
    documents = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        record = json.loads(line)
        doc = _record_to_document(record)
        if record.get("tokens"):
            doc = doc.with_tokens([str(t) for t in record["tokens"]])
        if record.get("label"):
            doc = doc.with_label(Label(record["label"]))
        if record.get("embedding") is not None:
            doc = dataclasses.replace(doc, embedding=np.asarray(record["embedding"], dtype=np.float64))
        documents.append(doc)
    return documents


def window_filter(documents: list[Document], onset: date) -> list[Document]:
    """Keep documents whose day offset lies in [-7, +30], preserving order."""
    from .signals import day_offset

    return [
        doc
        for doc in documents
        if WINDOW_START <= day_offset(doc.published_at, onset) <= WINDOW_END
    ]
