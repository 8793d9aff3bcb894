"""Client for the GDELT document API in article-list mode.

Builds per-event queries spanning [onset-7d, onset+31d), pages through
machine-readable article lists, deduplicates by url, and retries transient
failures with exponential backoff. Network access happens only through the
injected transport, so tests run against scripted responses or a local mock
server; the CLI requires an explicit flag (or endpoint override) to go live.
"""

from __future__ import annotations

import json
import logging
import time as _time
from dataclasses import dataclass
from datetime import datetime, time, timedelta, timezone
from typing import Callable, Optional, Protocol, Sequence
from urllib.parse import urlparse

from . import WINDOW_END, WINDOW_START
from .corpus import EventSpec, format_timestamp, parse_timestamp

logger = logging.getLogger(__name__)

DEFAULT_ENDPOINT = "https://api.gdeltproject.org/api/v2/doc/doc"
DEFAULT_MAX_RECORDS = 1000
DEFAULT_PAGE_SIZE = 250
TRANSIENT_STATUSES = frozenset({429, 500, 502, 503, 504})
TIMESTAMP_FMT = "%Y%m%d%H%M%S"
SEENDATE_FMT = "%Y%m%dT%H%M%SZ"


class GdeltError(Exception):
    pass


class GdeltParseError(GdeltError):
    pass


@dataclass(frozen=True)
class GdeltQuery:
    keywords: tuple[str, ...]
    start: datetime
    end: datetime
    location_query: Optional[str] = None
    max_records: int = DEFAULT_MAX_RECORDS

    def __post_init__(self) -> None:
        if not self.keywords:
            raise GdeltError("query requires at least one keyword")
        if self.start >= self.end:
            raise GdeltError(f"query start {self.start} is not before end {self.end}")
        if self.max_records < 1:
            raise GdeltError("max_records must be positive")

    def query_string(self) -> str:
        quoted = [f'"{kw}"' if " " in kw else kw for kw in self.keywords]
        text = "(" + " OR ".join(quoted) + ")"
        if self.location_query:
            text += f" {self.location_query}"
        return text

    def to_dict(self) -> dict:
        return {
            "keywords": list(self.keywords),
            "start": format_timestamp(self.start),
            "end": format_timestamp(self.end),
            "location_query": self.location_query,
            "max_records": self.max_records,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "GdeltQuery":
        return cls(
            keywords=tuple(payload["keywords"]),
            start=parse_timestamp(payload["start"]),
            end=parse_timestamp(payload["end"]),
            location_query=payload.get("location_query"),
            max_records=int(payload.get("max_records", DEFAULT_MAX_RECORDS)),
        )


@dataclass(frozen=True)
class ArticleRecord:
    url: str
    title: str
    domain: str
    seen_at: datetime
    source_country: Optional[str] = None

    def __post_init__(self) -> None:
        parsed = urlparse(self.url)
        if not self.url or not parsed.scheme or not parsed.netloc:
            raise GdeltError(f"invalid article url {self.url!r}")


@dataclass
class ArtlistParse:
    records: list[ArticleRecord]
    skipped: int = 0


def build_query(event: EventSpec, max_records: int = DEFAULT_MAX_RECORDS) -> GdeltQuery:
    """Window [onset-7d 00:00, onset+31d 00:00) with the event keywords OR-combined."""
    start = datetime.combine(
        event.onset_date + timedelta(days=WINDOW_START), time(0, 0, 0), tzinfo=timezone.utc
    )
    end = datetime.combine(
        event.onset_date + timedelta(days=WINDOW_END + 1), time(0, 0, 0), tzinfo=timezone.utc
    )
    return GdeltQuery(
        keywords=tuple(event.keywords),
        start=start,
        end=end,
        location_query=event.location_query,
        max_records=max_records,
    )


class Transport(Protocol):
    def get(self, url: str, params: dict) -> tuple[int, bytes]: ...


class RequestsTransport:
    """HTTP GET with a polite minimum spacing between requests."""

    def __init__(self, min_interval: float = 1.0, timeout: float = 30.0, session=None):
        import requests

        self.min_interval = min_interval
        self.timeout = timeout
        self._session = session or requests.Session()
        self._last_request = 0.0

    def get(self, url: str, params: dict) -> tuple[int, bytes]:
        wait = self.min_interval - (_time.monotonic() - self._last_request)
        if wait > 0:
            _time.sleep(wait)
        response = self._session.get(url, params=params, timeout=self.timeout)
        self._last_request = _time.monotonic()
        return response.status_code, response.content


def parse_artlist(body: bytes) -> ArtlistParse:
    """Parse an article-list response; entries missing url are skipped and counted."""
    try:
        text = body.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise GdeltParseError(f"response is not UTF-8 at byte offset {exc.start}") from exc
    try:
        payload = json.loads(text) if text.strip() else {"articles": []}
    except json.JSONDecodeError as exc:
        raise GdeltParseError(f"malformed article list at byte offset {exc.pos}: {exc.msg}") from exc
    if not isinstance(payload, dict) or not isinstance(payload.get("articles", []), list):
        raise GdeltParseError("article list payload missing 'articles' array")

    records: list[ArticleRecord] = []
    skipped = 0
    for entry in payload.get("articles", []):
        url = entry.get("url") if isinstance(entry, dict) else None
        if not url:
            skipped += 1
            continue
        try:
            seen_at = datetime.strptime(entry.get("seendate", ""), SEENDATE_FMT).replace(
                tzinfo=timezone.utc
            )
        except ValueError:
            skipped += 1
            continue
        try:
            records.append(
                ArticleRecord(
                    url=url,
                    title=entry.get("title", "") or "",
                    domain=entry.get("domain", "") or urlparse(url).netloc,
                    seen_at=seen_at,
                    source_country=entry.get("sourcecountry") or None,
                )
            )
        except GdeltError:
            skipped += 1
    if skipped:
        logger.info("artlist parse: skipped %d entries", skipped)
    return ArtlistParse(records=records, skipped=skipped)


def _request_page(
    transport: Transport,
    endpoint: str,
    params: dict,
    max_attempts: int,
    backoff: float,
    sleep: Callable[[float], None],
) -> bytes:
    last_status: Optional[int] = None
    for attempt in range(max_attempts):
        if attempt:
            sleep(backoff * (2 ** (attempt - 1)))
        try:
            status, body = transport.get(endpoint, params)
        except OSError as exc:
            last_status = None
            logger.warning("transport error (attempt %d): %s", attempt + 1, exc)
            continue
        if status == 200:
            return body
        if status in TRANSIENT_STATUSES:
            last_status = status
            logger.warning("transient HTTP %d (attempt %d)", status, attempt + 1)
            continue
        raise GdeltError(f"article-list request failed with HTTP {status}")
    raise GdeltError(
        f"article-list request failed after {max_attempts} attempts"
        + (f" (last status {last_status})" if last_status else "")
    )


def fetch_article_list(
    query: GdeltQuery,
    transport: Transport,
    endpoint: str = DEFAULT_ENDPOINT,
    page_size: int = DEFAULT_PAGE_SIZE,
    max_attempts: int = 3,
    backoff: float = 1.0,
    sleep: Callable[[float], None] = _time.sleep,
) -> list[ArticleRecord]:
    """Page through the window by advancing the start timestamp past each full page."""
    by_url: dict[str, ArticleRecord] = {}
    cursor = query.start
    while len(by_url) < query.max_records and cursor < query.end:
        params = {
            "query": query.query_string(),
            "mode": "artlist",
            "format": "json",
            "maxrecords": page_size,
            "startdatetime": cursor.strftime(TIMESTAMP_FMT),
            "enddatetime": query.end.strftime(TIMESTAMP_FMT),
            "sort": "datetimeasc",
        }
        body = _request_page(transport, endpoint, params, max_attempts, backoff, sleep)
        page = parse_artlist(body)
        for record in page.records:
            if record.url in by_url:
                continue
            if not query.start <= record.seen_at <= query.end:
                continue
            by_url[record.url] = record
        if len(page.records) < page_size or not page.records:
            break
        next_cursor = max(r.seen_at for r in page.records) + timedelta(seconds=1)
        if next_cursor <= cursor:
            break
        cursor = next_cursor
    records = list(by_url.values())[: query.max_records]
    logger.info("fetched %d unique article records", len(records))
    return records


def to_ingest_records(records: Sequence[ArticleRecord]) -> list[dict]:
    """Shape article records as corpus-ingestion JSONL rows (no body text)."""
    return [
        {
            "url": r.url,
            "domain": r.domain,
            "title": r.title,
            "first_paragraph": "",
            "published_at": format_timestamp(r.seen_at),
        }
        for r in records
    ]
