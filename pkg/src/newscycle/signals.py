"""Per-event daily time series: publication volume, semantic drift, dispersion.

All series live on day offsets [-7, +30] relative to the event onset. Volume
is the per-day share of documents. Drift is the day-over-day cosine distance
between smoothed (EMA) daily centroid directions. Dispersion is the population
variance of document-to-centroid cosine distances within a day, computed on
the raw (unsmoothed) daily centroid.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import date, datetime, timezone
from typing import Optional, Sequence

import numpy as np

from . import WINDOW_DAYS, WINDOW_END, WINDOW_START
from .corpus import Document
from .embedding import EmbeddingMatrix, cosine_distance

DEFAULT_ALPHA = 0.3

DAY_OFFSETS = tuple(range(WINDOW_START, WINDOW_END + 1))


class SignalError(Exception):
    pass


def day_offset(published_at: datetime, onset: date) -> int:
    """UTC calendar-day difference between publication and onset; onset day is 0."""
    return (published_at.astimezone(timezone.utc).date() - onset).days


def _slot(day: int) -> int:
    if day < WINDOW_START or day > WINDOW_END:
        raise SignalError(f"day offset {day} outside [{WINDOW_START}, {WINDOW_END}]")
    return day - WINDOW_START


@dataclass
class DailySeries:
    """One value per day offset in [-7, +30]; None marks a missing value."""

    values: list[Optional[float]] = field(default_factory=lambda: [None] * WINDOW_DAYS)
    counts: list[int] = field(default_factory=lambda: [0] * WINDOW_DAYS)
    degenerate: bool = False

    def __post_init__(self) -> None:
        if len(self.values) != WINDOW_DAYS or len(self.counts) != WINDOW_DAYS:
            raise SignalError(f"daily series must have exactly {WINDOW_DAYS} slots")

    def value(self, day: int) -> Optional[float]:
        return self.values[_slot(day)]

    def count(self, day: int) -> int:
        return self.counts[_slot(day)]

    def set(self, day: int, value: Optional[float], count: int) -> None:
        self.values[_slot(day)] = value
        self.counts[_slot(day)] = count

    def items(self):
        for day, value, count in zip(DAY_OFFSETS, self.values, self.counts):
            yield day, value, count

    def defined_days(self) -> list[int]:
        return [day for day, value, _ in self.items() if value is not None]

    def percent_of_total(self) -> "DailySeries":
        """Each day as a percentage of the series total over non-missing days."""
        total = sum(v for v in self.values if v is not None)
        out = DailySeries(counts=list(self.counts))
        if total == 0:
            out.values = list(self.values)
            out.degenerate = True
            return out
        out.values = [None if v is None else 100.0 * v / total for v in self.values]
        return out


def _group_by_day(documents: Sequence[Document], onset: date) -> dict[int, list[int]]:
    by_day: dict[int, list[int]] = {}
    for i, doc in enumerate(documents):
        by_day.setdefault(day_offset(doc.published_at, onset), []).append(i)
    return by_day


def volume_series(documents: Sequence[Document], onset: date) -> DailySeries:
    """Per-day document count as a proportion of the subset total."""
    by_day = _group_by_day(documents, onset)
    total = len(documents)
    series = DailySeries()
    for day in DAY_OFFSETS:
        count = len(by_day.get(day, ()))
        series.set(day, count / total if total else 0.0, count)
    series.degenerate = total == 0
    return series


@dataclass
class CentroidTrack:
    """Raw per-day centroids (plain means) and their EMA-smoothed track."""

    alpha: float
    raw: dict[int, np.ndarray]
    smoothed: dict[int, np.ndarray]
    first_day: int

    def smoothed_direction(self, day: int) -> np.ndarray:
        vec = self.smoothed[day]
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:
            raise SignalError(f"zero-norm smoothed centroid on day {day}")
        return vec / norm


def centroid_track(
    documents: Sequence[Document],
    embeddings: EmbeddingMatrix,
    onset: date,
    alpha: float = DEFAULT_ALPHA,
) -> CentroidTrack:
    """Daily mean embedding vectors with exponential smoothing.

    The raw centroid is the arithmetic mean of a day's document embeddings and
    is not re-normalized. Smoothing starts at the first non-empty day and
    carries the previous smoothed value across empty days.
    """
    if not documents:
        raise SignalError("centroid_track requires at least one document")
    if not 0.0 < alpha <= 1.0:
        raise SignalError(f"alpha {alpha} outside (0, 1]")
    matrix = embeddings.subset([doc.id for doc in documents])
    by_day = _group_by_day(documents, onset)

    raw: dict[int, np.ndarray] = {}
    for day, rows in by_day.items():
        raw[day] = matrix.vectors[rows].mean(axis=0)

    first_day = min(raw)
    smoothed: dict[int, np.ndarray] = {}
    previous: Optional[np.ndarray] = None
    for day in DAY_OFFSETS:
        if day < first_day:
            continue
        if day in raw:
            current = raw[day] if previous is None else alpha * raw[day] + (1.0 - alpha) * previous
        else:
            current = previous
        smoothed[day] = current
        previous = current
    return CentroidTrack(alpha=alpha, raw=raw, smoothed=smoothed, first_day=first_day)


def drift_series(track: CentroidTrack, counts: Optional[dict[int, int]] = None) -> DailySeries:
    """Day-over-day cosine distance between smoothed centroid directions.

    The first defined day is 0 by convention; days before it, and empty days,
    are missing. Empty days still carry the smoothed centroid forward, so the
    next non-empty day is compared against the last defined direction.
    """
    series = DailySeries()
    counts = counts or {}
    previous_direction: Optional[np.ndarray] = None
    for day in DAY_OFFSETS:
        n = counts.get(day, 1 if day in track.raw else 0)
        if day < track.first_day:
            series.set(day, None, n)
            continue
        if day not in track.raw:
            series.set(day, None, 0)
            continue
        direction = track.smoothed_direction(day)
        if previous_direction is None:
            series.set(day, 0.0, n)
        else:
            series.set(day, cosine_distance(direction, previous_direction), n)
        previous_direction = direction
    return series


def dispersion_series(
    documents: Sequence[Document],
    embeddings: EmbeddingMatrix,
    track: CentroidTrack,
    onset: date,
) -> DailySeries:
    """Population variance of document-to-centroid cosine distances per day.

    Uses the raw daily centroid direction; single-document days are exactly 0
    and empty days are missing.
    """
    matrix = embeddings.subset([doc.id for doc in documents])
    by_day = _group_by_day(documents, onset)
    series = DailySeries()
    for day in DAY_OFFSETS:
        rows = by_day.get(day)
        if not rows:
            series.set(day, None, 0)
            continue
        centroid = track.raw[day]
        norm = float(np.linalg.norm(centroid))
        if norm == 0.0:
            raise SignalError(f"zero-norm daily centroid on day {day}")
        direction = centroid / norm
        distances = [cosine_distance(matrix.vectors[r], direction) for r in rows]
        series.set(day, float(np.var(distances)), len(rows))
    return series


@dataclass
class SignalBundle:
    """All per-event series plus the centroid track and baseline volume."""

    event_id: str
    volume: DailySeries
    drift: DailySeries
    dispersion: DailySeries
    baseline_volume: DailySeries
    track: CentroidTrack


def compute_signals(
    event_id: str,
    event_docs: Sequence[Document],
    baseline_docs: Sequence[Document],
    embeddings: EmbeddingMatrix,
    onset: date,
    alpha: float = DEFAULT_ALPHA,
) -> SignalBundle:
    if not event_docs:
        raise SignalError(f"event {event_id}: no event-subset documents, signals undefined")
    track = centroid_track(event_docs, embeddings, onset, alpha=alpha)
    volume = volume_series(event_docs, onset)
    counts = {day: volume.count(day) for day in DAY_OFFSETS}
    return SignalBundle(
        event_id=event_id,
        volume=volume,
        drift=drift_series(track, counts),
        dispersion=dispersion_series(event_docs, embeddings, track, onset),
        baseline_volume=volume_series(baseline_docs, onset),
        track=track,
    )
