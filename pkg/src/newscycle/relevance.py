"""Daily term relevance over the event subset and phase reports.

Each day's candidate set is that day's 300 most frequent normalized tokens
(ties lexicographic). A term scores tf_day * idf where tf_day is its share of
the day's tokens and idf = ln(N / (1 + df)) + 1 over all event-subset
documents in the window. Multi-word group members are scored the same way by
counting adjacent-token phrase occurrences in the normalized token streams.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass
from datetime import date
from pathlib import Path
from typing import Optional, Sequence

from . import WINDOW_END, WINDOW_START
from .aggregate import detect_peak
from .corpus import Document
from .preprocess import preprocess_text
from .signals import DailySeries, day_offset

DEFAULT_TOP_TERMS = 300
DEFAULT_TOP_K = 15
PHASE_HALF_WIDTH = 1


class RelevanceError(Exception):
    pass


@dataclass
class DailyTermScores:
    day: int
    scores: dict[str, float]

    def __post_init__(self) -> None:
        if len(self.scores) > DEFAULT_TOP_TERMS:
            raise RelevanceError(f"day {self.day}: more than {DEFAULT_TOP_TERMS} scored terms")


@dataclass(frozen=True)
class WordGroup:
    name: str
    members: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.members:
            raise RelevanceError(f"word group {self.name!r} has no members")


@dataclass
class PhaseWindow:
    name: str
    start: int
    end: int


@dataclass
class PhaseReport:
    phases: list[PhaseWindow]
    top_terms: dict[str, list[tuple[str, float]]]
    group_scores: dict[str, dict[str, float]]

    def export_csv(self, path: str | Path) -> None:
        lines = ["phase,kind,name,score"]
        for phase in self.phases:
            for term, score in self.top_terms[phase.name]:
                lines.append(f"{phase.name},term,{term},{score!r}")
            for group, score in sorted(self.group_scores[phase.name].items()):
                lines.append(f"{phase.name},group,{group},{score!r}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    def export_json(self, path: str | Path) -> None:
        payload = {
            "phases": [
                {
                    "name": p.name,
                    "start": p.start,
                    "end": p.end,
                    "top_terms": [{"term": t, "score": s} for t, s in self.top_terms[p.name]],
                    "group_scores": dict(sorted(self.group_scores[p.name].items())),
                }
                for p in self.phases
            ]
        }
        Path(path).write_text(
            json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )


class _EventDocStats:
    """Token statistics over the event subset: per-day counts and document df."""

    def __init__(self, documents: Sequence[Document], onset: date):
        self.n_docs = len(documents)
        self.day_counts: dict[int, Counter] = {}
        self.day_totals: dict[int, int] = {}
        self.doc_freq: Counter = Counter()
        self._token_streams: list[list[str]] = []
        for doc in documents:
            day = day_offset(doc.published_at, onset)
            tokens = doc.tokens
            self._token_streams.append(tokens)
            if tokens:
                counts = self.day_counts.setdefault(day, Counter())
                counts.update(tokens)
                self.day_totals[day] = self.day_totals.get(day, 0) + len(tokens)
            self.doc_freq.update(set(tokens))
        self._phrase_df_cache: dict[tuple[str, ...], int] = {}

    def idf(self, df: int) -> float:
        return math.log(self.n_docs / (1 + df)) + 1.0

    def phrase_df(self, phrase: tuple[str, ...]) -> int:
        if phrase not in self._phrase_df_cache:
            self._phrase_df_cache[phrase] = sum(
                1 for stream in self._token_streams if _contains_phrase(stream, phrase)
            )
        return self._phrase_df_cache[phrase]

    def phrase_day_count(self, phrase: tuple[str, ...], documents: Sequence[Document], onset: date, day: int) -> int:
        total = 0
        for doc in documents:
            if day_offset(doc.published_at, onset) == day:
                total += _count_phrase(doc.tokens, phrase)
        return total


def _contains_phrase(stream: Sequence[str], phrase: tuple[str, ...]) -> bool:
    return _count_phrase(stream, phrase, stop_at_first=True) > 0


def _count_phrase(stream: Sequence[str], phrase: tuple[str, ...], stop_at_first: bool = False) -> int:
    width = len(phrase)
    if width == 0 or len(stream) < width:
        return 0
    count = 0
    for i in range(len(stream) - width + 1):
        if tuple(stream[i : i + width]) == phrase:
            count += 1
            if stop_at_first:
                break
    return count


def daily_term_scores(
    event_docs: Sequence[Document],
    onset: date,
    day: int,
    top_n: int = DEFAULT_TOP_TERMS,
    stats: Optional[_EventDocStats] = None,
) -> DailyTermScores:
    """tf*idf for the day's top_n most frequent tokens; empty days score nothing."""
    stats = stats or _EventDocStats(event_docs, onset)
    counts = stats.day_counts.get(day)
    if not counts:
        return DailyTermScores(day=day, scores={})
    total = stats.day_totals[day]
    candidates = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:top_n]
    scores = {
        term: (count / total) * stats.idf(stats.doc_freq[term])
        for term, count in candidates
    }
    return DailyTermScores(day=day, scores=scores)


def _phrase_day_score(
    phrase: tuple[str, ...],
    event_docs: Sequence[Document],
    onset: date,
    day: int,
    stats: _EventDocStats,
) -> float:
    total = stats.day_totals.get(day, 0)
    if total == 0:
        return 0.0
    count = stats.phrase_day_count(phrase, event_docs, onset, day)
    if count == 0:
        return 0.0
    return (count / total) * stats.idf(stats.phrase_df(phrase))


def default_phase_windows(peak_day: int) -> list[PhaseWindow]:
    """Baseline, onset, peak, post (peak+5) and late windows, +-1 day, clipped.

    Overlaps are resolved deterministically: windows are ordered by center and
    a later window starts no earlier than the day after its predecessor ends;
    windows squeezed to nothing are dropped.
    """
    centers = [
        ("baseline", WINDOW_START),
        ("onset", 0),
        ("peak", peak_day),
        ("post", peak_day + 5),
        ("late", WINDOW_END),
    ]
    centers.sort(key=lambda item: item[1])
    windows: list[PhaseWindow] = []
    for name, center in centers:
        start = max(WINDOW_START, center - PHASE_HALF_WIDTH)
        end = min(WINDOW_END, center + PHASE_HALF_WIDTH)
        if windows:
            start = max(start, windows[-1].end + 1)
        if start > end:
            continue
        windows.append(PhaseWindow(name=name, start=start, end=end))
    return windows


def phase_report(
    event_docs: Sequence[Document],
    onset: date,
    volume: DailySeries,
    groups: Sequence[WordGroup],
    stoplist: set[str],
    top_k: int = DEFAULT_TOP_K,
    top_n: int = DEFAULT_TOP_TERMS,
) -> PhaseReport:
    """Per-phase mean term scores (top_k listed) and per-phase group scores.

    Group member phrases are normalized with the same chain as document text;
    members absent from a phase contribute 0 to their group's mean.
    """
    if not event_docs:
        raise RelevanceError("phase_report requires event-subset documents")
    stats = _EventDocStats(event_docs, onset)
    peak_day, _ = detect_peak(volume)
    phases = default_phase_windows(peak_day)

    daily: dict[int, DailyTermScores] = {
        day: daily_term_scores(event_docs, onset, day, top_n=top_n, stats=stats)
        for day in stats.day_counts
    }

    normalized_members: dict[str, list[tuple[str, tuple[str, ...]]]] = {}
    for group in groups:
        members = []
        for member in group.members:
            phrase = tuple(preprocess_text(member, stoplist))
            members.append((member, phrase))
        normalized_members[group.name] = members

    top_terms: dict[str, list[tuple[str, float]]] = {}
    group_scores: dict[str, dict[str, float]] = {}
    for phase in phases:
        days = [d for d in range(phase.start, phase.end + 1) if d in stats.day_counts]
        phase_term_totals: Counter = Counter()
        for d in days:
            for term, score in daily[d].scores.items():
                phase_term_totals[term] += score
        denom = len(days)
        phase_scores = (
            {term: value / denom for term, value in phase_term_totals.items()} if denom else {}
        )
        ranked = sorted(phase_scores.items(), key=lambda kv: (-kv[1], kv[0]))[:top_k]
        top_terms[phase.name] = ranked

        scores_for_phase: dict[str, float] = {}
        for group in groups:
            member_scores = []
            for _member, phrase in normalized_members[group.name]:
                if not phrase:
                    member_scores.append(0.0)
                elif len(phrase) == 1:
                    member_scores.append(
                        sum(daily[d].scores.get(phrase[0], 0.0) for d in days) / denom
                        if denom
                        else 0.0
                    )
                else:
                    member_scores.append(
                        sum(_phrase_day_score(phrase, event_docs, onset, d, stats) for d in days) / denom
                        if denom
                        else 0.0
                    )
            scores_for_phase[group.name] = sum(member_scores) / len(member_scores)
        group_scores[phase.name] = scores_for_phase

    return PhaseReport(phases=phases, top_terms=top_terms, group_scores=group_scores)


def load_groups(path: str | Path) -> list[WordGroup]:
    """Parse the plain-text group format: one [section] per group, members per line."""
    groups: list[WordGroup] = []
    name: Optional[str] = None
    members: list[str] = []
    seen: set[str] = set()

    def flush() -> None:
        nonlocal name, members
        if name is not None:
            if name in seen:
                raise RelevanceError(f"duplicate group name {name!r}")
            seen.add(name)
            groups.append(WordGroup(name=name, members=tuple(members)))
        name, members = None, []

    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            flush()
            name = line[1:-1].strip()
            if not name:
                raise RelevanceError("empty group name")
        elif name is None:
            raise RelevanceError(f"member {line!r} appears before any [group] header")
        else:
            members.append(line.lower())
    flush()
    return groups
