"""Synthetic event corpora with planted signals and their analytic expectations.

A plan fixes per-day document counts, a latent unit direction (an angle inside
one coordinate plane), a Gaussian noise scale, and a vocabulary distribution.
Embeddings are normalize(theta_t + sigma_t * g); alternatively a day may plant
an exact set of centroid distances, realized as symmetric pairs around
theta_t so the day's centroid direction is theta_t itself and the distance
variance is exact. Generation is deterministic given the seed, with per-day
sub-seeds so parallel and serial runs agree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import datetime, time, timedelta, timezone
from typing import Optional

import numpy as np

from . import WINDOW_END, WINDOW_START
from .corpus import Corpus, Document, EventSpec, derive_doc_id
from .embedding import EmbeddingMatrix
from .signals import DailySeries

DEFAULT_TOKENS_PER_DOC = 20


class SynthError(Exception):
    pass


@dataclass
class DayPlan:
    offset: int
    count: int = 0
    angle_deg: float = 0.0
    sigma: float = 0.0
    vocab: str = "base"
    distances: Optional[list[float]] = None

    def __post_init__(self) -> None:
        if self.offset < WINDOW_START or self.offset > WINDOW_END:
            raise SynthError(f"day offset {self.offset} outside window")
        if self.distances is not None:
            expected = 2 * len(self.distances)
            if self.count not in (0, expected):
                raise SynthError(
                    f"day {self.offset}: count {self.count} conflicts with "
                    f"{len(self.distances)} planted distances ({expected} docs)"
                )
            self.count = expected
            if self.sigma != 0.0:
                raise SynthError(f"day {self.offset}: planted distances require sigma 0")
            for d in self.distances:
                if not 0.0 <= d <= 2.0:
                    raise SynthError(f"day {self.offset}: distance {d} outside [0, 2]")
        if self.count < 0:
            raise SynthError(f"day {self.offset}: negative count")
        if self.sigma < 0:
            raise SynthError(f"day {self.offset}: negative sigma")


@dataclass
class SynthPlan:
    event: EventSpec
    days: list[DayPlan]
    vocabularies: dict[str, dict[str, float]]
    dimension: int = 16
    seed: int = 0
    keyword_prob: float = 0.0
    plane: tuple[int, int] = (0, 1)
    tokens_per_doc: int = DEFAULT_TOKENS_PER_DOC
    tag: str = "main"  # distinguishes populations merged into one corpus

    def __post_init__(self) -> None:
        if self.dimension < 4:
            raise SynthError("dimension must be at least 4")
        i, j = self.plane
        if i == j or not (0 <= i < self.dimension) or not (0 <= j < self.dimension):
            raise SynthError(f"invalid plane {self.plane} for dimension {self.dimension}")
        if not 0.0 <= self.keyword_prob <= 1.0:
            raise SynthError(f"keyword probability {self.keyword_prob} outside [0, 1]")
        if self.tokens_per_doc < 1:
            raise SynthError("tokens_per_doc must be positive")
        offsets = [d.offset for d in self.days]
        if len(offsets) != len(set(offsets)):
            raise SynthError("duplicate day offsets in plan")
        for name, dist in self.vocabularies.items():
            if not dist:
                raise SynthError(f"vocabulary {name!r} is empty")
            total = sum(dist.values())
            if abs(total - 1.0) > 1e-9:
                raise SynthError(f"vocabulary {name!r} sums to {total}, not 1")
            if any(p < 0 for p in dist.values()):
                raise SynthError(f"vocabulary {name!r} has negative probabilities")
        for day in self.days:
            if day.count and day.vocab not in self.vocabularies:
                raise SynthError(f"day {day.offset}: unknown vocabulary {day.vocab!r}")


@dataclass
class ExpectedSignals:
    volume: DailySeries
    drift: DailySeries  # analytic, for alpha = 1 and sigma = 0
    dispersion: DailySeries = field(default_factory=DailySeries)


def _direction(plan: SynthPlan, angle_deg: float) -> np.ndarray:
    theta = np.zeros(plan.dimension, dtype=np.float64)
    radians = math.radians(angle_deg)
    i, j = plan.plane
    theta[i] = math.cos(radians)
    theta[j] = math.sin(radians)
    return theta


def _orthogonal(plan: SynthPlan, angle_deg: float) -> np.ndarray:
    ortho = np.zeros(plan.dimension, dtype=np.float64)
    radians = math.radians(angle_deg)
    i, j = plan.plane
    ortho[i] = -math.sin(radians)
    ortho[j] = math.cos(radians)
    return ortho


def _day_rng(plan: SynthPlan, offset: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence(entropy=plan.seed, spawn_key=(offset - WINDOW_START,))
    )


def _day_embeddings(plan: SynthPlan, day: DayPlan, rng: np.random.Generator) -> np.ndarray:
    theta = _direction(plan, day.angle_deg)
    if day.distances is not None:
        ortho = _orthogonal(plan, day.angle_deg)
        rows = []
        for d in day.distances:
            phi = math.acos(1.0 - d)
            rows.append(math.cos(phi) * theta + math.sin(phi) * ortho)
            rows.append(math.cos(phi) * theta - math.sin(phi) * ortho)
        return np.stack(rows)
    if day.sigma == 0.0:
        return np.tile(theta, (day.count, 1))
    noise = rng.standard_normal((day.count, plan.dimension))
    vectors = theta[None, :] + day.sigma * noise
    return vectors / np.linalg.norm(vectors, axis=1)[:, None]


def _day_texts(plan: SynthPlan, day: DayPlan, rng: np.random.Generator) -> list[list[str]]:
    dist = plan.vocabularies[day.vocab]
    terms = list(dist.keys())
    probs = np.array([dist[t] for t in terms], dtype=np.float64)
    probs = probs / probs.sum()
    texts = []
    planted = plan.event.keywords[:2]
    for _ in range(day.count):
        tokens = [terms[i] for i in rng.choice(len(terms), size=plan.tokens_per_doc, p=probs)]
        for keyword in planted:
            if rng.random() < plan.keyword_prob:
                position = int(rng.integers(0, len(tokens) + 1))
                tokens.insert(position, keyword)
        texts.append(tokens)
    return texts


def generate(plan: SynthPlan) -> tuple[Corpus, EmbeddingMatrix]:
    """Emit the planned documents and their planted embedding matrix."""
    documents: list[Document] = []
    rows: list[np.ndarray] = []
    for day in sorted(plan.days, key=lambda d: d.offset):
        if day.count == 0:
            continue
        rng = _day_rng(plan, day.offset)
        vectors = _day_embeddings(plan, day, rng)
        texts = _day_texts(plan, day, rng)
        day_date = plan.event.onset_date + timedelta(days=day.offset)
        day_start = datetime.combine(day_date, time(0, 0, 0), tzinfo=timezone.utc)
        for i, tokens in enumerate(texts):
            published = day_start + timedelta(seconds=i)
            url = f"synthetic://{plan.event.event_id}/{plan.tag}/{day.offset}/{i}"
            title = " ".join(tokens[:4])
            paragraph = " ".join(tokens[4:])
            documents.append(
                Document(
                    id=derive_doc_id(url, published),
                    url=url,
                    domain=f"synth{i % 5}.example.com",
                    title=title,
                    first_paragraph=paragraph,
                    published_at=published,
                )
            )
            rows.append(vectors[i])
    corpus = Corpus(event=plan.event, documents=documents)
    matrix = EmbeddingMatrix(
        ids=[d.id for d in documents],
        vectors=np.stack(rows) if rows else np.zeros((0, plan.dimension)),
    )
    return corpus, matrix


def expected_signals(plan: SynthPlan) -> ExpectedSignals:
    """Analytic series: exact volume, zero-noise drift (alpha=1), plantable dispersion."""
    volume = DailySeries()
    total = sum(d.count for d in plan.days)
    by_offset = {d.offset: d for d in plan.days}
    for offset in range(WINDOW_START, WINDOW_END + 1):
        count = by_offset[offset].count if offset in by_offset else 0
        volume.set(offset, count / total if total else 0.0, count)
    volume.degenerate = total == 0

    drift = DailySeries()
    dispersion = DailySeries()
    previous: Optional[np.ndarray] = None
    for offset in range(WINDOW_START, WINDOW_END + 1):
        day = by_offset.get(offset)
        if day is None or day.count == 0:
            continue
        theta = _direction(plan, day.angle_deg)
        if previous is None:
            drift.set(offset, 0.0, day.count)
        else:
            drift.set(offset, 1.0 - float(np.dot(theta, previous)), day.count)
        previous = theta
        if day.distances is not None:
            dispersion.set(offset, float(np.var(day.distances)), day.count)
        elif day.sigma == 0.0:
            dispersion.set(offset, 0.0, day.count)
    return ExpectedSignals(volume=volume, drift=drift, dispersion=dispersion)


def merge_generated(
    outputs: list[tuple[Corpus, EmbeddingMatrix]]
) -> tuple[Corpus, EmbeddingMatrix]:
    """Merge populations of the same event into one corpus and matrix."""
    if not outputs:
        raise SynthError("nothing to merge")
    event = outputs[0][0].event
    for corpus, _ in outputs[1:]:
        if corpus.event.event_id != event.event_id:
            raise SynthError(
                f"cannot merge corpora of different events "
                f"({corpus.event.event_id!r} vs {event.event_id!r})"
            )
    documents = [doc for corpus, _ in outputs for doc in corpus.documents]
    ids = [doc_id for _, matrix in outputs for doc_id in matrix.ids]
    vectors = np.concatenate([matrix.vectors for _, matrix in outputs], axis=0)
    return Corpus(event=event, documents=documents), EmbeddingMatrix(ids=ids, vectors=vectors)


def load_plans(path) -> list[SynthPlan]:
    """Read one plan (or a 'plans:' list) from a YAML file."""
    from pathlib import Path

    import yaml

    from .config import ConfigError, check_allowed_keys, _parse_event

    payload = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    if not isinstance(payload, dict):
        raise SynthError(f"plan file {path} must be a mapping")
    if "plans" in payload:
        try:
            check_allowed_keys(payload, {"plans"}, "plan file")
        except ConfigError as exc:
            raise SynthError(str(exc)) from exc
    entries = payload["plans"] if "plans" in payload else [payload]

    plans = []
    for i, entry in enumerate(entries):
        context = f"plans[{i}]" if "plans" in payload else "plan"
        try:
            check_allowed_keys(
                entry,
                {"event", "days", "vocab", "dimension", "seed", "keyword_prob", "plane",
                 "tokens_per_doc", "tag"},
                context,
            )
        except ConfigError as exc:
            raise SynthError(str(exc)) from exc
        try:
            event = _parse_event(dict(entry["event"]), 0)
        except (KeyError, ConfigError) as exc:
            raise SynthError(f"{context}: invalid event: {exc}") from exc
        vocabularies = {}
        for name, dist in (entry.get("vocab") or {}).items():
            total = float(sum(dist.values()))
            if total <= 0:
                raise SynthError(f"{context}: vocabulary {name!r} has no weight")
            vocabularies[name] = {str(t): float(w) / total for t, w in dist.items()}
        days = []
        for raw_day in entry.get("days") or []:
            try:
                check_allowed_keys(
                    raw_day,
                    {"offset", "count", "angle_deg", "sigma", "vocab", "distances"},
                    f"{context}.days",
                )
            except ConfigError as exc:
                raise SynthError(str(exc)) from exc
            days.append(DayPlan(**raw_day))
        plans.append(
            SynthPlan(
                event=event,
                days=days,
                vocabularies=vocabularies,
                dimension=int(entry.get("dimension", 16)),
                seed=int(entry.get("seed", 0)),
                keyword_prob=float(entry.get("keyword_prob", 0.0)),
                plane=tuple(entry.get("plane", (0, 1))),
                tokens_per_doc=int(entry.get("tokens_per_doc", DEFAULT_TOKENS_PER_DOC)),
                tag=str(entry.get("tag", "main")),
            )
        )
    return plans
