"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Tolerances are pinned here and are not configurable: volume recovery 1e-12,
drift and dispersion oracles 1e-9, partition and dedup oracles exact,
aggregation arithmetic 1e-9 (CI width identity exact), determinism
bit-identical. The synthetic suite must complete end to end in under 60 s.
"""

import functools
import hashlib
import json
import math
import time
from itertools import combinations
from pathlib import Path

import numpy as np
import pytest

from newscycle.aggregate import aggregate_category, detect_peak
from newscycle.config import load_config
from newscycle.corpus import Category, Corpus
from newscycle.embedding import HashEmbedder, embed_corpus
from newscycle.partition import initial_assign, knn_refine
from newscycle.pipeline import run_pipeline
from newscycle.preprocess import dedup, tfidf_vectorize
from newscycle.relevance import WordGroup, daily_term_scores, phase_report
from newscycle.report import read_series_csv
from newscycle.signals import centroid_track, dispersion_series, volume_series
from newscycle.synth import DayPlan, SynthPlan, expected_signals, generate

from suites import FOUR_EVENTS, SURGE_COUNTS, rotation_plan, write_surge_suite
from test_partition import brute_force_refine, random_corpus
from test_preprocess import _planted_cluster_corpus
from test_relevance import doc_on, planted_corpus, volume_for


def criterion(number, name):
    def decorate(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            try:
                result = fn(*args, **kwargs)
            except BaseException:
                print(f"\n[criterion {number}] {name}: FAIL")
                raise
            print(f"\n[criterion {number}] {name}: PASS")
            return result

        return wrapper

    return decorate


def tree_digest(base: Path) -> dict[str, str]:
    return {
        str(p.relative_to(base)): hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted(base.rglob("*"))
        if p.is_file()
    }


@pytest.fixture(scope="module")
def surge_suite(tmp_path_factory):
    """4-event synthetic suite (2 per category) with its end-to-end runtime."""
    root = tmp_path_factory.mktemp("acceptance")
    started = time.monotonic()
    config_path = write_surge_suite(root, FOUR_EVENTS)
    manifest = run_pipeline(load_config(config_path))
    elapsed = time.monotonic() - started
    return root, config_path, manifest, elapsed


@criterion(1, "synthetic shape reproduction")
def test_criterion_1_shape_reproduction(surge_suite):
    root, _, manifest, elapsed = surge_suite
    assert elapsed < 60.0, f"end-to-end suite took {elapsed:.1f}s"
    assert len(manifest.stages) == 7

    changepoints = json.loads((root / "out" / "aggregate" / "changepoints.json").read_text())
    event_ids = [event_id for event_id, _, _ in FOUR_EVENTS]
    total = sum(SURGE_COUNTS.values())
    for event_id in event_ids:
        cp = changepoints["events"][event_id]
        assert cp["peak_day"] == 5, f"{event_id}: peak at {cp['peak_day']}"
        assert cp["return_day"] is not None and 9 <= cp["return_day"] <= 12, (
            f"{event_id}: return at {cp['return_day']}"
        )
        series = read_series_csv(root / "out" / "signals" / f"{event_id}.csv")
        for day, value, count in series["volume"].items():
            planted = SURGE_COUNTS.get(day, 0)
            assert count == planted, f"{event_id} day {day}: {count} docs vs planted {planted}"
            assert abs(value - planted / total) <= 1e-12
    for category in ("Disaster", "Violence"):
        assert changepoints["categories"][category]["peak_day"] == 5


@criterion(2, "drift oracle: planted 90 degree rotation")
def test_criterion_2_drift_oracle(tmp_path):
    plan = rotation_plan()
    corpus, matrix = generate(plan)
    from newscycle.corpus import export_jsonl

    corpus_dir = tmp_path / "corpora"
    corpus_dir.mkdir()
    export_jsonl(corpus.documents, corpus_dir / f"{plan.event.event_id}.jsonl")
    matrix.save(corpus_dir / f"{plan.event.event_id}.emb")
    spec = plan.event
    (tmp_path / "config.yaml").write_text(
        "\n".join(
            [
                "paths: {corpus_dir: corpora, output_dir: out}",
                "params:",
                "  alpha: 1.0",
                "  provider: {name: planted, dimension: 16}",
                "events:",
                f"  - event_id: {spec.event_id}",
                f"    name: {spec.name}",
                f"    onset_date: {spec.onset_date.isoformat()}",
                f"    category: {spec.category.value}",
                f"    keywords: {list(spec.keywords)}",
            ]
        )
        + "\n",
        encoding="utf-8",
    )
    run_pipeline(load_config(tmp_path / "config.yaml"))

    expected = expected_signals(plan)
    series = read_series_csv(tmp_path / "out" / "signals" / f"{spec.event_id}.csv")
    for day, value, _ in series["drift"].items():
        want = expected.drift.value(day)
        assert (value is None) == (want is None), f"day {day} definedness"
        if want is not None:
            assert abs(value - want) <= 1e-9, f"day {day}: {value} vs {want}"
    assert series["drift"].value(4) == pytest.approx(1.0, abs=1e-9)
    nonzero = [d for d, v, _ in series["drift"].items() if v not in (None, 0.0)]
    assert nonzero == [4]


@criterion(3, "dispersion oracle: exact planted distance sets")
def test_criterion_3_dispersion_oracle():
    plan = SynthPlan(
        event=rotation_plan("dispersion-oracle").event,
        days=[
            DayPlan(offset=0, distances=[0.1, 0.3]),
            DayPlan(offset=1, count=1, sigma=0.0),
            DayPlan(offset=2, count=5, sigma=0.0),
            DayPlan(offset=3, distances=[0.05, 0.2, 0.4]),
        ],
        vocabularies={"base": {f"w{i}": 1 / 60 for i in range(60)}},
        dimension=16,
        seed=21,
        keyword_prob=1.0,
    )
    corpus, matrix = generate(plan)
    track = centroid_track(corpus.documents, matrix, plan.event.onset_date, alpha=1.0)
    series = dispersion_series(corpus.documents, matrix, track, plan.event.onset_date)

    # brute-force recomputation: distances to the normalized day centroid
    def brute(day):
        rows = [
            matrix.vectors[i]
            for i, doc in enumerate(corpus.documents)
            if (doc.published_at.date() - plan.event.onset_date).days == day
        ]
        centroid = np.mean(rows, axis=0)
        centroid = centroid / np.linalg.norm(centroid)
        dists = [1.0 - float(np.dot(r, centroid)) for r in rows]
        mean = sum(dists) / len(dists)
        return sum((d - mean) ** 2 for d in dists) / len(dists)

    assert series.value(0) == pytest.approx(brute(0), abs=1e-12)
    assert series.value(0) == pytest.approx(float(np.var([0.1, 0.3])), abs=1e-9)
    assert series.value(0) == pytest.approx(0.01, abs=1e-9)
    assert series.value(3) == pytest.approx(brute(3), abs=1e-12)
    assert series.value(3) == pytest.approx(float(np.var([0.05, 0.2, 0.4])), abs=1e-9)
    assert series.value(1) == 0.0  # single document day: exactly zero
    assert series.value(2) == 0.0  # identical embeddings: exactly zero


@criterion(4, "partition oracle: brute-force kNN majority vote, 100 seeds")
def test_criterion_4_partition_oracle():
    for seed in range(100):
        corpus, matrix = random_corpus(seed, n_docs=200)
        initial = initial_assign(corpus)
        refined = knn_refine(initial, corpus, matrix, k=10, quorum=6)
        oracle = brute_force_refine(corpus, matrix, initial, k=10, quorum=6)
        assert refined.moved_ids == oracle, f"seed {seed}"
        for doc in corpus.documents:
            if refined.keyword_counts[doc.id] >= 2:
                assert doc.id in refined.event_ids, f"seed {seed}: {doc.id}"


@criterion(5, "dedup oracle: planted near-duplicate clusters")
def test_criterion_5_dedup_oracle():
    docs, token_lists, cluster_of = _planted_cluster_corpus(seed=2024, n_docs=500, n_clusters=60)
    assert len(docs) == 500
    _, vectors = tfidf_vectorize(token_lists)
    retained = dedup(docs, vectors, threshold=0.9)
    retained_ids = {d.id for d in retained}

    index = {d.id: i for i, d in enumerate(docs)}
    for a, b in combinations(sorted(retained_ids), 2):
        sim = vectors[index[a]].cosine(vectors[index[b]])
        assert sim <= 0.9, f"retained pair {a},{b} at similarity {sim}"

    clusters: dict[int, list] = {}
    for i, cluster in enumerate(cluster_of):
        if cluster is not None:
            clusters.setdefault(cluster, []).append(docs[i])
    assert len(clusters) == 60
    for cluster, members in clusters.items():
        earliest = min(members, key=lambda d: (d.published_at, d.id))
        survivors = [d.id for d in members if d.id in retained_ids]
        assert survivors == [earliest.id], f"cluster {cluster}: {survivors}"


@criterion(6, "tf-idf and relevance oracle")
def test_criterion_6_tfidf_and_relevance_oracle():
    # tf-idf on a toy corpus vs direct formula evaluation
    toy = [
        ["storm", "hits", "coast", "storm"],
        ["aid", "arrives", "coast"],
        ["storm", "aid", "relief"],
        ["relief", "council", "relief"],
        ["council", "session"],
    ]
    vocab, vectors = tfidf_vectorize(toy)
    n = len(toy)
    for i, tokens in enumerate(toy):
        counts: dict[str, int] = {}
        for tok in tokens:
            counts[tok] = counts.get(tok, 0) + 1
        raw = {
            tok: tf * (math.log((1 + n) / (1 + sum(1 for d in toy if tok in d))) + 1.0)
            for tok, tf in counts.items()
        }
        norm = math.sqrt(sum(w * w for w in raw.values()))
        for tok, weight in raw.items():
            got = vectors[i].entries[vocab.term_ids[tok]]
            assert abs(got - weight / norm) <= 1e-9

    # daily relevance scores vs direct formula evaluation (4-doc toy)
    from test_relevance import ONSET

    corpus = [
        (0, ["storm", "hits", "coast", "storm"]),
        (0, ["aid", "arrives", "coast"]),
        (1, ["storm", "aid", "relief"]),
        (2, ["relief", "council", "relief"]),
    ]
    docs = [doc_on(day, f"d{i}", toks) for i, (day, toks) in enumerate(corpus)]
    for day in (0, 1, 2):
        scores = daily_term_scores(docs, ONSET, day).scores
        day_tokens = [t for d, toks in corpus if d == day for t in toks]
        for term in set(day_tokens):
            tf = day_tokens.count(term) / len(day_tokens)
            df = sum(1 for _, toks in corpus if term in toks)
            idf = math.log(len(corpus) / (1 + df)) + 1.0
            assert abs(scores[term] - tf * idf) <= 1e-9

    # planted vocabulary: injected only on days 0..2, visible only in the onset phase
    from newscycle.preprocess import normalize_token

    planted_docs = planted_corpus()
    planted_term = normalize_token("evacuation")
    report = phase_report(
        planted_docs,
        ONSET,
        volume_for(planted_docs),
        groups=[WordGroup(name="evacuation", members=("evacuation",))],
        stoplist=set(),
        top_k=15,
    )
    onset_terms = [t for t, _ in report.top_terms["onset"]]
    baseline_terms = [t for t, _ in report.top_terms["baseline"]]
    assert planted_term in onset_terms
    assert planted_term not in baseline_terms


@criterion(7, "aggregation arithmetic")
def test_criterion_7_aggregation_arithmetic():
    from newscycle.signals import DAY_OFFSETS, DailySeries

    def flat(value):
        series = DailySeries()
        for day in DAY_OFFSETS:
            series.set(day, value, 1)
        return series

    agg = aggregate_category("Disaster", "volume", [flat(2.0), flat(4.0)])
    for i in range(len(agg.days)):
        assert abs(agg.mean[i] - 3.0) <= 1e-9
        assert abs(agg.sem[i] - 1.0) <= 1e-9
        assert abs(agg.ci_low[i] - 1.04) <= 1e-9
        assert abs(agg.ci_high[i] - 4.96) <= 1e-9

    rng = np.random.default_rng(17)
    randoms = []
    for _ in range(5):
        series = DailySeries()
        for day in DAY_OFFSETS:
            series.set(day, float(rng.random()), 1)
        randoms.append(series)
    random_agg = aggregate_category("Violence", "drift", randoms)
    for i in range(len(random_agg.days)):
        # the width identity ci_high - ci_low = 3.92 * sem, asserted in its
        # float-exact rearrangement
        assert random_agg.ci_high[i] == random_agg.ci_low[i] + 3.92 * random_agg.sem[i]
        assert random_agg.ci_high[i] - random_agg.ci_low[i] == pytest.approx(
            3.92 * random_agg.sem[i], abs=1e-15
        )


@criterion(8, "determinism: bit-identical runs and batching invariance")
def test_criterion_8_determinism(surge_suite, tmp_path):
    root, config_path, _, _ = surge_suite
    run_pipeline(load_config(config_path, overrides={"paths.output_dir": str(tmp_path / "run_a")}))
    run_pipeline(load_config(config_path, overrides={"paths.output_dir": str(tmp_path / "run_b")}))
    digest_a = tree_digest(tmp_path / "run_a")
    digest_b = tree_digest(tmp_path / "run_b")
    assert digest_a == digest_b
    assert (tmp_path / "run_a" / "manifest.json").read_bytes() == (
        tmp_path / "run_b" / "manifest.json"
    ).read_bytes()

    # embed batching invariance: batch 2 vs 64
    plan = rotation_plan("batching", seed=31)
    corpus, _ = generate(plan)
    provider = HashEmbedder(dimension=384, seed=0)
    small = embed_corpus(provider, corpus.documents, batch_size=2)
    large = embed_corpus(provider, corpus.documents, batch_size=64)
    assert np.array_equal(small.vectors, large.vectors)
