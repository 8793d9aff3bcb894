import math
from datetime import date, datetime, timedelta, timezone

import numpy as np
import pytest

from newscycle.corpus import Document
from newscycle.embedding import EmbeddingMatrix
from newscycle.signals import (
    DailySeries,
    SignalError,
    centroid_track,
    day_offset,
    dispersion_series,
    drift_series,
    volume_series,
)

ONSET = date(2022, 5, 24)


def doc_on(day, doc_id, second=0):
    published = datetime(2022, 5, 24, 13, 0, second, tzinfo=timezone.utc) + timedelta(days=day)
    return Document(
        id=doc_id,
        url=f"https://x.example.com/{doc_id}",
        domain="x.example.com",
        title=f"doc {doc_id}",
        first_paragraph="",
        published_at=published,
    )


def basis(i, dim=8):
    vec = np.zeros(dim)
    vec[i] = 1.0
    return vec


# -- day_offset -------------------------------------------------------------------

def test_day_offset_onset_day_is_zero():
    published = datetime(2022, 5, 24, 13, 0, tzinfo=timezone.utc)
    assert day_offset(published, ONSET) == 0


def test_day_offset_window_edges():
    assert day_offset(datetime(2022, 5, 17, 0, 0, tzinfo=timezone.utc), ONSET) == -7
    assert day_offset(datetime(2022, 6, 23, 23, 59, tzinfo=timezone.utc), ONSET) == 30


def test_day_offset_uses_utc_calendar_day():
    # 23:30 UTC-5 on May 23 is 04:30 UTC on May 24
    from datetime import timezone as tz
    published = datetime(2022, 5, 23, 23, 30, tzinfo=tz(timedelta(hours=-5)))
    assert day_offset(published, ONSET) == 0


# -- volume -----------------------------------------------------------------------

def test_volume_proportions():
    docs = [doc_on(0, "a"), doc_on(0, "b"), doc_on(0, "c"), doc_on(1, "d")]
    series = volume_series(docs, ONSET)
    assert series.value(0) == pytest.approx(0.75)
    assert series.value(1) == pytest.approx(0.25)
    assert series.value(5) == 0.0
    assert sum(v for v in series.values) == pytest.approx(1.0)


def test_volume_uniform():
    docs = [doc_on(day, f"d{day}") for day in range(-7, 31)]
    series = volume_series(docs, ONSET)
    for _, value, count in series.items():
        assert count == 1
        assert value == pytest.approx(1 / 38)


def test_volume_planted_counts_exact():
    counts = {-7: 3, 0: 11, 5: 29, 12: 7, 30: 2}
    docs = []
    for day, n in counts.items():
        docs.extend(doc_on(day, f"{day}-{i}", second=i) for i in range(n))
    series = volume_series(docs, ONSET)
    total = sum(counts.values())
    for day, value, count in series.items():
        assert count == counts.get(day, 0)
        assert abs(value - counts.get(day, 0) / total) <= 1e-12


def test_volume_empty_is_degenerate_zero():
    series = volume_series([], ONSET)
    assert series.degenerate
    assert all(v == 0.0 for v in series.values)


# -- centroid track ------------------------------------------------------------------

def two_day_setup(u, v):
    docs = [doc_on(0, "a"), doc_on(1, "b")]
    matrix = EmbeddingMatrix(ids=["a", "b"], vectors=np.stack([u, v]))
    return docs, matrix


def test_centroid_alpha_one_equals_raw():
    u, v = basis(0), basis(1)
    docs, matrix = two_day_setup(u, v)
    track = centroid_track(docs, matrix, ONSET, alpha=1.0)
    assert np.array_equal(track.smoothed[0], u)
    assert np.array_equal(track.smoothed[1], v)


def test_centroid_constant_embeddings_fixed_point():
    u = basis(2)
    docs = [doc_on(d, f"d{d}") for d in range(0, 6)]
    matrix = EmbeddingMatrix(ids=[d.id for d in docs], vectors=np.tile(u, (len(docs), 1)))
    track = centroid_track(docs, matrix, ONSET, alpha=0.3)
    for day in range(0, 6):
        assert np.allclose(track.smoothed[day], u)


def test_centroid_alpha_half_hand_formula():
    u, v = basis(0), basis(1)
    docs, matrix = two_day_setup(u, v)
    track = centroid_track(docs, matrix, ONSET, alpha=0.5)
    assert np.array_equal(track.smoothed[0], u)
    assert np.allclose(track.smoothed[1], 0.5 * v + 0.5 * u)


def test_centroid_mean_not_renormalized():
    u, v = basis(0), basis(1)
    docs = [doc_on(0, "a"), doc_on(0, "b")]
    matrix = EmbeddingMatrix(ids=["a", "b"], vectors=np.stack([u, v]))
    track = centroid_track(docs, matrix, ONSET)
    assert np.allclose(track.raw[0], 0.5 * (u + v))
    assert float(np.linalg.norm(track.raw[0])) < 1.0


def test_centroid_requires_documents():
    matrix = EmbeddingMatrix(ids=[], vectors=np.zeros((0, 8)))
    with pytest.raises(SignalError):
        centroid_track([], matrix, ONSET)


def test_centroid_carries_over_empty_days():
    docs = [doc_on(0, "a"), doc_on(3, "b")]
    matrix = EmbeddingMatrix(ids=["a", "b"], vectors=np.stack([basis(0), basis(1)]))
    track = centroid_track(docs, matrix, ONSET, alpha=1.0)
    assert np.array_equal(track.smoothed[1], basis(0))
    assert np.array_equal(track.smoothed[2], basis(0))
    assert np.array_equal(track.smoothed[3], basis(1))


# -- drift -----------------------------------------------------------------------

def test_drift_identical_centroids_all_zero():
    docs = [doc_on(d, f"d{d}") for d in range(0, 8)]
    matrix = EmbeddingMatrix(ids=[d.id for d in docs], vectors=np.tile(basis(0), (len(docs), 1)))
    track = centroid_track(docs, matrix, ONSET, alpha=1.0)
    series = drift_series(track)
    for day in range(0, 8):
        assert series.value(day) == 0.0


def test_drift_planted_rotation_analytic():
    """One 90-degree rotation between days 3 and 4 gives drift 1.0 at day 4."""
    docs = [doc_on(d, f"d{d}") for d in range(0, 8)]
    vectors = np.stack([basis(0) if d <= 3 else basis(1) for d in range(0, 8)])
    matrix = EmbeddingMatrix(ids=[d.id for d in docs], vectors=vectors)
    track = centroid_track(docs, matrix, ONSET, alpha=1.0)
    series = drift_series(track)
    for day in range(0, 8):
        expected = 1.0 if day == 4 else 0.0
        assert series.value(day) == pytest.approx(expected, abs=1e-9)
    assert series.value(-7) is None  # before first defined day


def test_drift_percent_normalization():
    docs = [doc_on(d, f"d{d}") for d in range(0, 8)]
    vectors = np.stack([basis(0) if d <= 3 else basis(1) for d in range(0, 8)])
    matrix = EmbeddingMatrix(ids=[d.id for d in docs], vectors=vectors)
    series = drift_series(centroid_track(docs, matrix, ONSET, alpha=1.0))
    percent = series.percent_of_total()
    total = sum(v for v in percent.values if v is not None)
    assert total == pytest.approx(100.0, abs=1e-9)


def test_drift_single_doc_per_day_alpha_one_equals_doc_distances():
    rng = np.random.default_rng(3)
    vectors = rng.standard_normal((5, 8))
    vectors /= np.linalg.norm(vectors, axis=1)[:, None]
    docs = [doc_on(d, f"d{d}") for d in range(0, 5)]
    matrix = EmbeddingMatrix(ids=[d.id for d in docs], vectors=vectors)
    series = drift_series(centroid_track(docs, matrix, ONSET, alpha=1.0))
    for day in range(1, 5):
        expected = 1.0 - float(np.dot(vectors[day], vectors[day - 1]))
        assert series.value(day) == pytest.approx(expected, abs=1e-12)


def test_drift_values_within_range():
    rng = np.random.default_rng(11)
    vectors = rng.standard_normal((20, 8))
    vectors /= np.linalg.norm(vectors, axis=1)[:, None]
    docs = [doc_on(d % 31, f"d{d}", second=d) for d in range(20)]
    matrix = EmbeddingMatrix(ids=[d.id for d in docs], vectors=vectors)
    series = drift_series(centroid_track(docs, matrix, ONSET, alpha=0.4))
    for _, value, _ in series.items():
        if value is not None:
            assert 0.0 <= value <= 2.0


# -- dispersion --------------------------------------------------------------------

def test_dispersion_single_doc_day_zero():
    docs = [doc_on(0, "a")]
    matrix = EmbeddingMatrix(ids=["a"], vectors=basis(0)[None, :])
    track = centroid_track(docs, matrix, ONSET)
    series = dispersion_series(docs, matrix, track, ONSET)
    assert series.value(0) == 0.0
    assert series.value(1) is None


def test_dispersion_identical_embeddings_zero():
    docs = [doc_on(0, f"a{i}", second=i) for i in range(4)]
    matrix = EmbeddingMatrix(ids=[d.id for d in docs], vectors=np.tile(basis(1), (4, 1)))
    track = centroid_track(docs, matrix, ONSET)
    series = dispersion_series(docs, matrix, track, ONSET)
    assert series.value(0) == 0.0


def symmetric_pair_embeddings(distances, dim=8):
    """Docs at +-arccos(1-d) around e0: the day centroid direction is exactly e0."""
    rows = []
    for d in distances:
        phi = math.acos(1.0 - d)
        rows.append(math.cos(phi) * basis(0, dim) + math.sin(phi) * basis(1, dim))
        rows.append(math.cos(phi) * basis(0, dim) - math.sin(phi) * basis(1, dim))
    return np.stack(rows)


def test_dispersion_planted_distances_exact():
    distances = [0.1, 0.3]
    vectors = symmetric_pair_embeddings(distances)
    docs = [doc_on(0, f"p{i}", second=i) for i in range(len(vectors))]
    matrix = EmbeddingMatrix(ids=[d.id for d in docs], vectors=vectors)
    track = centroid_track(docs, matrix, ONSET)
    series = dispersion_series(docs, matrix, track, ONSET)

    # brute-force recomputation of the distance-set variance
    realized = [1.0 - float(np.dot(v, basis(0))) for v in vectors]
    brute = float(np.mean([(d - np.mean(realized)) ** 2 for d in realized]))
    assert series.value(0) == pytest.approx(brute, abs=1e-12)
    assert series.value(0) == pytest.approx(0.01, abs=1e-9)
    assert series.value(0) == pytest.approx(float(np.var(distances)), abs=1e-9)


def test_dispersion_nonnegative_random():
    rng = np.random.default_rng(9)
    vectors = rng.standard_normal((30, 8))
    vectors /= np.linalg.norm(vectors, axis=1)[:, None]
    docs = [doc_on(d % 5, f"r{d}", second=d) for d in range(30)]
    matrix = EmbeddingMatrix(ids=[d.id for d in docs], vectors=vectors)
    track = centroid_track(docs, matrix, ONSET)
    series = dispersion_series(docs, matrix, track, ONSET)
    for _, value, _ in series.items():
        if value is not None:
            assert value >= 0.0


# -- series plumbing ---------------------------------------------------------------

def test_daily_series_slot_validation():
    series = DailySeries()
    with pytest.raises(SignalError):
        series.value(31)
    with pytest.raises(SignalError):
        series.set(-8, 1.0, 1)
