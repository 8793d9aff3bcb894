from datetime import date

import numpy as np
import pytest

from newscycle.corpus import Category, EventSpec
from newscycle.partition import initial_assign
from newscycle.synth import (
    DayPlan,
    SynthError,
    SynthPlan,
    expected_signals,
    generate,
    load_plans,
    merge_generated,
)

from suites import rotation_plan, surge_plans


def simple_event():
    return EventSpec(
        event_id="synth-e",
        name="Synth E",
        onset_date=date(2024, 3, 10),
        category=Category.DISASTER,
        keywords=tuple(f"synthkw{i} token{i}" for i in range(10)),
    )


def simple_plan(**kwargs):
    defaults = dict(
        event=simple_event(),
        days=[DayPlan(offset=o, count=4, sigma=0.0) for o in range(0, 5)],
        vocabularies={"base": {f"w{i}": 1 / 40 for i in range(40)}},
        dimension=16,
        seed=3,
        keyword_prob=0.0,
    )
    defaults.update(kwargs)
    return SynthPlan(**defaults)


def test_zero_noise_embeddings_equal_direction_exactly():
    plan = simple_plan()
    corpus, matrix = generate(plan)
    theta = np.zeros(16)
    theta[0] = 1.0
    assert np.array_equal(matrix.vectors, np.tile(theta, (len(corpus.documents), 1)))


def test_generation_deterministic():
    corpus_a, matrix_a = generate(simple_plan())
    corpus_b, matrix_b = generate(simple_plan())
    assert [d.id for d in corpus_a.documents] == [d.id for d in corpus_b.documents]
    assert [d.raw_text for d in corpus_a.documents] == [d.raw_text for d in corpus_b.documents]
    assert np.array_equal(matrix_a.vectors, matrix_b.vectors)


def test_different_seeds_differ():
    _, matrix_a = generate(simple_plan(seed=1, days=[DayPlan(offset=0, count=5, sigma=0.2)]))
    _, matrix_b = generate(simple_plan(seed=2, days=[DayPlan(offset=0, count=5, sigma=0.2)]))
    assert not np.array_equal(matrix_a.vectors, matrix_b.vectors)


def test_keyword_prob_one_guarantees_partition_rule():
    plan = simple_plan(keyword_prob=1.0)
    corpus, _ = generate(plan)
    result = initial_assign(corpus)
    assert result.baseline_ids == set()
    assert all(count >= 2 for count in result.keyword_counts.values())


def test_expected_volume_peak_day():
    event_plan, _ = surge_plans("synth-x", Category.DISASTER, seed=9)
    expected = expected_signals(event_plan)
    values = {d: v for d, v, _ in expected.volume.items()}
    assert max(values, key=lambda d: (values[d], -d)) == 5
    assert sum(values.values()) == pytest.approx(1.0, abs=1e-12)


def test_expected_drift_constant_direction_zero():
    expected = expected_signals(simple_plan())
    for _, value, _ in expected.drift.items():
        if value is not None:
            assert value == 0.0


def test_expected_drift_rotation_analytic():
    expected = expected_signals(rotation_plan())
    assert expected.drift.value(4) == pytest.approx(1.0, abs=1e-12)
    for day, value, _ in expected.drift.items():
        if value is not None and day != 4:
            assert value == pytest.approx(0.0, abs=1e-12)


def test_planted_distances_dispersion_expectation():
    plan = simple_plan(days=[DayPlan(offset=0, distances=[0.1, 0.3])])
    corpus, matrix = generate(plan)
    assert len(corpus.documents) == 4
    expected = expected_signals(plan)
    assert expected.dispersion.value(0) == pytest.approx(0.01, abs=1e-12)
    # realized distances to the day direction match the plan
    theta = np.zeros(16)
    theta[0] = 1.0
    realized = sorted(1.0 - float(np.dot(v, theta)) for v in matrix.vectors)
    assert realized == pytest.approx([0.1, 0.1, 0.3, 0.3], abs=1e-12)


def test_invalid_vocabulary_rejected():
    with pytest.raises(SynthError):
        simple_plan(vocabularies={"base": {"a": 0.5, "b": 0.2}})


def test_distances_with_noise_rejected():
    with pytest.raises(SynthError):
        simple_plan(days=[DayPlan(offset=0, distances=[0.1], sigma=0.5)])


def test_merge_generated_keeps_alignment():
    event_plan, baseline_plan = surge_plans("synth-m", Category.VIOLENCE, seed=4)
    corpus, matrix = merge_generated([generate(event_plan), generate(baseline_plan)])
    assert [d.id for d in corpus.documents] == matrix.ids
    assert len(set(matrix.ids)) == len(matrix.ids)


def test_merge_rejects_mismatched_events():
    a = generate(simple_plan())
    different = EventSpec(
        event_id="synth-other",
        name="Other",
        onset_date=date(2024, 3, 10),
        category=Category.DISASTER,
        keywords=tuple(f"other{i}" for i in range(10)),
    )
    b = generate(simple_plan(event=different))
    with pytest.raises(SynthError):
        merge_generated([a, b])


def test_plan_yaml_roundtrip(tmp_path):
    plan_text = """
event:
  event_id: yaml-e
  name: Yaml E
  onset_date: 2024-03-10
  category: Disaster
  keywords: [k0, k1, k2, k3, k4, k5, k6, k7, k8, k9]
dimension: 16
seed: 11
keyword_prob: 1.0
plane: [0, 1]
vocab:
  base: {alpha: 1, beta: 1, gamma: 2}
days:
  - {offset: 0, count: 3}
  - {offset: 4, distances: [0.1, 0.3]}
  - {offset: 5, count: 2, angle_deg: 90, sigma: 0.1}
"""
    path = tmp_path / "plan.yaml"
    path.write_text(plan_text, encoding="utf-8")
    plans = load_plans(path)
    assert len(plans) == 1
    plan = plans[0]
    assert plan.event.event_id == "yaml-e"
    assert plan.days[1].count == 4  # derived from distances
    assert sum(plan.vocabularies["base"].values()) == pytest.approx(1.0)
    corpus, matrix = generate(plan)
    assert len(corpus.documents) == 3 + 4 + 2


def test_plan_yaml_rejects_unknown_keys(tmp_path):
    path = tmp_path / "plan.yaml"
    path.write_text("event: {}\nbogus_key: 1\n", encoding="utf-8")
    with pytest.raises(SynthError):
        load_plans(path)
