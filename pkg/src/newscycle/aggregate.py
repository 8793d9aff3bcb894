"""Category-level aggregation across events and change-point extraction.

Per day: mean over events with a non-missing value, SEM as sample standard
deviation (n-1) over sqrt(n), and a normal-approximation 95% CI at
mean +/- 1.96 * SEM. Change points are the argmax peak day and the first
post-peak day that stays at baseline level (+epsilon) for three consecutive
days.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

from . import WINDOW_END
from .signals import DAY_OFFSETS, DailySeries

CI_MULTIPLIER = 1.96
DEFAULT_EPSILON = 0.005
RETURN_PERSISTENCE_DAYS = 3


class AggregateError(Exception):
    pass


@dataclass
class AggregateSeries:
    category: str
    signal: str
    days: tuple[int, ...]
    mean: list[Optional[float]]
    sem: list[Optional[float]]
    ci_low: list[Optional[float]]
    ci_high: list[Optional[float]]
    n_events: list[int]

    def single_event_days(self) -> list[int]:
        return [day for day, n in zip(self.days, self.n_events) if n == 1]

    def mean_series(self) -> DailySeries:
        series = DailySeries()
        for i, day in enumerate(self.days):
            series.set(day, self.mean[i], self.n_events[i])
        return series


@dataclass
class ChangePoints:
    peak_day: int
    peak_value: float
    baseline_level: float
    return_day: Optional[int] = None

    def __post_init__(self) -> None:
        if self.return_day is not None and self.return_day <= self.peak_day:
            raise AggregateError(
                f"return day {self.return_day} must be after peak day {self.peak_day}"
            )


def aggregate_category(
    category: str, signal: str, series_per_event: Sequence[DailySeries]
) -> AggregateSeries:
    """Mean, SEM and 95% CI per day across the events of one category."""
    if not series_per_event:
        raise AggregateError("aggregate_category requires at least one event series")
    mean: list[Optional[float]] = []
    sem: list[Optional[float]] = []
    ci_low: list[Optional[float]] = []
    ci_high: list[Optional[float]] = []
    n_events: list[int] = []
    for day in DAY_OFFSETS:
        values = [s.value(day) for s in series_per_event if s.value(day) is not None]
        n = len(values)
        n_events.append(n)
        if n == 0:
            mean.append(None)
            sem.append(None)
            ci_low.append(None)
            ci_high.append(None)
            continue
        m = sum(values) / n
        if n == 1:
            s = 0.0
        else:
            variance = sum((v - m) ** 2 for v in values) / (n - 1)
            s = math.sqrt(variance) / math.sqrt(n)
        mean.append(m)
        sem.append(s)
        low = m - CI_MULTIPLIER * s
        ci_low.append(low)
        # constructed from ci_low so that ci_high - ci_low is exactly
        # (2 * CI_MULTIPLIER) * sem in float arithmetic as well
        ci_high.append(low + (2 * CI_MULTIPLIER) * s)
    return AggregateSeries(
        category=category,
        signal=signal,
        days=DAY_OFFSETS,
        mean=mean,
        sem=sem,
        ci_low=ci_low,
        ci_high=ci_high,
        n_events=n_events,
    )


def detect_peak(series: DailySeries, search_range: tuple[int, int] = (0, WINDOW_END)) -> tuple[int, float]:
    """Argmax day and value over the search range; ties resolve to the earliest day."""
    lo, hi = search_range
    best_day: Optional[int] = None
    best_value = -math.inf
    for day, value, _ in series.items():
        if day < lo or day > hi or value is None:
            continue
        if value > best_value:
            best_day = day
            best_value = value
    if best_day is None:
        raise AggregateError(f"no defined values in search range [{lo}, {hi}]")
    return best_day, best_value


def detect_return(
    series: DailySeries,
    baseline_level: float,
    peak_day: int,
    epsilon: float = DEFAULT_EPSILON,
) -> Optional[int]:
    """First post-peak day at or below baseline + epsilon that persists 3 days."""
    if baseline_level < 0:
        raise AggregateError(f"baseline level {baseline_level} must be non-negative")
    threshold = baseline_level + epsilon
    for day in range(peak_day + 1, WINDOW_END - RETURN_PERSISTENCE_DAYS + 2):
        window = [series.value(day + i) for i in range(RETURN_PERSISTENCE_DAYS)]
        if all(v is not None and v <= threshold for v in window):
            return day
    return None


def baseline_level_from_series(baseline_volume: DailySeries) -> float:
    """Mean of the baseline-subset volume series over the full window."""
    values = [v for v in baseline_volume.values if v is not None]
    if not values:
        raise AggregateError("baseline volume series has no values")
    return sum(values) / len(values)


def change_points(
    volume: DailySeries,
    baseline_volume: DailySeries,
    epsilon: float = DEFAULT_EPSILON,
) -> ChangePoints:
    peak_day, peak_value = detect_peak(volume)
    level = baseline_level_from_series(baseline_volume)
    return ChangePoints(
        peak_day=peak_day,
        peak_value=peak_value,
        baseline_level=level,
        return_day=detect_return(volume, level, peak_day, epsilon),
    )
