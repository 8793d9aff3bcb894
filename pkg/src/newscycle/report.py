"""Report emission: CSV tables, deterministic SVG line charts, run summary.

Charts draw the per-day mean with a shaded polygon between ci_low and ci_high.
All coordinates are formatted with fixed precision and no run-specific state
is embedded, so output bytes are a pure function of the input series.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Optional, Sequence

from .aggregate import AggregateSeries, ChangePoints
from .signals import DailySeries, SignalBundle

CHART_WIDTH = 640
CHART_HEIGHT = 360
MARGIN_LEFT = 56
MARGIN_RIGHT = 16
MARGIN_TOP = 28
MARGIN_BOTTOM = 42

_SIGNAL_COLORS = {
    "volume": "#1f6fb2",
    "drift": "#b23a1f",
    "dispersion": "#3a7d2c",
}


def _fmt(value: float) -> str:
    return f"{value:.6g}"


def write_series_csv(path: str | Path, bundle: SignalBundle) -> None:
    lines = ["event_id,signal,day,value,count,missing"]
    for signal_name, series in (
        ("volume", bundle.volume),
        ("drift", bundle.drift),
        ("drift_percent", bundle.drift.percent_of_total()),
        ("dispersion", bundle.dispersion),
        ("baseline_volume", bundle.baseline_volume),
    ):
        for day, value, count in series.items():
            missing = value is None
            rendered = "" if missing else repr(value)
            lines.append(
                f"{bundle.event_id},{signal_name},{day},{rendered},{count},{str(missing).lower()}"
            )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_series_csv(path: str | Path) -> dict[str, DailySeries]:
    """Inverse of write_series_csv for one event file."""
    series: dict[str, DailySeries] = {}
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    for line in lines[1:]:
        event_id, signal_name, day, value, count, missing = line.split(",")
        target = series.setdefault(signal_name, DailySeries())
        target.set(
            int(day),
            None if missing == "true" else float(value),
            int(count),
        )
    return series


def write_aggregate_csv(path: str | Path, aggregate: AggregateSeries) -> None:
    lines = ["category,signal,day,mean,sem,ci_low,ci_high,n,single_event"]
    for i, day in enumerate(aggregate.days):
        row = [aggregate.category, aggregate.signal, str(day)]
        for column in (aggregate.mean, aggregate.sem, aggregate.ci_low, aggregate.ci_high):
            row.append("" if column[i] is None else repr(column[i]))
        row.append(str(aggregate.n_events[i]))
        row.append(str(aggregate.n_events[i] == 1).lower())
        lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_changepoints_json(
    path: str | Path,
    per_event: dict[str, ChangePoints],
    per_category: dict[str, ChangePoints],
) -> None:
    def encode(cp: ChangePoints) -> dict:
        return {
            "peak_day": cp.peak_day,
            "peak_value": cp.peak_value,
            "baseline_level": cp.baseline_level,
            "return_day": cp.return_day,
        }

    payload = {
        "events": {eid: encode(cp) for eid, cp in per_event.items()},
        "categories": {cat: encode(cp) for cat, cp in per_category.items()},
    }
    Path(path).write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _runs_of_defined_days(aggregate: AggregateSeries) -> list[list[int]]:
    runs: list[list[int]] = []
    current: list[int] = []
    for i, mean in enumerate(aggregate.mean):
        if mean is None:
            if current:
                runs.append(current)
                current = []
        else:
            current.append(i)
    if current:
        runs.append(current)
    return runs


def render_chart(
    aggregate: AggregateSeries,
    baseline_level: Optional[float] = None,
) -> bytes:
    """SVG bytes: mean polyline with a 95% CI band, axes and tick labels."""
    defined = [i for i, m in enumerate(aggregate.mean) if m is not None]
    if not defined:
        raise ValueError("cannot chart an aggregate with no defined days")

    lows = [aggregate.ci_low[i] for i in defined]
    highs = [aggregate.ci_high[i] for i in defined]
    y_min = min(min(lows), 0.0 if baseline_level is None else min(0.0, baseline_level))
    y_max = max(max(highs), baseline_level or 0.0)
    if y_max == y_min:
        y_max = y_min + 1.0
    pad = 0.05 * (y_max - y_min)
    y_min -= pad
    y_max += pad

    x_min, x_max = aggregate.days[0], aggregate.days[-1]
    plot_w = CHART_WIDTH - MARGIN_LEFT - MARGIN_RIGHT
    plot_h = CHART_HEIGHT - MARGIN_TOP - MARGIN_BOTTOM

    def x_pos(day: int) -> float:
        return MARGIN_LEFT + plot_w * (day - x_min) / (x_max - x_min)

    def y_pos(value: float) -> float:
        return MARGIN_TOP + plot_h * (1.0 - (value - y_min) / (y_max - y_min))

    color = _SIGNAL_COLORS.get(aggregate.signal, "#444444")
    parts: list[str] = []
    parts.append(
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{CHART_WIDTH}" '
        f'height="{CHART_HEIGHT}" viewBox="0 0 {CHART_WIDTH} {CHART_HEIGHT}">'
    )
    parts.append(f'<rect width="{CHART_WIDTH}" height="{CHART_HEIGHT}" fill="#ffffff"/>')
    parts.append(
        f'<text x="{MARGIN_LEFT}" y="18" font-family="sans-serif" font-size="14" '
        f'fill="#222222">{aggregate.category}: {aggregate.signal}</text>'
    )

    # axes
    x0, y0 = MARGIN_LEFT, MARGIN_TOP + plot_h
    parts.append(
        f'<line x1="{x0}" y1="{MARGIN_TOP}" x2="{x0}" y2="{y0}" stroke="#333333" stroke-width="1"/>'
    )
    parts.append(
        f'<line x1="{x0}" y1="{y0}" x2="{MARGIN_LEFT + plot_w}" y2="{y0}" '
        f'stroke="#333333" stroke-width="1"/>'
    )
    for day in (-7, 0, 5, 10, 15, 20, 25, 30):
        px = x_pos(day)
        parts.append(
            f'<line x1="{px:.2f}" y1="{y0}" x2="{px:.2f}" y2="{y0 + 4}" stroke="#333333"/>'
        )
        parts.append(
            f'<text x="{px:.2f}" y="{y0 + 18}" font-family="sans-serif" font-size="11" '
            f'fill="#333333" text-anchor="middle">{day}</text>'
        )
    for i in range(5):
        tick = y_min + (y_max - y_min) * i / 4
        py = y_pos(tick)
        parts.append(
            f'<line x1="{x0 - 4}" y1="{py:.2f}" x2="{x0}" y2="{py:.2f}" stroke="#333333"/>'
        )
        parts.append(
            f'<text x="{x0 - 7}" y="{py + 4:.2f}" font-family="sans-serif" font-size="11" '
            f'fill="#333333" text-anchor="end">{_fmt(tick)}</text>'
        )
    parts.append(
        f'<text x="{MARGIN_LEFT + plot_w / 2:.2f}" y="{CHART_HEIGHT - 8}" '
        f'font-family="sans-serif" font-size="12" fill="#333333" '
        f'text-anchor="middle">day offset</text>'
    )

    if baseline_level is not None:
        by = y_pos(baseline_level)
        parts.append(
            f'<line x1="{x0}" y1="{by:.2f}" x2="{MARGIN_LEFT + plot_w}" y2="{by:.2f}" '
            f'stroke="#888888" stroke-width="1" stroke-dasharray="4 3"/>'
        )

    for run in _runs_of_defined_days(aggregate):
        days = [aggregate.days[i] for i in run]
        if len(run) == 1:
            i = run[0]
            parts.append(
                f'<circle cx="{x_pos(days[0]):.2f}" cy="{y_pos(aggregate.mean[i]):.2f}" '
                f'r="3" fill="{color}"/>'
            )
            continue
        band_points = [f"{x_pos(d):.2f},{y_pos(aggregate.ci_high[i]):.2f}" for d, i in zip(days, run)]
        band_points += [
            f"{x_pos(d):.2f},{y_pos(aggregate.ci_low[i]):.2f}"
            for d, i in zip(reversed(days), reversed(run))
        ]
        parts.append(
            f'<polygon points="{" ".join(band_points)}" fill="{color}" fill-opacity="0.2" stroke="none"/>'
        )
        line_points = " ".join(
            f"{x_pos(d):.2f},{y_pos(aggregate.mean[i]):.2f}" for d, i in zip(days, run)
        )
        parts.append(
            f'<polyline points="{line_points}" fill="none" stroke="{color}" stroke-width="1.5"/>'
        )

    parts.append("</svg>")
    return ("\n".join(parts) + "\n").encode("utf-8")


def write_run_summary(
    path: str | Path,
    event_peaks: dict[str, ChangePoints],
    category_peaks: dict[str, ChangePoints],
    stage_names: Sequence[str],
) -> None:
    """Plain-text run summary; intentionally carries no timings or timestamps."""
    lines = ["run summary", "==========="]
    lines.append(f"stages: {', '.join(stage_names)}")
    lines.append("")
    lines.append("per-event change points (volume):")
    for event_id, cp in sorted(event_peaks.items()):
        ret = cp.return_day if cp.return_day is not None else "none"
        lines.append(
            f"  {event_id}: peak day {cp.peak_day} (value {_fmt(cp.peak_value)}), "
            f"baseline {_fmt(cp.baseline_level)}, return day {ret}"
        )
    lines.append("")
    lines.append("per-category change points (mean volume):")
    for category, cp in sorted(category_peaks.items()):
        ret = cp.return_day if cp.return_day is not None else "none"
        lines.append(
            f"  {category}: peak day {cp.peak_day} (value {_fmt(cp.peak_value)}), "
            f"baseline {_fmt(cp.baseline_level)}, return day {ret}"
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
