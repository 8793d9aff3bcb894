"""Run configuration: a single YAML file, strictly validated.

Unknown keys are rejected at every level, every pipeline parameter has a flag
override of the same name, and endpoint settings may come from environment
variables with the NEWSCYCLE_ prefix.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields
from datetime import date, datetime
from importlib import resources
from pathlib import Path
from typing import Optional

import yaml

from .corpus import Category, CorpusError, EventSpec

ENV_PREFIX = "NEWSCYCLE_"


class ConfigError(Exception):
    pass


def check_allowed_keys(mapping: dict, allowed: set[str], context: str) -> None:
    unknown = sorted(set(mapping) - allowed)
    if unknown:
        raise ConfigError(f"{context}: unknown keys {unknown}")


def packaged_data_path(name: str) -> Path:
    return Path(str(resources.files("newscycle") / "data" / name))


@dataclass
class ProviderConfig:
    name: str = "hash"
    endpoint: Optional[str] = None
    dimension: int = 384
    batch_size: int = 64
    seed: int = 0
    concurrency: int = 4

    def __post_init__(self) -> None:
        if self.name not in ("hash", "http", "planted"):
            raise ConfigError(f"unknown embedding provider {self.name!r}")
        if self.name == "http" and not self.endpoint:
            raise ConfigError("http embedding provider requires an endpoint")


@dataclass
class RunPaths:
    corpus_dir: Path = Path("corpora")
    output_dir: Path = Path("out")
    stoplist: Path = field(default_factory=lambda: packaged_data_path("stopwords_en.txt"))
    groups_disaster: Path = field(default_factory=lambda: packaged_data_path("groups_disaster.txt"))
    groups_violence: Path = field(default_factory=lambda: packaged_data_path("groups_violence.txt"))


@dataclass
class RunParams:
    dedup_threshold: float = 0.9
    keyword_threshold: int = 2
    k: int = 10
    quorum: int = 6
    alpha: float = 0.3
    top_terms: int = 300
    top_k: int = 15
    epsilon: float = 0.005
    workers: int = 1
    provider: ProviderConfig = field(default_factory=ProviderConfig)


@dataclass
class GdeltConfig:
    endpoint: Optional[str] = None
    max_records: int = 1000
    min_interval: float = 1.0


@dataclass
class RunConfig:
    events: list[EventSpec]
    paths: RunPaths
    params: RunParams
    gdelt: GdeltConfig = field(default_factory=GdeltConfig)

    def event(self, event_id: str) -> EventSpec:
        for spec in self.events:
            if spec.event_id == event_id:
                return spec
        raise ConfigError(f"unknown event id {event_id!r}")


def _parse_event(entry: dict, index: int) -> EventSpec:
    check_allowed_keys(
        entry,
        {"event_id", "name", "onset_date", "category", "keywords", "location_query"},
        f"events[{index}]",
    )
    onset = entry.get("onset_date")
    if isinstance(onset, datetime):
        onset = onset.date()
    if isinstance(onset, str):
        onset = date.fromisoformat(onset)
    if not isinstance(onset, date):
        raise ConfigError(f"events[{index}]: onset_date missing or invalid")
    try:
        category = Category(entry.get("category"))
    except ValueError:
        raise ConfigError(
            f"events[{index}]: category must be one of "
            f"{[c.value for c in Category]}, got {entry.get('category')!r}"
        ) from None
    try:
        return EventSpec(
            event_id=str(entry.get("event_id") or ""),
            name=str(entry.get("name") or ""),
            onset_date=onset,
            category=category,
            keywords=tuple(str(k) for k in entry.get("keywords") or ()),
            location_query=entry.get("location_query"),
        )
    except CorpusError as exc:
        raise ConfigError(
            f"events[{index}]: {exc} (the shipped default config leaves keyword "
            f"lists empty; fill in exactly ten lowercase phrases per event)"
        ) from exc


def _coerce(value: str, like) -> object:
    if isinstance(like, bool):
        return value.lower() in ("1", "true", "yes", "on")
    if isinstance(like, int):
        return int(value)
    if isinstance(like, float):
        return float(value)
    if isinstance(like, Path):
        return Path(value)
    return value


def _apply_override(config: "RunConfig", dotted: str, value: str) -> None:
    target = config
    parts = dotted.split(".")
    for part in parts[:-1]:
        if not hasattr(target, part):
            raise ConfigError(f"override {dotted!r}: no section {part!r}")
        target = getattr(target, part)
    leaf = parts[-1]
    if not hasattr(target, leaf):
        raise ConfigError(f"override {dotted!r}: unknown parameter {leaf!r}")
    setattr(target, leaf, _coerce(value, getattr(target, leaf)))


def _dataclass_from_mapping(cls, mapping: dict, context: str):
    allowed = {f.name for f in fields(cls)}
    check_allowed_keys(mapping, allowed, context)
    return cls(**mapping)


def load_config(
    path: str | Path,
    overrides: Optional[dict[str, str]] = None,
    environ: Optional[dict[str, str]] = None,
) -> RunConfig:
    path = Path(path)
    try:
        payload = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
    if not isinstance(payload, dict):
        raise ConfigError(f"config {path} must be a mapping")
    check_allowed_keys(payload, {"events", "paths", "params", "gdelt"}, "config")

    base = path.parent
    raw_paths = dict(payload.get("paths") or {})
    check_allowed_keys(
        raw_paths,
        {"corpus_dir", "output_dir", "stoplist", "groups_disaster", "groups_violence"},
        "paths",
    )
    paths = RunPaths(**{k: base / v for k, v in raw_paths.items()})

    environ = environ if environ is not None else dict(os.environ)

    raw_params = dict(payload.get("params") or {})
    raw_provider = dict(raw_params.pop("provider", {}) or {})
    if environ.get(ENV_PREFIX + "EMBED_ENDPOINT"):
        raw_provider["endpoint"] = environ[ENV_PREFIX + "EMBED_ENDPOINT"]
    provider = _dataclass_from_mapping(ProviderConfig, raw_provider, "params.provider")
    params = _dataclass_from_mapping(RunParams, {**raw_params, "provider": provider}, "params")

    raw_gdelt = dict(payload.get("gdelt") or {})
    if environ.get(ENV_PREFIX + "GDELT_ENDPOINT"):
        raw_gdelt["endpoint"] = environ[ENV_PREFIX + "GDELT_ENDPOINT"]
    gdelt = _dataclass_from_mapping(GdeltConfig, raw_gdelt, "gdelt")

    raw_events = payload.get("events") or []
    if not isinstance(raw_events, list):
        raise ConfigError("events must be a list")
    events = [_parse_event(dict(entry), i) for i, entry in enumerate(raw_events)]
    ids = [e.event_id for e in events]
    if len(ids) != len(set(ids)):
        raise ConfigError("duplicate event ids in config")

    config = RunConfig(events=events, paths=paths, params=params, gdelt=gdelt)

    for dotted, value in (overrides or {}).items():
        _apply_override(config, dotted, value)
    return config
