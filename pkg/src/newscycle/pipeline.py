"""End-to-end orchestration with content-addressed stage caching.

Stages run in a fixed order (ingest, preprocess, embed, partition, signals,
relevance, aggregate), each reading the previous stage's artifacts and writing
its own under the output directory. A stage is skipped when its input
fingerprint matches the previous manifest and its outputs are intact. The
persisted manifest carries only deterministic content (config hash, tool
version, per-stage fingerprints and artifact checksums); timings are reported
at runtime but never written into artifacts.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

from . import __version__
from .aggregate import (
    ChangePoints,
    aggregate_category,
    change_points,
    detect_peak,
    detect_return,
)
from .config import RunConfig
from .corpus import (
    Corpus,
    EventSpec,
    Label,
    export_jsonl,
    ingest_jsonl,
    read_exported_jsonl,
    window_filter,
)
from .embedding import EmbeddingMatrix, HashEmbedder, HttpEmbedder, embed_corpus
from .partition import initial_assign, knn_refine
from .preprocess import dedup, load_stoplist, preprocess_documents, tfidf_vectorize
from .relevance import load_groups, phase_report
from .report import (
    read_series_csv,
    render_chart,
    write_aggregate_csv,
    write_changepoints_json,
    write_run_summary,
    write_series_csv,
)
from .signals import compute_signals

logger = logging.getLogger(__name__)

STAGES = ("ingest", "preprocess", "embed", "partition", "signals", "relevance", "aggregate")
SIGNAL_NAMES = ("volume", "drift", "dispersion")


class PipelineError(Exception):
    def __init__(self, stage: str, message: str, event_id: Optional[str] = None):
        self.stage = stage
        self.event_id = event_id
        scope = f" (event {event_id})" if event_id else ""
        super().__init__(f"stage {stage}{scope}: {message}")


@dataclass
class StageRecord:
    name: str
    fingerprint: str
    outputs: dict[str, str]
    skipped: bool = False
    seconds: float = 0.0


@dataclass
class RunManifest:
    config_hash: str
    tool_version: str
    stages: list[StageRecord] = field(default_factory=list)

    def stage(self, name: str) -> StageRecord:
        for record in self.stages:
            if record.name == name:
                return record
        raise KeyError(name)

    def to_payload(self) -> dict:
        return {
            "config_hash": self.config_hash,
            "tool_version": self.tool_version,
            "stages": [
                {"name": s.name, "fingerprint": s.fingerprint, "outputs": s.outputs}
                for s in self.stages
            ],
        }

    def write(self, path: Path) -> None:
        path.write_text(
            json.dumps(self.to_payload(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )


def _sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _sha256_file(path: Path) -> str:
    return _sha256_bytes(path.read_bytes())


def _fingerprint(parts: dict) -> str:
    return _sha256_bytes(json.dumps(parts, sort_keys=True).encode("utf-8"))


def _event_payload(event: EventSpec) -> dict:
    return {
        "event_id": event.event_id,
        "name": event.name,
        "onset_date": event.onset_date.isoformat(),
        "category": event.category.value,
        "keywords": list(event.keywords),
        "location_query": event.location_query,
    }


def config_hash(config: RunConfig) -> str:
    """Hash of the run's content: events and parameters, not filesystem paths."""
    provider = config.params.provider
    return _fingerprint(
        {
            "events": [_event_payload(e) for e in config.events],
            "params": {
                "dedup_threshold": config.params.dedup_threshold,
                "keyword_threshold": config.params.keyword_threshold,
                "k": config.params.k,
                "quorum": config.params.quorum,
                "alpha": config.params.alpha,
                "top_terms": config.params.top_terms,
                "top_k": config.params.top_k,
                "epsilon": config.params.epsilon,
                "provider": {
                    "name": provider.name,
                    "dimension": provider.dimension,
                    "batch_size": provider.batch_size,
                    "seed": provider.seed,
                },
            },
            "tool_version": __version__,
        }
    )


class _StageRunner:
    def __init__(self, config: RunConfig, previous: Optional[RunManifest]):
        self.config = config
        self.out = Path(config.paths.output_dir)
        self.previous = previous
        self.records: list[StageRecord] = []

    def _previous_stage(self, name: str) -> Optional[StageRecord]:
        if self.previous is None:
            return None
        try:
            return self.previous.stage(name)
        except KeyError:
            return None

    def outputs_of(self, name: str) -> dict[str, str]:
        for record in self.records:
            if record.name == name:
                return record.outputs
        raise PipelineError(name, "stage has not run")

    def run(self, name: str, fingerprint_parts: dict, compute: Callable[[], list[Path]]) -> None:
        fingerprint = _fingerprint(fingerprint_parts)
        cached = self._previous_stage(name)
        if cached is not None and cached.fingerprint == fingerprint:
            intact = all(
                (self.out / rel).exists() and _sha256_file(self.out / rel) == digest
                for rel, digest in cached.outputs.items()
            )
            if intact:
                self.records.append(
                    StageRecord(name=name, fingerprint=fingerprint, outputs=dict(cached.outputs), skipped=True)
                )
                logger.info("stage %s: skipped (inputs unchanged)", name)
                return
        started = time.monotonic()
        paths = compute()
        outputs = {
            str(path.relative_to(self.out)).replace("\\", "/"): _sha256_file(path)
            for path in sorted(paths)
        }
        self.records.append(
            StageRecord(
                name=name,
                fingerprint=fingerprint,
                outputs=outputs,
                seconds=time.monotonic() - started,
            )
        )
        logger.info("stage %s: %d artifacts", name, len(outputs))


def _map_events(
    events: list[EventSpec], workers: int, fn: Callable[[EventSpec], list[Path]]
) -> list[Path]:
    if workers <= 1 or len(events) <= 1:
        results = [fn(event) for event in events]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(fn, events))
    return [path for chunk in results for path in chunk]


def _provider_for(config: RunConfig):
    provider = config.params.provider
    if provider.name == "hash":
        return HashEmbedder(dimension=provider.dimension, seed=provider.seed)
    if provider.name == "http":
        return HttpEmbedder(
            endpoint=provider.endpoint,
            dimension=provider.dimension,
            concurrency=provider.concurrency,
        )
    return None  # planted: embeddings come from corpus-dir matrices


def run_pipeline(config: RunConfig, until: str = "aggregate") -> RunManifest:
    """Execute stages through `until`, reusing cached stages when unchanged."""
    if until not in STAGES:
        raise ValueError(f"unknown stage {until!r}; expected one of {STAGES}")
    if not config.events:
        raise PipelineError("ingest", "config lists no events")

    out = Path(config.paths.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest_path = out / "manifest.json"
    previous: Optional[RunManifest] = None
    if manifest_path.exists():
        try:
            payload = json.loads(manifest_path.read_text(encoding="utf-8"))
            previous = RunManifest(
                config_hash=payload["config_hash"],
                tool_version=payload["tool_version"],
                stages=[
                    StageRecord(name=s["name"], fingerprint=s["fingerprint"], outputs=s["outputs"])
                    for s in payload["stages"]
                ],
            )
        except (KeyError, ValueError, json.JSONDecodeError):
            logger.warning("ignoring unreadable manifest at %s", manifest_path)

    runner = _StageRunner(config, previous)
    events = sorted(config.events, key=lambda e: e.event_id)
    workers = max(1, config.params.workers)
    last = STAGES.index(until)

    _stage_ingest(runner, events, workers)
    if last >= 1:
        _stage_preprocess(runner, events, workers)
    if last >= 2:
        _stage_embed(runner, events, workers)
    if last >= 3:
        _stage_partition(runner, events, workers)
    if last >= 4:
        _stage_signals(runner, events, workers)
    if last >= 5:
        _stage_relevance(runner, events, workers)
    if last >= 6:
        _stage_aggregate(runner, events)

    manifest = RunManifest(config_hash=config_hash(config), tool_version=__version__, stages=runner.records)
    manifest.write(manifest_path)
    for record in manifest.stages:
        status = "skipped" if record.skipped else f"{record.seconds:.2f}s"
        logger.info("  %-10s %-8s %d artifacts", record.name, status, len(record.outputs))
    return manifest


def _corpus_file(config: RunConfig, event: EventSpec) -> Path:
    return Path(config.paths.corpus_dir) / f"{event.event_id}.jsonl"


def _stage_ingest(runner: _StageRunner, events: list[EventSpec], workers: int) -> None:
    config = runner.config
    source_hashes = {}
    for event in events:
        source = _corpus_file(config, event)
        if not source.exists():
            raise PipelineError("ingest", f"corpus file {source} not found", event.event_id)
        source_hashes[event.event_id] = _sha256_file(source)

    parts = {
        "stage": "ingest",
        "tool": __version__,
        "sources": source_hashes,
        "events": [_event_payload(e) for e in events],
    }

    def compute() -> list[Path]:
        target_dir = runner.out / "ingested"
        target_dir.mkdir(parents=True, exist_ok=True)

        def one(event: EventSpec) -> list[Path]:
            try:
                result = ingest_jsonl(_corpus_file(config, event))
            except Exception as exc:
                raise PipelineError("ingest", str(exc), event.event_id) from exc
            docs = window_filter(result.documents, event.onset_date)
            if result.skipped:
                logger.info("event %s: skipped %d malformed lines", event.event_id, result.skipped)
            target = target_dir / f"{event.event_id}.jsonl"
            export_jsonl(docs, target)
            return [target]

        return _map_events(events, workers, one)

    runner.run("ingest", parts, compute)


def _stage_preprocess(runner: _StageRunner, events: list[EventSpec], workers: int) -> None:
    config = runner.config
    stoplist_hash = _sha256_file(Path(config.paths.stoplist))
    parts = {
        "stage": "preprocess",
        "inputs": runner.outputs_of("ingest"),
        "stoplist": stoplist_hash,
        "dedup_threshold": config.params.dedup_threshold,
    }

    def compute() -> list[Path]:
        stoplist = load_stoplist(config.paths.stoplist)
        docs_dir = runner.out / "preprocessed"
        vocab_dir = runner.out / "vocab"
        docs_dir.mkdir(parents=True, exist_ok=True)
        vocab_dir.mkdir(parents=True, exist_ok=True)

        def one(event: EventSpec) -> list[Path]:
            try:
                docs = read_exported_jsonl(runner.out / "ingested" / f"{event.event_id}.jsonl")
                docs = preprocess_documents(docs, stoplist)
                if not docs:
                    raise ValueError("no documents after ingest")
                vocab, vectors = tfidf_vectorize([d.tokens for d in docs])
                retained = dedup(docs, vectors, threshold=config.params.dedup_threshold)
            except PipelineError:
                raise
            except Exception as exc:
                raise PipelineError("preprocess", str(exc), event.event_id) from exc
            doc_path = docs_dir / f"{event.event_id}.jsonl"
            vocab_path = vocab_dir / f"{event.event_id}.csv"
            export_jsonl(retained, doc_path)
            vocab.export_csv(vocab_path)
            return [doc_path, vocab_path]

        return _map_events(events, workers, one)

    runner.run("preprocess", parts, compute)


def _stage_embed(runner: _StageRunner, events: list[EventSpec], workers: int) -> None:
    config = runner.config
    provider_cfg = config.params.provider
    parts = {
        "stage": "embed",
        "inputs": runner.outputs_of("preprocess"),
        "provider": {
            "name": provider_cfg.name,
            "dimension": provider_cfg.dimension,
            "seed": provider_cfg.seed,
            "batch_size": provider_cfg.batch_size,
            "endpoint": provider_cfg.endpoint if provider_cfg.name == "http" else None,
        },
    }
    if provider_cfg.name == "planted":
        planted_hashes = {}
        for event in events:
            matrix_path = Path(config.paths.corpus_dir) / f"{event.event_id}.emb"
            if not matrix_path.exists():
                raise PipelineError(
                    "embed", f"planted provider needs {matrix_path}", event.event_id
                )
            planted_hashes[event.event_id] = _sha256_file(matrix_path)
        parts["planted"] = planted_hashes

    def compute() -> list[Path]:
        target_dir = runner.out / "embeddings"
        target_dir.mkdir(parents=True, exist_ok=True)
        provider = _provider_for(config)

        def one(event: EventSpec) -> list[Path]:
            docs = read_exported_jsonl(runner.out / "preprocessed" / f"{event.event_id}.jsonl")
            try:
                if provider is None:
                    source = EmbeddingMatrix.load(
                        Path(config.paths.corpus_dir) / f"{event.event_id}.emb"
                    )
                    matrix = source.subset([d.id for d in docs])
                else:
                    matrix = embed_corpus(provider, docs, batch_size=provider_cfg.batch_size)
            except Exception as exc:
                raise PipelineError("embed", str(exc), event.event_id) from exc
            target = target_dir / f"{event.event_id}.emb"
            matrix.save(target)
            return [target, target.with_suffix(".emb.ids")]

        return _map_events(events, workers, one)

    runner.run("embed", parts, compute)


def _load_corpus(runner: _StageRunner, event: EventSpec) -> Corpus:
    docs = read_exported_jsonl(runner.out / "preprocessed" / f"{event.event_id}.jsonl")
    return Corpus(event=event, documents=docs)


def _load_partition(runner: _StageRunner, event: EventSpec) -> dict[str, str]:
    labels = {}
    path = runner.out / "partition" / f"{event.event_id}.csv"
    for line in path.read_text(encoding="utf-8").splitlines()[1:]:
        doc_id, label, _count, _moved = line.split(",")
        labels[doc_id] = label
    return labels


def _stage_partition(runner: _StageRunner, events: list[EventSpec], workers: int) -> None:
    config = runner.config
    parts = {
        "stage": "partition",
        "inputs": {
            **runner.outputs_of("preprocess"),
            **runner.outputs_of("embed"),
        },
        "keyword_threshold": config.params.keyword_threshold,
        "k": config.params.k,
        "quorum": config.params.quorum,
    }

    def compute() -> list[Path]:
        target_dir = runner.out / "partition"
        target_dir.mkdir(parents=True, exist_ok=True)

        def one(event: EventSpec) -> list[Path]:
            try:
                corpus = _load_corpus(runner, event)
                matrix = EmbeddingMatrix.load(runner.out / "embeddings" / f"{event.event_id}.emb")
                result = initial_assign(corpus, threshold=config.params.keyword_threshold)
                result = knn_refine(
                    result, corpus, matrix, k=config.params.k, quorum=config.params.quorum
                )
            except Exception as exc:
                raise PipelineError("partition", str(exc), event.event_id) from exc
            target = target_dir / f"{event.event_id}.csv"
            result.export_csv(target, [d.id for d in corpus.documents])
            return [target]

        return _map_events(events, workers, one)

    runner.run("partition", parts, compute)


def _split_documents(runner: _StageRunner, event: EventSpec):
    corpus = _load_corpus(runner, event)
    labels = _load_partition(runner, event)
    event_docs = [d.with_label(Label.EVENT) for d in corpus.documents if labels.get(d.id) == "event"]
    baseline_docs = [
        d.with_label(Label.BASELINE) for d in corpus.documents if labels.get(d.id) == "baseline"
    ]
    return event_docs, baseline_docs


def _stage_signals(runner: _StageRunner, events: list[EventSpec], workers: int) -> None:
    config = runner.config
    parts = {
        "stage": "signals",
        "inputs": {
            **runner.outputs_of("partition"),
            **runner.outputs_of("embed"),
        },
        "alpha": config.params.alpha,
    }

    def compute() -> list[Path]:
        target_dir = runner.out / "signals"
        target_dir.mkdir(parents=True, exist_ok=True)

        def one(event: EventSpec) -> list[Path]:
            try:
                event_docs, baseline_docs = _split_documents(runner, event)
                matrix = EmbeddingMatrix.load(runner.out / "embeddings" / f"{event.event_id}.emb")
                bundle = compute_signals(
                    event.event_id,
                    event_docs,
                    baseline_docs,
                    matrix,
                    event.onset_date,
                    alpha=config.params.alpha,
                )
            except Exception as exc:
                raise PipelineError("signals", str(exc), event.event_id) from exc
            target = target_dir / f"{event.event_id}.csv"
            write_series_csv(target, bundle)
            return [target]

        return _map_events(events, workers, one)

    runner.run("signals", parts, compute)


def _stage_relevance(runner: _StageRunner, events: list[EventSpec], workers: int) -> None:
    config = runner.config
    groups_hashes = {
        "disaster": _sha256_file(Path(config.paths.groups_disaster)),
        "violence": _sha256_file(Path(config.paths.groups_violence)),
    }
    parts = {
        "stage": "relevance",
        "inputs": {
            **runner.outputs_of("partition"),
            **runner.outputs_of("signals"),
        },
        "groups": groups_hashes,
        "stoplist": _sha256_file(Path(config.paths.stoplist)),
        "top_terms": config.params.top_terms,
        "top_k": config.params.top_k,
    }

    def compute() -> list[Path]:
        target_dir = runner.out / "relevance"
        target_dir.mkdir(parents=True, exist_ok=True)
        stoplist = load_stoplist(config.paths.stoplist)
        groups_by_category = {
            "Disaster": load_groups(config.paths.groups_disaster),
            "Violence": load_groups(config.paths.groups_violence),
        }

        def one(event: EventSpec) -> list[Path]:
            try:
                event_docs, _ = _split_documents(runner, event)
                series = read_series_csv(runner.out / "signals" / f"{event.event_id}.csv")
                report = phase_report(
                    event_docs,
                    event.onset_date,
                    series["volume"],
                    groups_by_category[event.category.value],
                    stoplist,
                    top_k=config.params.top_k,
                    top_n=config.params.top_terms,
                )
            except Exception as exc:
                raise PipelineError("relevance", str(exc), event.event_id) from exc
            csv_path = target_dir / f"{event.event_id}_phases.csv"
            json_path = target_dir / f"{event.event_id}_phases.json"
            report.export_csv(csv_path)
            report.export_json(json_path)
            return [csv_path, json_path]

        return _map_events(events, workers, one)

    runner.run("relevance", parts, compute)


def _stage_aggregate(runner: _StageRunner, events: list[EventSpec]) -> None:
    config = runner.config
    parts = {
        "stage": "aggregate",
        "inputs": runner.outputs_of("signals"),
        "epsilon": config.params.epsilon,
    }

    def compute() -> list[Path]:
        agg_dir = runner.out / "aggregate"
        charts_dir = runner.out / "charts"
        agg_dir.mkdir(parents=True, exist_ok=True)
        charts_dir.mkdir(parents=True, exist_ok=True)
        written: list[Path] = []

        per_event_series = {
            event.event_id: read_series_csv(runner.out / "signals" / f"{event.event_id}.csv")
            for event in events
        }

        event_cps: dict[str, ChangePoints] = {}
        for event in events:
            series = per_event_series[event.event_id]
            try:
                event_cps[event.event_id] = change_points(
                    series["volume"], series["baseline_volume"], epsilon=config.params.epsilon
                )
            except Exception as exc:
                raise PipelineError("aggregate", str(exc), event.event_id) from exc

        categories = sorted({event.category.value for event in events})
        category_cps: dict[str, ChangePoints] = {}
        for category in categories:
            members = [e for e in events if e.category.value == category]
            for signal_name in SIGNAL_NAMES:
                aggregate = aggregate_category(
                    category,
                    signal_name,
                    [per_event_series[e.event_id][signal_name] for e in members],
                )
                csv_path = agg_dir / f"{category.lower()}_{signal_name}.csv"
                write_aggregate_csv(csv_path, aggregate)
                written.append(csv_path)

                baseline = None
                if signal_name == "volume":
                    levels = [event_cps[e.event_id].baseline_level for e in members]
                    baseline = sum(levels) / len(levels)
                    mean_series = aggregate.mean_series()
                    peak_day, peak_value = detect_peak(mean_series)
                    category_cps[category] = ChangePoints(
                        peak_day=peak_day,
                        peak_value=peak_value,
                        baseline_level=baseline,
                        return_day=detect_return(
                            mean_series, baseline, peak_day, epsilon=config.params.epsilon
                        ),
                    )
                chart_path = charts_dir / f"{category.lower()}_{signal_name}.svg"
                chart_path.write_bytes(render_chart(aggregate, baseline_level=baseline))
                written.append(chart_path)

        cp_path = agg_dir / "changepoints.json"
        write_changepoints_json(cp_path, event_cps, category_cps)
        written.append(cp_path)

        summary_path = runner.out / "summary.txt"
        write_run_summary(summary_path, event_cps, category_cps, STAGES)
        written.append(summary_path)
        return written

    runner.run("aggregate", parts, compute)
