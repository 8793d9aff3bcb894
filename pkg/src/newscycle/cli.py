"""Command-line entry point.

Subcommands cover corpus acquisition (fetch, synth), staged pipeline execution
(ingest, partition, signals, relevance, aggregate, report, run), and every
config parameter can be overridden by a flag of the same name.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import yaml

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .corpus import CorpusError
from .gdelt import (
    DEFAULT_ENDPOINT,
    GdeltError,
    RequestsTransport,
    build_query,
    fetch_article_list,
    to_ingest_records,
)
from .pipeline import PipelineError, run_pipeline
from .synth import SynthError, generate, load_plans

logger = logging.getLogger(__name__)

_PARAM_FLAGS = {
    "dedup_threshold": "params.dedup_threshold",
    "keyword_threshold": "params.keyword_threshold",
    "k": "params.k",
    "quorum": "params.quorum",
    "alpha": "params.alpha",
    "top_terms": "params.top_terms",
    "top_k": "params.top_k",
    "epsilon": "params.epsilon",
    "workers": "params.workers",
    "provider": "params.provider.name",
    "endpoint": "params.provider.endpoint",
    "dimension": "params.provider.dimension",
    "batch_size": "params.provider.batch_size",
    "seed": "params.provider.seed",
    "corpus_dir": "paths.corpus_dir",
    "output_dir": "paths.output_dir",
    "stoplist": "paths.stoplist",
}


def _add_config_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="run configuration YAML")
    for flag in _PARAM_FLAGS:
        parser.add_argument(f"--{flag.replace('_', '-')}", dest=f"opt_{flag}", default=None)
    parser.add_argument(
        "--set",
        dest="dotted_overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override any config entry by dotted path, e.g. params.alpha=0.5",
    )


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    overrides: dict[str, str] = {}
    for flag, dotted in _PARAM_FLAGS.items():
        value = getattr(args, f"opt_{flag}", None)
        if value is not None:
            overrides[dotted] = value
    for item in args.dotted_overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key] = value
    return load_config(args.config, overrides=overrides)


def _cmd_stage(args: argparse.Namespace, until: str) -> int:
    config = _config_from_args(args)
    selected = getattr(args, "events", None)
    if selected:
        known = {e.event_id for e in config.events}
        missing = [eid for eid in selected if eid not in known]
        if missing:
            raise ConfigError(f"unknown event ids {missing}")
        config.events = [e for e in config.events if e.event_id in set(selected)]
    manifest = run_pipeline(config, until=until)
    ran = sum(1 for s in manifest.stages if not s.skipped)
    skipped = len(manifest.stages) - ran
    print(
        f"pipeline complete through stage {until!r}: {ran} stage(s) run, "
        f"{skipped} skipped; outputs in {config.paths.output_dir}"
    )
    for record in manifest.stages:
        status = "skipped" if record.skipped else f"{record.seconds:6.2f}s"
        print(f"  {record.name:<10} {status:>8}  {len(record.outputs)} artifact(s)")
    return 0


def _cmd_synth(args: argparse.Namespace) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    plans = load_plans(args.plan)
    from .corpus import export_jsonl
    from .synth import merge_generated

    by_event: dict[str, list] = {}
    order: list[str] = []
    for plan in plans:
        if plan.event.event_id not in by_event:
            order.append(plan.event.event_id)
        by_event.setdefault(plan.event.event_id, []).append(plan)

    events = []
    dimension = None
    for event_id in order:
        group = by_event[event_id]
        corpus, matrix = merge_generated([generate(plan) for plan in group])
        export_jsonl(corpus.documents, out / f"{event_id}.jsonl")
        matrix.save(out / f"{event_id}.emb")
        print(
            f"{event_id}: {len(corpus.documents)} documents from "
            f"{len(group)} population(s), dimension {group[0].dimension}"
        )
        events.append(group[0].event)
        dimension = group[0].dimension

    if args.write_config:
        payload = {
            "paths": {"corpus_dir": ".", "output_dir": "out"},
            "params": {"provider": {"name": "planted", "dimension": dimension}},
            "events": [
                {
                    "event_id": e.event_id,
                    "name": e.name,
                    "onset_date": e.onset_date,
                    "category": e.category.value,
                    "keywords": list(e.keywords),
                    **({"location_query": e.location_query} if e.location_query else {}),
                }
                for e in events
            ],
        }
        config_path = out / "config.yaml"
        config_path.write_text(yaml.safe_dump(payload, sort_keys=False), encoding="utf-8")
        print(f"wrote run config {config_path}")
    return 0


def _cmd_fetch(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    event = config.event(args.event)
    endpoint = config.gdelt.endpoint
    if endpoint is None:
        if not args.live:
            raise GdeltError(
                "no endpoint configured; pass --live to query the public GDELT API "
                "or set gdelt.endpoint / NEWSCYCLE_GDELT_ENDPOINT"
            )
        endpoint = DEFAULT_ENDPOINT
    query = build_query(event, max_records=config.gdelt.max_records)
    transport = RequestsTransport(min_interval=config.gdelt.min_interval)
    records = fetch_article_list(query, transport, endpoint=endpoint)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", encoding="utf-8") as handle:
        for record in to_ingest_records(records):
            handle.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")
    print(f"fetched {len(records)} records for {event.event_id} into {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="newscycle",
        description="News-cycle dynamics: volume, semantic drift, dispersion and term relevance.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, until, blurb in (
        ("ingest", "ingest", "ingest corpora into the output tree"),
        ("partition", "partition", "run through event/baseline partitioning"),
        ("signals", "signals", "run through per-event time series"),
        ("relevance", "relevance", "run through term relevance and phase reports"),
        ("aggregate", "aggregate", "run through category aggregation"),
        ("report", "aggregate", "produce tables, charts and the run summary"),
        ("run", "aggregate", "run the full pipeline end to end"),
    ):
        stage_parser = sub.add_parser(name, help=blurb)
        _add_config_arguments(stage_parser)
        stage_parser.add_argument(
            "--event",
            dest="events",
            action="append",
            default=None,
            metavar="EVENT_ID",
            help="restrict to this event id (repeatable; default: all events)",
        )
        stage_parser.set_defaults(func=lambda a, u=until: _cmd_stage(a, u))

    synth_parser = sub.add_parser("synth", help="generate synthetic corpora from a plan file")
    synth_parser.add_argument("--plan", required=True, help="plan YAML (one plan or plans: [...])")
    synth_parser.add_argument("--out", required=True, help="directory for generated corpora")
    synth_parser.add_argument(
        "--write-config", action="store_true", help="also write a ready-to-run config.yaml"
    )
    synth_parser.set_defaults(func=_cmd_synth)

    fetch_parser = sub.add_parser("fetch", help="fetch an event's article list from GDELT")
    _add_config_arguments(fetch_parser)
    fetch_parser.add_argument("--event", required=True, help="event id from the config")
    fetch_parser.add_argument("--out", required=True, help="output JSONL path")
    fetch_parser.add_argument(
        "--live", action="store_true", help="allow hitting the public GDELT endpoint"
    )
    fetch_parser.set_defaults(func=_cmd_fetch)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (ConfigError, CorpusError, GdeltError, PipelineError, SynthError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
