"""Command line for offline and batch governance operations.

Exit codes: 0 success, 1 usage error, 2 data error, 3 backend error.
Report output is rendered by the same functions the HTTP API uses, so a CLI
report equals the API response for the same format, byte for byte.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from chartloop import reports
from chartloop.config import ServiceConfig, load_config
from chartloop.errors import BackendError, ChartloopError, DataError
from chartloop.experiment import ExperimentConfig, compare_versions, run_experiment
from chartloop.gateway.client import GatewayClient
from chartloop.gateway.records import Vendor
from chartloop.pipeline.notes import note_text, render_note
from chartloop.pipeline.session import ControlAction, Session
from chartloop.rubric_engine import (
    KeywordJudgeBackend,
    finalize_rubric,
    score_note,
    validate_rubric,
)
from chartloop.store import DataStore


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would exit(2); we want exit 1
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _build_parser() -> _Parser:
    parser = _Parser(prog="chartloop", description="documentation-agent governance harness")
    parser.add_argument("--data-dir", default=None, help="override the data directory")
    parser.add_argument("--config", default=None, help="service config file (chartloop-config/1)")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("ingest", help="import case files into the data directory")
    p.add_argument("files", nargs="+")
    p.add_argument("--overwrite", action="store_true")

    p = sub.add_parser("run-session", help="run the full pipeline over a stored case")
    p.add_argument("--case", required=True)
    p.add_argument("--vendor", default=Vendor.VENDOR_A.value)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("score", help="score a stored note against a rubric")
    p.add_argument("--rubric", required=True)
    p.add_argument("--note", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", default="json", choices=["json", "text"])

    p = sub.add_parser("validate-rubric", help="run the best/worst separation rule")
    p.add_argument("--rubric", required=True)
    p.add_argument("--best", required=True)
    p.add_argument("--worst", required=True)
    p.add_argument("--runs", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)

    exp = sub.add_parser("experiment", help="benchmark runs and version gating")
    exp_sub = exp.add_subparsers(dest="experiment_command")
    p = exp_sub.add_parser("run")
    p.add_argument("--version-label", required=True)
    p.add_argument("--cases", default=None, help="comma-separated case ids (default: all)")
    p.add_argument("--replicates", type=int, default=5)
    p.add_argument("--vendors", default="vendor_a,vendor_b")
    p.add_argument("--seed", type=int, default=0)
    p = exp_sub.add_parser("compare")
    p.add_argument("candidate")
    p.add_argument("baseline")
    p.add_argument("--tolerance", type=float, default=0.0)
    p.add_argument("--format", default="text", choices=list(reports.FORMATS))

    p = sub.add_parser("report", help="governance reports")
    p.add_argument(
        "name",
        choices=["costs", "latency", "failures", "feedback", "themes", "temporal", "provenance"],
    )
    p.add_argument("--format", default="text", choices=list(reports.FORMATS))
    p.add_argument("--group-by", default=None)
    p.add_argument("--session-id", default=None)
    p.add_argument("--versions", type=int, default=None)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default=None)
    p.add_argument("--port", type=int, default=None)
    return parser


def _load_service_config(args) -> ServiceConfig:
    if args.config:
        config = load_config(args.config)
    else:
        config = load_config({"data_dir": args.data_dir or "data"})
    if args.data_dir:
        config = ServiceConfig(
            data_dir=Path(args.data_dir),
            tokens=config.tokens,
            backends=config.backends,
            fixtures_dir=config.fixtures_dir,
            price_table=config.price_table,
            host=config.host,
            port=config.port,
            base_dir=config.base_dir,
        )
    return config


def _judge(seed: Optional[int]) -> GatewayClient:
    return GatewayClient(KeywordJudgeBackend(), seed=seed, sleeper=lambda _: None)


def _cmd_ingest(args, config: ServiceConfig) -> int:
    store = DataStore(config.data_dir)
    for name in args.files:
        case = store.import_case(Path(name).read_text(encoding="utf-8"), overwrite=args.overwrite)
        print(f"imported {case.id} ({len(case.transcript)} turns)")
    return 0


def _cmd_run_session(args, config: ServiceConfig) -> int:
    from chartloop.service import PipelineNoteGenerator

    store = DataStore(config.data_dir)
    case = store.get_case(args.case)
    generator = PipelineNoteGenerator(config, store, audit=True)
    gateway = GatewayClient(
        generator._backend(case, Vendor(args.vendor)),
        audit_log=store.audit_log,
        seed=args.seed,
        sleeper=lambda _: None,
    )
    session = Session(f"cli-{case.id}-{args.seed}", case.longitudinal, gateway, seed=args.seed)
    session.control(ControlAction.PLAY)
    session.feed_transcript(case.transcript)
    session.control(ControlAction.STOP)
    print(f"session {session.id}: {len(session.rounds)} rounds, {len(session.command_set)} commands")
    for uid, command in session.command_set.items():
        print(f"  {uid} {command.command_type.value} rev{command.revision} {command.status.value}")
    print()
    print(note_text(render_note(session.command_set.values())))
    return 0


def _cmd_score(args, config: ServiceConfig) -> int:
    store = DataStore(config.data_dir)
    rubric = store.get_rubric(args.rubric)
    note = store.get_note(rubric.case_id, args.note)
    case = store.get_case(rubric.case_id)
    report = score_note(
        note["sections"], rubric, _judge(args.seed), seed=args.seed, case=case, note_id=note["id"]
    )
    if args.format == "text":
        print(f"{note['id']} vs {rubric.id}: {report.score:.1f}")
    else:
        print(json.dumps(report.as_dict(), indent=2, sort_keys=True))
    return 0


def _cmd_validate_rubric(args, config: ServiceConfig) -> int:
    store = DataStore(config.data_dir)
    rubric = store.get_rubric(args.rubric)
    case = store.get_case(rubric.case_id)
    best = store.get_note(rubric.case_id, args.best)
    worst = store.get_note(rubric.case_id, args.worst)
    result = validate_rubric(
        rubric,
        best["id"],
        best["sections"],
        worst["id"],
        worst["sections"],
        _judge(args.seed),
        runs=args.runs,
        seed=args.seed,
        case=case,
    )
    store.save_rubric(finalize_rubric(rubric, result), overwrite=True)
    print(json.dumps(result.as_dict(), indent=2, sort_keys=True))
    return 0


def _cmd_experiment_run(args, config: ServiceConfig) -> int:
    from chartloop.service import PipelineNoteGenerator

    store = DataStore(config.data_dir)
    case_ids = tuple(args.cases.split(",")) if args.cases else tuple(store.list_cases())
    exp_config = ExperimentConfig(
        version_label=args.version_label,
        case_ids=case_ids,
        notes_per_case_per_vendor=args.replicates,
        vendors=tuple(Vendor(v) for v in args.vendors.split(",")),
        seed=args.seed,
    )
    generator = PipelineNoteGenerator(config, store, audit=True)
    result = run_experiment(
        exp_config,
        generator,
        store.rubrics_by_case(),
        _judge(args.seed),
        {cid: store.get_case(cid) for cid in case_ids},
    )
    store.save_experiment(result)
    stats = result.overall
    print(
        f"{result.version_label}: n={stats.n} median={stats.median:.1f} "
        f"q1={stats.q1:.1f} q3={stats.q3:.1f} std={stats.std_dev:.1f} "
        f"failures={len(result.failures)}"
    )
    return 0


def _cmd_experiment_compare(args, config: ServiceConfig) -> int:
    store = DataStore(config.data_dir)
    report = compare_versions(
        store.get_experiment(args.candidate),
        store.get_experiment(args.baseline),
        tolerance=args.tolerance,
    )
    sys.stdout.write(reports.render(reports.comparison_payload(report.as_dict()), args.format))
    return 0


def _cmd_report(args, config: ServiceConfig) -> int:
    store = DataStore(config.data_dir)
    name = args.name
    if name == "costs":
        payload = reports.costs_payload(store.cost_lines(), versions=args.versions)
    elif name == "latency":
        records = _stage_records(store, args.session_id)
        payload = reports.latency_payload(records, group_by=args.group_by or "stage")
    elif name == "failures":
        records = _stage_records(store, args.session_id)
        payload = reports.failures_payload(records, group_by=args.group_by or "vendor")
    elif name in ("feedback", "themes"):
        payload = reports.themes_payload(store.ledger.feedback_entries())
    elif name == "temporal":
        payload = reports.temporal_payload(store.ledger.feedback_entries())
    else:
        payload = reports.provenance_payload(store.ledger.judgments())
    sys.stdout.write(reports.render(payload, args.format))
    return 0


def _stage_records(store: DataStore, session_id: Optional[str]):
    names = [session_id] if session_id else store.audit_log.sessions()
    records = []
    for name in names:
        records.extend(store.audit_log.stage_records(name))
    return records


def _cmd_serve(args, config: ServiceConfig) -> int:
    from chartloop.service import serve

    if args.host or args.port:
        config = ServiceConfig(
            data_dir=config.data_dir,
            tokens=config.tokens,
            backends=config.backends,
            fixtures_dir=config.fixtures_dir,
            price_table=config.price_table,
            host=args.host or config.host,
            port=args.port or config.port,
            base_dir=config.base_dir,
        )
    serve(config)
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_usage())
        config = _load_service_config(args)
        if args.command == "ingest":
            return _cmd_ingest(args, config)
        if args.command == "run-session":
            return _cmd_run_session(args, config)
        if args.command == "score":
            return _cmd_score(args, config)
        if args.command == "validate-rubric":
            return _cmd_validate_rubric(args, config)
        if args.command == "experiment":
            if args.experiment_command == "run":
                return _cmd_experiment_run(args, config)
            if args.experiment_command == "compare":
                return _cmd_experiment_compare(args, config)
            raise UsageError("experiment needs a subcommand: run or compare")
        if args.command == "report":
            return _cmd_report(args, config)
        if args.command == "serve":
            return _cmd_serve(args, config)
        raise UsageError(f"unknown command {args.command!r}")
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return 3
    except (DataError, ChartloopError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
