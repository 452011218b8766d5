"""The HTTP face of the system: a versioned REST API under /api/v1.

Every mutation delegates to the library operations, so no endpoint can
bypass domain invariants. Reports are rendered by ``chartloop.reports`` and
returned verbatim, which keeps API responses byte-identical to CLI output
for the same format. Long experiment runs execute as background jobs with a
polling status endpoint.
"""

from __future__ import annotations

import threading
import uuid
from pathlib import Path
from typing import Optional

from fastapi import Body, Depends, FastAPI, Header, HTTPException, Query, Response
from fastapi.middleware.cors import CORSMiddleware

from chartloop import reports
from chartloop.config import ACCEPTANCE_ROLES, Role, ServiceConfig, build_backend
from chartloop.core.caseio import serialize_case, serialize_rubric
from chartloop.core.rubric import Rubric
from chartloop.core.types import Case, Provenance, TranscriptTurn
from chartloop.errors import (
    BackendError,
    ChartloopError,
    ConfigError,
    Conflict,
    DataError,
    InvalidTransition,
    UnknownSession,
)
from chartloop.experiment import (
    ExperimentConfig,
    NoteGenerator,
    compare_versions,
    run_experiment,
)
from chartloop.gateway.client import GatewayClient
from chartloop.gateway.records import Stage, Vendor
from chartloop.ledger import FeedbackEntry, OutcomeTag, ProvenanceJudgment, Theme
from chartloop.pipeline.notes import render_note
from chartloop.pipeline.session import ControlAction, Session
from chartloop.core.caseio import _decode_turn  # shared turn decoding
from chartloop.rubric_engine import (
    KeywordJudgeBackend,
    finalize_rubric,
    generate_rubric,
    score_note,
    validate_rubric,
)
from chartloop.store import DataStore, UnknownObject

_MEDIA_TYPES = {"text": "text/plain", "csv": "text/csv", "json": "application/json"}


def _no_sleep(_: float) -> None:
    return None


class PipelineNoteGenerator:
    """Generates one note by running the full session pipeline over the
    case transcript with the configured vendor backend."""

    def __init__(self, config: ServiceConfig, store: DataStore, audit: bool = False):
        self._config = config
        self._store = store
        self._audit = audit

    def _backend(self, case: Case, vendor: Vendor):
        try:
            backend_config = self._config.backends[vendor]
        except KeyError:
            raise ConfigError(f"no backend configured for vendor {vendor.value}") from None
        if backend_config.script and "{case_id}" in backend_config.script:
            backend_config = type(backend_config)(
                vendor=backend_config.vendor,
                model_name=backend_config.model_name,
                script=backend_config.script.replace("{case_id}", case.id),
                endpoint=backend_config.endpoint,
                reasoning=backend_config.reasoning,
            )
        return build_backend(backend_config, base_dir=self._config.base_dir)

    def generate(self, case: Case, vendor: Vendor, seed: int) -> dict[str, str]:
        gateway = GatewayClient(
            self._backend(case, vendor),
            audit_log=self._store.audit_log if self._audit else None,
            seed=seed,
            sleeper=_no_sleep,
        )
        session = Session(
            f"note-{case.id}-{vendor.value}-{uuid.uuid4().hex[:8]}",
            case.longitudinal,
            gateway,
            seed=seed,
        )
        session.control(ControlAction.PLAY)
        session.feed_transcript(case.transcript)
        session.control(ControlAction.STOP)
        return render_note(session.command_set.values())


def create_app(config: ServiceConfig) -> FastAPI:
    store = DataStore(config.data_dir)
    app = FastAPI(title="chartloop", version="1.0")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    app.state.config = config
    app.state.store = store
    app.state.sessions: dict[str, Session] = {}
    app.state.jobs: dict[str, dict] = {}
    judge_backend = KeywordJudgeBackend()

    def judge_gateway(seed: Optional[int] = None) -> GatewayClient:
        return GatewayClient(judge_backend, audit_log=None, seed=seed, sleeper=_no_sleep)

    # -- plumbing ------------------------------------------------------------

    def require_role(authorization: Optional[str] = Header(default=None)) -> Role:
        token = None
        if authorization and authorization.lower().startswith("bearer "):
            token = authorization[7:]
        role = config.role_for(token)
        if role is None:
            raise HTTPException(status_code=401, detail="missing or unknown bearer token")
        return role

    @app.exception_handler(ChartloopError)
    async def _chartloop_error(request, exc: ChartloopError):
        from fastapi.responses import JSONResponse

        if isinstance(exc, (UnknownObject, UnknownSession)):
            status = 404
        elif isinstance(exc, (Conflict, InvalidTransition)):
            status = 409
        elif isinstance(exc, BackendError):
            status = 502
        elif isinstance(exc, ConfigError):
            status = 500
        elif isinstance(exc, DataError):
            status = 400
        else:
            status = 500
        return JSONResponse(
            status_code=status, content={"error": type(exc).__name__, "detail": str(exc)}
        )

    def rendered(payload: dict, fmt: str) -> Response:
        if fmt not in _MEDIA_TYPES:
            raise HTTPException(status_code=400, detail=f"unknown format {fmt!r}")
        return Response(content=reports.render(payload, fmt), media_type=_MEDIA_TYPES[fmt])

    # -- cases -----------------------------------------------------------------

    @app.get("/api/v1/cases")
    def list_cases(role: Role = Depends(require_role)):
        return {"cases": store.list_cases()}

    @app.post("/api/v1/cases", status_code=201)
    def import_case(
        document: dict = Body(...),
        overwrite: bool = Query(default=False),
        role: Role = Depends(require_role),
    ):
        case = store.import_case(document, overwrite=overwrite)
        return {"id": case.id}

    @app.get("/api/v1/cases/{case_id}")
    def get_case(case_id: str, role: Role = Depends(require_role)):
        return serialize_case(store.get_case(case_id))

    # -- notes -----------------------------------------------------------------

    @app.post("/api/v1/notes/generate", status_code=201)
    def generate_notes(payload: dict = Body(...), role: Role = Depends(require_role)):
        case = store.get_case(payload["case_id"])
        vendor = Vendor(payload.get("vendor", Vendor.VENDOR_A.value))
        count = int(payload.get("count", 1))
        seed = int(payload.get("seed", 0))
        generator = PipelineNoteGenerator(config, store, audit=True)
        notes = []
        for i in range(count):
            sections = generator.generate(case, vendor, seed + i)
            note_id = store.next_note_id(case.id, f"note-{vendor.value}")
            notes.append(
                store.save_note(
                    case.id, note_id, sections, meta={"vendor": vendor.value, "seed": seed + i}
                )
            )
        return {"notes": notes}

    @app.get("/api/v1/notes")
    def list_notes(case_id: str, role: Role = Depends(require_role)):
        return {"notes": store.list_notes(case_id)}

    # -- rubrics -----------------------------------------------------------------

    @app.get("/api/v1/rubrics")
    def list_rubrics(case_id: Optional[str] = None, role: Role = Depends(require_role)):
        return {"rubrics": [serialize_rubric(r) for r in store.list_rubrics(case_id)]}

    @app.post("/api/v1/rubrics", status_code=201)
    def create_rubric(document: dict = Body(...), role: Role = Depends(require_role)):
        from chartloop.core.caseio import parse_rubric

        doc = dict(document)
        doc.setdefault("id", f"rubric-{doc.get('case_id', 'unknown')}-{uuid.uuid4().hex[:8]}")
        rubric = parse_rubric(doc)
        store.get_case(rubric.case_id)  # must reference a known case
        store.save_rubric(rubric)
        return serialize_rubric(rubric)

    @app.get("/api/v1/rubrics/{rubric_id}")
    def get_rubric(rubric_id: str, role: Role = Depends(require_role)):
        return serialize_rubric(store.get_rubric(rubric_id))

    @app.post("/api/v1/rubrics/generate", status_code=201)
    def generate_rubric_endpoint(payload: dict = Body(...), role: Role = Depends(require_role)):
        case = store.get_case(payload["case_id"])
        generator = PipelineNoteGenerator(config, store)
        vendor = Vendor(payload.get("vendor", Vendor.VENDOR_A.value))
        gateway = GatewayClient(
            generator._backend(case, vendor), seed=payload.get("seed"), sleeper=_no_sleep
        )
        rubric = generate_rubric(
            case, gateway, rubric_id=f"rubric-{case.id}-gen-{uuid.uuid4().hex[:8]}"
        )
        store.save_rubric(rubric)
        return serialize_rubric(rubric)

    @app.post("/api/v1/rubrics/{rubric_id}/validate")
    def validate_rubric_endpoint(
        rubric_id: str, payload: dict = Body(...), role: Role = Depends(require_role)
    ):
        if role not in ACCEPTANCE_ROLES:
            raise HTTPException(
                status_code=403, detail="rubric acceptance requires reviewer or admin role"
            )
        rubric = store.get_rubric(rubric_id)
        case = store.get_case(rubric.case_id)
        best = store.get_note(rubric.case_id, payload["best_note_id"])
        worst = store.get_note(rubric.case_id, payload["worst_note_id"])
        result = validate_rubric(
            rubric,
            best["id"],
            best["sections"],
            worst["id"],
            worst["sections"],
            judge_gateway(payload.get("seed")),
            runs=int(payload.get("runs", 3)),
            seed=int(payload.get("seed", 0)),
            case=case,
        )
        store.save_rubric(finalize_rubric(rubric, result), overwrite=True)
        return result.as_dict()

    @app.post("/api/v1/rubrics/{rubric_id}/score")
    def score_note_endpoint(
        rubric_id: str, payload: dict = Body(...), role: Role = Depends(require_role)
    ):
        rubric = store.get_rubric(rubric_id)
        case = store.get_case(rubric.case_id)
        note = store.get_note(rubric.case_id, payload["note_id"])
        report = score_note(
            note["sections"],
            rubric,
            judge_gateway(payload.get("seed")),
            seed=payload.get("seed"),
            case=case,
            note_id=note["id"],
        )
        return report.as_dict()

    # -- experiments ----------------------------------------------------------------

    def _run_experiment_job(exp_config: ExperimentConfig) -> None:
        label = exp_config.version_label
        try:
            generator = PipelineNoteGenerator(config, store, audit=True)
            result = run_experiment(
                exp_config,
                generator,
                store.rubrics_by_case(),
                judge_gateway(exp_config.seed),
                {cid: store.get_case(cid) for cid in exp_config.case_ids},
            )
            store.save_experiment(result)
            app.state.jobs[label] = {"state": "done", "error": None}
        except Exception as exc:  # job boundary: surface via status endpoint
            app.state.jobs[label] = {"state": "failed", "error": str(exc)}

    @app.post("/api/v1/experiments/run", status_code=202)
    def run_experiment_endpoint(payload: dict = Body(...), role: Role = Depends(require_role)):
        exp_config = ExperimentConfig(
            version_label=payload["version_label"],
            case_ids=tuple(payload.get("case_ids") or store.list_cases()),
            notes_per_case_per_vendor=int(payload.get("notes_per_case_per_vendor", 5)),
            vendors=tuple(
                Vendor(v) for v in payload.get("vendors", ["vendor_a", "vendor_b"])
            ),
            seed=int(payload.get("seed", 0)),
        )
        label = exp_config.version_label
        app.state.jobs[label] = {"state": "running", "error": None}
        if payload.get("sync"):
            _run_experiment_job(exp_config)
        else:
            thread = threading.Thread(target=_run_experiment_job, args=(exp_config,), daemon=True)
            thread.start()
        return {"experiment_id": label, "status_url": f"/api/v1/experiments/{label}/status"}

    @app.get("/api/v1/experiments/{label}/status")
    def experiment_status(label: str, role: Role = Depends(require_role)):
        job = app.state.jobs.get(label)
        if job is None:
            if label in store.list_experiments():
                return {"experiment_id": label, "state": "done", "error": None}
            raise UnknownObject(f"no experiment {label!r}")
        return {"experiment_id": label, **job}

    @app.get("/api/v1/experiments/{label}")
    def get_experiment(label: str, role: Role = Depends(require_role)):
        return store.get_experiment(label).as_dict()

    @app.post("/api/v1/experiments/compare")
    def compare_endpoint(
        payload: dict = Body(...),
        format: str = Query(default="json"),
        role: Role = Depends(require_role),
    ):
        candidate = store.get_experiment(payload["candidate"])
        baseline = store.get_experiment(payload["baseline"])
        report = compare_versions(
            candidate, baseline, tolerance=float(payload.get("tolerance", 0.0))
        )
        return rendered(reports.comparison_payload(report.as_dict()), format)

    # -- ledgers -----------------------------------------------------------------

    @app.post("/api/v1/feedback", status_code=201)
    def record_feedback(payload: dict = Body(...), role: Role = Depends(require_role)):
        entry = FeedbackEntry(
            id=payload.get("id") or f"fb-{uuid.uuid4().hex[:12]}",
            timestamp=payload["timestamp"],
            free_text=payload.get("free_text", ""),
            themes=frozenset(Theme(t) for t in payload.get("themes", [])),
            outcome_tags=frozenset(OutcomeTag(t) for t in payload.get("outcome_tags", [])),
            linked_intervention=payload.get("linked_intervention"),
            supersedes=payload.get("supersedes"),
        )
        return {"id": store.ledger.record_feedback(entry)}

    @app.get("/api/v1/feedback")
    def list_feedback(role: Role = Depends(require_role)):
        return {"entries": [e.as_dict() for e in store.ledger.feedback_entries()]}

    @app.post("/api/v1/provenance", status_code=201)
    def record_judgment(payload: dict = Body(...), role: Role = Depends(require_role)):
        case = store.get_case(payload["case_id"])
        judgment = ProvenanceJudgment(
            id=payload.get("id") or f"pj-{uuid.uuid4().hex[:12]}",
            case_id=case.id,
            judge_id=payload["judge_id"],
            predicted=Provenance(payload["predicted"]),
            truth=case.provenance_truth,  # copied from the case record at write time
        )
        return {"id": store.ledger.record_judgment(judgment)}

    @app.get("/api/v1/provenance")
    def list_judgments(role: Role = Depends(require_role)):
        return {"judgments": [j.as_dict() for j in store.ledger.judgments()]}

    # -- reports -----------------------------------------------------------------

    def _all_stage_records(session_id: Optional[str] = None):
        audit = store.audit_log
        names = [session_id] if session_id else audit.sessions()
        records = []
        for name in names:
            records.extend(audit.stage_records(name))
        return records

    @app.get("/api/v1/reports/{name}")
    def report_endpoint(
        name: str,
        format: str = Query(default="text"),
        group_by: Optional[str] = Query(default=None),
        session_id: Optional[str] = Query(default=None),
        versions: Optional[int] = Query(default=None),
        role: Role = Depends(require_role),
    ):
        if name == "costs":
            payload = reports.costs_payload(store.cost_lines(), versions=versions)
        elif name == "latency":
            payload = reports.latency_payload(
                _all_stage_records(session_id), group_by=group_by or "stage"
            )
        elif name == "failures":
            payload = reports.failures_payload(
                _all_stage_records(session_id), group_by=group_by or "vendor"
            )
        elif name == "themes":
            payload = reports.themes_payload(store.ledger.feedback_entries())
        elif name == "temporal":
            payload = reports.temporal_payload(store.ledger.feedback_entries())
        elif name == "provenance":
            payload = reports.provenance_payload(store.ledger.judgments())
        else:
            raise HTTPException(status_code=404, detail=f"unknown report {name!r}")
        return rendered(payload, format)

    # -- sessions -----------------------------------------------------------------

    @app.post("/api/v1/sessions", status_code=201)
    def create_session(payload: dict = Body(...), role: Role = Depends(require_role)):
        case = store.get_case(payload["case_id"])
        session_id = payload.get("session_id") or f"session-{uuid.uuid4().hex[:8]}"
        if session_id in app.state.sessions:
            raise Conflict(f"session {session_id!r} already exists")
        generator = PipelineNoteGenerator(config, store)
        vendor = Vendor(payload.get("vendor", Vendor.VENDOR_A.value))
        gateway = GatewayClient(
            generator._backend(case, vendor),
            audit_log=store.audit_log,
            seed=payload.get("seed"),
            sleeper=_no_sleep,
        )
        app.state.sessions[session_id] = Session(
            session_id, case.longitudinal, gateway, seed=payload.get("seed")
        )
        return {"session_id": session_id, "state": "idle"}

    def _session(session_id: str) -> Session:
        session = app.state.sessions.get(session_id)
        if session is None:
            raise UnknownSession(f"no session {session_id!r}")
        return session

    @app.post("/api/v1/sessions/{session_id}/control")
    def control_session(
        session_id: str, payload: dict = Body(...), role: Role = Depends(require_role)
    ):
        session = _session(session_id)
        session.control(ControlAction(payload["action"]))
        return {"session_id": session_id, "state": session.control_state.value}

    @app.post("/api/v1/sessions/{session_id}/chunks")
    def ingest_chunk(
        session_id: str, payload: dict = Body(...), role: Role = Depends(require_role)
    ):
        session = _session(session_id)
        turns = tuple(
            _decode_turn(obj, i, strict=True) for i, obj in enumerate(payload["turns"])
        )
        round_ = session.ingest_chunk(turns)
        return {
            "round_index": round_.index,
            "detected": [i.uid for i in round_.detected],
            "commands": {
                uid: {"status": c.status.value, "revision": c.revision}
                for uid, c in session.command_set.items()
            },
        }

    @app.get("/api/v1/sessions/{session_id}")
    def session_state(session_id: str, role: Role = Depends(require_role)):
        session = _session(session_id)
        from chartloop.core.caseio import serialize_command

        return {
            "session_id": session_id,
            "state": session.control_state.value,
            "rounds": len(session.rounds),
            "commands": [serialize_command(c) for c in session.command_set.values()],
        }

    @app.get("/api/v1/sessions/{session_id}/audit")
    def audit_query_endpoint(
        session_id: str,
        stage: Optional[str] = Query(default=None),
        round: Optional[int] = Query(default=None),
        instruction_uid: Optional[str] = Query(default=None),
        role: Role = Depends(require_role),
    ):
        view = store.audit_log.query(
            session_id,
            stage=Stage(stage) if stage else None,
            round_index=round,
            instruction_uid=instruction_uid,
        )
        return {
            "tier": view.tier,
            "summaries": list(view.summaries),
            "stage_records": list(view.stage_records),
            "conversation": list(view.conversation),
        }

    # -- workbench static bundle -----------------------------------------------

    workbench_dist = Path(__file__).resolve().parents[2] / "frontend" / "dist"
    if workbench_dist.exists():
        from fastapi.staticfiles import StaticFiles

        app.mount("/workbench", StaticFiles(directory=workbench_dist, html=True), name="workbench")

    return app


def serve(config: ServiceConfig) -> None:
    """Run the service with uvicorn; raises ConfigError on a bad config."""
    import uvicorn

    app = create_app(config)
    uvicorn.run(app, host=config.host, port=config.port, log_level="info")
