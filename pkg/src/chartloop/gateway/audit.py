"""Tiered, append-only audit logging.

Three record streams per session, one directory each under the log root:

- ``summary.ndjson``       per-cycle (processing round) summaries
- ``stages.ndjson``        per-stage request/response records
- ``instructions/<uid>.ndjson``  per-instruction conversation histories

Cycle summaries are computed from the stage records already written, so
their duration and token totals equal the stage-record sums by construction.
Appends are serialized per session; records are immutable once written and
serialized with sorted keys so identical runs produce identical bytes.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from chartloop.errors import UnknownSession
from chartloop.gateway.records import CallRecord, Stage


def _dump(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, ensure_ascii=False)


@dataclass
class _RoundAccumulator:
    duration_ms: int = 0
    input_tokens: int = 0
    output_tokens: int = 0
    stage_calls: int = 0


@dataclass(frozen=True)
class AuditView:
    """Records at the most granular tier matching an audit query."""

    tier: str  # "summary" | "stage" | "instruction"
    summaries: tuple[dict, ...] = ()
    stage_records: tuple[dict, ...] = ()
    conversation: tuple[dict, ...] = ()


class AuditLog:
    """Append-only session logs under a root directory."""

    def __init__(self, root: Path | str):
        self.root = Path(root)
        self._locks: dict[str, threading.Lock] = {}
        self._rounds: dict[tuple[str, int], _RoundAccumulator] = {}
        self._global_lock = threading.Lock()

    def _lock_for(self, session_id: str) -> threading.Lock:
        with self._global_lock:
            return self._locks.setdefault(session_id, threading.Lock())

    def _session_dir(self, session_id: str, create: bool = False) -> Path:
        path = self.root / session_id
        if create:
            path.mkdir(parents=True, exist_ok=True)
        return path

    # -- writes ------------------------------------------------------------

    def record_stage_call(
        self,
        record: CallRecord,
        prompt: str,
        response_text: Optional[str],
    ) -> None:
        """Tier 2: one row per gateway call, written whatever the outcome."""
        with self._lock_for(record.session_id):
            session = self._session_dir(record.session_id, create=True)
            row = {"type": "stage", "prompt": prompt, "response": response_text, "record": record.as_dict()}
            with (session / "stages.ndjson").open("a", encoding="utf-8") as fh:
                fh.write(_dump(row) + "\n")
            acc = self._rounds.setdefault(
                (record.session_id, record.round_index), _RoundAccumulator()
            )
            acc.duration_ms += record.latency_ms
            acc.input_tokens += record.input_tokens
            acc.output_tokens += record.output_tokens
            acc.stage_calls += 1
            if record.instruction_uid:
                self._append_conversation(
                    session,
                    record.instruction_uid,
                    {
                        "type": "exchange",
                        "round_index": record.round_index,
                        "stage": record.stage.value,
                        "prompt": prompt,
                        "response": response_text,
                        "outcome": record.outcome.value,
                    },
                )

    def _append_conversation(self, session: Path, uid: str, row: dict) -> None:
        inst_dir = session / "instructions"
        inst_dir.mkdir(exist_ok=True)
        with (inst_dir / f"{uid}.ndjson").open("a", encoding="utf-8") as fh:
            fh.write(_dump(row) + "\n")

    def write_cycle_summary(self, session_id: str, round_index: int) -> dict:
        """Tier 1: aggregate the round's stage records into one summary row."""
        with self._lock_for(session_id):
            session = self._session_dir(session_id, create=True)
            acc = self._rounds.get((session_id, round_index), _RoundAccumulator())
            row = {
                "type": "cycle_summary",
                "session_id": session_id,
                "round_index": round_index,
                "duration_ms": acc.duration_ms,
                "input_tokens": acc.input_tokens,
                "output_tokens": acc.output_tokens,
                "stage_calls": acc.stage_calls,
            }
            with (session / "summary.ndjson").open("a", encoding="utf-8") as fh:
                fh.write(_dump(row) + "\n")
            return row

    # -- reads -------------------------------------------------------------

    def _read_ndjson(self, path: Path) -> list[dict]:
        if not path.exists():
            return []
        with path.open(encoding="utf-8") as fh:
            return [json.loads(line) for line in fh if line.strip()]

    def sessions(self) -> list[str]:
        if not self.root.exists():
            return []
        return sorted(p.name for p in self.root.iterdir() if p.is_dir())

    def stage_records(self, session_id: str) -> list[CallRecord]:
        rows = self._read_ndjson(self._session_dir(session_id) / "stages.ndjson")
        return [CallRecord.from_dict(row["record"]) for row in rows]

    def query(
        self,
        session_id: str,
        stage: Optional[Stage] = None,
        round_index: Optional[int] = None,
        instruction_uid: Optional[str] = None,
    ) -> AuditView:
        """Return records at the most granular tier matching the filter."""
        session = self._session_dir(session_id)
        if not session.exists():
            raise UnknownSession(f"no audit logs for session {session_id!r}")
        if instruction_uid is not None:
            conv = self._read_ndjson(session / "instructions" / f"{instruction_uid}.ndjson")
            return AuditView(tier="instruction", conversation=tuple(conv))
        stage_rows = self._read_ndjson(session / "stages.ndjson")
        summaries = self._read_ndjson(session / "summary.ndjson")
        if round_index is not None:
            stage_rows = [r for r in stage_rows if r["record"]["round_index"] == round_index]
            summaries = [s for s in summaries if s["round_index"] == round_index]
        if stage is not None:
            stage_rows = [r for r in stage_rows if r["record"]["stage"] == stage.value]
            return AuditView(tier="stage", stage_records=tuple(stage_rows))
        if round_index is not None:
            return AuditView(
                tier="stage", summaries=tuple(summaries), stage_records=tuple(stage_rows)
            )
        return AuditView(tier="summary", summaries=tuple(summaries))
