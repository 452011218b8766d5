"""File-backed store for cases, rubrics, notes, and experiment results.

One JSON document per object under the data directory; ledgers and audit
logs live alongside. Every mutation revalidates through the core parsers,
so nothing reaches disk without passing the same invariants the library
enforces.
"""

from __future__ import annotations

import json
import threading
from pathlib import Path
from typing import Optional, Union

from chartloop.core.caseio import parse_case, parse_rubric, serialize_case, serialize_rubric
from chartloop.core.rubric import Rubric
from chartloop.core.types import Case
from chartloop.errors import Conflict, DataError, UnknownSession
from chartloop.experiment import ExperimentConfig, ExperimentResult, NoteScore, NoteFailure
from chartloop.gateway.audit import AuditLog
from chartloop.gateway.records import ErrorCategory, Vendor
from chartloop.ledger import GovernanceLedger
from chartloop.stats import DistributionStats
from chartloop.telemetry import CostCategory, CostLine


class UnknownObject(DataError):
    pass


def _read_json(path: Path) -> dict:
    return json.loads(path.read_text(encoding="utf-8"))


def _write_json(path: Path, doc: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8"
    )


def result_to_dict(result: ExperimentResult) -> dict:
    return result.as_dict()


def result_from_dict(doc: dict) -> ExperimentResult:
    manifest = doc["manifest"]
    config = ExperimentConfig(
        version_label=manifest["version_label"],
        case_ids=tuple(manifest["case_ids"]),
        notes_per_case_per_vendor=manifest["notes_per_case_per_vendor"],
        vendors=tuple(Vendor(v) for v in manifest["vendors"]),
        seed=manifest["seed"],
        rubric_aggregation=manifest.get("rubric_aggregation", "mean"),
    )
    scores = tuple(
        NoteScore(
            case_id=s["case_id"],
            vendor=Vendor(s["vendor"]),
            replicate=s["replicate"],
            score=s["score"],
        )
        for s in doc["scores"]
    )
    failures = tuple(
        NoteFailure(
            case_id=f["case_id"],
            vendor=Vendor(f["vendor"]),
            replicate=f["replicate"],
            category=ErrorCategory(f["category"]),
            detail=f.get("detail", ""),
        )
        for f in doc["failures"]
    )
    overall = DistributionStats(**doc["overall"])
    per_vendor = {Vendor(v): DistributionStats(**st) for v, st in doc["per_vendor"].items()}
    return ExperimentResult(
        version_label=doc["version_label"],
        config=config,
        scores=scores,
        failures=failures,
        overall=overall,
        per_vendor=per_vendor,
    )


class DataStore:
    def __init__(self, root: Union[str, Path]):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.ledger = GovernanceLedger(self.root / "ledger.ndjson")
        self.audit_log = AuditLog(self.root / "logs")
        self._lock = threading.Lock()

    # -- cases ---------------------------------------------------------------

    def _case_path(self, case_id: str) -> Path:
        return self.root / "cases" / f"{case_id}.json"

    def import_case(self, document: Union[str, bytes, dict], overwrite: bool = False) -> Case:
        case = parse_case(document)
        path = self._case_path(case.id)
        if path.exists() and not overwrite:
            raise Conflict(f"case {case.id!r} already exists")
        _write_json(path, serialize_case(case))
        return case

    def get_case(self, case_id: str) -> Case:
        path = self._case_path(case_id)
        if not path.exists():
            raise UnknownObject(f"no case {case_id!r}")
        return parse_case(_read_json(path))

    def list_cases(self) -> list[str]:
        folder = self.root / "cases"
        if not folder.exists():
            return []
        return sorted(p.stem for p in folder.glob("*.json"))

    # -- rubrics ---------------------------------------------------------------

    def _rubric_path(self, rubric_id: str) -> Path:
        return self.root / "rubrics" / f"{rubric_id}.json"

    def save_rubric(self, rubric: Rubric, overwrite: bool = False) -> Rubric:
        path = self._rubric_path(rubric.id)
        if path.exists() and not overwrite:
            raise Conflict(f"rubric {rubric.id!r} already exists")
        _write_json(path, serialize_rubric(rubric))
        return rubric

    def get_rubric(self, rubric_id: str) -> Rubric:
        path = self._rubric_path(rubric_id)
        if not path.exists():
            raise UnknownObject(f"no rubric {rubric_id!r}")
        return parse_rubric(_read_json(path))

    def list_rubrics(self, case_id: Optional[str] = None) -> list[Rubric]:
        folder = self.root / "rubrics"
        if not folder.exists():
            return []
        rubrics = [parse_rubric(_read_json(p)) for p in sorted(folder.glob("*.json"))]
        if case_id is not None:
            rubrics = [r for r in rubrics if r.case_id == case_id]
        return rubrics

    def rubrics_by_case(self) -> dict[str, list[Rubric]]:
        by_case: dict[str, list[Rubric]] = {}
        for rubric in self.list_rubrics():
            by_case.setdefault(rubric.case_id, []).append(rubric)
        return by_case

    # -- notes -----------------------------------------------------------------

    def _note_path(self, case_id: str, note_id: str) -> Path:
        return self.root / "notes" / case_id / f"{note_id}.json"

    def save_note(
        self, case_id: str, note_id: str, sections: dict[str, str], meta: Optional[dict] = None
    ) -> dict:
        doc = {"id": note_id, "case_id": case_id, "sections": sections, "meta": meta or {}}
        _write_json(self._note_path(case_id, note_id), doc)
        return doc

    def get_note(self, case_id: str, note_id: str) -> dict:
        path = self._note_path(case_id, note_id)
        if not path.exists():
            raise UnknownObject(f"no note {note_id!r} for case {case_id!r}")
        return _read_json(path)

    def list_notes(self, case_id: str) -> list[dict]:
        folder = self.root / "notes" / case_id
        if not folder.exists():
            return []
        return [_read_json(p) for p in sorted(folder.glob("*.json"))]

    def next_note_id(self, case_id: str, prefix: str) -> str:
        existing = {n["id"] for n in self.list_notes(case_id)}
        i = 1
        while f"{prefix}-{i:03d}" in existing:
            i += 1
        return f"{prefix}-{i:03d}"

    # -- experiments -------------------------------------------------------------

    def _experiment_path(self, label: str) -> Path:
        return self.root / "experiments" / f"{label}.json"

    def save_experiment(self, result: ExperimentResult, overwrite: bool = True) -> None:
        path = self._experiment_path(result.version_label)
        if path.exists() and not overwrite:
            raise Conflict(f"experiment {result.version_label!r} already exists")
        _write_json(path, result_to_dict(result))
        (self.root / "experiments" / f"{result.version_label}.csv").write_text(
            result.to_csv(), encoding="utf-8"
        )

    def get_experiment(self, label: str) -> ExperimentResult:
        path = self._experiment_path(label)
        if not path.exists():
            raise UnknownObject(f"no experiment {label!r}")
        return result_from_dict(_read_json(path))

    def list_experiments(self) -> list[str]:
        folder = self.root / "experiments"
        if not folder.exists():
            return []
        return sorted(p.stem for p in folder.glob("*.json"))

    # -- cost lines ----------------------------------------------------------------

    def add_cost_line(self, line: CostLine) -> None:
        path = self.root / "costs.ndjson"
        with self._lock, path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(line.as_dict(), sort_keys=True) + "\n")

    def cost_lines(self) -> list[CostLine]:
        path = self.root / "costs.ndjson"
        if not path.exists():
            return []
        lines = []
        with path.open(encoding="utf-8") as fh:
            for raw in fh:
                if not raw.strip():
                    continue
                doc = json.loads(raw)
                lines.append(
                    CostLine(
                        category=CostCategory(doc["category"]),
                        usd_micro=doc["usd_micro"],
                        hours=doc.get("hours", 0.0),
                        source=doc.get("source", ""),
                        version_label=doc.get("version_label"),
                    )
                )
        return lines
