"""Append-only governance ledgers: live feedback and provenance judgments.

Storage is an embedded event log (newline-delimited JSON on disk, or in
memory) with snapshot export; replaying a log reconstructs identical state.
Entries are immutable; corrections append superseding records.

Feedback analytics follow the published taxonomies: five feedback themes
and six investigation outcomes. For temporal composition, entries with a
model-failure theme count as error reports and SystemStrength entries as
positive observations; workflow/session-control entries are interface
feedback, counted in neither bucket (this is what makes an "other" share
possible at all, since every entry must carry at least one theme).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

from chartloop.core.types import Provenance
from chartloop.errors import Conflict, EmptyInput, SchemaViolation


class Theme(Enum):
    COMMAND_GENERATION_FAILURE = "command_generation_failure"
    SPEAKER_MISATTRIBUTION = "speaker_misattribution"
    GRANULARITY_MISMATCH = "granularity_mismatch"
    WORKFLOW_SESSION_CONTROL = "workflow_session_control"
    SYSTEM_STRENGTH = "system_strength"


class OutcomeTag(Enum):
    IMPROVEMENT_MADE = "improvement_made"
    CUSTOMER_INPUT_REQUESTED = "customer_input_requested"
    CUSTOMER_EDUCATION = "customer_education"
    FEATURE_REQUEST_CREATED = "feature_request_created"
    INVESTIGATION_ISSUE_CREATED = "investigation_issue_created"
    CUSTOMIZATION_REQUEST = "customization_request"


ERROR_THEMES = frozenset(
    {
        Theme.COMMAND_GENERATION_FAILURE,
        Theme.SPEAKER_MISATTRIBUTION,
        Theme.GRANULARITY_MISMATCH,
    }
)
POSITIVE_THEMES = frozenset({Theme.SYSTEM_STRENGTH})


def _parse_timestamp(value: Union[str, datetime]) -> datetime:
    if isinstance(value, datetime):
        ts = value
    else:
        try:
            ts = datetime.fromisoformat(value.replace("Z", "+00:00"))
        except ValueError as exc:
            raise SchemaViolation(f"bad timestamp {value!r}", "timestamp") from exc
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


@dataclass(frozen=True)
class FeedbackEntry:
    id: str
    timestamp: datetime
    free_text: str
    themes: frozenset[Theme]
    outcome_tags: frozenset[OutcomeTag] = frozenset()
    linked_intervention: Optional[str] = None
    supersedes: Optional[str] = None

    def __post_init__(self) -> None:
        if not self.id:
            raise SchemaViolation("feedback id must be non-empty", "id")
        if not self.themes:
            raise SchemaViolation("feedback needs at least one theme", "themes")
        object.__setattr__(self, "timestamp", _parse_timestamp(self.timestamp))
        object.__setattr__(self, "themes", frozenset(self.themes))
        object.__setattr__(self, "outcome_tags", frozenset(self.outcome_tags))

    def as_dict(self) -> dict:
        return {
            "kind": "feedback",
            "id": self.id,
            "timestamp": self.timestamp.isoformat(),
            "free_text": self.free_text,
            "themes": sorted(t.value for t in self.themes),
            "outcome_tags": sorted(t.value for t in self.outcome_tags),
            "linked_intervention": self.linked_intervention,
            "supersedes": self.supersedes,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "FeedbackEntry":
        return cls(
            id=doc["id"],
            timestamp=_parse_timestamp(doc["timestamp"]),
            free_text=doc.get("free_text", ""),
            themes=frozenset(Theme(t) for t in doc.get("themes", [])),
            outcome_tags=frozenset(OutcomeTag(t) for t in doc.get("outcome_tags", [])),
            linked_intervention=doc.get("linked_intervention"),
            supersedes=doc.get("supersedes"),
        )


@dataclass(frozen=True)
class ProvenanceJudgment:
    """A blinded real-vs-synthetic classification of one case."""

    id: str
    case_id: str
    judge_id: str
    predicted: Provenance
    truth: Provenance

    def __post_init__(self) -> None:
        if not self.id or not self.case_id or not self.judge_id:
            raise SchemaViolation("judgment ids must be non-empty", "id")

    @property
    def correct(self) -> bool:
        return self.predicted is self.truth

    def as_dict(self) -> dict:
        return {
            "kind": "judgment",
            "id": self.id,
            "case_id": self.case_id,
            "judge_id": self.judge_id,
            "predicted": self.predicted.value,
            "truth": self.truth.value,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ProvenanceJudgment":
        return cls(
            id=doc["id"],
            case_id=doc["case_id"],
            judge_id=doc["judge_id"],
            predicted=Provenance(doc["predicted"]),
            truth=Provenance(doc["truth"]),
        )


class GovernanceLedger:
    """Single-writer append-only store for feedback and judgments."""

    def __init__(self, path: Optional[Union[str, Path]] = None):
        self.path = Path(path) if path else None
        self._feedback: dict[str, FeedbackEntry] = {}
        self._judgments: dict[str, ProvenanceJudgment] = {}
        if self.path is not None and self.path.exists():
            self._replay(self.path)

    def _replay(self, path: Path) -> None:
        with path.open(encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                doc = json.loads(line)
                if doc["kind"] == "feedback":
                    entry = FeedbackEntry.from_dict(doc)
                    self._feedback[entry.id] = entry
                elif doc["kind"] == "judgment":
                    judgment = ProvenanceJudgment.from_dict(doc)
                    self._judgments[judgment.id] = judgment

    def _append(self, doc: dict) -> None:
        if self.path is None:
            return
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with self.path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(doc, sort_keys=True, ensure_ascii=False) + "\n")

    def record_feedback(self, entry: FeedbackEntry) -> str:
        if entry.id in self._feedback:
            raise Conflict(f"feedback entry {entry.id!r} already recorded")
        if entry.supersedes is not None and entry.supersedes not in self._feedback:
            raise SchemaViolation(
                f"supersedes unknown entry {entry.supersedes!r}", "supersedes"
            )
        self._feedback[entry.id] = entry
        self._append(entry.as_dict())
        return entry.id

    def record_judgment(self, judgment: ProvenanceJudgment) -> str:
        if judgment.id in self._judgments:
            raise Conflict(f"judgment {judgment.id!r} already recorded")
        self._judgments[judgment.id] = judgment
        self._append(judgment.as_dict())
        return judgment.id

    def feedback_entries(self) -> list[FeedbackEntry]:
        """Entries in insertion order, superseded records excluded."""
        superseded = {e.supersedes for e in self._feedback.values() if e.supersedes}
        return [e for e in self._feedback.values() if e.id not in superseded]

    def judgments(self) -> list[ProvenanceJudgment]:
        return list(self._judgments.values())

    def export_snapshot(self) -> str:
        lines = [json.dumps(e.as_dict(), sort_keys=True, ensure_ascii=False) for e in self._feedback.values()]
        lines += [json.dumps(j.as_dict(), sort_keys=True, ensure_ascii=False) for j in self._judgments.values()]
        return "\n".join(lines) + ("\n" if lines else "")

    @classmethod
    def import_snapshot(cls, text: str, path: Optional[Union[str, Path]] = None) -> "GovernanceLedger":
        ledger = cls(path)
        for line in text.splitlines():
            if not line.strip():
                continue
            doc = json.loads(line)
            if doc["kind"] == "feedback":
                ledger.record_feedback(FeedbackEntry.from_dict(doc))
            elif doc["kind"] == "judgment":
                ledger.record_judgment(ProvenanceJudgment.from_dict(doc))
        return ledger


# ---------------------------------------------------------------------------
# analytics


@dataclass(frozen=True)
class ThemeRow:
    theme: Theme
    count: int
    pct_of_entries: float


def theme_distribution(entries: Sequence[FeedbackEntry]) -> list[ThemeRow]:
    """Per-theme counts and percentages of all entries.

    Each entry counts at most once per theme; because entries may carry
    several themes, percentages can sum past 100.
    """
    if not entries:
        raise EmptyInput("no feedback entries")
    n = len(entries)
    rows = []
    for theme in Theme:
        count = sum(1 for e in entries if theme in e.themes)
        rows.append(ThemeRow(theme=theme, count=count, pct_of_entries=100.0 * count / n))
    return rows


@dataclass(frozen=True)
class CompositionRow:
    bucket: str  # YYYY-MM, UTC
    n: int
    error_pct: float
    positive_pct: float
    other_pct: float


def temporal_composition(entries: Sequence[FeedbackEntry]) -> list[CompositionRow]:
    """Monthly composition shift: error vs positive vs other shares.

    An entry carrying both error and positive themes counts in both; the
    other share counts entries with neither (workflow/session-control
    feedback). Buckets are UTC calendar months.
    """
    if not entries:
        raise EmptyInput("no feedback entries")
    buckets: dict[str, list[FeedbackEntry]] = {}
    for entry in entries:
        buckets.setdefault(entry.timestamp.strftime("%Y-%m"), []).append(entry)
    rows = []
    for bucket in sorted(buckets):
        group = buckets[bucket]
        n = len(group)
        errors = sum(1 for e in group if e.themes & ERROR_THEMES)
        positives = sum(1 for e in group if e.themes & POSITIVE_THEMES)
        others = sum(
            1 for e in group if not (e.themes & ERROR_THEMES) and not (e.themes & POSITIVE_THEMES)
        )
        rows.append(
            CompositionRow(
                bucket=bucket,
                n=n,
                error_pct=100.0 * errors / n,
                positive_pct=100.0 * positives / n,
                other_pct=100.0 * others / n,
            )
        )
    return rows


def _pct(numerator: int, denominator: int) -> float:
    # A sensitivity over an absent class reports 0 rather than dividing by zero.
    return 100.0 * numerator / denominator if denominator else 0.0


@dataclass(frozen=True)
class ProvenanceMatrix:
    """Confusion matrix with Real as the positive class."""

    tp: int  # real predicted real
    fn: int  # real predicted synthetic
    fp: int  # synthetic predicted real
    tn: int  # synthetic predicted synthetic

    @property
    def n(self) -> int:
        return self.tp + self.fn + self.fp + self.tn

    @property
    def accuracy(self) -> float:
        return _pct(self.tp + self.tn, self.n)

    @property
    def sensitivity_real(self) -> float:
        return _pct(self.tp, self.tp + self.fn)

    @property
    def sensitivity_synthetic(self) -> float:
        return _pct(self.tn, self.tn + self.fp)

    @property
    def balanced_accuracy(self) -> float:
        return (self.sensitivity_real + self.sensitivity_synthetic) / 2.0

    def as_dict(self) -> dict:
        return {
            "tp": self.tp,
            "fn": self.fn,
            "fp": self.fp,
            "tn": self.tn,
            "n": self.n,
            "accuracy": self.accuracy,
            "balanced_accuracy": self.balanced_accuracy,
            "sensitivity_real": self.sensitivity_real,
            "sensitivity_synthetic": self.sensitivity_synthetic,
        }


def provenance_matrix(judgments: Iterable[ProvenanceJudgment]) -> ProvenanceMatrix:
    tp = fn = fp = tn = 0
    for j in judgments:
        if j.truth is Provenance.REAL_WORLD:
            if j.predicted is Provenance.REAL_WORLD:
                tp += 1
            else:
                fn += 1
        else:
            if j.predicted is Provenance.REAL_WORLD:
                fp += 1
            else:
                tn += 1
    matrix = ProvenanceMatrix(tp=tp, fn=fn, fp=fp, tn=tn)
    if matrix.n == 0:
        raise EmptyInput("no provenance judgments")
    return matrix
