"""Benchmark runs and the version gate.

A run generates notes per (case, vendor, replicate), scores each against
every accepted rubric for its case, and aggregates distribution statistics.
Version comparison gates deployment on median non-inferiority: a candidate
deploys iff its median score has not dropped by more than the tolerance.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import platform
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Mapping, Optional, Protocol, Sequence, Union

from chartloop.core.rubric import Rubric, RubricStatus
from chartloop.core.types import Case
from chartloop.errors import (
    BackendError,
    CaseSetMismatch,
    DomainError,
    EmptyBenchmark,
    SchemaViolation,
)
from chartloop.gateway.client import GatewayClient
from chartloop.gateway.records import ErrorCategory, Vendor
from chartloop.rubric_engine import score_note
from chartloop.stats import DistributionStats, distribution_stats

EXPERIMENT_FORMAT = "chartloop-exp/1"

RESULT_COLUMNS = ("case_id", "vendor", "replicate", "score", "failure_category")


def derive_seed(base: int, *parts: object) -> int:
    """Stable per-unit seed so runs reproduce regardless of scheduling."""
    digest = hashlib.sha256(repr((base,) + parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


class NoteGenerator(Protocol):
    """Produces one candidate note for a case under a given vendor."""

    def generate(self, case: Case, vendor: Vendor, seed: int) -> Mapping[str, str]: ...


@dataclass(frozen=True)
class ExperimentConfig:
    version_label: str
    case_ids: tuple[str, ...]
    notes_per_case_per_vendor: int = 5
    vendors: tuple[Vendor, ...] = (Vendor.VENDOR_A, Vendor.VENDOR_B)
    seed: int = 0
    rubric_aggregation: str = "mean"  # mean | min | median

    def __post_init__(self) -> None:
        if self.notes_per_case_per_vendor < 1:
            raise SchemaViolation("notes_per_case_per_vendor must be >= 1")
        if not self.version_label:
            raise SchemaViolation("version_label must be non-empty")
        if self.rubric_aggregation not in ("mean", "min", "median"):
            raise SchemaViolation(f"unknown aggregation {self.rubric_aggregation!r}")

    def manifest(self) -> dict:
        return {
            "format": EXPERIMENT_FORMAT,
            "version_label": self.version_label,
            "case_ids": list(self.case_ids),
            "notes_per_case_per_vendor": self.notes_per_case_per_vendor,
            "vendors": [v.value for v in self.vendors],
            "seed": self.seed,
            "rubric_aggregation": self.rubric_aggregation,
            "environment": {
                "python": platform.python_version(),
                "platform": platform.platform(),
            },
        }


@dataclass(frozen=True)
class NoteScore:
    case_id: str
    vendor: Vendor
    replicate: int
    score: float


@dataclass(frozen=True)
class NoteFailure:
    case_id: str
    vendor: Vendor
    replicate: int
    category: ErrorCategory
    detail: str = ""


@dataclass(frozen=True)
class ExperimentResult:
    version_label: str
    config: ExperimentConfig
    scores: tuple[NoteScore, ...]
    failures: tuple[NoteFailure, ...]
    overall: DistributionStats
    per_vendor: dict[Vendor, DistributionStats]

    @property
    def attempt_count(self) -> int:
        return len(self.scores) + len(self.failures)

    def case_means(self) -> dict[str, float]:
        sums: dict[str, list[float]] = {}
        for s in self.scores:
            sums.setdefault(s.case_id, []).append(s.score)
        return {cid: sum(v) / len(v) for cid, v in sums.items()}

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(RESULT_COLUMNS)
        for s in self.scores:
            writer.writerow([s.case_id, s.vendor.value, s.replicate, f"{s.score:.6f}", ""])
        for f in self.failures:
            writer.writerow([f.case_id, f.vendor.value, f.replicate, "", f.category.value])
        return buf.getvalue()

    def as_dict(self) -> dict:
        return {
            "format": EXPERIMENT_FORMAT,
            "version_label": self.version_label,
            "manifest": self.config.manifest(),
            "scores": [
                {
                    "case_id": s.case_id,
                    "vendor": s.vendor.value,
                    "replicate": s.replicate,
                    "score": s.score,
                }
                for s in self.scores
            ],
            "failures": [
                {
                    "case_id": f.case_id,
                    "vendor": f.vendor.value,
                    "replicate": f.replicate,
                    "category": f.category.value,
                    "detail": f.detail,
                }
                for f in self.failures
            ],
            "overall": self.overall.as_dict(),
            "per_vendor": {v.value: st.as_dict() for v, st in self.per_vendor.items()},
        }


def _aggregate_rubric_scores(values: Sequence[float], how: str) -> float:
    if how == "min":
        return min(values)
    if how == "median":
        return distribution_stats(values).median
    return sum(values) / len(values)


def run_experiment(
    config: ExperimentConfig,
    pipeline: NoteGenerator,
    rubric_store: Mapping[str, Sequence[Rubric]],
    judge: GatewayClient,
    cases: Mapping[str, Case],
) -> ExperimentResult:
    """Run the full benchmark for one system version.

    Per-note failures are recorded, never fatal; score count plus failure
    count always equals cases x vendors x replicates.
    """
    if not config.case_ids:
        raise EmptyBenchmark("experiment over zero cases")
    accepted: dict[str, list[Rubric]] = {}
    for case_id in config.case_ids:
        found = [r for r in rubric_store.get(case_id, []) if r.status is RubricStatus.ACCEPTED]
        if not found:
            raise EmptyBenchmark(f"case {case_id!r} has no accepted rubric")
        accepted[case_id] = found

    scores: list[NoteScore] = []
    failures: list[NoteFailure] = []
    for case_id in config.case_ids:
        case = cases[case_id]
        for vendor in config.vendors:
            for replicate in range(config.notes_per_case_per_vendor):
                unit_seed = derive_seed(config.seed, case_id, vendor.value, replicate)
                try:
                    note = pipeline.generate(case, vendor, unit_seed)
                    rubric_scores = [
                        score_note(
                            note,
                            rubric,
                            judge,
                            seed=derive_seed(unit_seed, rubric.id),
                            case=case,
                            note_id=f"{case_id}/{vendor.value}/{replicate}",
                        ).score
                        for rubric in accepted[case_id]
                    ]
                except BackendError as exc:
                    category = getattr(exc, "category", None) or getattr(
                        getattr(exc, "record", None), "error_category", None
                    )
                    failures.append(
                        NoteFailure(
                            case_id=case_id,
                            vendor=vendor,
                            replicate=replicate,
                            category=category or ErrorCategory.OTHER,
                            detail=str(exc),
                        )
                    )
                    continue
                scores.append(
                    NoteScore(
                        case_id=case_id,
                        vendor=vendor,
                        replicate=replicate,
                        score=_aggregate_rubric_scores(rubric_scores, config.rubric_aggregation),
                    )
                )

    if not scores:
        raise EmptyBenchmark("every note generation failed")
    per_vendor = {}
    for vendor in config.vendors:
        vendor_scores = [s.score for s in scores if s.vendor is vendor]
        if vendor_scores:
            per_vendor[vendor] = distribution_stats(vendor_scores)
    return ExperimentResult(
        version_label=config.version_label,
        config=config,
        scores=tuple(scores),
        failures=tuple(failures),
        overall=distribution_stats([s.score for s in scores]),
        per_vendor=per_vendor,
    )


class GateOutcome:
    DEPLOY = "deploy"
    REJECT = "reject"


@dataclass(frozen=True)
class GateDecision:
    candidate_label: str
    baseline_label: str
    median_delta: float
    tolerance: float
    decision: str

    def __post_init__(self) -> None:
        if (self.decision == GateOutcome.DEPLOY) != (self.median_delta >= -self.tolerance):
            raise ValueError("deploy iff median delta >= -tolerance")

    def as_dict(self) -> dict:
        return {
            "candidate": self.candidate_label,
            "baseline": self.baseline_label,
            "median_delta": self.median_delta,
            "tolerance": self.tolerance,
            "decision": self.decision,
        }


@dataclass(frozen=True)
class ComparisonReport:
    gate: GateDecision
    candidate_stats: DistributionStats
    baseline_stats: DistributionStats
    per_vendor_delta: dict[str, float]
    quartile_shift: dict[str, float]
    case_deltas: tuple[tuple[str, float], ...]  # sorted by |delta|, descending

    def as_dict(self) -> dict:
        return {
            "gate": self.gate.as_dict(),
            "candidate_stats": self.candidate_stats.as_dict(),
            "baseline_stats": self.baseline_stats.as_dict(),
            "per_vendor_delta": dict(self.per_vendor_delta),
            "quartile_shift": dict(self.quartile_shift),
            "case_deltas": [[cid, delta] for cid, delta in self.case_deltas],
        }


def compare_versions(
    candidate: ExperimentResult,
    baseline: ExperimentResult,
    tolerance: float = 0.0,
) -> ComparisonReport:
    """Median non-inferiority gate plus a regression-triage report."""
    if set(candidate.config.case_ids) != set(baseline.config.case_ids):
        raise CaseSetMismatch(
            "candidate and baseline ran different case sets; comparison is meaningless"
        )
    median_delta = candidate.overall.median - baseline.overall.median
    decision = GateOutcome.DEPLOY if median_delta >= -tolerance else GateOutcome.REJECT
    gate = GateDecision(
        candidate_label=candidate.version_label,
        baseline_label=baseline.version_label,
        median_delta=median_delta,
        tolerance=tolerance,
        decision=decision,
    )
    per_vendor_delta = {}
    for vendor in set(candidate.per_vendor) & set(baseline.per_vendor):
        per_vendor_delta[vendor.value] = (
            candidate.per_vendor[vendor].median - baseline.per_vendor[vendor].median
        )
    quartile_shift = {
        "q1": candidate.overall.q1 - baseline.overall.q1,
        "q3": candidate.overall.q3 - baseline.overall.q3,
    }
    cand_means = candidate.case_means()
    base_means = baseline.case_means()
    deltas = [
        (cid, cand_means[cid] - base_means[cid]) for cid in sorted(set(cand_means) & set(base_means))
    ]
    deltas.sort(key=lambda pair: (-abs(pair[1]), pair[0]))
    return ComparisonReport(
        gate=gate,
        candidate_stats=candidate.overall,
        baseline_stats=baseline.overall,
        per_vendor_delta=per_vendor_delta,
        quartile_shift=quartile_shift,
        case_deltas=tuple(deltas),
    )


def net_preference(best_fraction: Union[int, float, Fraction]) -> float:
    """Signed preference percentage: 100 * (2 * best_fraction - 1).

    Inferred from the two published data points (0.721 -> +44.2 and
    0.568 -> +13.6); computed in exact decimal arithmetic so those points
    reproduce exactly.
    """
    frac = (
        Fraction(repr(best_fraction))
        if isinstance(best_fraction, float)
        else Fraction(best_fraction)
    )
    if not 0 <= frac <= 1:
        raise DomainError(f"best_fraction must be in [0, 1], got {best_fraction}")
    return float(100 * (2 * frac - 1))


def result_from_scores(
    version_label: str,
    scores_by_unit: Sequence[tuple[str, Vendor, int, float]],
    seed: int = 0,
) -> ExperimentResult:
    """Build an ExperimentResult from precomputed note scores (fixtures,
    imported runs)."""
    case_ids = tuple(sorted({cid for cid, _, _, _ in scores_by_unit}))
    vendors = tuple(sorted({v for _, v, _, _ in scores_by_unit}, key=lambda v: v.value))
    replicates = max((rep for _, _, rep, _ in scores_by_unit), default=0) + 1
    config = ExperimentConfig(
        version_label=version_label,
        case_ids=case_ids,
        notes_per_case_per_vendor=replicates,
        vendors=vendors,
        seed=seed,
    )
    scores = tuple(
        NoteScore(case_id=cid, vendor=v, replicate=rep, score=score)
        for cid, v, rep, score in scores_by_unit
    )
    per_vendor = {}
    for vendor in vendors:
        vendor_scores = [s.score for s in scores if s.vendor is vendor]
        if vendor_scores:
            per_vendor[vendor] = distribution_stats(vendor_scores)
    return ExperimentResult(
        version_label=version_label,
        config=config,
        scores=scores,
        failures=(),
        overall=distribution_stats([s.score for s in scores]),
        per_vendor=per_vendor,
    )
