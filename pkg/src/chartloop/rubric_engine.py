"""Rubric scoring, validation, and generation.

A note's score against a rubric is the weighted mean of per-criterion
satisfactions on a 0-100 scale. A rubric is accepted iff the minimum score
of the labeled best note strictly exceeds the maximum score of the worst
note across three independent scoring runs; ties reject.

Scores are computed in exact rational arithmetic (weights are Fractions,
satisfactions are taken at their decimal face value), so scaling every
weight by the same factor leaves scores bit-identical.
"""

from __future__ import annotations

import hashlib
import json
import random
import re
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Mapping, Optional, Sequence

from chartloop.core.rubric import (
    AuthorKind,
    Criterion,
    Rubric,
    RubricAuthor,
    RubricStatus,
    as_weight,
)
from chartloop.core.types import Case
from chartloop.errors import JudgeRangeError, SchemaViolation
from chartloop.gateway.client import GatewayClient
from chartloop.gateway.records import Stage, Vendor
from chartloop.pipeline.stages import render_chart, render_window

SCORE_FORMAT = "chartloop-score/1"

_SCORE_SCHEMA_BASE = {
    "type": "object",
    "properties": {
        "satisfactions": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {
                    "satisfaction": {"type": "number"},
                    "justification": {"type": "string"},
                },
                "required": ["satisfaction"],
                "additionalProperties": False,
            },
        }
    },
    "required": ["satisfactions"],
    "additionalProperties": False,
}

GENERATE_SCHEMA = {
    "type": "object",
    "properties": {
        "criteria": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "properties": {
                    "text": {"type": "string", "minLength": 1},
                    "weight": {"type": "number"},
                },
                "required": ["text", "weight"],
                "additionalProperties": False,
            },
        }
    },
    "required": ["criteria"],
    "additionalProperties": False,
}


@lru_cache(maxsize=None)
def score_schema(criteria_count: int) -> dict:
    schema = {
        "type": _SCORE_SCHEMA_BASE["type"],
        "properties": {
            "satisfactions": dict(
                _SCORE_SCHEMA_BASE["properties"]["satisfactions"],
                minItems=criteria_count,
                maxItems=criteria_count,
            )
        },
        "required": ["satisfactions"],
        "additionalProperties": False,
    }
    return schema


@dataclass(frozen=True)
class CriterionScore:
    criterion_index: int
    satisfaction: float
    justification: str = ""


@dataclass(frozen=True)
class ScoreReport:
    note_id: str
    rubric_id: str
    per_criterion: tuple[CriterionScore, ...]
    score: float
    run_seed: Optional[int] = None

    def as_dict(self) -> dict:
        return {
            "format": SCORE_FORMAT,
            "note_id": self.note_id,
            "rubric_id": self.rubric_id,
            "run_seed": self.run_seed,
            "score": self.score,
            "per_criterion": [
                {
                    "criterion_index": c.criterion_index,
                    "satisfaction": c.satisfaction,
                    "justification": c.justification,
                }
                for c in self.per_criterion
            ],
        }


@dataclass(frozen=True)
class AcceptanceResult:
    """Outcome of the best/worst separation rule."""

    rubric_id: str
    best_runs: tuple[float, ...]
    worst_runs: tuple[float, ...]
    accepted: bool
    margin: float

    def __post_init__(self) -> None:
        if self.accepted != (self.margin > 0):
            raise ValueError("accepted iff margin is strictly positive")

    def as_dict(self) -> dict:
        return {
            "rubric_id": self.rubric_id,
            "best_runs": list(self.best_runs),
            "worst_runs": list(self.worst_runs),
            "accepted": self.accepted,
            "margin": self.margin,
        }


def weighted_score(criteria: Sequence[Criterion], satisfactions: Sequence[float]) -> float:
    """100 * sum(w_i * s_i) / sum(w_i), exact rational arithmetic inside."""
    if len(criteria) != len(satisfactions):
        raise SchemaViolation("satisfaction count must equal criteria count")
    total = Fraction(0)
    weight_sum = Fraction(0)
    for criterion, sat in zip(criteria, satisfactions):
        if not 0.0 <= sat <= 1.0:
            raise JudgeRangeError(f"satisfaction {sat} outside [0, 1]")
        total += criterion.weight * (
            Fraction(repr(sat)) if isinstance(sat, float) else Fraction(sat)
        )
        weight_sum += criterion.weight
    return float(100 * total / weight_sum)


def _note_body(note: Mapping[str, str]) -> str:
    return "\n".join(f"{section}: {text}" for section, text in sorted(note.items()))


def _score_prompt(note: Mapping[str, str], rubric: Rubric, case: Optional[Case]) -> str:
    parts = ["Score this clinical note against each criterion, 0 to 1."]
    if case is not None:
        parts.append("Encounter transcript:\n" + render_window(case.transcript))
        parts.append("Patient chart:\n" + render_chart(case.longitudinal))
    parts.append("Note:\n" + _note_body(note))
    parts.append(
        "Criteria:\n"
        + "\n".join(f"{i}. {c.text} (weight {c.weight})" for i, c in enumerate(rubric.criteria))
    )
    return "\n\n".join(parts)


def score_note(
    note: Mapping[str, str],
    rubric: Rubric,
    judge: GatewayClient,
    *,
    seed: Optional[int] = None,
    case: Optional[Case] = None,
    note_id: str = "note",
    session_id: str = "scoring",
) -> ScoreReport:
    """One scoring run: one judge call, per-criterion satisfactions in [0,1]."""
    if not rubric.criteria:
        raise SchemaViolation("rubric has no criteria", "criteria")
    result = judge.call(
        Stage.SCORE_RUBRIC,
        _score_prompt(note, rubric, case),
        score_schema(len(rubric.criteria)),
        session_id=session_id,
        seed=seed,
    )
    rows = result.document["satisfactions"]
    satisfactions = [float(row["satisfaction"]) for row in rows]
    for sat in satisfactions:
        if not 0.0 <= sat <= 1.0:
            raise JudgeRangeError(f"judge returned satisfaction {sat} outside [0, 1]")
    per_criterion = tuple(
        CriterionScore(
            criterion_index=i,
            satisfaction=satisfactions[i],
            justification=rows[i].get("justification", ""),
        )
        for i in range(len(satisfactions))
    )
    return ScoreReport(
        note_id=note_id,
        rubric_id=rubric.id,
        per_criterion=per_criterion,
        score=weighted_score(rubric.criteria, satisfactions),
        run_seed=seed,
    )


def validate_rubric(
    rubric: Rubric,
    best_note_id: str,
    best_note: Mapping[str, str],
    worst_note_id: str,
    worst_note: Mapping[str, str],
    judge: GatewayClient,
    *,
    runs: int = 3,
    seed: int = 0,
    case: Optional[Case] = None,
) -> AcceptanceResult:
    """The separation rule: accepted iff min(best) > max(worst), strictly.

    Runs are independent scoring calls with distinct seeds (best runs use
    seed+0..runs-1, worst runs seed+runs..2*runs-1). Any gateway error
    aborts validation; there is no partial acceptance.
    """
    if best_note_id == worst_note_id:
        raise SchemaViolation("best and worst notes must differ", "notes")
    if runs < 1:
        raise SchemaViolation("runs must be >= 1", "runs")
    best_runs = tuple(
        score_note(
            best_note, rubric, judge, seed=seed + i, case=case, note_id=best_note_id
        ).score
        for i in range(runs)
    )
    worst_runs = tuple(
        score_note(
            worst_note, rubric, judge, seed=seed + runs + i, case=case, note_id=worst_note_id
        ).score
        for i in range(runs)
    )
    margin = min(best_runs) - max(worst_runs)
    return AcceptanceResult(
        rubric_id=rubric.id,
        best_runs=best_runs,
        worst_runs=worst_runs,
        accepted=margin > 0,
        margin=margin,
    )


def finalize_rubric(rubric: Rubric, result: AcceptanceResult) -> Rubric:
    return rubric.with_status(
        RubricStatus.ACCEPTED if result.accepted else RubricStatus.REJECTED
    )


class KeywordJudgeBackend:
    """Offline judge: scores a criterion by how much of its vocabulary the
    note contains, plus seed-tied jitter.

    This mock is deliberately coupled to the scoring prompt layout above;
    it extracts the note body and criteria lines back out of its own
    prompt. Deterministic given (prompt, seed): notes satisfying a
    criterion's wording score high, notes missing it score low, so the
    whole best/worst separation loop behaves realistically offline.
    """

    def __init__(self, salt: int = 0, jitter: float = 0.04, model_name: str = "mock-judge-1"):
        self.salt = salt
        self.jitter = jitter
        self.model_name = model_name
        self.vendor = Vendor.MOCK
        self.reasoning = False

    @staticmethod
    def _segment(prompt: str, header: str) -> str:
        if header not in prompt:
            return ""
        body = prompt.split(header, 1)[1]
        return body.split("\n\n", 1)[0]

    @staticmethod
    def _words(text: str) -> set[str]:
        return {w for w in re.findall(r"[a-z0-9]+", text.lower()) if len(w) > 2}

    def complete(self, request):  # BackendRequest -> BackendResponse
        from chartloop.gateway.backend import BackendResponse, token_estimate

        note_words = self._words(self._segment(request.prompt, "Note:\n"))
        criteria_block = self._segment(request.prompt, "Criteria:\n")
        criteria = [line for line in criteria_block.splitlines() if line.strip()]
        count = request.response_schema["properties"]["satisfactions"].get(
            "minItems", len(criteria)
        )
        rows = []
        for i in range(count):
            text = criteria[i] if i < len(criteria) else ""
            wanted = self._words(re.sub(r"\(weight [^)]*\)", "", text))
            overlap = len(wanted & note_words) / len(wanted) if wanted else 0.0
            digest = hashlib.sha256(
                f"{self.salt}|{request.seed}|{i}|{text}".encode("utf-8")
            ).digest()
            rng = random.Random(int.from_bytes(digest[:8], "big"))
            sat = min(1.0, max(0.0, overlap + rng.uniform(-self.jitter, self.jitter)))
            rows.append({"satisfaction": round(sat, 4), "justification": "keyword overlap"})
        body = json.dumps({"satisfactions": rows}, sort_keys=True)
        return BackendResponse(
            text=body,
            input_tokens=token_estimate(request.prompt),
            output_tokens=token_estimate(body),
            latency_ms=40,
        )


def generate_rubric(
    case: Case,
    generator: GatewayClient,
    *,
    rubric_id: Optional[str] = None,
    seed: Optional[int] = None,
) -> Rubric:
    """Model-authored rubric from the same case inputs; always lands in
    Draft, never auto-accepted."""
    prompt = "\n\n".join(
        [
            "Write weighted criteria describing what correct documentation",
            "of this encounter must contain.",
            "Transcript:\n" + render_window(case.transcript),
            "Point-in-time note:\n" + _note_body(case.note),
            "Chart:\n" + render_chart(case.longitudinal),
        ]
    )
    result = generator.call(
        Stage.GENERATE_RUBRIC, prompt, GENERATE_SCHEMA, session_id="rubric-gen", seed=seed
    )
    criteria = []
    for row in result.document["criteria"]:
        weight = as_weight(row["weight"])
        if weight <= 0:
            weight = Fraction(1)
        criteria.append(Criterion(text=row["text"], weight=weight))
    return Rubric(
        id=rubric_id or f"rubric-{case.id}-gen",
        case_id=case.id,
        criteria=tuple(criteria),
        author=RubricAuthor(kind=AuthorKind.MODEL_GENERATED, ident=generator.backend.model_name),
        status=RubricStatus.DRAFT,
    )
