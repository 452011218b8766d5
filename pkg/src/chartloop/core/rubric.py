"""Case-specific weighted rubrics.

Weights are positive rationals held as ``fractions.Fraction`` so score
arithmetic stays exact; floats given by callers are converted through their
decimal string form (``0.1`` means one tenth, not the nearest binary float).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from fractions import Fraction
from typing import Union

from chartloop.errors import SchemaViolation

WeightLike = Union[int, float, str, Fraction]


def as_weight(value: WeightLike) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, float):
        value = repr(value)
    try:
        return Fraction(value)
    except (ValueError, ZeroDivisionError) as exc:
        raise SchemaViolation(f"bad weight {value!r}: {exc}", "weight") from exc


class AuthorKind(Enum):
    CLINICIAN = "clinician"
    MODEL_GENERATED = "model_generated"


@dataclass(frozen=True)
class RubricAuthor:
    kind: AuthorKind
    ident: str  # annotator id for clinicians, model id for generated rubrics

    def __post_init__(self) -> None:
        if not self.ident:
            raise SchemaViolation("author ident must be non-empty", "author")


class RubricStatus(Enum):
    DRAFT = "draft"
    ACCEPTED = "accepted"
    REJECTED = "rejected"


@dataclass(frozen=True)
class Criterion:
    """One natural-language documentation requirement with its weight."""

    text: str
    weight: Fraction

    def __post_init__(self) -> None:
        if not self.text:
            raise SchemaViolation("criterion text must be non-empty", "criteria.text")
        object.__setattr__(self, "weight", as_weight(self.weight))
        if self.weight <= 0:
            raise SchemaViolation("criterion weight must be > 0", "criteria.weight")


@dataclass(frozen=True)
class Rubric:
    id: str
    case_id: str
    criteria: tuple[Criterion, ...]
    author: RubricAuthor
    status: RubricStatus = RubricStatus.DRAFT

    def __post_init__(self) -> None:
        if not self.id:
            raise SchemaViolation("rubric id must be non-empty", "id")
        if not self.case_id:
            raise SchemaViolation("rubric must reference a case", "case_id")
        if not self.criteria:
            raise SchemaViolation("rubric needs at least one criterion", "criteria")

    def with_status(self, status: RubricStatus) -> "Rubric":
        """Status moves only Draft -> Accepted/Rejected, via validation."""
        if self.status is not RubricStatus.DRAFT and status is not self.status:
            raise SchemaViolation(
                f"cannot move rubric from {self.status.value} to {status.value}",
                "status",
            )
        return replace(self, status=status)

    @property
    def total_weight(self) -> Fraction:
        return sum((c.weight for c in self.criteria), Fraction(0))
