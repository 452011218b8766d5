"""The closed command registry.

Twelve command types define the bounded action space. Each carries an
ordered field schema; ontology-coded fields name the code system their
values must be drawn from. Nothing outside this table can become a command.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional

from chartloop.core.types import Ontology


class CommandName(Enum):
    DIAGNOSE = "diagnose"
    PRESCRIBE = "prescribe"
    ASSESS = "assess"
    PLAN = "plan"
    HISTORY_OF_PRESENT_ILLNESS = "history_of_present_illness"
    MENTAL_STATUS_EXAM = "mental_status_exam"
    MEDICATION_STATEMENT = "medication_statement"
    ALLERGY = "allergy"
    PAST_MEDICAL_HISTORY = "past_medical_history"
    QUESTIONNAIRE = "questionnaire"
    VITALS = "vitals"
    FOLLOW_UP = "follow_up"


class FieldKind(Enum):
    STRING = "string"
    NUMBER = "number"
    BOOLEAN = "boolean"
    CODED = "coded"


@dataclass(frozen=True)
class FieldSpec:
    name: str
    kind: FieldKind
    required: bool = True
    ontology: Optional[Ontology] = None
    repeated: bool = False

    def __post_init__(self) -> None:
        if self.kind is FieldKind.CODED and self.ontology is None:
            raise ValueError(f"coded field {self.name!r} must name an ontology")
        if self.kind is not FieldKind.CODED and self.ontology is not None:
            raise ValueError(f"non-coded field {self.name!r} cannot carry an ontology")


@dataclass(frozen=True)
class CommandType:
    name: CommandName
    fields: tuple[FieldSpec, ...]
    section: str

    def field_spec(self, name: str) -> Optional[FieldSpec]:
        for spec in self.fields:
            if spec.name == name:
                return spec
        return None


def _s(name: str, required: bool = True) -> FieldSpec:
    return FieldSpec(name, FieldKind.STRING, required)


def _n(name: str, required: bool = True) -> FieldSpec:
    return FieldSpec(name, FieldKind.NUMBER, required)


REGISTRY: dict[CommandName, CommandType] = {
    ct.name: ct
    for ct in (
        CommandType(
            CommandName.DIAGNOSE,
            (
                FieldSpec("condition", FieldKind.CODED, ontology=Ontology.ICD10),
                _s("onset_date", required=False),
                _s("rationale", required=False),
            ),
            section="assessment",
        ),
        CommandType(
            CommandName.PRESCRIBE,
            (
                FieldSpec("medication", FieldKind.CODED, ontology=Ontology.RXNORM),
                _s("dosage"),
                _s("frequency"),
                _s("duration", required=False),
                FieldSpec("substitutions_allowed", FieldKind.BOOLEAN, required=False),
            ),
            section="plan",
        ),
        CommandType(
            CommandName.ASSESS,
            (
                _s("assessment"),
                FieldSpec(
                    "condition", FieldKind.CODED, required=False, ontology=Ontology.ICD10
                ),
            ),
            section="assessment",
        ),
        CommandType(CommandName.PLAN, (_s("narrative"),), section="plan"),
        CommandType(
            CommandName.HISTORY_OF_PRESENT_ILLNESS,
            (_s("narrative"),),
            section="subjective",
        ),
        CommandType(
            CommandName.MENTAL_STATUS_EXAM, (_s("narrative"),), section="objective"
        ),
        CommandType(
            CommandName.MEDICATION_STATEMENT,
            (
                FieldSpec("medication", FieldKind.CODED, ontology=Ontology.RXNORM),
                _s("sig", required=False),
                _s("status", required=False),
            ),
            section="history",
        ),
        CommandType(
            CommandName.ALLERGY,
            (_s("allergen"), _s("reaction", required=False), _s("severity", required=False)),
            section="history",
        ),
        CommandType(
            CommandName.PAST_MEDICAL_HISTORY,
            (
                FieldSpec("condition", FieldKind.CODED, ontology=Ontology.ICD10),
                _s("approximate_date", required=False),
            ),
            section="history",
        ),
        CommandType(
            CommandName.QUESTIONNAIRE,
            (
                _s("questionnaire_name"),
                FieldSpec("responses", FieldKind.STRING, repeated=True),
            ),
            section="subjective",
        ),
        CommandType(
            CommandName.VITALS,
            (
                _n("systolic", required=False),
                _n("diastolic", required=False),
                _n("heart_rate", required=False),
                _n("temperature", required=False),
                _n("respiratory_rate", required=False),
                _n("weight", required=False),
                _n("height", required=False),
            ),
            section="objective",
        ),
        CommandType(
            CommandName.FOLLOW_UP,
            (_s("timeframe"), _s("reason", required=False), _s("visit_type", required=False)),
            section="plan",
        ),
    )
}

# Note sections used for hierarchical instruction detection and for rendering
# generated notes; each command type belongs to exactly one section.
SECTIONS: tuple[str, ...] = ("subjective", "objective", "assessment", "plan", "history")


def section_commands(section: str) -> tuple[CommandName, ...]:
    return tuple(name for name, ct in REGISTRY.items() if ct.section == section)


def command_type(name: CommandName) -> CommandType:
    return REGISTRY[name]
