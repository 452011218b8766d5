"""Intermediate representations and chart-aware command validation.

An Instruction (stage 2) names an intent, a ParameterObject (stage 3) fills
the registered field schema, and a Command (stage 4) is the validated chart
update. ``validate_command`` is total: it never raises, it returns a
Validated/Rejected outcome with a reason.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Union

from chartloop.core.registry import REGISTRY, CommandName, FieldKind, FieldSpec
from chartloop.core.types import CodedConcept, Ontology, PatientChart
from chartloop.errors import SchemaViolation

Scalar = Union[str, float, int, bool, CodedConcept]
FieldValue = Union[Scalar, tuple]


class CommandStatus(Enum):
    PROPOSED = "proposed"
    VALIDATED = "validated"
    REJECTED = "rejected"


@dataclass(frozen=True)
class Instruction:
    """A detected clinical intent, stage 2's output unit."""

    uid: str
    detection_order: int
    command_type: CommandName
    information: str
    round_of_origin: int
    revises: Optional[str] = None

    def __post_init__(self) -> None:
        if not self.uid:
            raise SchemaViolation("instruction uid must be non-empty", "uid")
        if self.command_type not in REGISTRY:
            raise SchemaViolation(
                f"unknown command type {self.command_type}", "command_type"
            )
        if not self.information:
            raise SchemaViolation("information must be non-empty", "information")


@dataclass(frozen=True)
class ParameterObject:
    """Typed field values for one instruction, conforming to the registered
    schema of its command type."""

    instruction_uid: str
    command_type: CommandName
    fields: dict[str, FieldValue] = field(default_factory=dict)


def _value_matches(spec: FieldSpec, value: FieldValue) -> Optional[str]:
    """Return a rejection reason if ``value`` does not fit ``spec``."""
    if spec.repeated:
        if not isinstance(value, (list, tuple)):
            return f"field {spec.name!r} must be a list"
        for item in value:
            reason = _scalar_matches(spec, item)
            if reason:
                return reason
        return None
    return _scalar_matches(spec, value)


def _scalar_matches(spec: FieldSpec, value: Scalar) -> Optional[str]:
    if spec.kind is FieldKind.STRING:
        if not isinstance(value, str):
            return f"field {spec.name!r} must be a string"
    elif spec.kind is FieldKind.NUMBER:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            return f"field {spec.name!r} must be a number"
    elif spec.kind is FieldKind.BOOLEAN:
        if not isinstance(value, bool):
            return f"field {spec.name!r} must be a boolean"
    elif spec.kind is FieldKind.CODED:
        if not isinstance(value, CodedConcept):
            return f"field {spec.name!r} must be a coded concept"
        if value.system is not spec.ontology:
            return (
                f"field {spec.name!r} must be coded in "
                f"{spec.ontology.value}, got {value.system.value}"
            )
    return None


def check_parameters(params: ParameterObject) -> Optional[str]:
    """Field-for-field schema conformance; returns a reason or None."""
    ctype = REGISTRY[params.command_type]
    known = {spec.name for spec in ctype.fields}
    for name in params.fields:
        if name not in known:
            return f"unknown field {name!r}"
    for spec in ctype.fields:
        if spec.name not in params.fields:
            if spec.required:
                return f"missing required field {spec.name!r}"
            continue
        reason = _value_matches(spec, params.fields[spec.name])
        if reason:
            return reason
    return None


@dataclass(frozen=True)
class Command:
    """A structured clinical action: one discrete chart update."""

    uid: str
    command_type: CommandName
    parameters: ParameterObject
    revision: int = 0
    status: CommandStatus = CommandStatus.PROPOSED
    rejection_reason: Optional[str] = None

    def __post_init__(self) -> None:
        if self.revision < 0:
            raise SchemaViolation("revision must be >= 0", "revision")


@dataclass(frozen=True)
class ValidationOutcome:
    status: CommandStatus
    reason: Optional[str] = None

    @property
    def validated(self) -> bool:
        return self.status is CommandStatus.VALIDATED


def _coded_displays(params: ParameterObject, ontology: Ontology) -> list[str]:
    out = []
    for value in params.fields.values():
        items = value if isinstance(value, (list, tuple)) else (value,)
        for item in items:
            if isinstance(item, CodedConcept) and item.system is ontology:
                out.append(item.display)
    return out


def validate_command(command: Command, chart: PatientChart) -> ValidationOutcome:
    """Chart-aware validation against the bounded action space.

    Validated iff the parameter object conforms to the registered schema and
    no chart consistency rule fires. Total: all failures become a Rejected
    outcome, never an exception.
    """
    if command.command_type not in REGISTRY:
        return ValidationOutcome(CommandStatus.REJECTED, "unknown command type")
    if command.parameters.command_type is not command.command_type:
        return ValidationOutcome(
            CommandStatus.REJECTED, "parameter object targets a different command type"
        )
    reason = check_parameters(command.parameters)
    if reason:
        return ValidationOutcome(CommandStatus.REJECTED, reason)

    # Chart consistency rules.
    if command.command_type in (CommandName.PRESCRIBE, CommandName.MEDICATION_STATEMENT):
        for display in _coded_displays(command.parameters, Ontology.RXNORM):
            if chart.has_allergy(display):
                return ValidationOutcome(
                    CommandStatus.REJECTED, f"allergy conflict: {display}"
                )
    if command.command_type is CommandName.DIAGNOSE:
        condition = command.parameters.fields.get("condition")
        if isinstance(condition, CodedConcept):
            for existing in chart.conditions:
                if existing.system is condition.system and existing.code == condition.code:
                    return ValidationOutcome(
                        CommandStatus.REJECTED,
                        f"condition already on problem list: {condition.code}",
                    )
    return ValidationOutcome(CommandStatus.VALIDATED)
