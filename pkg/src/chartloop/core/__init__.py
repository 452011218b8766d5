"""Shared domain model: cases, charts, commands, rubrics, and their file formats."""

from chartloop.core.caseio import (
    CASE_FORMAT,
    RUBRIC_FORMAT,
    case_to_json,
    load_case,
    load_rubric,
    parse_case,
    parse_rubric,
    serialize_case,
    serialize_chart,
    serialize_command,
    serialize_parameters,
    serialize_rubric,
)
from chartloop.core.commands import (
    Command,
    CommandStatus,
    Instruction,
    ParameterObject,
    ValidationOutcome,
    check_parameters,
    validate_command,
)
from chartloop.core.registry import (
    REGISTRY,
    SECTIONS,
    CommandName,
    CommandType,
    FieldKind,
    FieldSpec,
    command_type,
    section_commands,
)
from chartloop.core.rubric import (
    AuthorKind,
    Criterion,
    Rubric,
    RubricAuthor,
    RubricStatus,
    as_weight,
)
from chartloop.core.types import (
    EMPTY_CHART,
    Acuity,
    Case,
    CaseMetadata,
    CodedConcept,
    Demographics,
    EncounterLength,
    Ontology,
    PatientChart,
    ProblemCount,
    Provenance,
    Sex,
    Speaker,
    TranscriptTurn,
)

__all__ = [
    "CASE_FORMAT",
    "RUBRIC_FORMAT",
    "REGISTRY",
    "SECTIONS",
    "EMPTY_CHART",
    "Acuity",
    "AuthorKind",
    "Case",
    "CaseMetadata",
    "CodedConcept",
    "Command",
    "CommandName",
    "CommandStatus",
    "CommandType",
    "Criterion",
    "Demographics",
    "EncounterLength",
    "FieldKind",
    "FieldSpec",
    "Instruction",
    "Ontology",
    "ParameterObject",
    "PatientChart",
    "ProblemCount",
    "Provenance",
    "Rubric",
    "RubricAuthor",
    "RubricStatus",
    "Sex",
    "Speaker",
    "TranscriptTurn",
    "ValidationOutcome",
    "as_weight",
    "case_to_json",
    "check_parameters",
    "command_type",
    "load_case",
    "load_rubric",
    "parse_case",
    "parse_rubric",
    "section_commands",
    "serialize_case",
    "serialize_chart",
    "serialize_command",
    "serialize_parameters",
    "serialize_rubric",
    "validate_command",
]
