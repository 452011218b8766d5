"""The three model-backed pipeline stages and their graduated context.

Context widens stage by stage: instruction detection sees the
speaker-attributed transcript window plus prior instructions; parameter
filling sees the instruction and minimal demographics only (never the chart
body, so early stages cannot anchor on chart data); command construction
sees the full chart. Each stage's prompt is assembled here from an explicit
whitelist of parts, which is what the sentinel tests assert against.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence

from chartloop.core.commands import FieldValue, Instruction, ParameterObject
from chartloop.core.registry import (
    REGISTRY,
    SECTIONS,
    CommandName,
    CommandType,
    FieldKind,
    FieldSpec,
)
from chartloop.core.types import Demographics, PatientChart, TranscriptTurn
from chartloop.errors import SchemaViolation
from chartloop.gateway.client import GatewayClient
from chartloop.gateway.records import CallRecord, Stage
from chartloop.pipeline.ontology import OntologyClient, map_to_code

_COMMAND_NAMES = sorted(name.value for name in CommandName)

DETECT_SCHEMA = {
    "type": "object",
    "properties": {
        "instructions": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {
                    "command_type": {"type": "string", "enum": _COMMAND_NAMES},
                    "information": {"type": "string", "minLength": 1},
                    "revises": {"type": ["string", "null"]},
                },
                "required": ["command_type", "information"],
                "additionalProperties": False,
            },
        }
    },
    "required": ["instructions"],
    "additionalProperties": False,
}

BUILD_SCHEMA = {
    "type": "object",
    "properties": {
        "commands": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {
                    "instruction_uid": {"type": "string"},
                    "adjustments": {"type": "object"},
                },
                "required": ["instruction_uid"],
                "additionalProperties": False,
            },
        }
    },
    "required": ["commands"],
    "additionalProperties": False,
}


def _field_schema(spec: FieldSpec) -> dict:
    if spec.kind is FieldKind.NUMBER:
        base: dict = {"type": "number"}
    elif spec.kind is FieldKind.BOOLEAN:
        base = {"type": "boolean"}
    else:
        # Coded fields travel as free text; the ontology client resolves them.
        base = {"type": "string"}
    if spec.repeated:
        return {"type": "array", "items": base}
    return base


@lru_cache(maxsize=None)
def parameter_schema(ctype: CommandType) -> dict:
    return {
        "type": "object",
        "properties": {
            "fields": {
                "type": "object",
                "properties": {spec.name: _field_schema(spec) for spec in ctype.fields},
                "required": [spec.name for spec in ctype.fields if spec.required],
                "additionalProperties": False,
            }
        },
        "required": ["fields"],
        "additionalProperties": False,
    }


def render_window(turns: Sequence[TranscriptTurn]) -> str:
    return "\n".join(f"[{t.index}] {t.label}: {t.text}" for t in turns)


def render_demographics(demo: Demographics) -> str:
    return f"Patient demographics: {demo.age}-year-old, sex {demo.sex.value}."


def render_chart(chart: PatientChart) -> str:
    lines = [render_demographics(chart.demographics)]
    if chart.conditions:
        lines.append("Conditions: " + "; ".join(c.display for c in chart.conditions))
    if chart.medications:
        lines.append("Medications: " + "; ".join(m.display for m in chart.medications))
    if chart.allergies:
        lines.append("Allergies: " + "; ".join(chart.allergies))
    if chart.prior_commands:
        lines.append(
            "Prior commands: "
            + "; ".join(f"{c.command_type.value}#{c.uid}" for c in chart.prior_commands)
        )
    return "\n".join(lines)


@dataclass(frozen=True)
class DetectedIntent:
    """Raw detection output before the session assigns uids."""

    command_type: CommandName
    information: str
    revises: Optional[str] = None


def window_word_count(turns: Sequence[TranscriptTurn]) -> int:
    return sum(len(t.text.split()) for t in turns)


def is_complex(
    turns: Sequence[TranscriptTurn],
    prior_instructions: Sequence[Instruction],
    word_threshold: int,
    instruction_threshold: int,
) -> bool:
    return (
        window_word_count(turns) > word_threshold
        or len(prior_instructions) > instruction_threshold
    )


def _detect_prompt(
    turns: Sequence[TranscriptTurn],
    prior_instructions: Sequence[Instruction],
    section: Optional[str],
) -> str:
    parts = [
        "Identify clinical documentation instructions in this encounter segment.",
        "Each instruction names one supported command type and the information",
        "to document. Mark an entry with the uid it revises when it updates an",
        "earlier instruction. Attend to the speaker labels: only document",
        "patient history as patient history when the patient (not the",
        "clinician or a family member) reports it.",
    ]
    if section is not None:
        allowed = sorted(n.value for n in REGISTRY if REGISTRY[n].section == section)
        parts.append(f"Restrict detection to the {section} section: {', '.join(allowed)}.")
    else:
        parts.append(f"Supported command types: {', '.join(_COMMAND_NAMES)}.")
    if prior_instructions:
        prior = "\n".join(
            f"- {i.uid} ({i.command_type.value}): {i.information}" for i in prior_instructions
        )
        parts.append("Previously detected instructions:\n" + prior)
    parts.append("Transcript window:\n" + render_window(turns))
    return "\n\n".join(parts)


def detect_instructions(
    gateway: GatewayClient,
    turns: Sequence[TranscriptTurn],
    prior_instructions: Sequence[Instruction],
    *,
    session_id: str = "adhoc",
    round_index: int = 0,
    word_threshold: int = 1500,
    instruction_threshold: int = 20,
    seed: Optional[int] = None,
) -> tuple[list[DetectedIntent], list[CallRecord]]:
    """Stage 2: complexity-dependent detection.

    Simple windows take a single call; complex windows fan out one call per
    note section, merged in fixed section order.
    """
    if not turns:
        raise SchemaViolation("transcript window must be non-empty", "turns")
    sections: tuple[Optional[str], ...]
    if is_complex(turns, prior_instructions, word_threshold, instruction_threshold):
        sections = SECTIONS
    else:
        sections = (None,)
    intents: list[DetectedIntent] = []
    records: list[CallRecord] = []
    for section in sections:
        result = gateway.call(
            Stage.DETECT_INSTRUCTIONS,
            _detect_prompt(turns, prior_instructions, section),
            DETECT_SCHEMA,
            session_id=session_id,
            round_index=round_index,
            section=section,
            seed=seed,
        )
        records.append(result.record)
        for entry in result.document["instructions"]:
            intents.append(
                DetectedIntent(
                    command_type=CommandName(entry["command_type"]),
                    information=entry["information"],
                    revises=entry.get("revises"),
                )
            )
    return intents, records


def _fill_prompt(instruction: Instruction, demographics: Demographics, ctype: CommandType) -> str:
    field_lines = []
    for spec in ctype.fields:
        kind = spec.kind.value
        if spec.ontology is not None:
            kind += f", free text to be coded in {spec.ontology.value}"
        suffix = "required" if spec.required else "optional"
        field_lines.append(f"- {spec.name} ({kind}; {suffix})")
    return "\n\n".join(
        [
            f"Fill the parameter fields for a {ctype.name.value} command.",
            # Deliberately narrow context: the instruction and minimal
            # demographics only. No chart history reaches this stage.
            render_demographics(demographics),
            "Instruction: " + instruction.information,
            "Fields:\n" + "\n".join(field_lines),
        ]
    )


def fill_parameters(
    gateway: GatewayClient,
    instruction: Instruction,
    demographics: Demographics,
    ontology: OntologyClient,
    *,
    session_id: str = "adhoc",
    round_index: int = 0,
    seed: Optional[int] = None,
) -> tuple[ParameterObject, list[CallRecord]]:
    """Stage 3: one call per instruction, ontology-coded fields resolved."""
    ctype = REGISTRY[instruction.command_type]
    result = gateway.call(
        Stage.FILL_PARAMETERS,
        _fill_prompt(instruction, demographics, ctype),
        parameter_schema(ctype),
        session_id=session_id,
        round_index=round_index,
        instruction_uid=instruction.uid,
        seed=seed,
    )
    raw_fields = result.document["fields"]
    fields: dict[str, FieldValue] = {}
    for spec in ctype.fields:
        if spec.name not in raw_fields:
            continue
        value = raw_fields[spec.name]
        if spec.ontology is not None:
            if spec.repeated:
                fields[spec.name] = tuple(
                    map_to_code(v, spec.ontology, ontology) for v in value
                )
            else:
                fields[spec.name] = map_to_code(value, spec.ontology, ontology)
        elif spec.repeated:
            fields[spec.name] = tuple(value)
        else:
            fields[spec.name] = value
    params = ParameterObject(
        instruction_uid=instruction.uid, command_type=instruction.command_type, fields=fields
    )
    return params, [result.record]


def _build_prompt(
    parameter_objects: Sequence[ParameterObject],
    chart: PatientChart,
    prior_commands: Sequence,
) -> str:
    from chartloop.core.caseio import serialize_parameters

    rendered = json.dumps(
        [serialize_parameters(p) for p in parameter_objects], sort_keys=True, ensure_ascii=False
    )
    prior = "; ".join(f"{c.command_type.value}#{c.uid}(rev{c.revision})" for c in prior_commands)
    return "\n\n".join(
        [
            "Convert these parameter objects into chart update commands,",
            "adjusting values that conflict with the patient's chart.",
            "Full patient chart:\n" + render_chart(chart),
            ("Existing commands: " + prior) if prior else "Existing commands: none",
            "Parameter objects:\n" + rendered,
        ]
    )


def build_command_adjustments(
    gateway: GatewayClient,
    parameter_objects: Sequence[ParameterObject],
    chart: PatientChart,
    prior_commands: Sequence,
    *,
    session_id: str = "adhoc",
    round_index: int = 0,
    seed: Optional[int] = None,
) -> tuple[dict[str, dict], list[CallRecord]]:
    """Stage 4 model call: per-uid field adjustments with full chart context.

    Objects absent from the response pass through unchanged; only non-coded
    fields may be adjusted (coded values were resolved at stage 3).
    """
    result = gateway.call(
        Stage.BUILD_COMMANDS,
        _build_prompt(parameter_objects, chart, prior_commands),
        BUILD_SCHEMA,
        session_id=session_id,
        round_index=round_index,
        seed=seed,
    )
    adjustments: dict[str, dict] = {}
    for entry in result.document["commands"]:
        adjustments[entry["instruction_uid"]] = entry.get("adjustments", {}) or {}
    return adjustments, [result.record]


def apply_adjustments(params: ParameterObject, adjustments: dict) -> ParameterObject:
    if not adjustments:
        return params
    ctype = REGISTRY[params.command_type]
    fields = dict(params.fields)
    for name, value in adjustments.items():
        spec = ctype.field_spec(name)
        if spec is None or spec.kind is FieldKind.CODED:
            continue
        fields[name] = tuple(value) if isinstance(value, list) else value
    return ParameterObject(
        instruction_uid=params.instruction_uid, command_type=params.command_type, fields=fields
    )
