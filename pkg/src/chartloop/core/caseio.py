"""Parsing and serialization for the versioned case and rubric documents.

Case files carry the ``chartloop-case/1`` discriminator, rubric files
``chartloop-rubric/1``. Parsing is strict by default: unknown keys are
rejected so failures stay attributable instead of being coerced away.
``serialize_case(parse_case(d))`` parses back to an identical Case for every
valid document.
"""

from __future__ import annotations

import json
from fractions import Fraction
from pathlib import Path
from typing import Any, Union

from chartloop.core.commands import Command, CommandStatus, FieldValue, ParameterObject
from chartloop.core.registry import CommandName
from chartloop.core.rubric import AuthorKind, Criterion, Rubric, RubricAuthor, RubricStatus
from chartloop.core.types import (
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
from chartloop.errors import MalformedDocument, SchemaViolation

CASE_FORMAT = "chartloop-case/1"
RUBRIC_FORMAT = "chartloop-rubric/1"

_CANONICAL_SPEAKERS = {s.value: s for s in Speaker if s is not Speaker.OTHER}


def _as_mapping(raw: Union[str, bytes, dict]) -> dict:
    if isinstance(raw, dict):
        return raw
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise MalformedDocument(f"invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise MalformedDocument("document root must be an object")
    return doc


def _check_keys(obj: dict, allowed: set[str], path: str, strict: bool) -> None:
    if not strict:
        return
    unknown = set(obj) - allowed
    if unknown:
        raise SchemaViolation(f"unknown fields {sorted(unknown)}", path)


def _require(obj: dict, key: str, path: str) -> Any:
    if key not in obj:
        raise SchemaViolation(f"missing field {key!r}", path)
    return obj[key]


def _enum(cls, value, path: str):
    try:
        return cls(value)
    except ValueError:
        allowed = ", ".join(m.value for m in cls)
        raise SchemaViolation(f"expected one of [{allowed}], got {value!r}", path) from None


# ---------------------------------------------------------------------------
# decode


def _decode_speaker(raw: Any, path: str) -> tuple[Speaker, str]:
    if not isinstance(raw, str) or not raw:
        raise SchemaViolation("speaker label must be a non-empty string", path)
    canonical = _CANONICAL_SPEAKERS.get(raw.casefold())
    if canonical is not None:
        return canonical, canonical.value
    return Speaker.OTHER, raw


def _decode_turn(obj: Any, pos: int, strict: bool) -> TranscriptTurn:
    path = f"transcript[{pos}]"
    if not isinstance(obj, dict):
        raise SchemaViolation("turn must be an object", path)
    _check_keys(obj, {"index", "speaker", "text", "start_offset"}, path, strict)
    speaker, label = _decode_speaker(_require(obj, "speaker", path), f"{path}.speaker")
    index = _require(obj, "index", path)
    if not isinstance(index, int) or isinstance(index, bool):
        raise SchemaViolation("index must be an integer", f"{path}.index")
    text = _require(obj, "text", path)
    if not isinstance(text, str):
        raise SchemaViolation("text must be a string", f"{path}.text")
    start = obj.get("start_offset")
    if start is not None and not isinstance(start, (int, float)):
        raise SchemaViolation("start_offset must be a number", f"{path}.start_offset")
    return TranscriptTurn(
        index=index,
        speaker=speaker,
        text=text,
        speaker_label=label,
        start_offset=None if start is None else float(start),
    )


def _decode_concept(obj: Any, path: str, strict: bool) -> CodedConcept:
    if not isinstance(obj, dict):
        raise SchemaViolation("coded concept must be an object", path)
    _check_keys(obj, {"system", "code", "display"}, path, strict)
    system = _enum(Ontology, _require(obj, "system", path), f"{path}.system")
    code = _require(obj, "code", path)
    display = obj.get("display", "")
    if not isinstance(code, str) or not code:
        raise SchemaViolation("code must be a non-empty string", f"{path}.code")
    return CodedConcept(system=system, code=code, display=str(display))


def _decode_field_value(value: Any, path: str, strict: bool) -> FieldValue:
    if isinstance(value, dict):
        return _decode_concept(value, path, strict)
    if isinstance(value, list):
        return tuple(
            _decode_field_value(v, f"{path}[{i}]", strict) for i, v in enumerate(value)
        )
    if isinstance(value, (str, int, float, bool)):
        return value
    raise SchemaViolation(f"unsupported field value {type(value).__name__}", path)


def _decode_parameters(obj: Any, path: str, strict: bool) -> ParameterObject:
    if not isinstance(obj, dict):
        raise SchemaViolation("parameters must be an object", path)
    _check_keys(obj, {"instruction_uid", "command_type", "fields"}, path, strict)
    ctype = _enum(CommandName, _require(obj, "command_type", path), f"{path}.command_type")
    fields_obj = obj.get("fields", {})
    if not isinstance(fields_obj, dict):
        raise SchemaViolation("fields must be an object", f"{path}.fields")
    fields = {
        name: _decode_field_value(value, f"{path}.fields.{name}", strict)
        for name, value in fields_obj.items()
    }
    return ParameterObject(
        instruction_uid=str(_require(obj, "instruction_uid", path)),
        command_type=ctype,
        fields=fields,
    )


def _decode_command(obj: Any, path: str, strict: bool) -> Command:
    if not isinstance(obj, dict):
        raise SchemaViolation("command must be an object", path)
    _check_keys(
        obj,
        {"uid", "command_type", "parameters", "revision", "status", "rejection_reason"},
        path,
        strict,
    )
    ctype = _enum(CommandName, _require(obj, "command_type", path), f"{path}.command_type")
    revision = obj.get("revision", 0)
    if not isinstance(revision, int) or isinstance(revision, bool) or revision < 0:
        raise SchemaViolation("revision must be a non-negative integer", f"{path}.revision")
    return Command(
        uid=str(_require(obj, "uid", path)),
        command_type=ctype,
        parameters=_decode_parameters(_require(obj, "parameters", path), f"{path}.parameters", strict),
        revision=revision,
        status=_enum(CommandStatus, obj.get("status", "proposed"), f"{path}.status"),
        rejection_reason=obj.get("rejection_reason"),
    )


def _decode_chart(obj: Any, strict: bool) -> PatientChart:
    path = "chart"
    if not isinstance(obj, dict):
        raise SchemaViolation("chart must be an object", path)
    _check_keys(
        obj,
        {"demographics", "conditions", "medications", "allergies", "prior_commands"},
        path,
        strict,
    )
    demo_obj = _require(obj, "demographics", path)
    if not isinstance(demo_obj, dict):
        raise SchemaViolation("demographics must be an object", f"{path}.demographics")
    _check_keys(demo_obj, {"age", "sex"}, f"{path}.demographics", strict)
    age = _require(demo_obj, "age", f"{path}.demographics")
    if not isinstance(age, int) or isinstance(age, bool):
        raise SchemaViolation("age must be an integer", f"{path}.demographics.age")
    demographics = Demographics(
        age=age,
        sex=_enum(Sex, demo_obj.get("sex", "unspecified"), f"{path}.demographics.sex"),
    )
    conditions = tuple(
        _decode_concept(c, f"{path}.conditions[{i}]", strict)
        for i, c in enumerate(obj.get("conditions", []))
    )
    medications = tuple(
        _decode_concept(c, f"{path}.medications[{i}]", strict)
        for i, c in enumerate(obj.get("medications", []))
    )
    allergies_raw = obj.get("allergies", [])
    if not isinstance(allergies_raw, list) or not all(isinstance(a, str) for a in allergies_raw):
        raise SchemaViolation("allergies must be a list of strings", f"{path}.allergies")
    prior = tuple(
        _decode_command(c, f"{path}.prior_commands[{i}]", strict)
        for i, c in enumerate(obj.get("prior_commands", []))
    )
    return PatientChart(
        demographics=demographics,
        conditions=conditions,
        medications=medications,
        allergies=tuple(allergies_raw),
        prior_commands=prior,
    )


def parse_case(raw: Union[str, bytes, dict], strict: bool = True) -> Case:
    """Parse a ``chartloop-case/1`` document into a validated Case."""
    doc = _as_mapping(raw)
    _check_keys(
        doc,
        {"format", "id", "transcript", "note", "chart", "provenance", "metadata"},
        "",
        strict,
    )
    fmt = doc.get("format", CASE_FORMAT)
    if fmt != CASE_FORMAT:
        raise SchemaViolation(f"unsupported format {fmt!r}", "format")
    transcript_raw = _require(doc, "transcript", "")
    if not isinstance(transcript_raw, list):
        raise SchemaViolation("transcript must be a list", "transcript")
    turns = tuple(_decode_turn(t, i, strict) for i, t in enumerate(transcript_raw))
    note_raw = doc.get("note", {})
    if not isinstance(note_raw, dict) or not all(
        isinstance(k, str) and isinstance(v, str) for k, v in note_raw.items()
    ):
        raise SchemaViolation("note must map section names to text", "note")
    meta_obj = _require(doc, "metadata", "")
    if not isinstance(meta_obj, dict):
        raise SchemaViolation("metadata must be an object", "metadata")
    _check_keys(
        meta_obj,
        {"specialty", "acuity", "problem_count", "encounter_length"},
        "metadata",
        strict,
    )
    metadata = CaseMetadata(
        specialty=str(meta_obj.get("specialty", "unspecified")),
        acuity=_enum(Acuity, _require(meta_obj, "acuity", "metadata"), "metadata.acuity"),
        problem_count=_enum(
            ProblemCount, _require(meta_obj, "problem_count", "metadata"), "metadata.problem_count"
        ),
        encounter_length=_enum(
            EncounterLength,
            _require(meta_obj, "encounter_length", "metadata"),
            "metadata.encounter_length",
        ),
    )
    case_id = _require(doc, "id", "")
    if not isinstance(case_id, str):
        raise SchemaViolation("id must be a string", "id")
    return Case(
        id=case_id,
        transcript=turns,
        note=dict(note_raw),
        longitudinal=_decode_chart(_require(doc, "chart", ""), strict),
        provenance_truth=_enum(Provenance, _require(doc, "provenance", ""), "provenance"),
        metadata=metadata,
    )


def load_case(path: Union[str, Path], strict: bool = True) -> Case:
    return parse_case(Path(path).read_text(encoding="utf-8"), strict=strict)


# ---------------------------------------------------------------------------
# encode


def _encode_field_value(value: FieldValue) -> Any:
    if isinstance(value, CodedConcept):
        return {"system": value.system.value, "code": value.code, "display": value.display}
    if isinstance(value, (list, tuple)):
        return [_encode_field_value(v) for v in value]
    return value


def serialize_parameters(params: ParameterObject) -> dict:
    return {
        "instruction_uid": params.instruction_uid,
        "command_type": params.command_type.value,
        "fields": {k: _encode_field_value(v) for k, v in params.fields.items()},
    }


def serialize_command(command: Command) -> dict:
    doc = {
        "uid": command.uid,
        "command_type": command.command_type.value,
        "parameters": serialize_parameters(command.parameters),
        "revision": command.revision,
        "status": command.status.value,
    }
    if command.rejection_reason is not None:
        doc["rejection_reason"] = command.rejection_reason
    return doc


def _encode_concept(concept: CodedConcept) -> dict:
    return {"system": concept.system.value, "code": concept.code, "display": concept.display}


def serialize_chart(chart: PatientChart) -> dict:
    return {
        "demographics": {"age": chart.demographics.age, "sex": chart.demographics.sex.value},
        "conditions": [_encode_concept(c) for c in chart.conditions],
        "medications": [_encode_concept(c) for c in chart.medications],
        "allergies": list(chart.allergies),
        "prior_commands": [serialize_command(c) for c in chart.prior_commands],
    }


def serialize_case(case: Case) -> dict:
    turns = []
    for turn in case.transcript:
        obj: dict[str, Any] = {
            "index": turn.index,
            "speaker": turn.speaker_label if turn.speaker is Speaker.OTHER else turn.speaker.value,
            "text": turn.text,
        }
        if turn.start_offset is not None:
            obj["start_offset"] = turn.start_offset
        turns.append(obj)
    return {
        "format": CASE_FORMAT,
        "id": case.id,
        "transcript": turns,
        "note": dict(case.note),
        "chart": serialize_chart(case.longitudinal),
        "provenance": case.provenance_truth.value,
        "metadata": {
            "specialty": case.metadata.specialty,
            "acuity": case.metadata.acuity.value,
            "problem_count": case.metadata.problem_count.value,
            "encounter_length": case.metadata.encounter_length.value,
        },
    }


def case_to_json(case: Case) -> str:
    return json.dumps(serialize_case(case), sort_keys=True, ensure_ascii=False)


# ---------------------------------------------------------------------------
# rubric documents


def parse_rubric(raw: Union[str, bytes, dict], strict: bool = True) -> Rubric:
    doc = _as_mapping(raw)
    _check_keys(doc, {"format", "id", "case_id", "author", "criteria", "status"}, "", strict)
    fmt = doc.get("format", RUBRIC_FORMAT)
    if fmt != RUBRIC_FORMAT:
        raise SchemaViolation(f"unsupported format {fmt!r}", "format")
    author_obj = _require(doc, "author", "")
    if not isinstance(author_obj, dict):
        raise SchemaViolation("author must be an object", "author")
    _check_keys(author_obj, {"kind", "id"}, "author", strict)
    author = RubricAuthor(
        kind=_enum(AuthorKind, _require(author_obj, "kind", "author"), "author.kind"),
        ident=str(_require(author_obj, "id", "author")),
    )
    criteria_raw = _require(doc, "criteria", "")
    if not isinstance(criteria_raw, list):
        raise SchemaViolation("criteria must be a list", "criteria")
    criteria = []
    for i, cobj in enumerate(criteria_raw):
        path = f"criteria[{i}]"
        if not isinstance(cobj, dict):
            raise SchemaViolation("criterion must be an object", path)
        _check_keys(cobj, {"text", "weight"}, path, strict)
        weight = _require(cobj, "weight", path)
        if isinstance(weight, bool) or not isinstance(weight, (int, float, str)):
            raise SchemaViolation("weight must be a number", f"{path}.weight")
        criteria.append(Criterion(text=str(_require(cobj, "text", path)), weight=weight))
    return Rubric(
        id=str(doc.get("id", "")) or f"rubric-{doc.get('case_id', '')}",
        case_id=str(_require(doc, "case_id", "")),
        criteria=tuple(criteria),
        author=author,
        status=_enum(RubricStatus, doc.get("status", "draft"), "status"),
    )


def serialize_rubric(rubric: Rubric) -> dict:
    return {
        "format": RUBRIC_FORMAT,
        "id": rubric.id,
        "case_id": rubric.case_id,
        "author": {"kind": rubric.author.kind.value, "id": rubric.author.ident},
        "criteria": [
            {"text": c.text, "weight": _weight_json(c.weight)} for c in rubric.criteria
        ],
        "status": rubric.status.value,
    }


def _weight_json(weight: Fraction) -> Union[int, float]:
    if weight.denominator == 1:
        return int(weight)
    return float(weight)


def load_rubric(path: Union[str, Path], strict: bool = True) -> Rubric:
    return parse_rubric(Path(path).read_text(encoding="utf-8"), strict=strict)
