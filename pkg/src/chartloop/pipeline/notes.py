"""Render a session's command set into a point-in-time note.

The note is the human-readable view of the structured commands: one section
per registry section, lines ordered by command uid assignment. Rejected
commands never reach the note.
"""

from __future__ import annotations

from typing import Iterable, Mapping

from chartloop.core.commands import Command, CommandStatus
from chartloop.core.registry import REGISTRY, SECTIONS, CommandName
from chartloop.core.types import CodedConcept


def _fmt_value(value) -> str:
    if isinstance(value, CodedConcept):
        return f"{value.display} ({value.system.value} {value.code})"
    if isinstance(value, (list, tuple)):
        return ", ".join(_fmt_value(v) for v in value)
    if isinstance(value, bool):
        return "yes" if value else "no"
    return str(value)


_NARRATIVE_FIELDS = ("narrative", "assessment")

_LABELS = {
    CommandName.DIAGNOSE: "Diagnosis",
    CommandName.PRESCRIBE: "Prescription",
    CommandName.ASSESS: "Assessment",
    CommandName.PLAN: "Plan",
    CommandName.HISTORY_OF_PRESENT_ILLNESS: "HPI",
    CommandName.MENTAL_STATUS_EXAM: "Mental status",
    CommandName.MEDICATION_STATEMENT: "Medication",
    CommandName.ALLERGY: "Allergy",
    CommandName.PAST_MEDICAL_HISTORY: "Past medical history",
    CommandName.QUESTIONNAIRE: "Questionnaire",
    CommandName.VITALS: "Vitals",
    CommandName.FOLLOW_UP: "Follow up",
}


def render_command_line(command: Command) -> str:
    fields = command.parameters.fields
    for name in _NARRATIVE_FIELDS:
        if name in fields and len(fields) == 1:
            return f"{_LABELS[command.command_type]}: {fields[name]}"
    parts = [f"{name}={_fmt_value(value)}" for name, value in fields.items()]
    return f"{_LABELS[command.command_type]}: " + "; ".join(parts)


def render_note(commands: Iterable[Command]) -> dict[str, str]:
    """Validated commands grouped into note sections, uid order preserved."""
    by_section: dict[str, list[str]] = {section: [] for section in SECTIONS}
    for command in sorted(commands, key=lambda c: c.uid):
        if command.status is not CommandStatus.VALIDATED:
            continue
        section = REGISTRY[command.command_type].section
        by_section[section].append(render_command_line(command))
    return {section: "\n".join(lines) for section, lines in by_section.items() if lines}


def note_text(note: Mapping[str, str]) -> str:
    return "\n\n".join(f"## {section}\n{body}" for section, body in sorted(note.items()))
