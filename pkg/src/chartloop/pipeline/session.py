"""Session orchestration: control state machine, chunked rounds, revisions.

A session owns the command set and processes transcript chunks through the
detect -> fill -> build cycle. Any round may revise commands produced by any
earlier round; revisions replace parameters in place, preserving uids, so
revision reach grows quadratically with round count without regeneration.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional, Sequence

from chartloop.core.commands import Command, CommandStatus, Instruction, ParameterObject
from chartloop.core.commands import validate_command
from chartloop.core.types import PatientChart, TranscriptTurn
from chartloop.errors import (
    BackendError,
    InvalidTransition,
    SchemaViolation,
    UnknownRevisionTarget,
)
from chartloop.gateway.client import GatewayClient
from chartloop.gateway.records import CallRecord
from chartloop.pipeline.ontology import OntologyClient, StubOntology
from chartloop.pipeline.stages import (
    DetectedIntent,
    apply_adjustments,
    build_command_adjustments,
    detect_instructions,
    fill_parameters,
)


class SessionState(Enum):
    IDLE = "idle"
    RECORDING = "recording"
    PAUSED = "paused"
    STOPPED = "stopped"


class ControlAction(Enum):
    PLAY = "play"
    PAUSE = "pause"
    STOP = "stop"


# The full transition table. Paused -> Stop is deliberately present: its
# absence in an earlier control design forced users to resume before
# stopping.
_TRANSITIONS: dict[tuple[SessionState, ControlAction], SessionState] = {
    (SessionState.IDLE, ControlAction.PLAY): SessionState.RECORDING,
    (SessionState.RECORDING, ControlAction.PAUSE): SessionState.PAUSED,
    (SessionState.RECORDING, ControlAction.STOP): SessionState.STOPPED,
    (SessionState.PAUSED, ControlAction.PLAY): SessionState.RECORDING,
    (SessionState.PAUSED, ControlAction.STOP): SessionState.STOPPED,
}


def next_control_state(state: SessionState, action: ControlAction) -> SessionState:
    try:
        return _TRANSITIONS[(state, action)]
    except KeyError:
        raise InvalidTransition(state.value, action.value) from None


@dataclass(frozen=True)
class ChunkPolicy:
    max_turns_per_chunk: int = 15
    tail_turns: int = 5

    def __post_init__(self) -> None:
        if self.max_turns_per_chunk < 1 or self.tail_turns < 0:
            raise ValueError("chunk policy out of range")


@dataclass(frozen=True)
class ComplexityPolicy:
    """Hierarchical detection triggers above either threshold."""

    word_threshold: int = 1500
    instruction_threshold: int = 20


@dataclass(frozen=True)
class ProcessingRound:
    index: int
    chunk: tuple[TranscriptTurn, ...]
    tail: tuple[TranscriptTurn, ...]
    detected: tuple[Instruction, ...] = ()
    revised_uids: frozenset[str] = frozenset()
    commands: tuple[Command, ...] = ()
    stage_records: tuple[CallRecord, ...] = ()
    failed: bool = False
    error: Optional[str] = None


class StageFailure(BackendError):
    """A pipeline stage exhausted its retries; carries stage attribution."""

    def __init__(self, stage_label: str, round_index: int, cause: BackendError):
        super().__init__(f"round {round_index} failed at {stage_label}: {cause}")
        self.stage_label = stage_label
        self.round_index = round_index
        self.cause = cause


class AuxiliarySource:
    """Commands arriving outside the transcript path (questionnaires,
    vitals, note templates). Drained once into the merge step."""

    def __init__(self, label: str, commands: Sequence[Command]):
        self.label = label
        self._pending = list(commands)

    def drain(self) -> list[Command]:
        out, self._pending = self._pending, []
        return out


class Session:
    """One recording session; rounds are strictly sequential."""

    def __init__(
        self,
        session_id: str,
        chart: PatientChart,
        gateway: GatewayClient,
        ontology: Optional[OntologyClient] = None,
        chunk_policy: ChunkPolicy = ChunkPolicy(),
        complexity: ComplexityPolicy = ComplexityPolicy(),
        auxiliary_sources: Optional[list[AuxiliarySource]] = None,
        seed: Optional[int] = None,
    ):
        self.id = session_id
        self.chart = chart
        self.gateway = gateway
        self.ontology = ontology or StubOntology()
        self.chunk_policy = chunk_policy
        self.complexity = complexity
        self.auxiliary_sources = auxiliary_sources or []
        self.seed = seed
        self.control_state = SessionState.IDLE
        self.rounds: list[ProcessingRound] = []
        self.command_set: dict[str, Command] = {}
        self._instructions: dict[str, Instruction] = {}
        self._uid_counter = 0

    # -- control -----------------------------------------------------------

    def control(self, action: ControlAction) -> "Session":
        self.control_state = next_control_state(self.control_state, action)
        return self

    # -- helpers -----------------------------------------------------------

    def _next_uid(self) -> str:
        self._uid_counter += 1
        return f"ins-{self._uid_counter:04d}"

    def prior_instructions(self) -> list[Instruction]:
        return list(self._instructions.values())

    def _assign_instructions(
        self, intents: Sequence[DetectedIntent], round_index: int
    ) -> list[Instruction]:
        out = []
        fresh = 0
        for intent in intents:
            if intent.revises is not None:
                target = self._instructions.get(intent.revises)
                if target is None:
                    raise UnknownRevisionTarget(
                        f"revision targets unknown instruction {intent.revises!r}"
                    )
                out.append(
                    Instruction(
                        uid=target.uid,
                        detection_order=target.detection_order,
                        command_type=intent.command_type,
                        information=intent.information,
                        round_of_origin=round_index,
                        revises=target.uid,
                    )
                )
            else:
                out.append(
                    Instruction(
                        uid=self._next_uid(),
                        detection_order=len(self._instructions) + fresh,
                        command_type=intent.command_type,
                        information=intent.information,
                        round_of_origin=round_index,
                    )
                )
                fresh += 1
        return out

    # -- the cycle ----------------------------------------------------------

    def ingest_chunk(self, turns: Sequence[TranscriptTurn]) -> ProcessingRound:
        """Run one full processing round over a transcript chunk."""
        if self.control_state is not SessionState.RECORDING:
            raise InvalidTransition(self.control_state.value, "ingest_chunk")
        if not turns:
            raise SchemaViolation("chunk must contain at least one turn", "turns")
        round_index = len(self.rounds)
        tail = self.rounds[-1].chunk[-self.chunk_policy.tail_turns :] if self.rounds else ()
        records: list[CallRecord] = []
        stage_label = "detect_instructions"
        try:
            window = tuple(tail) + tuple(turns)
            intents, recs = detect_instructions(
                self.gateway,
                window,
                self.prior_instructions(),
                session_id=self.id,
                round_index=round_index,
                word_threshold=self.complexity.word_threshold,
                instruction_threshold=self.complexity.instruction_threshold,
                seed=self.seed,
            )
            records.extend(recs)
            instructions = self._assign_instructions(intents, round_index)

            stage_label = "fill_parameters"
            parameter_objects: list[ParameterObject] = []
            for instruction in instructions:
                params, recs = fill_parameters(
                    self.gateway,
                    instruction,
                    self.chart.demographics,
                    self.ontology,
                    session_id=self.id,
                    round_index=round_index,
                    seed=self.seed,
                )
                parameter_objects.append(params)
                records.extend(recs)

            stage_label = "build_commands"
            commands = self._build_commands(parameter_objects, instructions, round_index, records)
        except BackendError as exc:
            failed = ProcessingRound(
                index=round_index,
                chunk=tuple(turns),
                tail=tuple(tail),
                stage_records=tuple(records),
                failed=True,
                error=str(exc),
            )
            self.rounds.append(failed)
            if self.gateway.audit_log is not None:
                self.gateway.audit_log.write_cycle_summary(self.id, round_index)
            raise StageFailure(stage_label, round_index, exc) from exc

        round_ = ProcessingRound(
            index=round_index,
            chunk=tuple(turns),
            tail=tuple(tail),
            detected=tuple(instructions),
            revised_uids=frozenset(i.uid for i in instructions if i.revises is not None),
            commands=tuple(commands),
            stage_records=tuple(records),
        )
        self.rounds.append(round_)
        self.apply_revisions(round_)
        if self.gateway.audit_log is not None:
            self.gateway.audit_log.write_cycle_summary(self.id, round_index)
        return round_

    def _build_commands(
        self,
        parameter_objects: list[ParameterObject],
        instructions: list[Instruction],
        round_index: int,
        records: list[CallRecord],
    ) -> list[Command]:
        commands: list[Command] = []
        if parameter_objects:
            adjustments, recs = build_command_adjustments(
                self.gateway,
                parameter_objects,
                self.chart,
                list(self.command_set.values()),
                session_id=self.id,
                round_index=round_index,
                seed=self.seed,
            )
            records.extend(recs)
            for params in parameter_objects:
                final = apply_adjustments(params, adjustments.get(params.instruction_uid, {}))
                outcome = validate_command(
                    Command(uid=final.instruction_uid, command_type=final.command_type, parameters=final),
                    self.chart,
                )
                commands.append(
                    Command(
                        uid=final.instruction_uid,
                        command_type=final.command_type,
                        parameters=final,
                        status=outcome.status,
                        rejection_reason=outcome.reason,
                    )
                )
        for source in self.auxiliary_sources:
            for command in source.drain():
                outcome = validate_command(command, self.chart)
                commands.append(
                    replace(command, status=outcome.status, rejection_reason=outcome.reason)
                )
        return commands

    def apply_revisions(self, round_: ProcessingRound) -> dict[str, Command]:
        """Fold a processed round into the command set.

        Revisions replace the target command's parameters and bump its
        revision counter; uid and detection order are preserved. New
        commands are added at revision 0. Applied atomically: a bad
        revision target leaves the command set untouched.
        """
        staged = dict(self.command_set)
        for instruction in round_.detected:
            if instruction.revises is None:
                continue
            if instruction.revises not in staged:
                raise UnknownRevisionTarget(
                    f"revision targets unknown command {instruction.revises!r}"
                )
        for command in round_.commands:
            existing = staged.get(command.uid)
            if existing is not None and command.uid in round_.revised_uids:
                staged[command.uid] = replace(
                    existing,
                    parameters=command.parameters,
                    command_type=command.command_type,
                    revision=existing.revision + 1,
                    status=command.status,
                    rejection_reason=command.rejection_reason,
                )
            else:
                staged[command.uid] = command
        self.command_set = staged
        for instruction in round_.detected:
            if instruction.revises is None:
                self._instructions[instruction.uid] = instruction
        return self.command_set

    # -- chunking ------------------------------------------------------------

    def feed_transcript(self, turns: Sequence[TranscriptTurn]) -> list[ProcessingRound]:
        """Split a transcript into chunks and ingest each as one round."""
        rounds = []
        size = self.chunk_policy.max_turns_per_chunk
        for start in range(0, len(turns), size):
            rounds.append(self.ingest_chunk(tuple(turns[start : start + size])))
        return rounds


def split_chunks(
    turns: Sequence[TranscriptTurn], policy: ChunkPolicy
) -> list[tuple[TranscriptTurn, ...]]:
    size = policy.max_turns_per_chunk
    return [tuple(turns[i : i + size]) for i in range(0, len(turns), size)]
