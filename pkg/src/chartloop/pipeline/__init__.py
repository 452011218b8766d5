"""The four-stage documentation pipeline and its session state machine."""

from chartloop.pipeline.notes import note_text, render_command_line, render_note
from chartloop.pipeline.ontology import OntologyClient, StubOntology, map_to_code
from chartloop.pipeline.session import (
    AuxiliarySource,
    ChunkPolicy,
    ComplexityPolicy,
    ControlAction,
    ProcessingRound,
    Session,
    SessionState,
    StageFailure,
    next_control_state,
    split_chunks,
)
from chartloop.pipeline.stages import (
    BUILD_SCHEMA,
    DETECT_SCHEMA,
    DetectedIntent,
    detect_instructions,
    fill_parameters,
    is_complex,
    parameter_schema,
    render_chart,
    render_demographics,
    render_window,
)
from chartloop.pipeline.transcribe import MockTranscriber, Transcriber

__all__ = [
    "BUILD_SCHEMA",
    "DETECT_SCHEMA",
    "AuxiliarySource",
    "ChunkPolicy",
    "ComplexityPolicy",
    "ControlAction",
    "DetectedIntent",
    "MockTranscriber",
    "OntologyClient",
    "ProcessingRound",
    "Session",
    "SessionState",
    "StageFailure",
    "StubOntology",
    "Transcriber",
    "detect_instructions",
    "fill_parameters",
    "is_complex",
    "map_to_code",
    "next_control_state",
    "note_text",
    "parameter_schema",
    "render_chart",
    "render_command_line",
    "render_demographics",
    "render_note",
    "render_window",
    "split_chunks",
]
