"""Structured records for every model call: stages, error taxonomy, audit rows."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from chartloop.errors import BackendError


class Stage(Enum):
    TRANSCRIBE = "transcribe"
    DIARIZE = "diarize"
    DETECT_INSTRUCTIONS = "detect_instructions"
    FILL_PARAMETERS = "fill_parameters"
    BUILD_COMMANDS = "build_commands"
    SCORE_RUBRIC = "score_rubric"
    GENERATE_RUBRIC = "generate_rubric"


class Vendor(Enum):
    VENDOR_A = "vendor_a"
    VENDOR_B = "vendor_b"
    MOCK = "mock"


class Outcome(Enum):
    SUCCESS = "success"
    TRANSPORT_EXHAUSTED = "transport_exhausted"
    SCHEMA_EXHAUSTED = "schema_exhausted"


class ErrorCategory(Enum):
    UNEXPECTED_OUTPUT_FORMAT = "unexpected_output_format"
    PARAMETER_TYPE_MISMATCH = "parameter_type_mismatch"
    TRANSPORT_FAILURE = "transport_failure"
    TIMEOUT = "timeout"
    OTHER = "other"


@dataclass(frozen=True)
class ModelConfig:
    vendor: Vendor
    model_name: str
    seed: Optional[int] = None

    def as_dict(self) -> dict:
        return {"vendor": self.vendor.value, "model_name": self.model_name, "seed": self.seed}


@dataclass(frozen=True)
class AttemptFailure:
    """One failed attempt inside a call, for the exception trail."""

    transport_attempt: int
    schema_attempt: int
    category: ErrorCategory
    detail: str


@dataclass(frozen=True)
class CallRecord:
    """The audit row written for every gateway call, success or not.

    ``transport_attempts`` counts attempts within the final schema attempt
    (the transport budget resets when a schema retry re-sends the prompt);
    token counts aggregate every attempt so cost accounting bills retries.
    """

    session_id: str
    round_index: int
    stage: Stage
    prompt_chars: int
    input_tokens: int
    output_tokens: int
    latency_ms: int
    transport_attempts: int
    schema_attempts: int
    outcome: Outcome
    model_config: ModelConfig
    error_category: Optional[ErrorCategory] = None
    error_detail: Optional[str] = None
    section: Optional[str] = None
    instruction_uid: Optional[str] = None

    def __post_init__(self) -> None:
        if not 1 <= self.transport_attempts <= 4 or not 1 <= self.schema_attempts <= 4:
            raise ValueError("attempts never exceed 1 initial + 3 retries")
        if (self.outcome is Outcome.SUCCESS) != (self.error_category is None):
            raise ValueError("error category present iff the call failed")

    @property
    def errored(self) -> bool:
        """True when any attempt inside this call failed."""
        return (
            self.outcome is not Outcome.SUCCESS
            or self.transport_attempts > 1
            or self.schema_attempts > 1
        )

    @property
    def recovered(self) -> bool:
        return self.errored and self.outcome is Outcome.SUCCESS

    def as_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "round_index": self.round_index,
            "stage": self.stage.value,
            "prompt_chars": self.prompt_chars,
            "input_tokens": self.input_tokens,
            "output_tokens": self.output_tokens,
            "latency_ms": self.latency_ms,
            "transport_attempts": self.transport_attempts,
            "schema_attempts": self.schema_attempts,
            "outcome": self.outcome.value,
            "model_config": self.model_config.as_dict(),
            "error_category": self.error_category.value if self.error_category else None,
            "error_detail": self.error_detail,
            "section": self.section,
            "instruction_uid": self.instruction_uid,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "CallRecord":
        cfg = doc["model_config"]
        return cls(
            session_id=doc["session_id"],
            round_index=doc["round_index"],
            stage=Stage(doc["stage"]),
            prompt_chars=doc["prompt_chars"],
            input_tokens=doc["input_tokens"],
            output_tokens=doc["output_tokens"],
            latency_ms=doc["latency_ms"],
            transport_attempts=doc["transport_attempts"],
            schema_attempts=doc["schema_attempts"],
            outcome=Outcome(doc["outcome"]),
            model_config=ModelConfig(
                vendor=Vendor(cfg["vendor"]), model_name=cfg["model_name"], seed=cfg.get("seed")
            ),
            error_category=ErrorCategory(doc["error_category"]) if doc.get("error_category") else None,
            error_detail=doc.get("error_detail"),
            section=doc.get("section"),
            instruction_uid=doc.get("instruction_uid"),
        )


class TransportExhausted(BackendError):
    """1 + 3 transport attempts failed inside a single schema attempt."""

    def __init__(self, message: str, trail: tuple[AttemptFailure, ...], record: CallRecord):
        super().__init__(message)
        self.trail = trail
        self.record = record


class SchemaExhausted(BackendError):
    """1 + 3 responses failed schema validation."""

    def __init__(
        self,
        message: str,
        trail: tuple[AttemptFailure, ...],
        record: CallRecord,
        category: ErrorCategory,
    ):
        super().__init__(message)
        self.trail = trail
        self.record = record
        self.category = category
