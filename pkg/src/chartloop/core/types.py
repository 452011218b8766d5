"""Core domain types: transcripts, charts, cases.

All types are immutable after construction and validate their invariants in
``__post_init__``, raising :class:`SchemaViolation` with a path into the
offending field. Collections are stored as tuples so instances can be shared
freely between threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from chartloop.errors import SchemaViolation


class Speaker(Enum):
    CLINICIAN = "clinician"
    PATIENT = "patient"
    FAMILY = "family"
    OTHER = "other"


class Ontology(Enum):
    ICD10 = "ICD10"
    RXNORM = "RxNorm"
    SNOMED = "SNOMED"


class Sex(Enum):
    FEMALE = "female"
    MALE = "male"
    UNSPECIFIED = "unspecified"


class Provenance(Enum):
    REAL_WORLD = "real_world"
    SYNTHETIC = "synthetic"


class Acuity(Enum):
    LOW = "low"
    MODERATE = "moderate"
    HIGH = "high"


class ProblemCount(Enum):
    SINGLE = "single"
    MULTI = "multi"


class EncounterLength(Enum):
    SHORT = "short"
    MEDIUM = "medium"
    LONG = "long"


@dataclass(frozen=True)
class CodedConcept:
    """A concept coded against one of the supported ontologies."""

    system: Ontology
    code: str
    display: str

    def __post_init__(self) -> None:
        if not isinstance(self.system, Ontology):
            raise SchemaViolation("unknown code system", "system")
        if not self.code:
            raise SchemaViolation("code must be non-empty", "code")


@dataclass(frozen=True)
class TranscriptTurn:
    """One speaker-attributed utterance.

    ``speaker_label`` carries the raw label; for the three canonical
    speakers it defaults to the enum value, for ``Speaker.OTHER`` it must
    name the actual participant (e.g. "interpreter").
    """

    index: int
    speaker: Speaker
    text: str
    speaker_label: str = ""
    start_offset: Optional[float] = None

    def __post_init__(self) -> None:
        if self.index < 0:
            raise SchemaViolation("turn index must be >= 0", "index")
        if not self.text:
            raise SchemaViolation("turn text must be non-empty", "text")
        if not self.speaker_label:
            if self.speaker is Speaker.OTHER:
                raise SchemaViolation(
                    "speaker label required for non-canonical speakers", "speaker"
                )
            object.__setattr__(self, "speaker_label", self.speaker.value)

    @property
    def label(self) -> str:
        return self.speaker_label


@dataclass(frozen=True)
class Demographics:
    age: int
    sex: Sex

    def __post_init__(self) -> None:
        if self.age < 0:
            raise SchemaViolation("age must be >= 0", "demographics.age")


@dataclass(frozen=True)
class PatientChart:
    """Longitudinal patient context injected at the final pipeline stage."""

    demographics: Demographics
    conditions: tuple[CodedConcept, ...] = ()
    medications: tuple[CodedConcept, ...] = ()
    allergies: tuple[str, ...] = ()
    prior_commands: tuple = ()  # tuple[Command, ...]; untyped to avoid an import cycle

    def has_allergy(self, substance: str) -> bool:
        wanted = substance.casefold().strip()
        return any(a.casefold().strip() == wanted for a in self.allergies)


EMPTY_CHART = PatientChart(demographics=Demographics(age=0, sex=Sex.UNSPECIFIED))


@dataclass(frozen=True)
class CaseMetadata:
    specialty: str
    acuity: Acuity
    problem_count: ProblemCount
    encounter_length: EncounterLength


@dataclass(frozen=True)
class Case:
    """The unit of evaluation: a transcript, a point-in-time note and the
    longitudinal chart, plus ground-truth provenance and stratification
    metadata."""

    id: str
    transcript: tuple[TranscriptTurn, ...]
    note: dict[str, str]
    longitudinal: PatientChart
    provenance_truth: Provenance
    metadata: CaseMetadata

    def __post_init__(self) -> None:
        if not self.id:
            raise SchemaViolation("case id must be non-empty", "id")
        if not self.transcript:
            raise SchemaViolation("transcript must be non-empty", "transcript")
        for pos, turn in enumerate(self.transcript):
            if turn.index != pos:
                raise SchemaViolation(
                    "non-contiguous turns", f"transcript[{pos}].index"
                )

    @property
    def word_count(self) -> int:
        return sum(len(t.text.split()) for t in self.transcript)
