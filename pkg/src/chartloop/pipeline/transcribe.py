"""Stage 1 boundary: audio to speaker-attributed transcript.

Real speech-to-text and diarization live behind this interface as vendor
adapters. The bundled mock replays transcripts from case fixture files, so
end-to-end runs never need audio.
"""

from __future__ import annotations

from pathlib import Path
from typing import Protocol, Union, runtime_checkable

from chartloop.core.caseio import load_case
from chartloop.core.types import TranscriptTurn
from chartloop.errors import MalformedDocument


@runtime_checkable
class Transcriber(Protocol):
    def transcribe(self, audio_ref: str) -> tuple[TranscriptTurn, ...]: ...


class MockTranscriber:
    """Replays the transcript of a case fixture given its file path, or a
    case id resolvable under ``fixture_dir``."""

    def __init__(self, fixture_dir: Union[str, Path, None] = None):
        self.fixture_dir = Path(fixture_dir) if fixture_dir else None

    def _resolve(self, audio_ref: str) -> Path:
        direct = Path(audio_ref)
        if direct.exists():
            return direct
        if self.fixture_dir is not None:
            for pattern in (f"{audio_ref}", f"{audio_ref}.json", f"{audio_ref}.case.json", f"case_{audio_ref}.json"):
                candidate = self.fixture_dir / pattern
                if candidate.exists():
                    return candidate
        raise MalformedDocument(f"no case fixture for audio ref {audio_ref!r}")

    def transcribe(self, audio_ref: str) -> tuple[TranscriptTurn, ...]:
        return load_case(self._resolve(audio_ref)).transcript
