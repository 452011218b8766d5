"""Model backends behind the gateway choke point.

Real vendor clients implement :class:`ModelBackend`; this module ships the
deterministic mock used for offline runs. Mock scripts map
(stage, round, section, seed) to a queue of events so fixtures can replay
entire sessions, including injected transport and schema failures.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Protocol, Union, runtime_checkable

from chartloop.errors import ConfigError
from chartloop.gateway.records import Stage, Vendor


def token_estimate(text: str) -> int:
    """Deterministic token count stand-in: ~4 chars per token, minimum 1."""
    return max(1, len(text) // 4)


class TransportError(Exception):
    """HTTP-level failure: connection problems, 5xx, timeouts."""

    def __init__(self, message: str, timeout: bool = False, latency_ms: int = 0):
        super().__init__(message)
        self.timeout = timeout
        self.latency_ms = latency_ms


@dataclass(frozen=True)
class BackendRequest:
    stage: Stage
    prompt: str
    response_schema: dict
    round_index: int = 0
    section: Optional[str] = None
    instruction_uid: Optional[str] = None
    seed: Optional[int] = None
    attempt: int = 0  # 0-based attempt counter within one gateway call


@dataclass(frozen=True)
class BackendResponse:
    text: str
    input_tokens: int
    output_tokens: int
    latency_ms: int


@runtime_checkable
class ModelBackend(Protocol):
    vendor: Vendor
    model_name: str
    reasoning: bool

    def complete(self, request: BackendRequest) -> BackendResponse: ...


# ---------------------------------------------------------------------------
# scripted mock


@dataclass
class ScriptEvent:
    """One scripted attempt outcome.

    kind: "document" (valid JSON payload), "text" (raw body, possibly
    malformed), or "transport_error".
    """

    kind: str
    document: Optional[dict] = None
    text: str = ""
    message: str = "connection reset"
    timeout: bool = False
    latency_ms: int = 100

    @classmethod
    def from_dict(cls, obj: dict) -> "ScriptEvent":
        kind = obj.get("kind")
        if kind not in ("document", "text", "transport_error"):
            raise ConfigError(f"unknown script event kind {kind!r}")
        return cls(
            kind=kind,
            document=obj.get("document"),
            text=obj.get("text", ""),
            message=obj.get("message", "connection reset"),
            timeout=bool(obj.get("timeout", False)),
            latency_ms=int(obj.get("latency_ms", 100)),
        )

    def body(self) -> str:
        if self.kind == "document":
            return json.dumps(self.document, sort_keys=True, ensure_ascii=False)
        return self.text


@dataclass
class ScriptEntry:
    """Events served to requests matching the given constraints.

    Unset constraints match anything; entries are tried in declaration
    order and consumed event by event. A looping entry wraps around when
    exhausted so one scripted pipeline run can replay indefinitely.
    """

    events: list[ScriptEvent]
    stage: Optional[Stage] = None
    round_index: Optional[int] = None
    section: Optional[str] = None
    instruction_uid: Optional[str] = None
    seed: Optional[int] = None
    loop: bool = False
    _cursor: int = field(default=0, repr=False)

    def matches(self, request: BackendRequest) -> bool:
        return (
            (self.stage is None or self.stage is request.stage)
            and (self.round_index is None or self.round_index == request.round_index)
            and (self.section is None or self.section == request.section)
            and (self.instruction_uid is None or self.instruction_uid == request.instruction_uid)
            and (self.seed is None or self.seed == request.seed)
        )

    @property
    def exhausted(self) -> bool:
        return not self.loop and self._cursor >= len(self.events)

    def next_event(self) -> ScriptEvent:
        if self.loop:
            self._cursor %= len(self.events)
        event = self.events[self._cursor]
        self._cursor += 1
        return event


class MockScriptMiss(Exception):
    """No script entry matched; the fixture does not cover this request."""


@dataclass
class MockBackend:
    """Deterministic scripted backend: identical request sequences replay to
    identical responses, byte for byte."""

    entries: list[ScriptEntry]
    model_name: str = "mock-1"
    script_id: str = "inline"
    vendor: Vendor = Vendor.MOCK
    reasoning: bool = False
    requests: list[BackendRequest] = field(default_factory=list)

    def complete(self, request: BackendRequest) -> BackendResponse:
        self.requests.append(request)
        event = self._pop(request)
        if event.kind == "transport_error":
            raise TransportError(event.message, timeout=event.timeout, latency_ms=event.latency_ms)
        body = event.body()
        return BackendResponse(
            text=body,
            input_tokens=token_estimate(request.prompt),
            output_tokens=token_estimate(body),
            latency_ms=event.latency_ms,
        )

    def _pop(self, request: BackendRequest) -> ScriptEvent:
        matched = False
        for entry in self.entries:
            if entry.matches(request):
                matched = True
                if not entry.exhausted:
                    return entry.next_event()
        if matched:
            raise MockScriptMiss(
                f"script exhausted for stage={request.stage.value} "
                f"round={request.round_index} section={request.section} "
                f"uid={request.instruction_uid} seed={request.seed}"
            )
        raise MockScriptMiss(
            f"no script entry for stage={request.stage.value} round={request.round_index} "
            f"section={request.section} uid={request.instruction_uid} seed={request.seed}"
        )

    def prompts_for(self, stage: Stage) -> list[str]:
        return [r.prompt for r in self.requests if r.stage is stage]

    @classmethod
    def single(cls, document: dict, stage: Optional[Stage] = None, **kwargs) -> "MockBackend":
        return cls(entries=[ScriptEntry(events=[ScriptEvent("document", document=document)], stage=stage)], **kwargs)

    @classmethod
    def repeating(cls, document: dict, **kwargs) -> "MockBackend":
        """Serve the same document to every request, forever."""
        return cls(
            entries=[ScriptEntry(events=[ScriptEvent("document", document=document)], loop=True)],
            **kwargs,
        )

    @classmethod
    def from_events(cls, events: list[ScriptEvent], **kwargs) -> "MockBackend":
        return cls(entries=[ScriptEntry(events=list(events))], **kwargs)

    @classmethod
    def from_script(cls, doc: Union[dict, str, Path], **kwargs) -> "MockBackend":
        """Load the fixture script format: {"script_id", "responses": [...]}."""
        if isinstance(doc, (str, Path)):
            doc = json.loads(Path(doc).read_text(encoding="utf-8"))
        entries = []
        for obj in doc.get("responses", []):
            entries.append(
                ScriptEntry(
                    events=[ScriptEvent.from_dict(e) for e in obj["events"]],
                    stage=Stage(obj["stage"]) if obj.get("stage") else None,
                    round_index=obj.get("round"),
                    section=obj.get("section"),
                    instruction_uid=obj.get("instruction_uid"),
                    seed=obj.get("seed"),
                    loop=bool(obj.get("loop", False)),
                )
            )
        return cls(entries=entries, script_id=str(doc.get("script_id", "file")), **kwargs)


def repeat_document(document: dict, times: int) -> list[ScriptEvent]:
    return [ScriptEvent("document", document=document) for _ in range(times)]


@dataclass
class FailureModelBackend:
    """Procedural mock that injects failures at configured rates.

    Per call (attempt counter 0 marks a fresh call) the backend draws the
    call's fate from a seeded RNG: with ``attempt_error_rate`` the first
    attempt fails; an errored call then recovers on the retry with
    ``recovery_rate``, otherwise every attempt fails until the gateway
    exhausts its budget. Error mode alternates between transport failures
    and malformed output, mirroring the dominant real failure classes.
    """

    seed: int
    attempt_error_rate: float
    recovery_rate: float
    payload: dict = field(default_factory=lambda: {"ok": True})
    model_name: str = "mock-failure-model"
    vendor: Vendor = Vendor.MOCK
    reasoning: bool = False

    def __post_init__(self) -> None:
        self._rng = random.Random(self.seed)
        self._plan: str = "clean"  # clean | recover | exhaust
        self._mode: str = "transport"

    def complete(self, request: BackendRequest) -> BackendResponse:
        if request.attempt == 0:
            if self._rng.random() < self.attempt_error_rate:
                self._plan = "recover" if self._rng.random() < self.recovery_rate else "exhaust"
                self._mode = "transport" if self._rng.random() < 0.5 else "schema"
            else:
                self._plan = "clean"
        fail = self._plan == "exhaust" or (self._plan == "recover" and request.attempt == 0)
        if fail:
            if self._mode == "transport":
                raise TransportError("injected transport failure", latency_ms=5)
            return self._respond(request, "this is not valid json {", latency_ms=5)
        return self._respond(
            request, json.dumps(self.payload, sort_keys=True, ensure_ascii=False), latency_ms=20
        )

    def _respond(self, request: BackendRequest, body: str, latency_ms: int) -> BackendResponse:
        return BackendResponse(
            text=body,
            input_tokens=token_estimate(request.prompt),
            output_tokens=token_estimate(body),
            latency_ms=latency_ms,
        )
