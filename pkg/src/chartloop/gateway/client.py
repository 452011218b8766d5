"""The single choke point for model calls.

Every call runs the two-layer retry loop: up to 1+3 transport attempts per
schema attempt, up to 1+3 schema attempts per call. Schema retries re-send
the prompt with the validator's error appended. A CallRecord lands in the
audit log whatever the outcome.
"""

from __future__ import annotations

import json
import random
import time
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional, Union

import jsonschema

from chartloop.errors import ConfigError, DomainError
from chartloop.gateway.audit import AuditLog
from chartloop.gateway.backend import BackendRequest, ModelBackend, TransportError
from chartloop.gateway.records import (
    AttemptFailure,
    CallRecord,
    ErrorCategory,
    ModelConfig,
    Outcome,
    SchemaExhausted,
    Stage,
    TransportExhausted,
    Vendor,
)
from chartloop.gateway.retry import DEFAULT_POLICY, RetryPolicy

_SCHEMA_REPAIR_TEMPLATE = (
    "{prompt}\n\n"
    "Your previous response failed validation with this error:\n{error}\n"
    "Return a corrected response that satisfies the required schema."
)


def categorize_error(failure: BaseException) -> ErrorCategory:
    """Total mapping from failure evidence to an error category."""
    if isinstance(failure, TransportError):
        return ErrorCategory.TIMEOUT if failure.timeout else ErrorCategory.TRANSPORT_FAILURE
    if isinstance(failure, json.JSONDecodeError):
        return ErrorCategory.UNEXPECTED_OUTPUT_FORMAT
    if isinstance(failure, jsonschema.ValidationError):
        # A parsed document holding the wrong value type is a parameter
        # mismatch; structural problems are format errors.
        if failure.validator == "type":
            return ErrorCategory.PARAMETER_TYPE_MISMATCH
        return ErrorCategory.UNEXPECTED_OUTPUT_FORMAT
    if isinstance(failure, (TimeoutError,)):
        return ErrorCategory.TIMEOUT
    if isinstance(failure, (ConnectionError, OSError)):
        return ErrorCategory.TRANSPORT_FAILURE
    return ErrorCategory.OTHER


def _as_unit_fraction(value: Union[int, float, Fraction], name: str) -> Fraction:
    frac = Fraction(repr(value)) if isinstance(value, float) else Fraction(value)
    if not 0 <= frac <= 1:
        raise DomainError(f"{name} must be in [0, 1], got {value}")
    return frac


def effective_completion_rate(
    attempt_error_fraction: Union[int, float, Fraction],
    recovery_fraction: Union[int, float, Fraction],
) -> float:
    """1 - e * (1 - r): the fraction of attempts that end in success once
    retries absorb recoverable errors. Computed in exact decimal arithmetic."""
    e = _as_unit_fraction(attempt_error_fraction, "attempt_error_fraction")
    r = _as_unit_fraction(recovery_fraction, "recovery_fraction")
    return float(1 - e * (1 - r))


@dataclass(frozen=True)
class GatewayResult:
    document: Union[dict, list]
    record: CallRecord


class GatewayClient:
    """Wraps one backend with retries, audit logging, and token accounting.

    ``sleeper`` is injectable so tests replay backoff schedules without
    waiting; the jitter RNG is seeded for deterministic delay sequences.
    """

    def __init__(
        self,
        backend: ModelBackend,
        audit_log: Optional[AuditLog] = None,
        policy: RetryPolicy = DEFAULT_POLICY,
        seed: Optional[int] = None,
        sleeper: Callable[[float], None] = time.sleep,
    ):
        self.backend = backend
        self.audit_log = audit_log
        self.policy = policy
        self.seed = seed
        self._rng = random.Random(seed)
        self._sleeper = sleeper
        # Validator construction is costly; cache per schema object. Entries
        # hold the schema itself so the id key cannot be recycled.
        self._validators: dict[int, tuple[dict, object]] = {}

    def _validator_for(self, response_schema: dict):
        cached = self._validators.get(id(response_schema))
        if cached is not None and cached[0] is response_schema:
            return cached[1]
        try:
            validator_cls = jsonschema.validators.validator_for(response_schema)
            validator_cls.check_schema(response_schema)
        except jsonschema.SchemaError as exc:
            raise ConfigError(f"malformed response schema: {exc.message}") from exc
        validator = validator_cls(response_schema)
        if len(self._validators) > 64:
            self._validators.clear()
        self._validators[id(response_schema)] = (response_schema, validator)
        return validator

    @property
    def model_config(self) -> ModelConfig:
        return ModelConfig(
            vendor=self.backend.vendor, model_name=self.backend.model_name, seed=self.seed
        )

    def call(
        self,
        stage: Stage,
        prompt: str,
        response_schema: dict,
        *,
        session_id: str = "adhoc",
        round_index: int = 0,
        section: Optional[str] = None,
        instruction_uid: Optional[str] = None,
        seed: Optional[int] = None,
        policy: Optional[RetryPolicy] = None,
    ) -> GatewayResult:
        policy = policy or self.policy
        validator = self._validator_for(response_schema)

        trail: list[AttemptFailure] = []
        input_tokens = output_tokens = latency_ms = 0
        attempt_counter = 0
        current_prompt = prompt
        last_response_text: Optional[str] = None

        def finish(
            outcome: Outcome,
            transport_attempts: int,
            schema_attempts: int,
            category: Optional[ErrorCategory],
            detail: Optional[str],
        ) -> CallRecord:
            record = CallRecord(
                session_id=session_id,
                round_index=round_index,
                stage=stage,
                prompt_chars=len(prompt),
                input_tokens=input_tokens,
                output_tokens=output_tokens,
                latency_ms=latency_ms,
                transport_attempts=transport_attempts,
                schema_attempts=schema_attempts,
                outcome=outcome,
                model_config=ModelConfig(
                    vendor=self.backend.vendor,
                    model_name=self.backend.model_name,
                    seed=seed if seed is not None else self.seed,
                ),
                error_category=category,
                error_detail=detail,
                section=section,
                instruction_uid=instruction_uid,
            )
            if self.audit_log is not None:
                self.audit_log.record_stage_call(record, prompt, last_response_text)
            return record

        for schema_attempt in range(1, policy.max_schema_attempts + 1):
            response = None
            for transport_attempt in range(1, policy.max_transport_attempts + 1):
                request = BackendRequest(
                    stage=stage,
                    prompt=current_prompt,
                    response_schema=response_schema,
                    round_index=round_index,
                    section=section,
                    instruction_uid=instruction_uid,
                    seed=seed,
                    attempt=attempt_counter,
                )
                attempt_counter += 1
                try:
                    response = self.backend.complete(request)
                except TransportError as exc:
                    latency_ms += exc.latency_ms
                    category = categorize_error(exc)
                    trail.append(
                        AttemptFailure(transport_attempt, schema_attempt, category, str(exc))
                    )
                    if transport_attempt == policy.max_transport_attempts:
                        record = finish(
                            Outcome.TRANSPORT_EXHAUSTED,
                            transport_attempt,
                            schema_attempt,
                            category,
                            str(exc),
                        )
                        raise TransportExhausted(
                            f"{stage.value}: transport failed after "
                            f"{transport_attempt} attempts: {exc}",
                            tuple(trail),
                            record,
                        ) from exc
                    self._sleeper(
                        policy.backoff.delay_ms(transport_attempt - 1, self._rng) / 1000.0
                    )
                else:
                    input_tokens += response.input_tokens
                    output_tokens += response.output_tokens
                    latency_ms += response.latency_ms
                    last_response_text = response.text
                    break

            assert response is not None
            failure: BaseException
            try:
                document = json.loads(response.text)
            except json.JSONDecodeError as exc:
                failure = exc
                detail = f"response is not valid JSON: {exc}"
            else:
                error = next(iter(validator.iter_errors(document)), None)
                if error is None:
                    record = finish(
                        Outcome.SUCCESS,
                        transport_attempt,
                        schema_attempt,
                        None,
                        None,
                    )
                    return GatewayResult(document=document, record=record)
                failure = error
                detail = f"schema validation failed at {list(error.absolute_path)}: {error.message}"

            category = categorize_error(failure)
            trail.append(AttemptFailure(transport_attempt, schema_attempt, category, detail))
            if schema_attempt == policy.max_schema_attempts:
                record = finish(
                    Outcome.SCHEMA_EXHAUSTED, transport_attempt, schema_attempt, category, detail
                )
                raise SchemaExhausted(
                    f"{stage.value}: schema-invalid after {schema_attempt} attempts: {detail}",
                    tuple(trail),
                    record,
                    category,
                )
            current_prompt = _SCHEMA_REPAIR_TEMPLATE.format(prompt=prompt, error=detail)

        raise AssertionError("unreachable: retry loop must return or raise")
