"""Model gateway: pluggable backends, two-layer retry, tiered audit logging."""

from chartloop.gateway.audit import AuditLog, AuditView
from chartloop.gateway.backend import (
    BackendRequest,
    BackendResponse,
    FailureModelBackend,
    MockBackend,
    MockScriptMiss,
    ModelBackend,
    ScriptEntry,
    ScriptEvent,
    TransportError,
    token_estimate,
)
from chartloop.gateway.client import (
    GatewayClient,
    GatewayResult,
    categorize_error,
    effective_completion_rate,
)
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
from chartloop.gateway.retry import DEFAULT_POLICY, Backoff, RetryPolicy

__all__ = [
    "DEFAULT_POLICY",
    "AttemptFailure",
    "AuditLog",
    "AuditView",
    "Backoff",
    "BackendRequest",
    "BackendResponse",
    "CallRecord",
    "ErrorCategory",
    "FailureModelBackend",
    "GatewayClient",
    "GatewayResult",
    "MockBackend",
    "MockScriptMiss",
    "ModelBackend",
    "ModelConfig",
    "Outcome",
    "RetryPolicy",
    "SchemaExhausted",
    "ScriptEntry",
    "ScriptEvent",
    "Stage",
    "TransportError",
    "TransportExhausted",
    "Vendor",
    "categorize_error",
    "effective_completion_rate",
    "token_estimate",
]
