"""Exception hierarchy shared across the package.

Data errors (malformed documents, invariant violations) are distinct from
backend errors (exhausted model calls) so the CLI can map them to different
exit codes.
"""

from __future__ import annotations


class ChartloopError(Exception):
    """Base class for every error raised by this package."""


class DataError(ChartloopError):
    """Bad input data or a violated domain invariant."""


class MalformedDocument(DataError):
    """Input could not be parsed at the syntax level."""


class SchemaViolation(DataError):
    """Parsed input violates a structural or domain invariant.

    ``path`` is a dotted/indexed locator into the offending document,
    e.g. ``transcript[2].speaker``.
    """

    def __init__(self, message: str, path: str = "") -> None:
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path
        self.reason = message


class DomainError(DataError):
    """Numeric argument outside its documented domain."""


class EmptyInput(DataError):
    """An aggregate operation received no records."""


class Conflict(DataError):
    """Write rejected because an identifier already exists."""


class UnknownSession(DataError):
    pass


class InvalidTransition(DataError):
    def __init__(self, state: str, action: str) -> None:
        super().__init__(f"cannot apply {action} in state {state}")
        self.state = state
        self.action = action


class UnresolvableCode(DataError):
    """Ontology lookup failed for the given free text."""


class UnknownRevisionTarget(DataError):
    """A revision referenced an instruction uid that was never detected."""


class EmptyBenchmark(DataError):
    pass


class CaseSetMismatch(DataError):
    pass


class JudgeRangeError(DataError):
    """Judge returned a criterion satisfaction outside [0, 1]."""


class ZeroUnits(DataError):
    pass


class ConfigError(DataError):
    pass


class BackendError(ChartloopError):
    """A model call failed after exhausting its retry budget."""
