"""Retry policy: 1 initial attempt + up to 3 retries on each layer.

Transport retries cover HTTP-level failures; schema retries re-send the
prompt with the validator error appended. Backoff is exponential with
seedable jitter so tests replay identical delay sequences.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field


@dataclass(frozen=True)
class Backoff:
    base_ms: float = 250.0
    factor: float = 2.0
    jitter: float = 0.2  # +/- fraction of the pre-jitter delay

    def delay_ms(self, retry_index: int, rng: random.Random) -> float:
        """Delay before transport retry ``retry_index`` (0-based)."""
        raw = self.base_ms * self.factor**retry_index
        if self.jitter <= 0:
            return raw
        return raw * (1.0 + self.jitter * (2.0 * rng.random() - 1.0))


@dataclass(frozen=True)
class RetryPolicy:
    max_transport_retries: int = 3
    max_schema_retries: int = 3
    backoff: Backoff = field(default_factory=Backoff)

    def __post_init__(self) -> None:
        if self.max_transport_retries < 0 or self.max_schema_retries < 0:
            raise ValueError("retry counts must be >= 0")

    @property
    def max_transport_attempts(self) -> int:
        return 1 + self.max_transport_retries

    @property
    def max_schema_attempts(self) -> int:
        return 1 + self.max_schema_retries


DEFAULT_POLICY = RetryPolicy()
