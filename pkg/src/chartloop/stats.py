"""Distribution statistics shared by the experiment runner and telemetry.

Percentiles use linear interpolation between closest ranks: for a sorted
sample ``x[0..n-1]`` the p-th percentile sits at rank ``h = (n - 1) * p/100``
and interpolates between ``x[floor(h)]`` and ``x[ceil(h)]``. Standard
deviation is the population form (divide by n).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from chartloop.errors import EmptyInput


def percentile(values: Sequence[float], p: float) -> float:
    """Linear-interpolated percentile of an unsorted sample. p in [0, 100]."""
    if not values:
        raise EmptyInput("percentile of empty sample")
    if not 0.0 <= p <= 100.0:
        raise ValueError(f"percentile must be in [0, 100], got {p}")
    ordered = sorted(values)
    h = (len(ordered) - 1) * (p / 100.0)
    lo = math.floor(h)
    hi = math.ceil(h)
    if lo == hi:
        return float(ordered[lo])
    return ordered[lo] + (h - lo) * (ordered[hi] - ordered[lo])


def population_std(values: Sequence[float]) -> float:
    if not values:
        raise EmptyInput("std of empty sample")
    mean = math.fsum(values) / len(values)
    return math.sqrt(math.fsum((v - mean) ** 2 for v in values) / len(values))


@dataclass(frozen=True)
class DistributionStats:
    median: float
    q1: float
    q3: float
    std_dev: float
    n: int

    def __post_init__(self) -> None:
        if self.n < 1:
            raise EmptyInput("distribution over no samples")
        if not self.q1 <= self.median <= self.q3:
            raise ValueError("quartiles out of order")

    def as_dict(self) -> dict:
        return {
            "median": self.median,
            "q1": self.q1,
            "q3": self.q3,
            "std_dev": self.std_dev,
            "n": self.n,
        }


def distribution_stats(scores: Iterable[float]) -> DistributionStats:
    """Median, quartiles, and population std of a non-empty sample."""
    values = [float(s) for s in scores]
    if not values:
        raise EmptyInput("no scores")
    return DistributionStats(
        median=percentile(values, 50.0),
        q1=percentile(values, 25.0),
        q3=percentile(values, 75.0),
        std_dev=population_std(values),
        n=len(values),
    )
