"""Latency percentiles, failure-rate summaries, and cost accounting.

Money is integer micro-dollars end to end: per-call costs are computed in
exact rational arithmetic from per-million-token rates and rounded once to
the nearest micro-dollar (ties to even); ledgers only ever add integers.
Latency percentiles use the same interpolation as the experiment runner's
distribution statistics.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence, Union

from chartloop.errors import ConfigError, EmptyInput, SchemaViolation, ZeroUnits
from chartloop.gateway.records import CallRecord, Vendor
from chartloop.stats import percentile

PRICE_FORMAT = "chartloop-prices/1"

MICRO = 1_000_000  # micro-dollars per dollar


def _as_fraction(value: Union[int, float, str, Fraction], name: str) -> Fraction:
    if isinstance(value, float):
        value = repr(value)
    try:
        frac = Fraction(value)
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"bad {name}: {value!r}") from exc
    return frac


@dataclass(frozen=True)
class PriceEntry:
    """Rates in USD per million tokens; reasoning tokens bill at the output
    rate times the multiplier."""

    input_usd_per_million: Fraction
    output_usd_per_million: Fraction
    reasoning_multiplier: Fraction = Fraction(1)

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "input_usd_per_million", _as_fraction(self.input_usd_per_million, "input rate")
        )
        object.__setattr__(
            self, "output_usd_per_million", _as_fraction(self.output_usd_per_million, "output rate")
        )
        object.__setattr__(
            self,
            "reasoning_multiplier",
            _as_fraction(self.reasoning_multiplier, "reasoning multiplier"),
        )
        if self.input_usd_per_million < 0 or self.output_usd_per_million < 0:
            raise ConfigError("prices must be >= 0")
        if self.reasoning_multiplier < 1:
            raise ConfigError("reasoning multiplier must be >= 1")


class PriceTable:
    def __init__(self, entries: Optional[dict[tuple[Vendor, str], PriceEntry]] = None):
        self._entries = dict(entries or {})

    def set(self, vendor: Vendor, model_name: str, entry: PriceEntry) -> None:
        self._entries[(vendor, model_name)] = entry

    def lookup(self, vendor: Vendor, model_name: str) -> PriceEntry:
        try:
            return self._entries[(vendor, model_name)]
        except KeyError:
            raise ConfigError(f"no price for {vendor.value}/{model_name}") from None

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "PriceTable":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        if doc.get("format") != PRICE_FORMAT:
            raise ConfigError(f"unsupported price table format {doc.get('format')!r}")
        table = cls()
        for row in doc.get("prices", []):
            table.set(
                Vendor(row["vendor"]),
                row["model"],
                PriceEntry(
                    input_usd_per_million=row["input_usd_per_million"],
                    output_usd_per_million=row["output_usd_per_million"],
                    reasoning_multiplier=row.get("reasoning_multiplier", 1),
                ),
            )
        return table


def cost_of_usage(input_tokens: int, output_tokens: int, price: PriceEntry) -> int:
    """Exact micro-dollar cost of one usage:
    input_tokens * in_rate + output_tokens * multiplier * out_rate."""
    if input_tokens < 0 or output_tokens < 0:
        raise SchemaViolation("token counts must be >= 0")
    usd = (
        input_tokens * price.input_usd_per_million
        + output_tokens * price.reasoning_multiplier * price.output_usd_per_million
    ) / MICRO
    return round(usd * MICRO)


def cost_of_records(records: Iterable[CallRecord], table: PriceTable) -> int:
    total = 0
    for record in records:
        entry = table.lookup(record.model_config.vendor, record.model_config.model_name)
        total += cost_of_usage(record.input_tokens, record.output_tokens, entry)
    return total


def unit_cost(total: Union[int, float, Fraction], units: int) -> Fraction:
    """Exact per-unit division; callers round for display."""
    if units < 1:
        raise ZeroUnits(f"cannot divide across {units} units")
    return _as_fraction(total, "total") / units


def usd_display(micro_usd: Union[int, Fraction]) -> float:
    """Micro-dollars to dollars, rounded to cents (ties to even)."""
    return float(round(Fraction(micro_usd) / MICRO, 2))


def minutes_display(hours: Union[int, float, Fraction]) -> float:
    """Hours to minutes, rounded to one decimal."""
    return float(round(_as_fraction(hours, "hours") * 60, 1))


def format_usd(micro_usd: Union[int, Fraction]) -> str:
    return f"${usd_display(micro_usd):,.2f}"


# ---------------------------------------------------------------------------
# latency


@dataclass(frozen=True)
class LatencyRow:
    group: str
    median_ms: float
    p95_ms: float
    n: int

    def as_dict(self) -> dict:
        return {"group": self.group, "median_ms": self.median_ms, "p95_ms": self.p95_ms, "n": self.n}


def latency_summary(
    records: Sequence[CallRecord], group_by: str = "stage"
) -> list[LatencyRow]:
    """Median and P95 latency per group; empty groups are simply absent."""
    if not records:
        raise EmptyInput("no call records")
    keyfn = _group_key(group_by)
    groups: dict[str, list[float]] = {}
    for record in records:
        groups.setdefault(keyfn(record), []).append(float(record.latency_ms))
    return [
        LatencyRow(
            group=group,
            median_ms=percentile(values, 50.0),
            p95_ms=percentile(values, 95.0),
            n=len(values),
        )
        for group, values in sorted(groups.items())
    ]


def _group_key(group_by: str) -> Callable[[CallRecord], str]:
    if group_by == "stage":
        return lambda r: r.stage.value
    if group_by == "vendor":
        return lambda r: r.model_config.vendor.value
    if group_by == "session":
        return lambda r: r.session_id
    if group_by == "model":
        return lambda r: r.model_config.model_name
    raise SchemaViolation(f"unknown grouping {group_by!r}")


# ---------------------------------------------------------------------------
# failures


@dataclass(frozen=True)
class FailureSummary:
    """Counted failure rates for a set of call records.

    ``recovery_rate`` reports 100% when nothing errored, by convention.
    The identity effective = 1 - e * (1 - r) holds exactly on the counts;
    ``consistent()`` re-derives it in rational arithmetic.
    """

    attempts: int
    errored: int
    recovered: int

    def __post_init__(self) -> None:
        if not 0 <= self.recovered <= self.errored <= self.attempts:
            raise SchemaViolation("failure counts out of order")

    @property
    def successes(self) -> int:
        return self.attempts - self.errored + self.recovered

    @property
    def attempt_error_rate(self) -> float:
        return self.errored / self.attempts

    @property
    def recovery_rate(self) -> float:
        return self.recovered / self.errored if self.errored else 1.0

    @property
    def effective_completion_rate(self) -> float:
        return self.successes / self.attempts

    def consistent(self) -> bool:
        e = Fraction(self.errored, self.attempts)
        r = Fraction(self.recovered, self.errored) if self.errored else Fraction(1)
        return Fraction(self.successes, self.attempts) == 1 - e * (1 - r)

    def as_dict(self) -> dict:
        return {
            "attempts": self.attempts,
            "errored": self.errored,
            "recovered": self.recovered,
            "attempt_error_rate": self.attempt_error_rate,
            "recovery_rate": self.recovery_rate,
            "effective_completion_rate": self.effective_completion_rate,
        }


def failure_summary(records: Sequence[CallRecord]) -> FailureSummary:
    """One attempt per record; a record is errored when any attempt inside
    it failed, recovered when it errored and still ended in success."""
    if not records:
        raise EmptyInput("no call records")
    errored = sum(1 for r in records if r.errored)
    recovered = sum(1 for r in records if r.recovered)
    return FailureSummary(attempts=len(records), errored=errored, recovered=recovered)


def grouped_failure_summary(
    records: Sequence[CallRecord], group_by: str = "vendor"
) -> dict[str, FailureSummary]:
    if not records:
        raise EmptyInput("no call records")
    keyfn = _group_key(group_by)
    groups: dict[str, list[CallRecord]] = {}
    for record in records:
        groups.setdefault(keyfn(record), []).append(record)
    return {group: failure_summary(rows) for group, rows in sorted(groups.items())}


# ---------------------------------------------------------------------------
# cost ledger


class CostCategory(Enum):
    CASE_CONSTRUCTION = "case_construction"
    RUBRIC_GENERATION = "rubric_generation"
    NOTE_GENERATION = "note_generation"
    RUBRIC_SCORING = "rubric_scoring"


class CostKind(Enum):
    STATIC = "static"
    GROWING = "growing"


# Static costs are incurred once to build the evaluation infrastructure;
# growing costs accrue with every system version evaluated.
KIND_BY_CATEGORY = {
    CostCategory.CASE_CONSTRUCTION: CostKind.STATIC,
    CostCategory.RUBRIC_GENERATION: CostKind.STATIC,
    CostCategory.NOTE_GENERATION: CostKind.GROWING,
    CostCategory.RUBRIC_SCORING: CostKind.GROWING,
}


@dataclass(frozen=True)
class CostLine:
    category: CostCategory
    usd_micro: int = 0
    hours: float = 0.0
    source: str = ""
    version_label: Optional[str] = None

    def __post_init__(self) -> None:
        if self.usd_micro < 0 or self.hours < 0:
            raise SchemaViolation("cost amounts must be >= 0")

    @property
    def kind(self) -> CostKind:
        return KIND_BY_CATEGORY[self.category]

    def as_dict(self) -> dict:
        return {
            "category": self.category.value,
            "kind": self.kind.value,
            "usd_micro": self.usd_micro,
            "hours": self.hours,
            "source": self.source,
            "version_label": self.version_label,
        }


@dataclass(frozen=True)
class CostSummary:
    static_usd_micro: int
    growing_usd_micro: int
    total_usd_micro: int
    hours: float
    by_category: dict[str, dict]
    growing_per_version_micro: Optional[int] = None
    versions: Optional[int] = None

    def as_dict(self) -> dict:
        return {
            "static_usd_micro": self.static_usd_micro,
            "growing_usd_micro": self.growing_usd_micro,
            "total_usd_micro": self.total_usd_micro,
            "static_usd": usd_display(self.static_usd_micro),
            "growing_usd": usd_display(self.growing_usd_micro),
            "total_usd": usd_display(self.total_usd_micro),
            "hours": self.hours,
            "by_category": self.by_category,
            "versions": self.versions,
            "growing_per_version_micro": self.growing_per_version_micro,
            "growing_per_version_usd": (
                usd_display(self.growing_per_version_micro)
                if self.growing_per_version_micro is not None
                else None
            ),
        }


def cost_report(lines: Sequence[CostLine], versions: Optional[int] = None) -> CostSummary:
    """Exact integer totals split into static and growing components.

    ``versions`` defaults to the count of distinct version labels on
    growing lines; when positive, the summary includes the mean growing
    cost per version.
    """
    static = sum(l.usd_micro for l in lines if l.kind is CostKind.STATIC)
    growing = sum(l.usd_micro for l in lines if l.kind is CostKind.GROWING)
    hours = sum(l.hours for l in lines)
    by_category: dict[str, dict] = {}
    for category in CostCategory:
        rows = [l for l in lines if l.category is category]
        by_category[category.value] = {
            "kind": KIND_BY_CATEGORY[category].value,
            "usd_micro": sum(l.usd_micro for l in rows),
            "usd": usd_display(sum(l.usd_micro for l in rows)),
            "hours": sum(l.hours for l in rows),
        }
    if versions is None:
        labels = {l.version_label for l in lines if l.kind is CostKind.GROWING and l.version_label}
        versions = len(labels) or None
    per_version = round(Fraction(growing, versions)) if versions else None
    return CostSummary(
        static_usd_micro=static,
        growing_usd_micro=growing,
        total_usd_micro=static + growing,
        hours=hours,
        by_category=by_category,
        growing_per_version_micro=per_version,
        versions=versions,
    )
