from __future__ import annotations

import random
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chartloop.errors import ConfigError, EmptyInput, SchemaViolation, ZeroUnits
from chartloop.gateway.records import (
    CallRecord,
    ErrorCategory,
    ModelConfig,
    Outcome,
    Stage,
    Vendor,
)
from chartloop.telemetry import (
    MICRO,
    CostCategory,
    CostLine,
    PriceEntry,
    PriceTable,
    cost_of_records,
    cost_of_usage,
    cost_report,
    failure_summary,
    format_usd,
    grouped_failure_summary,
    latency_summary,
    minutes_display,
    unit_cost,
    usd_display,
)

O3_LIKE = PriceEntry(input_usd_per_million=2, output_usd_per_million=8)


class TestCostOfUsage:
    def test_published_generation_cost(self):
        micro = cost_of_usage(2_050_000, 1_230_000, O3_LIKE)
        assert micro == 13_940_000  # $13.94 exactly, in integer micro-dollars
        assert format_usd(micro) == "$13.94"

    def test_zero_tokens(self):
        assert cost_of_usage(0, 0, O3_LIKE) == 0

    def test_single_term(self):
        assert cost_of_usage(1_000_000, 0, O3_LIKE) == 2 * MICRO

    def test_reasoning_multiplier(self):
        entry = PriceEntry(
            input_usd_per_million=2, output_usd_per_million=8, reasoning_multiplier=5
        )
        assert cost_of_usage(0, 1_000_000, entry) == 40 * MICRO

    def test_negative_tokens_rejected(self):
        with pytest.raises(SchemaViolation):
            cost_of_usage(-1, 0, O3_LIKE)

    def test_multiplier_below_one_rejected(self):
        with pytest.raises(ConfigError):
            PriceEntry(
                input_usd_per_million=1, output_usd_per_million=1, reasoning_multiplier=0.5
            )


class TestUnitCost:
    def test_per_rubric_cost_rounds_to_two_cents(self):
        per_unit_micro = unit_cost(13_940_000, 823)
        assert float(round(per_unit_micro / MICRO, 2)) == 0.02

    def test_minutes_per_rubric(self):
        hours_per_rubric = unit_cost(919, 3108)
        assert minutes_display(hours_per_rubric) == pytest.approx(17.7, abs=0.05)

    def test_identity_on_one_unit(self):
        assert unit_cost(13_940_000, 1) == Fraction(13_940_000)

    def test_zero_units_rejected(self):
        with pytest.raises(ZeroUnits):
            unit_cost(10, 0)

    def test_exact_division(self):
        assert unit_cost(10, 4) == Fraction(5, 2)


def record(
    stage=Stage.DETECT_INSTRUCTIONS,
    latency_ms=1000,
    vendor=Vendor.VENDOR_A,
    outcome=Outcome.SUCCESS,
    transport_attempts=1,
    schema_attempts=1,
    session_id="s",
    input_tokens=100,
    output_tokens=50,
    model_name="m",
):
    return CallRecord(
        session_id=session_id,
        round_index=0,
        stage=stage,
        prompt_chars=10,
        input_tokens=input_tokens,
        output_tokens=output_tokens,
        latency_ms=latency_ms,
        transport_attempts=transport_attempts,
        schema_attempts=schema_attempts,
        outcome=outcome,
        model_config=ModelConfig(vendor=vendor, model_name=model_name),
        error_category=None if outcome is Outcome.SUCCESS else ErrorCategory.TRANSPORT_FAILURE,
    )


class TestLatencySummary:
    def test_matches_sort_oracle(self):
        rng = random.Random(11)
        records = [
            record(latency_ms=rng.randint(100, 20_000), stage=stage)
            for stage in (Stage.DETECT_INSTRUCTIONS, Stage.TRANSCRIBE)
            for _ in range(57)
        ]
        rows = {r.group: r for r in latency_summary(records)}
        for stage in ("detect_instructions", "transcribe"):
            values = [r.latency_ms for r in records if r.stage.value == stage]
            assert rows[stage].median_ms == pytest.approx(np.percentile(values, 50), abs=1e-9)
            assert rows[stage].p95_ms == pytest.approx(np.percentile(values, 95), abs=1e-9)
            assert rows[stage].n == len(values)

    def test_single_record(self):
        rows = latency_summary([record(latency_ms=5900)])
        assert rows[0].median_ms == rows[0].p95_ms == 5900.0

    def test_absent_groups_omitted(self):
        rows = latency_summary([record(stage=Stage.TRANSCRIBE)])
        assert [r.group for r in rows] == ["transcribe"]

    def test_empty_rejected(self):
        with pytest.raises(EmptyInput):
            latency_summary([])

    def test_unknown_grouping_rejected(self):
        with pytest.raises(SchemaViolation):
            latency_summary([record()], group_by="nope")


class TestFailureSummary:
    def test_synthetic_counting(self):
        records = (
            [record() for _ in range(934)]
            + [record(transport_attempts=2) for _ in range(62)]  # errored, recovered
            + [
                record(
                    outcome=Outcome.TRANSPORT_EXHAUSTED,
                    transport_attempts=4,
                )
                for _ in range(4)
            ]
        )
        summary = failure_summary(records)
        assert summary.attempts == 1000
        assert summary.errored == 66
        assert summary.recovered == 62
        assert summary.attempt_error_rate == pytest.approx(0.066)
        assert summary.recovery_rate == pytest.approx(62 / 66)
        assert summary.effective_completion_rate == pytest.approx(0.996)
        assert summary.consistent()

    def test_no_errors_convention(self):
        summary = failure_summary([record()] * 10)
        assert summary.attempt_error_rate == 0.0
        assert summary.recovery_rate == 1.0  # convention on zero errored
        assert summary.effective_completion_rate == 1.0

    def test_all_errored_none_recovered(self):
        summary = failure_summary(
            [record(outcome=Outcome.SCHEMA_EXHAUSTED, schema_attempts=4)] * 5
        )
        assert summary.effective_completion_rate == 0.0
        assert summary.consistent()

    def test_identity_exact_on_random_counts(self):
        rng = random.Random(5)
        for _ in range(300):
            n = rng.randint(1, 500)
            errored = rng.randint(0, n)
            recovered = rng.randint(0, errored) if errored else 0
            records = (
                [record() for _ in range(n - errored)]
                + [record(schema_attempts=2) for _ in range(recovered)]
                + [
                    record(outcome=Outcome.SCHEMA_EXHAUSTED, schema_attempts=4)
                    for _ in range(errored - recovered)
                ]
            )
            assert failure_summary(records).consistent()

    def test_grouped_by_vendor(self):
        records = [record(vendor=Vendor.VENDOR_A)] * 3 + [
            record(vendor=Vendor.VENDOR_B, outcome=Outcome.TRANSPORT_EXHAUSTED, transport_attempts=4)
        ]
        groups = grouped_failure_summary(records, group_by="vendor")
        assert groups["vendor_a"].attempts == 3
        assert groups["vendor_b"].effective_completion_rate == 0.0


class TestCostReport:
    def lines(self):
        return [
            CostLine(
                category=CostCategory.CASE_CONSTRUCTION,
                usd_micro=317 * MICRO,
                source="real-world corpus",
            ),
            CostLine(
                category=CostCategory.CASE_CONSTRUCTION,
                usd_micro=3 * MICRO,
                source="synthetic corpus",
            ),
            CostLine(
                category=CostCategory.RUBRIC_GENERATION,
                usd_micro=14 * MICRO,
                source="model-generated rubrics",
            ),
            CostLine(
                category=CostCategory.RUBRIC_GENERATION,
                hours=919.0,
                source="clinician-authored rubrics",
            ),
            CostLine(
                category=CostCategory.NOTE_GENERATION,
                usd_micro=15_000 * MICRO,
                source="benchmark notes",
            ),
            CostLine(
                category=CostCategory.RUBRIC_SCORING,
                usd_micro=10_000 * MICRO,
                source="benchmark scoring",
            ),
        ]

    def test_published_totals(self):
        summary = cost_report(self.lines(), versions=7)
        assert summary.static_usd_micro == 334 * MICRO
        assert summary.growing_usd_micro == 25_000 * MICRO
        assert summary.total_usd_micro == 25_334 * MICRO
        assert summary.hours == 919.0

    def test_per_version_growing_cost(self):
        summary = cost_report(self.lines(), versions=7)
        assert usd_display(summary.growing_per_version_micro) == pytest.approx(
            3571.43, abs=0.01
        )

    def test_empty_ledger_all_zero(self):
        summary = cost_report([])
        assert summary.total_usd_micro == 0
        assert summary.hours == 0.0
        assert summary.growing_per_version_micro is None

    def test_kind_fixed_per_category(self):
        line = CostLine(category=CostCategory.NOTE_GENERATION, usd_micro=1)
        assert line.kind.value == "growing"
        assert CostLine(category=CostCategory.CASE_CONSTRUCTION).kind.value == "static"

    def test_integer_exactness_property(self):
        rng = random.Random(2)
        lines = [
            CostLine(
                category=rng.choice(list(CostCategory)),
                usd_micro=rng.randint(0, 10**9),
            )
            for _ in range(200)
        ]
        summary = cost_report(lines)
        assert summary.static_usd_micro + summary.growing_usd_micro == sum(
            l.usd_micro for l in lines
        )


class TestPriceTable:
    def test_load_fixture(self, fixtures_dir):
        table = PriceTable.from_file(fixtures_dir / "prices.json")
        entry = table.lookup(Vendor.VENDOR_B, "mock-vendor_b")
        assert entry.input_usd_per_million == 2
        reasoning = table.lookup(Vendor.MOCK, "mock-reasoning-1")
        assert reasoning.reasoning_multiplier == 5

    def test_missing_model_raises(self, fixtures_dir):
        table = PriceTable.from_file(fixtures_dir / "prices.json")
        with pytest.raises(ConfigError):
            table.lookup(Vendor.VENDOR_A, "gpt-unknown")

    def test_cost_of_records(self):
        table = PriceTable()
        table.set(Vendor.VENDOR_A, "m", O3_LIKE)
        records = [record(input_tokens=1_000_000, output_tokens=0)] * 2
        assert cost_of_records(records, table) == 4 * MICRO


@given(
    st.integers(min_value=0, max_value=10**7),
    st.integers(min_value=0, max_value=10**7),
    st.integers(min_value=0, max_value=50),
    st.integers(min_value=0, max_value=50),
)
@settings(max_examples=100, deadline=None)
def test_cost_arithmetic_exact_for_integer_rates(in_tokens, out_tokens, in_rate, out_rate):
    entry = PriceEntry(input_usd_per_million=in_rate, output_usd_per_million=out_rate)
    micro = cost_of_usage(in_tokens, out_tokens, entry)
    exact = Fraction(in_tokens * in_rate + out_tokens * out_rate, 1)
    assert micro == round(exact)  # tokens * usd/Mtok * MICRO/usd / Mtok cancels to integers
