from __future__ import annotations

import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chartloop.core import AuthorKind, Criterion, Rubric, RubricAuthor, RubricStatus
from chartloop.errors import CaseSetMismatch, DomainError, EmptyBenchmark, EmptyInput
from chartloop.experiment import (
    ExperimentConfig,
    compare_versions,
    derive_seed,
    net_preference,
    result_from_scores,
    run_experiment,
)
from chartloop.gateway import MockBackend, ScriptEntry, ScriptEvent, Vendor
from chartloop.rubric_engine import KeywordJudgeBackend
from chartloop.stats import distribution_stats, percentile

from conftest import make_gateway


class TestDistributionStats:
    def test_five_element_example(self):
        stats = distribution_stats([1, 2, 3, 4, 5])
        assert (stats.median, stats.q1, stats.q3) == (3.0, 2.0, 4.0)

    def test_singleton(self):
        stats = distribution_stats([7.5])
        assert stats.median == stats.q1 == stats.q3 == 7.5
        assert stats.std_dev == 0.0

    def test_constant_list(self):
        stats = distribution_stats([4.0] * 9)
        assert stats.q1 == stats.median == stats.q3 == 4.0
        assert stats.std_dev == 0.0

    def test_empty_rejected(self):
        with pytest.raises(EmptyInput):
            distribution_stats([])

    def test_oracle_1000_random_lists(self):
        rng = random.Random(77)
        for _ in range(1000):
            values = [rng.uniform(0, 100) for _ in range(rng.randint(1, 40))]
            stats = distribution_stats(values)
            assert stats.median == pytest.approx(np.percentile(values, 50), abs=1e-9)
            assert stats.q1 == pytest.approx(np.percentile(values, 25), abs=1e-9)
            assert stats.q3 == pytest.approx(np.percentile(values, 75), abs=1e-9)
            assert stats.std_dev == pytest.approx(np.std(values), abs=1e-9)

    @given(st.lists(st.floats(min_value=0, max_value=100, allow_nan=False), min_size=1, max_size=50))
    @settings(max_examples=100, deadline=None)
    def test_permutation_invariance(self, values):
        rng = random.Random(5)
        shuffled = list(values)
        rng.shuffle(shuffled)
        assert distribution_stats(values) == distribution_stats(shuffled)

    def test_latency_oracle_p95(self):
        rng = random.Random(3)
        values = [rng.uniform(1, 10_000) for _ in range(321)]
        assert percentile(values, 95) == pytest.approx(np.percentile(values, 95), abs=1e-9)


class TestNetPreference:
    def test_paper_values_exact(self):
        assert net_preference(0.721) == 44.2
        assert net_preference(0.568) == 13.6

    def test_indifference(self):
        assert net_preference(0.5) == 0.0

    def test_domain(self):
        with pytest.raises(DomainError):
            net_preference(1.2)


# -- run_experiment -----------------------------------------------------------------


def accepted_rubric(case_id: str, text: str) -> Rubric:
    return Rubric(
        id=f"r-{case_id}",
        case_id=case_id,
        criteria=(Criterion(text=text, weight=1),),
        author=RubricAuthor(kind=AuthorKind.CLINICIAN, ident="a"),
        status=RubricStatus.ACCEPTED,
    )


class ScriptedNotes:
    """NoteGenerator returning canned notes, optionally failing some units."""

    def __init__(self, fail_units=()):
        self.fail_units = set(fail_units)
        self.calls = []

    def generate(self, case, vendor, seed):
        self.calls.append((case.id, vendor, seed))
        key = (case.id, vendor)
        if key in self.fail_units:
            self.fail_units.discard(key)  # fail exactly one replicate
            from chartloop.gateway.backend import TransportError
            from chartloop.gateway.records import (
                CallRecord,
                ModelConfig,
                Outcome,
                ErrorCategory,
            )
            from chartloop.gateway.records import TransportExhausted

            record = CallRecord(
                session_id="x",
                round_index=0,
                stage=__import__("chartloop.gateway.records", fromlist=["Stage"]).Stage.DETECT_INSTRUCTIONS,
                prompt_chars=1,
                input_tokens=1,
                output_tokens=0,
                latency_ms=1,
                transport_attempts=4,
                schema_attempts=1,
                outcome=Outcome.TRANSPORT_EXHAUSTED,
                model_config=ModelConfig(vendor=vendor, model_name="m"),
                error_category=ErrorCategory.TRANSPORT_FAILURE,
            )
            raise TransportExhausted("boom", (), record)
        return {"plan": f"documented encounter for {case.id} keywords vary {seed % 7}"}


def small_config(**overrides) -> ExperimentConfig:
    base = dict(
        version_label="v-test",
        case_ids=("case_dm2", "case_htn"),
        notes_per_case_per_vendor=5,
        vendors=(Vendor.VENDOR_A, Vendor.VENDOR_B),
        seed=0,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


@pytest.fixture()
def benchmark(dm2_case, htn_case):
    cases = {"case_dm2": dm2_case, "case_htn": htn_case}
    rubrics = {
        "case_dm2": [accepted_rubric("case_dm2", "documented encounter keywords")],
        "case_htn": [accepted_rubric("case_htn", "documented encounter keywords")],
    }
    return cases, rubrics


def judge():
    return make_gateway(KeywordJudgeBackend())


class TestRunExperiment:
    def test_counting_2x2x5(self, benchmark):
        cases, rubrics = benchmark
        result = run_experiment(small_config(), ScriptedNotes(), rubrics, judge(), cases)
        assert len(result.scores) == 20
        assert len(result.failures) == 0
        assert result.overall.n == 20

    def test_one_hard_failure_recorded_not_fatal(self, benchmark):
        cases, rubrics = benchmark
        generator = ScriptedNotes(fail_units=[("case_dm2", Vendor.VENDOR_A)])
        result = run_experiment(small_config(), generator, rubrics, judge(), cases)
        assert len(result.scores) == 19
        assert len(result.failures) == 1
        assert result.attempt_count == 20

    def test_replay_determinism(self, benchmark):
        cases, rubrics = benchmark
        a = run_experiment(small_config(), ScriptedNotes(), rubrics, judge(), cases)
        b = run_experiment(small_config(), ScriptedNotes(), rubrics, judge(), cases)
        assert a.scores == b.scores
        assert a.overall == b.overall

    def test_requires_accepted_rubrics(self, benchmark):
        cases, rubrics = benchmark
        draft_only = {
            "case_dm2": [accepted_rubric("case_dm2", "x").with_status(RubricStatus.ACCEPTED)],
            "case_htn": [],
        }
        with pytest.raises(EmptyBenchmark):
            run_experiment(small_config(), ScriptedNotes(), draft_only, judge(), cases)

    def test_mean_over_rubrics(self, benchmark):
        cases, _ = benchmark
        rubrics = {
            "case_dm2": [
                accepted_rubric("case_dm2", "documented encounter keywords"),
                Rubric(
                    id="r-dm2-b",
                    case_id="case_dm2",
                    criteria=(Criterion(text="unrelated wording entirely", weight=1),),
                    author=RubricAuthor(kind=AuthorKind.CLINICIAN, ident="b"),
                    status=RubricStatus.ACCEPTED,
                ),
            ],
            "case_htn": [accepted_rubric("case_htn", "documented encounter keywords")],
        }
        result = run_experiment(small_config(), ScriptedNotes(), rubrics, judge(), cases)
        assert len(result.scores) == 20  # one score per note, averaged over rubrics

    def test_csv_shape(self, benchmark):
        cases, rubrics = benchmark
        result = run_experiment(
            small_config(notes_per_case_per_vendor=1), ScriptedNotes(), rubrics, judge(), cases
        )
        lines = result.to_csv().strip().splitlines()
        assert lines[0] == "case_id,vendor,replicate,score,failure_category"
        assert len(lines) == 1 + 4


# -- gating ---------------------------------------------------------------------------


def synthetic_result(label, median_target, n=40, vendor=Vendor.VENDOR_A, spread=4.0):
    rng = random.Random(hash(label) % 10_000)
    scores = []
    for i in range(n):
        offset = (i - n / 2) / n * 2 * spread
        scores.append(("case-%02d" % (i % 10), vendor, i // 10, median_target + offset))
    return result_from_scores(label, scores)


class TestCompareVersions:
    def test_paper_medians_deploy(self):
        baseline = synthetic_result("hierarchical-detection", 83.3)
        candidate = synthetic_result("model-updates", 94.7)
        report = compare_versions(candidate, baseline)
        assert report.gate.decision == "deploy"
        assert report.gate.median_delta == pytest.approx(11.4, abs=1e-9)

    def test_identical_results_deploy_at_zero(self):
        result = synthetic_result("same", 80.0)
        report = compare_versions(result, result)
        assert report.gate.decision == "deploy"
        assert report.gate.median_delta == 0.0

    def test_regression_beyond_tolerance_rejects(self):
        baseline = synthetic_result("base", 90.0)
        candidate = synthetic_result("cand", 80.0)
        report = compare_versions(candidate, baseline, tolerance=5.0)
        assert report.gate.decision == "reject"

    def test_case_set_mismatch(self):
        a = result_from_scores("a", [("c1", Vendor.VENDOR_A, 0, 50.0)])
        b = result_from_scores("b", [("c2", Vendor.VENDOR_A, 0, 50.0)])
        with pytest.raises(CaseSetMismatch):
            compare_versions(a, b)

    def test_case_deltas_sorted_by_magnitude(self):
        a = result_from_scores(
            "a",
            [("c1", Vendor.VENDOR_A, 0, 50.0), ("c2", Vendor.VENDOR_A, 0, 50.0)],
        )
        b = result_from_scores(
            "b",
            [("c1", Vendor.VENDOR_A, 0, 49.0), ("c2", Vendor.VENDOR_A, 0, 30.0)],
        )
        report = compare_versions(a, b)
        assert [cid for cid, _ in report.case_deltas] == ["c2", "c1"]


def test_gate_consistency_randomized():
    rng = random.Random(31337)
    for _ in range(200):
        cand_median = rng.uniform(0, 100)
        base_median = rng.uniform(0, 100)
        tolerance = rng.uniform(0, 5)
        candidate = synthetic_result("c", cand_median)
        baseline = synthetic_result("b", base_median)
        report = compare_versions(candidate, baseline, tolerance=tolerance)
        delta = report.gate.median_delta
        assert (report.gate.decision == "deploy") == (delta >= -tolerance)


def test_derive_seed_stable_and_distinct():
    a = derive_seed(0, "case", "vendor_a", 0)
    assert a == derive_seed(0, "case", "vendor_a", 0)
    assert a != derive_seed(0, "case", "vendor_a", 1)
    assert a != derive_seed(1, "case", "vendor_a", 0)
