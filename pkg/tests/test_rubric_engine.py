from __future__ import annotations

import json
import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chartloop.core import AuthorKind, Criterion, Rubric, RubricAuthor, RubricStatus
from chartloop.errors import JudgeRangeError, SchemaViolation
from chartloop.gateway import MockBackend, SchemaExhausted, ScriptEntry, ScriptEvent, Stage
from chartloop.rubric_engine import (
    AcceptanceResult,
    KeywordJudgeBackend,
    finalize_rubric,
    generate_rubric,
    score_note,
    validate_rubric,
    weighted_score,
)

from conftest import make_gateway


def rubric_of(weights, case_id="c1") -> Rubric:
    return Rubric(
        id="r1",
        case_id=case_id,
        criteria=tuple(Criterion(text=f"criterion {i}", weight=w) for i, w in enumerate(weights)),
        author=RubricAuthor(kind=AuthorKind.CLINICIAN, ident="ann-01"),
    )


def judge_scripted(satisfaction_lists):
    """A judge whose successive calls return the given satisfaction rows."""
    events = [
        ScriptEvent(
            "document",
            document={"satisfactions": [{"satisfaction": s} for s in sats]},
        )
        for sats in satisfaction_lists
    ]
    return make_gateway(MockBackend.from_events(events))


NOTE = {"plan": "rest"}


class TestScoreNote:
    def test_all_ones_is_100(self):
        judge = judge_scripted([[1.0, 1.0, 1.0]])
        report = score_note(NOTE, rubric_of([1, 7, 2]), judge, seed=0)
        assert report.score == 100.0

    def test_all_zeros_is_0(self):
        judge = judge_scripted([[0.0, 0.0]])
        report = score_note(NOTE, rubric_of([3, 5]), judge, seed=0)
        assert report.score == 0.0

    def test_weighted_mean_example(self):
        # independent oracle: (3*1 + 1*0) / 4 * 100 = 75
        judge = judge_scripted([[1.0, 0.0]])
        report = score_note(NOTE, rubric_of([3, 1]), judge, seed=0)
        assert report.score == 75.0

    def test_per_criterion_rows_align(self):
        judge = judge_scripted([[0.25, 0.75]])
        report = score_note(NOTE, rubric_of([1, 1]), judge, seed=9)
        assert [c.criterion_index for c in report.per_criterion] == [0, 1]
        assert report.per_criterion[1].satisfaction == 0.75
        assert report.run_seed == 9

    def test_out_of_range_satisfaction_rejected(self):
        judge = judge_scripted([[1.5, 0.0]])
        with pytest.raises(JudgeRangeError):
            score_note(NOTE, rubric_of([1, 1]), judge, seed=0)


# -- oracle equivalence -------------------------------------------------------------


def brute_force_weighted_mean(weights, sats) -> float:
    """Naive float mean, the independent oracle."""
    total = sum(float(w) * s for w, s in zip(weights, sats))
    return 100.0 * total / sum(float(w) for w in weights)


@given(
    st.lists(
        st.tuples(
            st.floats(min_value=0.01, max_value=100, allow_nan=False),
            st.floats(min_value=0.0, max_value=1.0, allow_nan=False),
        ),
        min_size=1,
        max_size=12,
    )
)
@settings(max_examples=200, deadline=None)
def test_weighted_score_matches_oracle(pairs):
    weights = [w for w, _ in pairs]
    sats = [s for _, s in pairs]
    ours = weighted_score([Criterion(text="c", weight=w) for w in weights], sats)
    assert ours == pytest.approx(brute_force_weighted_mean(weights, sats), abs=1e-9)
    assert 0.0 <= ours <= 100.0


def test_oracle_equivalence_1000_random_rubrics():
    rng = random.Random(1234)
    for _ in range(1000):
        k = rng.randint(1, 10)
        weights = [rng.uniform(0.1, 50) for _ in range(k)]
        sats = [rng.random() for _ in range(k)]
        ours = weighted_score([Criterion(text="c", weight=w) for w in weights], sats)
        assert abs(ours - brute_force_weighted_mean(weights, sats)) < 1e-9


@given(
    st.lists(st.integers(min_value=1, max_value=60), min_size=1, max_size=8),
    st.fractions(min_value="1/7", max_value=40),
)
@settings(max_examples=100, deadline=None)
def test_weight_scaling_invariance_exact(weights, lam):
    sats = [((i * 37) % 11) / 10 for i in range(len(weights))]
    base = weighted_score([Criterion(text="c", weight=Fraction(w)) for w in weights], sats)
    scaled = weighted_score(
        [Criterion(text="c", weight=Fraction(w) * lam) for w in weights], sats
    )
    assert scaled == base  # bit-identical, not approximately


def test_monotonicity_in_single_satisfaction():
    weights = [2, 3, 5]
    low = weighted_score([Criterion(text="c", weight=w) for w in weights], [0.5, 0.2, 0.9])
    high = weighted_score([Criterion(text="c", weight=w) for w in weights], [0.5, 0.6, 0.9])
    assert high > low


# -- validation rule -----------------------------------------------------------------


def scripted_validation(best_scores, worst_scores):
    """Feed exact run scores through a single-criterion rubric."""
    sats = [[s / 100.0] for s in best_scores + worst_scores]
    judge = judge_scripted(sats)
    return validate_rubric(
        rubric_of([1]), "best", {"plan": "a"}, "worst", {"plan": "b"}, judge, runs=3, seed=0
    )


class TestValidateRubric:
    def test_clear_separation_accepts(self):
        result = scripted_validation([90, 92, 95], [80, 85, 88])
        assert result.accepted
        assert result.margin == pytest.approx(2.0)

    def test_overlap_rejects(self):
        result = scripted_validation([90, 70, 95], [80, 60, 88])
        assert not result.accepted

    def test_tie_rejects_strictly(self):
        result = scripted_validation([80, 80, 80], [80, 80, 80])
        assert not result.accepted
        assert result.margin == 0.0

    def test_same_note_ids_rejected(self):
        with pytest.raises(SchemaViolation):
            validate_rubric(
                rubric_of([1]), "n", {}, "n", {}, judge_scripted([[1.0]] * 6), runs=3
            )

    def test_distinct_seeds_per_run(self):
        backend = MockBackend(
            entries=[
                ScriptEntry(
                    events=[
                        ScriptEvent(
                            "document", document={"satisfactions": [{"satisfaction": 0.5}]}
                        )
                    ],
                    loop=True,
                )
            ]
        )
        judge = make_gateway(backend)
        validate_rubric(rubric_of([1]), "b", {}, "w", {}, judge, runs=3, seed=100)
        seeds = [r.seed for r in backend.requests]
        assert seeds == [100, 101, 102, 103, 104, 105]

    def test_finalize_moves_status(self):
        rubric = rubric_of([1])
        accepted = finalize_rubric(
            rubric,
            AcceptanceResult(
                rubric_id="r1", best_runs=(90.0,), worst_runs=(10.0,), accepted=True, margin=80.0
            ),
        )
        assert accepted.status is RubricStatus.ACCEPTED


def test_acceptance_soundness_randomized_3x3():
    rng = random.Random(99)
    for _ in range(300):
        best = [rng.uniform(0, 100) for _ in range(3)]
        worst = [rng.uniform(0, 100) for _ in range(3)]
        result = scripted_validation(best, worst)
        brute = all(b > w for b in result.best_runs for w in result.worst_runs)
        assert result.accepted == brute
        assert result.accepted == (result.margin > 0)


# -- generation -----------------------------------------------------------------------


class TestGenerateRubric:
    def test_fixture_generator_yields_five_criteria(self, dm2_case, fixtures_dir):
        backend = MockBackend.from_script(fixtures_dir / "scripts" / "case_dm2.json")
        rubric = generate_rubric(dm2_case, make_gateway(backend))
        assert len(rubric.criteria) == 5
        assert rubric.author.kind is AuthorKind.MODEL_GENERATED
        assert rubric.status is RubricStatus.DRAFT  # never auto-accepted

    def test_zero_criteria_exhausts_schema_retries(self, dm2_case):
        backend = MockBackend.from_events(
            [ScriptEvent("document", document={"criteria": []})] * 4
        )
        with pytest.raises(SchemaExhausted):
            generate_rubric(dm2_case, make_gateway(backend))

    def test_nonpositive_weights_coerced(self, dm2_case):
        backend = MockBackend.from_events(
            [
                ScriptEvent(
                    "document",
                    document={
                        "criteria": [
                            {"text": "a", "weight": -2},
                            {"text": "b", "weight": 0},
                            {"text": "c", "weight": 2.5},
                        ]
                    },
                )
            ]
        )
        rubric = generate_rubric(dm2_case, make_gateway(backend))
        assert [c.weight for c in rubric.criteria] == [
            Fraction(1),
            Fraction(1),
            Fraction(5, 2),
        ]


class TestKeywordJudge:
    def test_deterministic_given_prompt_and_seed(self):
        judge = KeywordJudgeBackend()
        rubric = rubric_of([2, 1])
        note = {"plan": "criterion wording present"}
        a = score_note(note, rubric, make_gateway(KeywordJudgeBackend()), seed=5)
        b = score_note(note, rubric, make_gateway(KeywordJudgeBackend()), seed=5)
        assert a.score == b.score

    def test_matching_note_outscores_unrelated_note(self):
        rubric = Rubric(
            id="r2",
            case_id="c1",
            criteria=(
                Criterion(text="documents metformin 500 mg twice daily", weight=3),
                Criterion(text="plans follow up in three months", weight=2),
            ),
            author=RubricAuthor(kind=AuthorKind.CLINICIAN, ident="a"),
        )
        good = {
            "plan": "Start metformin 500 mg twice daily. Follow up in three months."
        }
        bad = {"plan": "Rest and fluids."}
        judge = make_gateway(KeywordJudgeBackend())
        assert (
            score_note(good, rubric, judge, seed=1).score
            > score_note(bad, rubric, judge, seed=1).score
        )
