"""Tests for the exercise-analytics pipeline."""

import numpy as np
import pytest

from catirt.calibration import CalibrationConfig
from catirt.errors import InsufficientDataError, ValidationError
from catirt.exercises import (
    ConstructObservation,
    ConstructResponseSet,
    ExerciseEvent,
    FilterConfig,
    accumulate_performance,
    build_construct_responses,
    calibrate_constructs,
    evaluate_against_cefr,
    event_evidence,
    run_filter_grid,
)
from catirt.synth import cefr_labels_from_thetas, synth_exercise_cohort


def event(student="S0", exercise="x0", ex_type="cloze", outcomes=None, hints=(), ts=None):
    return ExerciseEvent(
        student_id=student,
        exercise_id=exercise,
        exercise_type=ex_type,
        construct_outcomes=outcomes if outcomes is not None else {"tense": True},
        hinted_constructs=frozenset(hints),
        timestamp=ts,
    )


class TestEventEvidence:
    def test_mixed_outcomes_no_hints(self):
        """Correct tense, incorrect person: credit one, penalize the other."""
        ev = event(outcomes={"tense": True, "person": False})
        assert event_evidence(ev) == {"tense": (1, 0), "person": (0, 1)}

    def test_hint_overrides_correct_outcome(self):
        ev = event(outcomes={"tense": True}, hints={"tense"})
        assert event_evidence(ev) == {"tense": (0, 1)}

    def test_hint_on_incorrect_outcome_double_penalty(self):
        ev = event(outcomes={"tense": False}, hints={"tense"})
        assert event_evidence(ev) == {"tense": (0, 2)}

    def test_hint_without_outcome_is_penalty(self):
        ev = event(outcomes={"tense": True}, hints={"aspect"})
        assert event_evidence(ev) == {"tense": (1, 0), "aspect": (0, 1)}

    def test_rejects_empty_outcomes(self):
        with pytest.raises(ValidationError):
            event(outcomes={})

    def test_rejects_unknown_exercise_type(self):
        with pytest.raises(ValidationError):
            event(ex_type="essay")


class TestAccumulatePerformance:
    def test_no_events_empty_table(self):
        assert accumulate_performance([]) == {}

    def test_accumulates_over_events(self):
        events = [
            event(exercise="x0", outcomes={"tense": True, "person": False}),
            event(exercise="x1", outcomes={"tense": False}),
            event(exercise="x2", outcomes={"tense": True}, hints={"tense"}),
        ]
        table = accumulate_performance(events)
        tense = table[("S0", "tense")]
        assert (tense.credits, tense.penalties) == (1, 2)
        person = table[("S0", "person")]
        assert (person.credits, person.penalties) == (0, 1)
        assert tense.rate == pytest.approx(1 / 3)

    def test_evidence_conservation(self):
        """credits+penalties equals outcome entries plus hint penalties."""
        rng = np.random.default_rng(0)
        cohort = synth_exercise_cohort(n_students=8, n_constructs=10, seed=5,
                                       exercises_per_student=(10, 30))
        table = accumulate_performance(cohort.events)
        expected: dict = {}
        for ev in cohort.events:
            for cid in set(ev.construct_outcomes) | set(ev.hinted_constructs):
                units = 0
                if cid in ev.construct_outcomes and not (
                    ev.construct_outcomes[cid] and cid in ev.hinted_constructs
                ):
                    units += 1
                if cid in ev.hinted_constructs:
                    units += 1
                key = (ev.student_id, cid)
                expected[key] = expected.get(key, 0) + units
        for key, perf in table.items():
            assert perf.credits + perf.penalties == expected[key]

    def test_rate_bounds(self):
        cohort = synth_exercise_cohort(n_students=6, n_constructs=8, seed=6,
                                       exercises_per_student=(5, 20))
        for perf in accumulate_performance(cohort.events).values():
            assert 0.0 <= perf.rate <= 1.0
            assert (perf.rate == 1.0) == (perf.penalties == 0 and perf.credits > 0)

    def test_rate_without_trials_raises(self):
        from catirt.exercises import ConstructPerformance

        with pytest.raises(ValidationError):
            ConstructPerformance("S0", "tense").rate


class TestBuildConstructResponses:
    def _cohort(self, counts):
        """One cloze event per exercise, single construct, all correct."""
        events = []
        for sid, n in counts.items():
            for i in range(n):
                events.append(
                    event(student=sid, exercise=f"{sid}-x{i}", outcomes={"c0": True})
                )
        return events

    def test_min_exer_threshold(self):
        events = self._cohort({"S49": 49, "S50": 50})
        perf = accumulate_performance(events)
        out = build_construct_responses(perf, events, FilterConfig(min_exer=50, min_constr=1))
        assert out.retained_students == ["S50"]

    def test_min_constr_threshold(self):
        events = []
        for i in range(7):
            correct = i < 5
            events.append(event(exercise=f"x{i}", outcomes={"c0": correct}))
        perf = accumulate_performance(events)
        out = build_construct_responses(perf, events, FilterConfig(min_exer=1, min_constr=7))
        assert len(out.observations) == 1
        obs = out.observations[0]
        assert (obs.successes, obs.trials) == (5, 7)

    def test_trial_weighted_guess_factor(self):
        """3 cloze trials and 1 multiple-choice trial average to c = 0.0625."""
        events = [
            event(exercise="x0", ex_type="cloze", outcomes={"c0": True}),
            event(exercise="x1", ex_type="cloze", outcomes={"c0": False}),
            event(exercise="x2", ex_type="cloze", outcomes={"c0": True}),
            event(exercise="x3", ex_type="multiple-choice", outcomes={"c0": True}),
        ]
        perf = accumulate_performance(events)
        out = build_construct_responses(perf, events, FilterConfig(min_exer=1, min_constr=1))
        assert out.construct_guess["c0"] == pytest.approx(0.0625)

    def test_filter_monotonicity(self):
        cohort = synth_exercise_cohort(n_students=25, n_constructs=12, seed=7,
                                       exercises_per_student=(20, 120))
        perf = accumulate_performance(cohort.events)
        loose = build_construct_responses(perf, cohort.events, FilterConfig(50, 1))
        tight = build_construct_responses(perf, cohort.events, FilterConfig(100, 4))
        loose_keys = {(o.student_id, o.construct_id) for o in loose.observations}
        tight_keys = {(o.student_id, o.construct_id) for o in tight.observations}
        assert tight_keys <= loose_keys

    def test_insufficient_data_raises(self):
        events = self._cohort({"S0": 3})
        perf = accumulate_performance(events)
        with pytest.raises(InsufficientDataError):
            build_construct_responses(perf, events, FilterConfig(min_exer=100, min_constr=1))


class TestCalibrateConstructs:
    def _response_set(self, observations):
        guesses = {o.construct_id: 0.0 for o in observations}
        students = sorted({o.student_id for o in observations})
        return ConstructResponseSet(observations, guesses, students)

    def test_difficulty_ordering(self):
        """A construct everyone gets right fits easier than one nobody does."""
        observations = []
        for i in range(12):
            observations.append(ConstructObservation(f"S{i}", "easy", 6, 6))
            observations.append(ConstructObservation(f"S{i}", "hard", 0, 6))
            observations.append(ConstructObservation(f"S{i}", "mid", 3 + (i % 2), 6))
        fit = calibrate_constructs(self._response_set(observations),
                                   CalibrationConfig(max_outer_iterations=50))
        assert fit.bank.by_id("easy").b < fit.bank.by_id("hard").b

    def test_binomial_equals_bernoulli(self):
        """(k, n) cells fit identically to k correct + (n-k) wrong singles."""
        rng = np.random.default_rng(8)
        grouped, exploded = [], []
        for i in range(10):
            for cid in ("c0", "c1", "c2"):
                n = int(rng.integers(2, 8))
                k = int(rng.integers(0, n + 1))
                grouped.append(ConstructObservation(f"S{i}", cid, k, n))
                for j in range(k):
                    exploded.append(ConstructObservation(f"S{i}", cid, 1, 1))
                for j in range(n - k):
                    exploded.append(ConstructObservation(f"S{i}", cid, 0, 1))
        cfg = CalibrationConfig(max_outer_iterations=60)
        fit_g = calibrate_constructs(self._response_set(grouped), cfg)
        fit_e = calibrate_constructs(self._response_set(exploded), cfg)
        for cid in ("c0", "c1", "c2"):
            assert fit_g.bank.by_id(cid).a == pytest.approx(fit_e.bank.by_id(cid).a, abs=1e-8)
            assert fit_g.bank.by_id(cid).b == pytest.approx(fit_e.bank.by_id(cid).b, abs=1e-8)
        for sid in fit_g.abilities:
            assert fit_g.abilities[sid].theta == pytest.approx(
                fit_e.abilities[sid].theta, abs=1e-8
            )

    def test_identical_students_get_identical_abilities(self):
        observations = []
        for sid in ("S0", "S1"):
            observations.append(ConstructObservation(sid, "c0", 4, 6))
            observations.append(ConstructObservation(sid, "c1", 2, 6))
        for i in range(8):  # anchor constructs with varied students
            observations.append(ConstructObservation(f"T{i}", "c0", i % 7, 6))
            observations.append(ConstructObservation(f"T{i}", "c1", (i + 3) % 7, 6))
        fit = calibrate_constructs(self._response_set(observations),
                                   CalibrationConfig(max_outer_iterations=50))
        assert fit.abilities["S0"].theta == pytest.approx(fit.abilities["S1"].theta, abs=1e-10)

    def test_fix_a_pins_discrimination(self):
        observations = [
            ConstructObservation(f"S{i}", f"c{j}", (i + j) % 5, 5)
            for i in range(10)
            for j in range(3)
        ]
        fit = calibrate_constructs(self._response_set(observations),
                                   CalibrationConfig(max_outer_iterations=30), fix_a=True)
        assert all(it.a == 1.0 for it in fit.bank)

    def test_synthetic_theta_recovery(self):
        cohort = synth_exercise_cohort(n_students=80, n_constructs=30, seed=9,
                                       exercises_per_student=(120, 200))
        perf = accumulate_performance(cohort.events)
        out = build_construct_responses(perf, cohort.events, FilterConfig(100, 4))
        fit = calibrate_constructs(out, CalibrationConfig(max_outer_iterations=80))
        true = np.array([cohort.true_thetas[s] for s in fit.abilities])
        est = np.array([ab.theta for ab in fit.abilities.values()])
        assert np.corrcoef(true, est)[0, 1] >= 0.8


class TestEvaluateAgainstCefr:
    def test_perfect_monotone_gives_rho_one(self):
        abilities = {f"S{i}": -2.0 + 0.7 * i for i in range(6)}
        labels = {f"S{i}": i for i in range(6)}
        report = evaluate_against_cefr(abilities, labels)
        assert report.rho == pytest.approx(1.0)

    def test_reversed_gives_minus_one(self):
        abilities = {f"S{i}": 2.0 - 0.7 * i for i in range(6)}
        labels = {f"S{i}": i for i in range(6)}
        assert evaluate_against_cefr(abilities, labels).rho == pytest.approx(-1.0)

    def test_requires_two_labelled_students(self):
        with pytest.raises(ValidationError):
            evaluate_against_cefr({"S0": 0.0}, {"S0": 2})

    def test_level_summaries(self):
        abilities = {"S0": 0.0, "S1": 1.0, "S2": 2.0, "S3": 5.0}
        labels = {"S0": 1, "S1": 1, "S2": 1, "S3": 2}
        report = evaluate_against_cefr(abilities, labels)
        lvl1 = next(s for s in report.level_summaries if s.level == 1)
        assert (lvl1.minimum, lvl1.median, lvl1.maximum) == (0.0, 1.0, 2.0)
        assert lvl1.n == 3


class TestRunFilterGrid:
    def test_default_grid_has_six_rows(self):
        cohort = synth_exercise_cohort(n_students=60, n_constructs=20, seed=10,
                                       exercises_per_student=(30, 160))
        labels = cefr_labels_from_thetas(cohort.true_thetas)
        rows = run_filter_grid(cohort.events, labels,
                               config=CalibrationConfig(max_outer_iterations=40))
        assert len(rows) == 6
        assert [(r.min_exer, r.min_constr) for r in rows] == [
            (50, 1), (100, 1), (50, 4), (100, 4), (50, 7), (100, 7),
        ]

    def test_single_cell(self):
        cohort = synth_exercise_cohort(n_students=20, n_constructs=10, seed=11,
                                       exercises_per_student=(40, 80))
        labels = cefr_labels_from_thetas(cohort.true_thetas)
        rows = run_filter_grid(cohort.events, labels, grid_cells=[(30, 1)],
                               config=CalibrationConfig(max_outer_iterations=30))
        assert len(rows) == 1
        assert rows[0].rho is not None

    def test_retained_counts_non_increasing_in_min_exer(self):
        cohort = synth_exercise_cohort(n_students=50, n_constructs=15, seed=12,
                                       exercises_per_student=(30, 160))
        labels = cefr_labels_from_thetas(cohort.true_thetas)
        rows = run_filter_grid(cohort.events, labels,
                               grid_cells=[(50, 1), (100, 1), (150, 1)],
                               config=CalibrationConfig(max_outer_iterations=30))
        trains = [r.n_train for r in rows if r.error is None]
        assert all(b <= a for a, b in zip(trains, trains[1:]))

    def test_insufficient_cells_reported_not_dropped(self):
        cohort = synth_exercise_cohort(n_students=10, n_constructs=8, seed=13,
                                       exercises_per_student=(5, 20))
        labels = cefr_labels_from_thetas(cohort.true_thetas)
        rows = run_filter_grid(cohort.events, labels, grid_cells=[(10, 1), (500, 1)],
                               config=CalibrationConfig(max_outer_iterations=20))
        assert len(rows) == 2
        assert rows[1].error is not None and rows[1].rho is None
