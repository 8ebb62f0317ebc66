"""Tests for the Monte-Carlo simulation harness."""

import numpy as np
import pytest

from catirt.calibration import ResponseRecord, estimate_ability_eap
from catirt.engine import EarlyStop, ExplorationConfig, FixedLength, NO_EXPLORATION
from catirt.errors import UnknownItemError, ValidationError
from catirt.irt import ItemParams
from catirt.simulate import (
    EARLY_ABERRANT,
    NO_SLIP,
    SimulationConfig,
    SlipSchedule,
    batch_configs,
    run_artificial_grid,
    run_batch,
    run_many,
    run_real_replay,
    run_simulated_session,
    run_termination_sweep,
    simulate_answer,
)
from catirt.synth import synth_bank, synth_response_records


@pytest.fixture(scope="module")
def bank():
    return synth_bank(600, seed=17)


class TestSlipSchedule:
    def test_rates_validated(self):
        with pytest.raises(ValidationError):
            SlipSchedule(base_rate=1.5)

    def test_early_rate_defaults_to_base(self):
        s = SlipSchedule(base_rate=0.07)
        assert s.early_rate == 0.07

    def test_rate_switches_after_window(self):
        assert EARLY_ABERRANT.rate_at(9) == 0.6
        assert EARLY_ABERRANT.rate_at(10) == 0.1


class TestSimulateAnswer:
    def test_certain_knowledge_no_slip(self):
        rng = np.random.default_rng(0)
        item = ItemParams("q", a=1.0, b=0.0, c=0.0)
        assert all(simulate_answer(100.0, item, i, NO_SLIP, rng) for i in range(200))

    def test_total_slip_always_wrong(self):
        rng = np.random.default_rng(1)
        item = ItemParams("q", a=1.0, b=-50.0, c=0.0)
        slip = SlipSchedule(base_rate=1.0)
        assert not any(simulate_answer(0.0, item, i, slip, rng) for i in range(200))

    def test_empirical_rate_composes_slip(self):
        """P(correct) = 0.5 * (1 - 0.05) at the midpoint with 5% slip."""
        rng = np.random.default_rng(2)
        item = ItemParams("q", a=1.0, b=0.0, c=0.0)
        slip = SlipSchedule(base_rate=0.05)
        n = 100_000
        hits = sum(simulate_answer(0.0, item, i, slip, rng) for i in range(n))
        assert abs(hits / n - 0.475) < 0.005


class TestRunSimulatedSession:
    def test_deterministic(self, bank):
        cfg = SimulationConfig(theta_true=0.8, criterion=EarlyStop(10, 0.05), seed=77)
        a = run_simulated_session(bank, cfg)
        b = run_simulated_session(bank, cfg)
        assert [r.item_id for r in a.result.responses] == [r.item_id for r in b.result.responses]
        assert [t.theta for t in a.result.trajectory] == [t.theta for t in b.result.trajectory]

    def test_error_property(self, bank):
        cfg = SimulationConfig(theta_true=1.0, criterion=FixedLength(30, min_steps=0), seed=3)
        out = run_simulated_session(bank, cfg)
        assert out.error == pytest.approx(out.result.ability.theta - 1.0)


class TestBatchConfigs:
    def test_thetas_within_range(self):
        configs = batch_configs(200, master_seed=9)
        thetas = [c.theta_true for c in configs]
        assert min(thetas) >= -3.5 and max(thetas) <= 3.5
        assert len(set(c.seed for c in configs)) == 200

    def test_reproducible(self):
        a = batch_configs(50, master_seed=4)
        b = batch_configs(50, master_seed=4)
        assert [c.theta_true for c in a] == [c.theta_true for c in b]
        assert [c.seed for c in a] == [c.seed for c in b]


class TestRunMany:
    def test_worker_invariance(self, bank):
        configs = batch_configs(12, master_seed=21, criterion=FixedLength(20, min_steps=0))
        seq = run_many(bank, configs, workers=1)
        par = run_many(bank, configs, workers=3)
        assert [o.result.ability.theta for o in seq] == [o.result.ability.theta for o in par]
        assert [o.result.n_steps for o in seq] == [o.result.n_steps for o in par]

    def test_fixed_length_batch_has_zero_length_sd(self, bank):
        metrics = run_batch(bank, n_sessions=15, master_seed=5,
                            criterion=FixedLength(25, min_steps=0))
        assert metrics.sd_iterations == 0.0
        assert metrics.mean_iterations == 25.0

    def test_longer_fixed_tests_reduce_mae(self, bank):
        short = run_batch(bank, n_sessions=60, master_seed=6,
                          criterion=FixedLength(25, min_steps=0, max_steps=100))
        long = run_batch(bank, n_sessions=60, master_seed=6,
                         criterion=FixedLength(100, min_steps=0, max_steps=100))
        assert short.mae > long.mae


class TestArtificialGrid:
    def test_zero_per_level_is_empty(self, bank):
        assert run_artificial_grid(bank, per_level=0) == []

    def test_trace_count_and_overrun(self, bank):
        outs = run_artificial_grid(
            bank, levels=(-1.0, 0.0, 1.0), per_level=2, master_seed=3,
            criterion=EarlyStop(10, 0.05), continue_after_convergence=10,
        )
        assert len(outs) == 6
        for o in outs:
            if o.result.converged_step is not None and o.result.termination_reason == "converged":
                assert o.result.n_steps >= o.result.converged_step
                assert o.result.n_steps <= o.result.converged_step + 10

    def test_identical_seeds_identical_traces(self, bank):
        a = run_artificial_grid(bank, levels=(0.5,), per_level=2, master_seed=8)
        b = run_artificial_grid(bank, levels=(0.5,), per_level=2, master_seed=8)
        for x, y in zip(a, b):
            assert [r.item_id for r in x.result.responses] == [r.item_id for r in y.result.responses]


class TestTerminationSweep:
    def test_fixed_sweep_rows(self, bank):
        rows = run_termination_sweep(bank, "fixed", master_seed=2, n_sessions=4,
                                     slip=NO_SLIP, exploration=NO_EXPLORATION)
        assert [label for label, _ in rows] == [
            "fixed-25", "fixed-50", "fixed-75", "fixed-100", "fixed-125", "fixed-150",
        ]
        means = [m.mean_iterations for _, m in rows]
        assert means == [25.0, 50.0, 75.0, 100.0, 125.0, 150.0]

    def test_earlystop_delta_shortens_tests_exactly(self, bank):
        """Looser delta never lengthens any session on shared seeds."""
        rows = dict(
            run_termination_sweep(bank, "earlystop", master_seed=3, n_sessions=5,
                                  slip=NO_SLIP, exploration=NO_EXPLORATION)
        )
        for window in (6, 8, 10, 12):
            lengths = [rows[f"earlystop-N{window}-d{d}"].mean_iterations
                       for d in ("0.05", "0.15", "0.25", "0.35")]
            assert all(b <= a + 1e-12 for a, b in zip(lengths, lengths[1:]))

    def test_sem_sweep_tightening_lengthens(self, bank):
        rows = run_termination_sweep(bank, "sem", master_seed=4, n_sessions=5,
                                     slip=NO_SLIP, exploration=NO_EXPLORATION)
        by_label = dict(rows)
        assert by_label["sem-0.1"].mean_iterations >= by_label["sem-0.3"].mean_iterations

    def test_overall_sorted_by_mae(self, bank):
        rows = run_termination_sweep(bank, "overall", master_seed=5, n_sessions=4,
                                     slip=NO_SLIP, exploration=NO_EXPLORATION)
        assert len(rows) == 12
        maes = [m.mae for _, m in rows]
        assert maes == sorted(maes)

    def test_unknown_kind_rejected(self, bank):
        with pytest.raises(ValidationError):
            run_termination_sweep(bank, "nope")


class TestRealReplay:
    def _logs(self, bank, n_learners=3, n_items=200, seed=0):
        return synth_response_records(
            bank, n_learners=n_learners, responses_per_learner=n_items, seed=seed
        )

    def test_empty_logs_empty_output(self, bank):
        assert run_real_replay([], bank) == []

    def test_unknown_item_rejected(self, bank):
        logs = [ResponseRecord("L0", "ghost-item", True)]
        with pytest.raises(UnknownItemError):
            run_real_replay(logs, bank)

    def test_selection_restricted_to_answered_items(self, bank):
        logs, _ = self._logs(bank, n_learners=2, n_items=120, seed=4)
        answered = {}
        for r in logs:
            answered.setdefault(r.learner_id, set()).add(r.item_id)
        outs = run_real_replay(logs, bank, criterion=EarlyStop(10, 0.05, max_steps=100))
        assert len(outs) == 2
        for o in outs:
            assert o.n_steps <= 100

    def test_adaptive_replay_tracks_full_session_estimate(self, bank):
        logs, thetas = self._logs(bank, n_learners=4, n_items=300, seed=3)
        adaptive = {o.learner_id: o.ability.theta
                    for o in run_real_replay(logs, bank, master_seed=3)}
        full = {o.learner_id: o.ability.theta
                for o in run_real_replay(logs, bank, mode="full-session")}
        for lid in adaptive:
            assert abs(adaptive[lid] - full[lid]) <= 0.2

    def test_full_session_equals_direct_eap(self, bank):
        logs, _ = self._logs(bank, n_learners=1, n_items=60, seed=6)
        out = run_real_replay(logs, bank, mode="full-session")[0]
        responses = [(bank.by_id(r.item_id), r.correct) for r in logs]
        direct = estimate_ability_eap(responses)
        assert out.ability.theta == pytest.approx(direct.theta, abs=1e-12)

    def test_manual_difficulty_requires_labels(self, bank):
        logs, _ = self._logs(bank, n_learners=1, n_items=50, seed=7)
        with pytest.raises(ValidationError):
            run_real_replay(logs, bank, mode="manual-difficulty")

    def test_unknown_mode_rejected(self, bank):
        with pytest.raises(ValidationError):
            run_real_replay([], bank, mode="extrapolate")
