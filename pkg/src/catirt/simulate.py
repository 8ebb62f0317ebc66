"""Monte-Carlo examinee simulation and batch experiment harness.

Simulated examinees answer according to their hidden true ability, with an
optional post-hoc slip flip; batches of sessions share a master seed and
derive independent per-session streams, so results are reproducible and
invariant under the worker count.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .calibration import ResponseRecord, cefr_to_difficulty, estimate_ability_eap
from .engine import (
    EarlyStop,
    ExplorationConfig,
    FixedLength,
    NO_EXPLORATION,
    SelectionPolicy,
    SemThreshold,
    SessionResult,
    TerminationCriterion,
    run_session,
)
from .errors import UnknownItemError, ValidationError
from .irt import Ability, ItemBank, ItemParams, prob_correct

THETA_TRUE_RANGE = (-3.5, 3.5)

SIMULATION_POLICY = SelectionPolicy(top_k=5, coldstart_enabled=False)


@dataclass(frozen=True)
class SlipSchedule:
    """Chance that a sampled-correct answer flips to wrong.

    ``early_rate`` applies to steps before ``early_window`` (aberrant
    starts); ``base_rate`` applies afterwards. ``early_rate=None`` means
    equal to the base rate.
    """

    base_rate: float = 0.05
    early_rate: Optional[float] = None
    early_window: int = 0

    def __post_init__(self):
        if self.early_rate is None:
            object.__setattr__(self, "early_rate", self.base_rate)
        for rate in (self.base_rate, self.early_rate):
            if not (0.0 <= rate <= 1.0):
                raise ValidationError(f"slip rate must be in [0, 1], got {rate}")
        if self.early_window < 0:
            raise ValidationError("early_window must be >= 0")

    def rate_at(self, step: int) -> float:
        return self.early_rate if step < self.early_window else self.base_rate


NO_SLIP = SlipSchedule(base_rate=0.0, early_rate=0.0, early_window=0)

# Aberrant-start schedule: heavy slipping on the first 10 answers, then a
# "normal" rate of 0.1.
EARLY_ABERRANT = SlipSchedule(base_rate=0.1, early_rate=0.6, early_window=10)


@dataclass(frozen=True)
class SimulationConfig:
    """Everything one simulated session needs, including its seed."""

    theta_true: float
    slip: SlipSchedule = NO_SLIP
    exploration: ExplorationConfig = NO_EXPLORATION
    warmup_length: int = 0
    criterion: TerminationCriterion = field(default_factory=EarlyStop)
    policy: SelectionPolicy = SIMULATION_POLICY
    seed: int = 0


@dataclass
class SimulatedOutcome:
    """A finished simulated session together with its hidden truth."""

    config: SimulationConfig
    result: SessionResult

    @property
    def theta_true(self) -> float:
        return self.config.theta_true

    @property
    def error(self) -> float:
        return self.result.ability.theta - self.config.theta_true


@dataclass(frozen=True)
class BatchMetrics:
    """Summary of a batch: test length and ability-error statistics."""

    mean_iterations: float
    sd_iterations: float
    mae: float
    sd_error: float

    @classmethod
    def from_outcomes(cls, outcomes: Sequence[SimulatedOutcome]) -> "BatchMetrics":
        if not outcomes:
            return cls(0.0, 0.0, 0.0, 0.0)
        lengths = np.array([o.result.n_steps for o in outcomes], dtype=float)
        errors = np.array([o.error for o in outcomes])
        return cls(
            mean_iterations=float(lengths.mean()),
            sd_iterations=float(lengths.std()),
            mae=float(np.abs(errors).mean()),
            sd_error=float(errors.std()),
        )


def child_seed(*entropy: int) -> int:
    """Deterministic 64-bit seed derived from an entropy tuple."""
    return int(np.random.SeedSequence(tuple(entropy)).generate_state(1, np.uint64)[0])


def simulate_answer(
    theta_true: float,
    item: ItemParams,
    step: int,
    slip: SlipSchedule,
    rng: np.random.Generator,
) -> bool:
    """Sample an answer at the true ability, then apply the slip flip.

    Wrong answers never flip; a slip draw is consumed only for correct
    answers under a positive slip rate.
    """
    correct = bool(rng.random() < prob_correct(theta_true, item))
    if correct:
        rate = slip.rate_at(step)
        if rate > 0.0 and rng.random() < rate:
            correct = False
    return correct


def run_simulated_session(
    bank: ItemBank,
    config: SimulationConfig,
    continue_after_convergence: int = 0,
) -> SimulatedOutcome:
    """Run one adaptive session against a simulated examinee.

    The session RNG and the examinee's answer RNG are independent child
    streams of ``config.seed``, so sessions that present the same items
    see the same answers regardless of termination settings.
    """
    session_seed = child_seed(config.seed, 0)
    answer_rng = np.random.default_rng(np.random.SeedSequence((config.seed, 1)))

    def source(item: ItemParams, step: int) -> bool:
        return simulate_answer(config.theta_true, item, step, config.slip, answer_rng)

    result = run_session(
        source,
        bank,
        seed=session_seed,
        criterion=config.criterion,
        exploration=config.exploration,
        policy=config.policy,
        warmup_length=config.warmup_length,
        continue_after_convergence=continue_after_convergence,
    )
    return SimulatedOutcome(config=config, result=result)


def _run_chunk(args) -> list[SimulatedOutcome]:
    bank, configs, overrun = args
    return [run_simulated_session(bank, cfg, overrun) for cfg in configs]


def run_many(
    bank: ItemBank,
    configs: Sequence[SimulationConfig],
    workers: int = 1,
    continue_after_convergence: int = 0,
) -> list[SimulatedOutcome]:
    """Run sessions (optionally across processes) in a fixed result order."""
    if workers <= 1 or len(configs) < 2 * workers:
        return [run_simulated_session(bank, cfg, continue_after_convergence) for cfg in configs]
    chunks = [list(chunk) for chunk in np.array_split(np.array(configs, dtype=object), workers * 4) if len(chunk)]
    out: list[SimulatedOutcome] = []
    with ProcessPoolExecutor(max_workers=workers) as pool:
        for part in pool.map(_run_chunk, [(bank, chunk, continue_after_convergence) for chunk in chunks]):
            out.extend(part)
    return out


def batch_configs(
    n_sessions: int,
    master_seed: int,
    theta_range: tuple[float, float] = THETA_TRUE_RANGE,
    slip: SlipSchedule = NO_SLIP,
    exploration: ExplorationConfig = NO_EXPLORATION,
    warmup_length: int = 0,
    criterion: Optional[TerminationCriterion] = None,
    policy: SelectionPolicy = SIMULATION_POLICY,
) -> list[SimulationConfig]:
    """Session configs with true abilities drawn uniformly from the range."""
    criterion = criterion if criterion is not None else EarlyStop()
    theta_rng = np.random.default_rng(np.random.SeedSequence((master_seed, 0)))
    thetas = theta_rng.uniform(theta_range[0], theta_range[1], n_sessions)
    return [
        SimulationConfig(
            theta_true=float(thetas[i]),
            slip=slip,
            exploration=exploration,
            warmup_length=warmup_length,
            criterion=criterion,
            policy=policy,
            seed=child_seed(master_seed, 1, i),
        )
        for i in range(n_sessions)
    ]


def run_batch(
    bank: ItemBank,
    n_sessions: int = 500,
    master_seed: int = 0,
    workers: int = 1,
    **settings,
) -> BatchMetrics:
    """Batch of sessions at uniformly drawn true abilities -> BatchMetrics.

    Forced stops are included in the error statistics.
    """
    configs = batch_configs(n_sessions, master_seed, **settings)
    return BatchMetrics.from_outcomes(run_many(bank, configs, workers=workers))


def run_artificial_grid(
    bank: ItemBank,
    levels: Sequence[float] = (-2.0, -1.0, 0.0, 1.0, 2.0),
    per_level: int = 3,
    master_seed: int = 0,
    slip: SlipSchedule = NO_SLIP,
    exploration: ExplorationConfig = NO_EXPLORATION,
    warmup_length: int = 0,
    criterion: Optional[TerminationCriterion] = None,
    policy: SelectionPolicy = SIMULATION_POLICY,
    continue_after_convergence: int = 10,
    workers: int = 1,
) -> list[SimulatedOutcome]:
    """Fixed-level examinee traces, continuing 10 steps past convergence."""
    criterion = criterion if criterion is not None else EarlyStop(window=10, delta=0.05)
    configs = [
        SimulationConfig(
            theta_true=float(level),
            slip=slip,
            exploration=exploration,
            warmup_length=warmup_length,
            criterion=criterion,
            policy=policy,
            seed=child_seed(master_seed, 2, li, rep),
        )
        for li, level in enumerate(levels)
        for rep in range(per_level)
    ]
    return run_many(bank, configs, workers=workers, continue_after_convergence=continue_after_convergence)


def run_slip_exploration_sweep(
    bank: ItemBank,
    master_seed: int = 0,
    n_sessions: int = 500,
    slip: Optional[SlipSchedule] = None,
    epsilon: float = 0.2,
    alphas: Sequence[float] = (0.25, 0.5, 0.75),
    exploration_stops: Sequence[int] = (30, 60, 90),
    criterion: Optional[TerminationCriterion] = None,
    workers: int = 1,
) -> list[tuple[str, BatchMetrics]]:
    """Baseline, slip-only, and slip+exploration rows on shared seeds."""
    slip = slip if slip is not None else SlipSchedule(base_rate=0.05)
    criterion = criterion if criterion is not None else EarlyStop(window=10, delta=0.05)

    def batch(slip_s: SlipSchedule, expl: ExplorationConfig) -> BatchMetrics:
        return run_batch(
            bank, n_sessions, master_seed, workers=workers,
            slip=slip_s, exploration=expl, criterion=criterion,
        )

    rows = [
        ("baseline", batch(NO_SLIP, NO_EXPLORATION)),
        ("slip-only", batch(slip, NO_EXPLORATION)),
    ]
    for alpha in alphas:
        for stop in exploration_stops:
            expl = ExplorationConfig(epsilon=epsilon, alpha=alpha, stop_step=stop)
            rows.append((f"slip-expl-a{alpha:g}-N{stop}", batch(slip, expl)))
    return rows


# Appendix-style sweep grids.
FIXED_LENGTH_GRID = (25, 50, 75, 100, 125, 150)
SEM_GRID = tuple(round(0.1 + 0.02 * i, 2) for i in range(11))  # 0.10 .. 0.30
EARLYSTOP_WINDOW_GRID = (6, 8, 10, 12)
EARLYSTOP_DELTA_GRID = (0.05, 0.15, 0.25, 0.35)


def _overall_settings() -> list[tuple[str, TerminationCriterion]]:
    settings: list[tuple[str, TerminationCriterion]] = []
    for n in (25, 50, 75, 100):
        settings.append((f"fixed-{n}", FixedLength(n, max_steps=max(100, n))))
    for s in (0.12, 0.14, 0.16, 0.18):
        settings.append((f"sem-{s:g}", SemThreshold(s)))
    for window, delta in ((10, 0.05), (10, 0.15), (12, 0.05), (12, 0.15)):
        settings.append((f"earlystop-N{window}-d{delta:g}", EarlyStop(window=window, delta=delta)))
    return settings


def run_termination_sweep(
    bank: ItemBank,
    kind: str,
    master_seed: int = 0,
    n_sessions: int = 500,
    slip: Optional[SlipSchedule] = None,
    exploration: Optional[ExplorationConfig] = None,
    workers: int = 1,
) -> list[tuple[str, BatchMetrics]]:
    """Per-criterion metric rows; ``overall`` runs 12 named settings sorted by MAE."""
    slip = slip if slip is not None else SlipSchedule(base_rate=0.05)
    exploration = (
        exploration if exploration is not None else ExplorationConfig(epsilon=0.2, alpha=0.5, stop_step=60)
    )

    if kind == "fixed":
        settings = [(f"fixed-{n}", FixedLength(n, max_steps=max(100, n))) for n in FIXED_LENGTH_GRID]
    elif kind == "sem":
        settings = [(f"sem-{s:g}", SemThreshold(s)) for s in SEM_GRID]
    elif kind == "earlystop":
        settings = [
            (f"earlystop-N{w}-d{d:g}", EarlyStop(window=w, delta=d))
            for w in EARLYSTOP_WINDOW_GRID
            for d in EARLYSTOP_DELTA_GRID
        ]
    elif kind == "overall":
        settings = _overall_settings()
    else:
        raise ValidationError(f"unknown termination sweep kind: {kind!r}")

    rows = [
        (
            label,
            run_batch(
                bank, n_sessions, master_seed, workers=workers,
                slip=slip, exploration=exploration, criterion=criterion,
            ),
        )
        for label, criterion in settings
    ]
    if kind == "overall":
        rows.sort(key=lambda row: row[1].mae)
    return rows


# --------------------------------------------------------------------------
# Replay of recorded sessions
# --------------------------------------------------------------------------

REPLAY_MODES = ("adaptive-replay", "full-session", "manual-difficulty")


@dataclass
class ReplayOutcome:
    learner_id: str
    ability: Ability
    n_steps: int
    termination_reason: str


def _group_logs(logs: Sequence[ResponseRecord], bank: ItemBank) -> dict[str, dict[str, bool]]:
    """Per-learner item -> correctness maps (first response wins)."""
    sessions: dict[str, dict[str, bool]] = {}
    for rec in logs:
        if rec.item_id not in bank:
            raise UnknownItemError(
                f"learner {rec.learner_id!r}: item {rec.item_id!r} not in bank"
            )
        sessions.setdefault(rec.learner_id, {}).setdefault(rec.item_id, rec.correct)
    return sessions


def run_real_replay(
    logs: Sequence[ResponseRecord],
    bank: ItemBank,
    mode: str = "adaptive-replay",
    cefr_item_labels: Optional[dict[str, int]] = None,
    criterion: Optional[TerminationCriterion] = None,
    master_seed: int = 0,
    policy: SelectionPolicy = SIMULATION_POLICY,
) -> list[ReplayOutcome]:
    """Estimate abilities by replaying recorded sessions against the bank.

    adaptive-replay restricts selection to the learner's answered items and
    caps at 100 steps; full-session scores every recorded answer at once;
    manual-difficulty additionally replaces each item with a=1 and b at the
    center of the item's labelled difficulty bin over the bank's b-range.
    """
    if mode not in REPLAY_MODES:
        raise ValidationError(f"unknown replay mode: {mode!r} (expected one of {REPLAY_MODES})")
    if mode == "manual-difficulty" and cefr_item_labels is None:
        raise ValidationError("manual-difficulty replay requires cefr_item_labels")
    criterion = criterion if criterion is not None else EarlyStop(window=10, delta=0.05, max_steps=100)

    sessions = _group_logs(logs, bank)
    outcomes: list[ReplayOutcome] = []
    for idx, learner_id in enumerate(sorted(sessions)):
        answers = sessions[learner_id]
        items = [bank.by_id(iid) for iid in answers]
        if mode == "manual-difficulty":
            items = [_manual_item(it, cefr_item_labels, bank) for it in items]
        if mode == "full-session":
            by_id = {it.item_id: it for it in items}
            ability = estimate_ability_eap([(by_id[iid], corr) for iid, corr in answers.items()])
            outcomes.append(ReplayOutcome(learner_id, ability, len(answers), "full_session"))
            continue
        restricted = ItemBank(items)
        result = run_session(
            lambda item, step, _a=answers: _a[item.item_id],
            restricted,
            seed=child_seed(master_seed, 3, idx),
            criterion=criterion,
            exploration=NO_EXPLORATION,
            policy=policy,
            warmup_length=0,
        )
        outcomes.append(
            ReplayOutcome(learner_id, result.ability, result.n_steps, result.termination_reason)
        )
    return outcomes


def _manual_item(item: ItemParams, labels: dict[str, int], bank: ItemBank) -> ItemParams:
    if item.item_id not in labels:
        raise ValidationError(f"no difficulty label for item {item.item_id!r}")
    return replace(
        item, a=1.0, b=cefr_to_difficulty(labels[item.item_id], bank)
    )
