"""Adaptive test session state machine.

A session owns mutable state (administered items, responses, the ability
trajectory) and a seeded RNG stream. Each step selects the next item by
maximum information at the (possibly exploration-shifted) current
estimate, records the answer, updates the ability by EAP over counted
responses, and checks the termination criterion.

Draw order per step is fixed so that sessions sharing a seed stay aligned
across termination settings: cold-start coin (live mode only), exploration
coin (only inside the exploration window and with epsilon > 0), top-k
choice, then whatever the answer source consumes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Union

import numpy as np

from .calibration import QuadratureGrid, _posterior_moments, default_grid
from .errors import BankExhaustedError, ValidationError
from .irt import PROB_EPS, Ability, ItemBank, ItemParams, info_3pl, prob_3pl

DEFAULT_MIN_STEPS = 25
DEFAULT_MAX_STEPS = 100
DEFAULT_WARMUP_LENGTH = 10

AnswerSource = Callable[[ItemParams, int], bool]


class Phase(str, Enum):
    WARMUP = "warmup"
    MAIN = "main"


class Decision(Enum):
    CONTINUE = "continue"
    CONVERGED = "converged"
    FORCED_STOP = "forced_stop"


@dataclass(frozen=True)
class ExplorationConfig:
    """Trend-following exploration of the ability estimate.

    Inside steps [start_step, stop_step), with probability ``epsilon`` the
    selection theta is shifted by ``alpha`` along the sign of the
    least-squares slope of the last ``trend_window`` estimates; a flat
    trend (|slope| <= flat_threshold) leaves theta unchanged.
    """

    epsilon: float = 0.2
    alpha: float = 0.5
    trend_window: int = 5
    start_step: int = 10
    stop_step: int = 60
    flat_threshold: float = 0.01

    def __post_init__(self):
        if not (0.0 <= self.epsilon <= 1.0):
            raise ValidationError("exploration epsilon must be in [0, 1]")
        if self.start_step >= self.stop_step:
            raise ValidationError("exploration start_step must be < stop_step")
        if self.trend_window < 2:
            raise ValidationError("trend_window must be >= 2")


NO_EXPLORATION = ExplorationConfig(epsilon=0.0)


@dataclass(frozen=True)
class SelectionPolicy:
    """Top-k informative sampling with an optional least-answered draw.

    The cold-start draw (uniform among the unadministered items with the
    fewest recorded responses) mirrors live-mode data collection; pure
    simulations disable it.
    """

    top_k: int = 5
    epsilon_coldstart: float = 0.1
    coldstart_enabled: bool = True

    def __post_init__(self):
        if self.top_k < 1:
            raise ValidationError("top_k must be >= 1")
        if not (0.0 <= self.epsilon_coldstart <= 1.0):
            raise ValidationError("epsilon_coldstart must be in [0, 1]")


@dataclass(frozen=True)
class FixedLength:
    """Converge after ``length`` main-phase responses."""

    length: int
    min_steps: int = DEFAULT_MIN_STEPS
    max_steps: int = DEFAULT_MAX_STEPS


@dataclass(frozen=True)
class SemThreshold:
    """Converge once the SEM over counted responses drops to ``threshold``."""

    threshold: float
    min_steps: int = DEFAULT_MIN_STEPS
    max_steps: int = DEFAULT_MAX_STEPS


@dataclass(frozen=True)
class EarlyStop:
    """Converge once theta moved less than ``delta`` for ``window`` steps.

    The window examines deltas between consecutive main-phase estimates
    only; warm-up estimates never count toward it.
    """

    window: int = 10
    delta: float = 0.05
    min_steps: int = DEFAULT_MIN_STEPS
    max_steps: int = DEFAULT_MAX_STEPS


TerminationCriterion = Union[FixedLength, SemThreshold, EarlyStop]


def _validate_criterion(criterion: TerminationCriterion) -> None:
    if criterion.min_steps > criterion.max_steps:
        raise ValidationError("criterion min_steps must be <= max_steps")
    if isinstance(criterion, FixedLength) and criterion.length < 1:
        raise ValidationError("FixedLength length must be >= 1")
    if isinstance(criterion, SemThreshold) and criterion.threshold <= 0:
        raise ValidationError("SemThreshold threshold must be positive")
    if isinstance(criterion, EarlyStop) and (criterion.window < 1 or criterion.delta <= 0):
        raise ValidationError("EarlyStop needs window >= 1 and delta > 0")


@dataclass
class ResponseEntry:
    item_id: str
    correct: bool
    counted: bool


@dataclass
class SessionState:
    """Mutable state of one running adaptive session (single-owner)."""

    bank: ItemBank
    grid: QuadratureGrid
    warmup_length: int
    rng_seed: int
    rng: np.random.Generator
    theta0: float
    administered: list[str] = field(default_factory=list)
    responses: list[ResponseEntry] = field(default_factory=list)
    theta_trajectory: list[Ability] = field(default_factory=list)
    counted_a: list[float] = field(default_factory=list)
    counted_b: list[float] = field(default_factory=list)
    counted_c: list[float] = field(default_factory=list)
    _administered_mask: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))
    _loglik: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def step(self) -> int:
        """Number of recorded responses so far."""
        return len(self.responses)

    @property
    def phase(self) -> Phase:
        return Phase.WARMUP if self.step < self.warmup_length else Phase.MAIN

    @property
    def n_counted(self) -> int:
        return len(self.counted_a)

    @property
    def current(self) -> Ability:
        return self.theta_trajectory[-1]

    def counted_information(self, theta: float) -> float:
        """Total information of the counted items at ``theta``."""
        if not self.counted_a:
            return 0.0
        return float(
            np.sum(
                info_3pl(theta, np.array(self.counted_a), np.array(self.counted_b), np.array(self.counted_c))
            )
        )


def init_session(
    seed: int,
    bank: ItemBank,
    criterion: Optional[TerminationCriterion] = None,
    exploration: Optional[ExplorationConfig] = None,
    policy: Optional[SelectionPolicy] = None,
    warmup_length: int = DEFAULT_WARMUP_LENGTH,
    grid: Optional[QuadratureGrid] = None,
) -> SessionState:
    """Open a session: draw theta_0 ~ Normal(0, 0.5) from the session RNG.

    theta_0 is the reported estimate until the first counted response
    arrives; afterwards estimates come from the EAP posterior. ``criterion``
    is validated here if given (the run loop receives it separately).
    """
    if len(bank) == 0:
        raise ValidationError("cannot start a session on an empty bank")
    if warmup_length < 0:
        raise ValidationError("warmup_length must be >= 0")
    if criterion is not None:
        _validate_criterion(criterion)
    grid = grid or default_grid()
    rng = np.random.default_rng(seed)
    theta0 = float(rng.normal(0.0, 0.5))
    state = SessionState(
        bank=bank,
        grid=grid,
        warmup_length=warmup_length,
        rng_seed=seed,
        rng=rng,
        theta0=theta0,
        _administered_mask=np.zeros(len(bank), dtype=bool),
        _loglik=np.zeros(grid.nodes.size),
    )
    state.theta_trajectory.append(Ability(theta0, np.inf, 0))
    return state


def _trend_slope(thetas: np.ndarray) -> float:
    """Least-squares slope of a theta series against step index."""
    x = np.arange(thetas.size, dtype=float)
    x = x - x.mean()
    denom = float(x @ x)
    if denom == 0.0:
        return 0.0
    return float(x @ (thetas - thetas.mean()) / denom)


def effective_theta(
    state: SessionState,
    exploration: ExplorationConfig,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """Selection theta: the current estimate, possibly shifted by exploration.

    Consumes one RNG draw only when epsilon > 0 and the step is inside the
    exploration window, keeping seeded streams aligned across settings
    that differ only in termination.
    """
    rng = rng if rng is not None else state.rng
    theta_n = state.current.theta
    if exploration.epsilon <= 0.0:
        return theta_n
    if not (exploration.start_step <= state.step < exploration.stop_step):
        return theta_n
    if rng.random() >= exploration.epsilon:
        return theta_n
    window = [ab.theta for ab in state.theta_trajectory[-exploration.trend_window :]]
    slope = _trend_slope(np.array(window))
    if abs(slope) <= exploration.flat_threshold:
        return theta_n
    return theta_n + float(np.sign(slope)) * exploration.alpha


def select_next_item(
    state: SessionState,
    bank: Optional[ItemBank] = None,
    policy: Optional[SelectionPolicy] = None,
    exploration: Optional[ExplorationConfig] = None,
    rng: Optional[np.random.Generator] = None,
) -> str:
    """Pick the next item id among unadministered items.

    With probability ``epsilon_coldstart`` (live mode) a uniform draw among
    the least-answered items; otherwise a uniform draw among the top-k most
    informative at the effective theta, ties broken by item_id.
    """
    bank = bank if bank is not None else state.bank
    policy = policy or SelectionPolicy()
    exploration = exploration if exploration is not None else NO_EXPLORATION
    rng = rng if rng is not None else state.rng

    available = np.flatnonzero(~state._administered_mask)
    if available.size == 0:
        raise BankExhaustedError("no unadministered items left in the bank")
    if available.size == 1:
        return bank[int(available[0])].item_id

    if policy.coldstart_enabled and rng.random() < policy.epsilon_coldstart:
        counts = np.array([bank[int(i)].response_count for i in available])
        ties = available[counts == counts.min()]
        return bank[int(ties[rng.integers(ties.size)])].item_id

    theta = effective_theta(state, exploration, rng)
    info = info_3pl(theta, bank.a[available], bank.b[available], bank.c[available])
    id_rank = bank.id_rank[available]
    k = min(policy.top_k, available.size)
    if available.size > k:
        # Partition first: sorting the whole bank every step is wasteful.
        cutoff = info[np.argpartition(-info, k - 1)[k - 1]]
        cand = np.flatnonzero(info >= cutoff)
    else:
        cand = np.arange(available.size)
    order = np.lexsort((id_rank[cand], -info[cand]))
    top = cand[order[:k]]
    pick = top[int(rng.integers(top.size))]
    return bank[int(available[pick])].item_id


def record_response(state: SessionState, item: ItemParams, correct: bool) -> SessionState:
    """Record the answer to the item selected for the current step.

    Wrong warm-up answers are recorded but not counted: they contribute
    nothing to the EAP update. The trajectory gains one estimate per
    response.
    """
    if item.item_id in state.bank:
        idx = state.bank.index_of(item.item_id)
        if state._administered_mask[idx]:
            raise ValidationError(f"item {item.item_id!r} already administered in this session")
        state._administered_mask[idx] = True
    else:
        raise ValidationError(f"item {item.item_id!r} is not in the session bank")

    counted = not (state.phase is Phase.WARMUP and not correct)
    state.administered.append(item.item_id)
    state.responses.append(ResponseEntry(item.item_id, bool(correct), counted))

    if counted:
        p = np.clip(
            prob_3pl(state.grid.nodes, item.a, item.b, item.c), PROB_EPS, 1.0 - PROB_EPS
        )
        state._loglik = state._loglik + (np.log(p) if correct else np.log1p(-p))
        state.counted_a.append(item.a)
        state.counted_b.append(item.b)
        state.counted_c.append(item.c)

    if state.n_counted == 0:
        # No counted evidence yet: stay anchored at the initial draw.
        state.theta_trajectory.append(Ability(state.theta0, np.inf, 0))
    else:
        mean, sd = _posterior_moments(state._loglik[None, :], state.grid)
        state.theta_trajectory.append(Ability(float(mean[0]), float(sd[0]), state.n_counted))
    return state


def check_termination(state: SessionState, criterion: TerminationCriterion) -> Decision:
    """Evaluate the criterion: CONTINUE, CONVERGED, or FORCED_STOP.

    No variant converges before ``min_steps`` total responses (warm-up
    included); every variant force-stops at ``max_steps``.
    """
    steps = state.step
    warmup_steps = min(steps, state.warmup_length)
    main_steps = steps - warmup_steps

    converged = False
    if isinstance(criterion, FixedLength):
        converged = main_steps >= criterion.length
    elif isinstance(criterion, SemThreshold):
        total_info = state.counted_information(state.current.theta)
        if total_info > 0.0:
            converged = float(np.sqrt(1.0 / total_info)) <= criterion.threshold
    elif isinstance(criterion, EarlyStop):
        main_estimates = [ab.theta for ab in state.theta_trajectory[state.warmup_length + 1 :]]
        if len(main_estimates) >= criterion.window + 1:
            deltas = np.abs(np.diff(main_estimates[-(criterion.window + 1) :]))
            converged = bool(np.all(deltas < criterion.delta))
    else:
        raise ValidationError(f"unknown termination criterion: {criterion!r}")

    if converged and steps >= criterion.min_steps:
        return Decision.CONVERGED
    if steps >= criterion.max_steps:
        return Decision.FORCED_STOP
    return Decision.CONTINUE


@dataclass
class SessionResult:
    """Outcome of a completed session."""

    ability: Ability
    trajectory: list[Ability]
    responses: list[ResponseEntry]
    n_steps: int
    termination_reason: str  # "converged" | "forced_stop" | "out_of_items"
    converged_step: Optional[int]
    rng_seed: int
    warmup_length: int

    @property
    def administered(self) -> list[str]:
        return [r.item_id for r in self.responses]

    def ability_at_convergence(self) -> Ability:
        """Estimate at the convergence step (final estimate if none)."""
        if self.converged_step is None:
            return self.ability
        return self.trajectory[self.converged_step]


def run_session(
    answer_source: AnswerSource,
    bank: ItemBank,
    seed: int,
    criterion: Optional[TerminationCriterion] = None,
    exploration: Optional[ExplorationConfig] = None,
    policy: Optional[SelectionPolicy] = None,
    warmup_length: int = DEFAULT_WARMUP_LENGTH,
    grid: Optional[QuadratureGrid] = None,
    continue_after_convergence: int = 0,
) -> SessionResult:
    """Run select -> answer -> record -> check until termination.

    Deterministic given the seed and a deterministic answer source. A bank
    exhausted mid-session force-terminates with reason "out_of_items".
    ``continue_after_convergence`` keeps the session running that many
    extra steps past first convergence (used to render convergence
    overshoot in traces); the max_steps cap still applies.
    """
    criterion = criterion if criterion is not None else EarlyStop()
    _validate_criterion(criterion)
    exploration = exploration if exploration is not None else NO_EXPLORATION
    policy = policy or SelectionPolicy()
    state = init_session(
        seed, bank, criterion=criterion, exploration=exploration, policy=policy,
        warmup_length=warmup_length, grid=grid,
    )

    converged_step: Optional[int] = None
    reason = "forced_stop"
    while True:
        try:
            item_id = select_next_item(state, bank, policy, exploration, state.rng)
        except BankExhaustedError:
            reason = "out_of_items" if converged_step is None else "converged"
            break
        item = bank.by_id(item_id)
        correct = bool(answer_source(item, state.step))
        record_response(state, item, correct)

        decision = check_termination(state, criterion)
        if converged_step is None and decision is Decision.CONVERGED:
            converged_step = state.step
        if converged_step is not None and state.step >= converged_step + continue_after_convergence:
            reason = "converged"
            break
        if decision is Decision.FORCED_STOP:
            reason = "forced_stop" if converged_step is None else "converged"
            break

    return SessionResult(
        ability=state.current,
        trajectory=list(state.theta_trajectory),
        responses=list(state.responses),
        n_steps=state.step,
        termination_reason=reason,
        converged_step=converged_step,
        rng_seed=state.rng_seed,
        warmup_length=state.warmup_length,
    )
