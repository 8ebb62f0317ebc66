"""Exercise-log analytics: abilities from practice data, without tests.

Practice exercises link one-to-many to linguistic constructs. Per-construct
credit/penalty counts turn each (student, construct) pair into a binomial
pseudo-item observation; the constructs are then calibrated like bank items
and student abilities evaluated against teacher-assigned CEFR levels.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence, Union

import numpy as np
from scipy.stats import spearmanr

from .calibration import (
    CalibrationConfig,
    CalibrationResult,
    QuadratureGrid,
    _calibrate_cells,
    _CellData,
    default_grid,
)
from .errors import InsufficientDataError, ValidationError
from .irt import Ability, ItemBank, ItemParams

# Guess factor by exercise type: free-form cloze answers cannot be guessed;
# multiple-choice has four options.
GUESS_FACTORS = {"cloze": 0.0, "multiple-choice": 0.25}


@dataclass(frozen=True)
class ExerciseEvent:
    """One scored exercise attempt, resolved to per-construct outcomes.

    ``construct_outcomes`` holds the final scored judgement per linked
    construct; ``hinted_constructs`` lists constructs for which the learner
    requested a hint (they may or may not appear among the outcomes).
    """

    student_id: str
    exercise_id: str
    exercise_type: str
    construct_outcomes: Mapping[str, bool]
    hinted_constructs: frozenset = frozenset()
    timestamp: Optional[int] = None

    def __post_init__(self):
        if self.exercise_type not in GUESS_FACTORS:
            raise ValidationError(
                f"unknown exercise type {self.exercise_type!r}; expected one of {sorted(GUESS_FACTORS)}"
            )
        if not self.construct_outcomes:
            raise ValidationError("an exercise event must touch at least one construct")
        object.__setattr__(self, "hinted_constructs", frozenset(self.hinted_constructs))

    @property
    def guess_factor(self) -> float:
        return GUESS_FACTORS[self.exercise_type]


@dataclass
class ConstructPerformance:
    """Credit/penalty counters of one student on one construct."""

    student_id: str
    construct_id: str
    credits: int = 0
    penalties: int = 0

    @property
    def trials(self) -> int:
        return self.credits + self.penalties

    @property
    def rate(self) -> float:
        if self.trials == 0:
            raise ValidationError("correctness rate undefined without observations")
        return self.credits / self.trials


def event_evidence(event: ExerciseEvent) -> dict[str, tuple[int, int]]:
    """(credit, penalty) contributed by one event to each of its constructs.

    A correct, un-hinted outcome earns a credit; an incorrect outcome earns
    a penalty; a requested hint earns an extra penalty and overrides the
    credit of a correct outcome (asking for help signals the construct is
    not yet mastered).
    """
    evidence: dict[str, tuple[int, int]] = {}
    for cid, correct in event.construct_outcomes.items():
        hinted = cid in event.hinted_constructs
        if hinted:
            evidence[cid] = (0, 1 if correct else 2)
        else:
            evidence[cid] = (1, 0) if correct else (0, 1)
    for cid in event.hinted_constructs:
        if cid not in event.construct_outcomes:
            evidence[cid] = (0, 1)
    return evidence


def accumulate_performance(
    events: Sequence[ExerciseEvent],
) -> dict[tuple[str, str], ConstructPerformance]:
    """Fold events into per-(student, construct) credit/penalty counts."""
    table: dict[tuple[str, str], ConstructPerformance] = {}
    for event in events:
        for cid, (credit, penalty) in event_evidence(event).items():
            key = (event.student_id, cid)
            perf = table.get(key)
            if perf is None:
                perf = table[key] = ConstructPerformance(event.student_id, cid)
            perf.credits += credit
            perf.penalties += penalty
    return table


@dataclass(frozen=True)
class FilterConfig:
    """Data-sufficiency thresholds.

    ``min_exer``: minimum distinct exercises a student must have done to be
    used at all; ``min_constr``: minimum observations a (student, construct)
    pair needs to enter estimation.
    """

    min_exer: int = 50
    min_constr: int = 1

    def __post_init__(self):
        if self.min_exer < 1 or self.min_constr < 1:
            raise ValidationError("min_exer and min_constr must both be >= 1")


@dataclass
class ConstructObservation:
    """Binomial observation: ``successes`` credits out of ``trials``."""

    student_id: str
    construct_id: str
    successes: int
    trials: int


@dataclass
class ConstructResponseSet:
    """Filtered observations plus per-construct guess factors."""

    observations: list[ConstructObservation]
    construct_guess: dict[str, float]
    retained_students: list[str]


def build_construct_responses(
    perf: Mapping[tuple[str, str], ConstructPerformance],
    events: Sequence[ExerciseEvent],
    filt: FilterConfig,
) -> ConstructResponseSet:
    """Apply the sufficiency filters and derive per-construct guess floors.

    Each retained construct's guessing parameter is the trial-weighted mean
    of the guess factors of the events contributing to its retained cells
    (a construct exercised through both cloze and multiple-choice has no
    single type-given floor).
    """
    exercises_per_student: dict[str, set] = {}
    for event in events:
        exercises_per_student.setdefault(event.student_id, set()).add(event.exercise_id)
    retained = {
        sid for sid, exs in exercises_per_student.items() if len(exs) >= filt.min_exer
    }

    observations = [
        ConstructObservation(p.student_id, p.construct_id, p.credits, p.trials)
        for p in perf.values()
        if p.student_id in retained and p.trials >= filt.min_constr
    ]
    if not observations:
        raise InsufficientDataError(
            f"no (student, construct) observations survive min_exer={filt.min_exer}, "
            f"min_constr={filt.min_constr}"
        )
    retained_cells = {(o.student_id, o.construct_id) for o in observations}

    guess_num: dict[str, float] = {}
    guess_den: dict[str, float] = {}
    for event in events:
        if event.student_id not in retained:
            continue
        for cid, (credit, penalty) in event_evidence(event).items():
            if (event.student_id, cid) not in retained_cells:
                continue
            trials = credit + penalty
            guess_num[cid] = guess_num.get(cid, 0.0) + trials * event.guess_factor
            guess_den[cid] = guess_den.get(cid, 0.0) + trials
    construct_guess = {cid: guess_num[cid] / guess_den[cid] for cid in guess_den}

    return ConstructResponseSet(
        observations=observations,
        construct_guess=construct_guess,
        retained_students=sorted(retained),
    )


def calibrate_constructs(
    responses: ConstructResponseSet,
    config: Optional[CalibrationConfig] = None,
    grid: Optional[QuadratureGrid] = None,
    fix_a: bool = False,
) -> CalibrationResult:
    """Fit construct pseudo-items and student abilities.

    Same alternating penalized-likelihood scheme as bank calibration, with
    the Bernoulli likelihood generalized to binomial (successes, trials)
    cells; guessing floors are fixed at the type-derived values. ``fix_a``
    pins every discrimination at 1.
    """
    if not responses.observations:
        raise ValidationError("calibrate_constructs requires at least one observation")
    config = config or CalibrationConfig()
    grid = grid or default_grid()

    student_ids = sorted({o.student_id for o in responses.observations})
    construct_ids = sorted({o.construct_id for o in responses.observations})
    s_index = {sid: i for i, sid in enumerate(student_ids)}
    c_index = {cid: j for j, cid in enumerate(construct_ids)}
    obs = sorted(responses.observations, key=lambda o: (s_index[o.student_id], c_index[o.construct_id]))
    cells = _CellData(
        learner_ids=student_ids,
        item_ids=construct_ids,
        learner_idx=np.array([s_index[o.student_id] for o in obs], dtype=np.int64),
        item_idx=np.array([c_index[o.construct_id] for o in obs], dtype=np.int64),
        k=np.array([float(o.successes) for o in obs]),
        n=np.array([float(o.trials) for o in obs]),
    )
    c0 = np.array([responses.construct_guess.get(cid, 0.0) for cid in construct_ids])
    a, b, c, theta, theta_sd, converged, iterations, degenerate = _calibrate_cells(
        cells, config, grid, c0=c0, fix_a=fix_a
    )

    n_by_construct = np.bincount(cells.item_idx, weights=cells.n, minlength=len(construct_ids))
    items = [
        ItemParams(
            item_id=cid,
            a=float(a[j]),
            b=float(b[j]),
            c=float(c[j]),
            construct_id=cid,
            response_count=int(n_by_construct[j]),
        )
        for j, cid in enumerate(construct_ids)
    ]
    n_by_student = np.bincount(cells.learner_idx, weights=cells.n, minlength=len(student_ids))
    abilities = {
        sid: Ability(float(theta[i]), float(theta_sd[i]), int(n_by_student[i]))
        for i, sid in enumerate(student_ids)
    }
    return CalibrationResult(
        bank=ItemBank(items),
        abilities=abilities,
        converged=converged,
        n_iterations=iterations,
        degenerate_items=[construct_ids[j] for j in np.flatnonzero(degenerate)],
    )


# --------------------------------------------------------------------------
# Evaluation against teacher CEFR labels
# --------------------------------------------------------------------------


@dataclass
class LevelSummary:
    """Five-number summary of ability estimates at one CEFR level."""

    level: int
    n: int
    minimum: float
    q1: float
    median: float
    q3: float
    maximum: float


@dataclass
class EvaluationReport:
    rho: float
    n_students: int
    level_summaries: list[LevelSummary] = field(default_factory=list)


def evaluate_against_cefr(
    abilities: Mapping[str, Union[Ability, float]],
    labels: Mapping[str, int],
) -> EvaluationReport:
    """Spearman rank correlation of estimates against CEFR labels.

    Ties get average ranks; per-level five-number summaries feed box-plot
    style reports.
    """
    pairs = []
    for sid, level in labels.items():
        if sid not in abilities:
            continue
        est = abilities[sid]
        theta = est.theta if isinstance(est, Ability) else float(est)
        pairs.append((int(level), theta))
    if len(pairs) < 2:
        raise ValidationError("evaluation needs at least 2 labelled students with abilities")

    levels = np.array([p[0] for p in pairs])
    thetas = np.array([p[1] for p in pairs])
    rho = float(spearmanr(levels, thetas).statistic)

    summaries = []
    for level in sorted(set(levels.tolist())):
        vals = thetas[levels == level]
        q = np.percentile(vals, [0, 25, 50, 75, 100])
        summaries.append(
            LevelSummary(int(level), int(vals.size), *(float(x) for x in q))
        )
    return EvaluationReport(rho=rho, n_students=len(pairs), level_summaries=summaries)


@dataclass
class GridRow:
    """One cell of the filter grid report."""

    min_exer: int
    min_constr: int
    n_train: int
    n_eval: int
    rho: Optional[float]
    level_summaries: list[LevelSummary] = field(default_factory=list)
    error: Optional[str] = None


DEFAULT_FILTER_GRID = ((50, 1), (100, 1), (50, 4), (100, 4), (50, 7), (100, 7))


def run_filter_grid(
    events: Sequence[ExerciseEvent],
    labels: Mapping[str, int],
    grid_cells: Sequence[tuple[int, int]] = DEFAULT_FILTER_GRID,
    config: Optional[CalibrationConfig] = None,
    fix_a: bool = False,
) -> list[GridRow]:
    """Fit and evaluate once per (min_exer, min_constr) cell.

    Cells whose filters leave no usable data are reported with an error
    note instead of being dropped.
    """
    perf = accumulate_performance(events)
    rows: list[GridRow] = []
    for min_exer, min_constr in grid_cells:
        filt = FilterConfig(min_exer=min_exer, min_constr=min_constr)
        try:
            responses = build_construct_responses(perf, events, filt)
            fit = calibrate_constructs(responses, config=config, fix_a=fix_a)
            report = evaluate_against_cefr(fit.abilities, labels)
        except (InsufficientDataError, ValidationError) as exc:
            rows.append(
                GridRow(min_exer, min_constr, 0, 0, rho=None, error=str(exc))
            )
            continue
        rows.append(
            GridRow(
                min_exer=min_exer,
                min_constr=min_constr,
                n_train=len(responses.retained_students),
                n_eval=report.n_students,
                rho=report.rho,
                level_summaries=report.level_summaries,
            )
        )
    return rows
