"""Seeded synthetic dataset generators.

Real banks and learner cohorts are not shipped; these generators produce
structurally matching stand-ins (multiple-choice item banks, exhaustive
test logs, practice-exercise logs) for simulations, tests, and demos.
Everything is deterministic given the seed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .calibration import ResponseRecord, map_theta_to_cefr
from .exercises import GUESS_FACTORS, ExerciseEvent
from .irt import THETA_MAX, THETA_MIN, ItemBank, ItemParams, prob_3pl

_TIMESTAMP_BASE = 1_600_000_000_000  # epoch ms; purely cosmetic


def _rng(seed: int, *stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((seed, *stream)))


def synth_bank(
    n_items: int = 3000,
    seed: int = 0,
    log_a_sd: float = 0.3,
    b_sd: float = 1.5,
    c: float = 0.25,
) -> ItemBank:
    """Multiple-choice bank: log a ~ N(0, log_a_sd), b ~ N(0, b_sd) truncated
    to the working ability range, fixed guessing floor."""
    rng = _rng(seed, 0)
    a = np.exp(rng.normal(0.0, log_a_sd, n_items))
    b = rng.normal(0.0, b_sd, n_items)
    out_of_range = (b < THETA_MIN) | (b > THETA_MAX)
    while np.any(out_of_range):
        b[out_of_range] = rng.normal(0.0, b_sd, int(out_of_range.sum()))
        out_of_range = (b < THETA_MIN) | (b > THETA_MAX)
    return ItemBank(
        ItemParams(item_id=f"i{j:05d}", a=float(a[j]), b=float(b[j]), c=c)
        for j in range(n_items)
    )


def synth_thetas(n_learners: int, seed: int = 0, sd: float = 1.0) -> dict[str, float]:
    """True abilities theta ~ N(0, sd) keyed by learner id."""
    rng = _rng(seed, 1)
    draws = rng.normal(0.0, sd, n_learners)
    return {f"L{i:05d}": float(draws[i]) for i in range(n_learners)}


def synth_response_records(
    bank: ItemBank,
    n_learners: int = 1000,
    responses_per_learner: int = 150,
    seed: int = 0,
    theta_sd: float = 1.0,
    thetas: Optional[Mapping[str, float]] = None,
) -> tuple[list[ResponseRecord], dict[str, float]]:
    """Scored test logs: each learner answers a random item subset once.

    Answers are sampled from the 3PL response probability at the learner's
    true ability. Returns the records and the true abilities.
    """
    if responses_per_learner > len(bank):
        raise ValueError("responses_per_learner exceeds the bank size")
    if thetas is None:
        thetas = synth_thetas(n_learners, seed, theta_sd)
    rng = _rng(seed, 2)
    records: list[ResponseRecord] = []
    ts = _TIMESTAMP_BASE
    for lid in sorted(thetas):
        theta = thetas[lid]
        idx = rng.permutation(len(bank))[:responses_per_learner]
        p = prob_3pl(theta, bank.a[idx], bank.b[idx], bank.c[idx])
        correct = rng.random(idx.size) < p
        for j, item_i in enumerate(idx):
            records.append(
                ResponseRecord(lid, bank[int(item_i)].item_id, bool(correct[j]), ts)
            )
            ts += 1000
    return records, dict(thetas)


def cefr_item_labels_from_bank(bank: ItemBank) -> dict[str, int]:
    """Difficulty labels per item: the item's own 6-bin index over the bank."""
    return {item.item_id: map_theta_to_cefr(item.b, bank) for item in bank}


def cefr_labels_from_thetas(
    thetas: Mapping[str, float], lo: float = -3.0, hi: float = 3.0
) -> dict[str, int]:
    """Teacher-style level labels: 6 equal bins of the true ability range."""
    width = (hi - lo) / 6.0
    labels = {}
    for sid, theta in thetas.items():
        idx = int(np.floor((theta - lo) / width))
        labels[sid] = min(max(idx, 0), 5)
    return labels


@dataclass
class ExerciseCohort:
    """Synthetic practice logs plus the generating ground truth."""

    events: list[ExerciseEvent]
    true_thetas: dict[str, float]
    construct_bank: ItemBank


def synth_exercise_cohort(
    n_students: int = 300,
    n_constructs: int = 60,
    seed: int = 0,
    exercises_per_student: tuple[int, int] = (30, 250),
    constructs_per_exercise: tuple[int, int] = (1, 3),
    p_multiple_choice: float = 0.3,
    p_hint_given_wrong: float = 0.25,
    p_hint_given_correct: float = 0.03,
    theta_sd: float = 1.0,
    log_a_sd: float = 0.25,
    b_sd: float = 1.2,
) -> ExerciseCohort:
    """Practice logs over latent constructs with known ground truth.

    Student workloads vary uniformly over ``exercises_per_student`` so the
    sufficiency filters have something to bite on. Outcomes are sampled
    from the 3PL probability with the exercise type's guess floor; hints
    are requested mostly after wrong answers.
    """
    rng = _rng(seed, 3)
    a = np.exp(rng.normal(0.0, log_a_sd, n_constructs))
    b = rng.normal(0.0, b_sd, n_constructs)
    construct_bank = ItemBank(
        ItemParams(item_id=f"c{j:03d}", a=float(a[j]), b=float(b[j]), c=0.0, construct_id=f"c{j:03d}")
        for j in range(n_constructs)
    )
    thetas = rng.normal(0.0, theta_sd, n_students)
    true_thetas = {f"S{i:04d}": float(thetas[i]) for i in range(n_students)}

    events: list[ExerciseEvent] = []
    exercise_no = 0
    ts = _TIMESTAMP_BASE
    lo, hi = exercises_per_student
    c_lo, c_hi = constructs_per_exercise
    for sid in sorted(true_thetas):
        theta = true_thetas[sid]
        n_exercises = int(rng.integers(lo, hi + 1))
        for _ in range(n_exercises):
            ex_type = "multiple-choice" if rng.random() < p_multiple_choice else "cloze"
            guess = GUESS_FACTORS[ex_type]
            n_linked = int(rng.integers(c_lo, c_hi + 1))
            linked = rng.permutation(n_constructs)[:n_linked]
            outcomes = {}
            hinted = set()
            for j in linked:
                cid = construct_bank[int(j)].item_id
                p = float(prob_3pl(theta, a[j], b[j], guess))
                correct = bool(rng.random() < p)
                outcomes[cid] = correct
                p_hint = p_hint_given_correct if correct else p_hint_given_wrong
                if rng.random() < p_hint:
                    hinted.add(cid)
            events.append(
                ExerciseEvent(
                    student_id=sid,
                    exercise_id=f"x{exercise_no:06d}",
                    exercise_type=ex_type,
                    construct_outcomes=outcomes,
                    hinted_constructs=frozenset(hinted),
                    timestamp=ts,
                )
            )
            exercise_no += 1
            ts += 1000
    return ExerciseCohort(events=events, true_thetas=true_thetas, construct_bank=construct_bank)
