"""Core three-parameter logistic (3PL) model.

Response probability, Fisher information, standard error of measurement
(SEM), and response log-likelihood. All functions are pure; the array
variants broadcast over numpy inputs and back the adaptive engine and the
calibration routines.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np
from scipy.special import expit

from .errors import UndefinedSemError, ValidationError

# Probabilities are clamped away from {0, 1} in likelihood work so that a
# contradicting response never produces -inf.
PROB_EPS = 1e-12

# Ability grids are truncated to this range (slightly wider than the
# observed ability range so grid boundaries do not bias estimates).
THETA_MIN = -4.0
THETA_MAX = 4.0


@dataclass(frozen=True)
class ItemParams:
    """3PL parameters of a single question item.

    ``response_count`` tracks how many learner responses the item has
    accumulated; the cold-start selection rule draws from the items with
    the fewest responses.
    """

    item_id: str
    a: float
    b: float
    c: float = 0.0
    construct_id: Optional[str] = None
    response_count: int = 0

    def __post_init__(self):
        if not self.a > 0:
            raise ValidationError(f"item {self.item_id!r}: discrimination a must be > 0, got {self.a}")
        if not (0.0 <= self.c < 1.0):
            raise ValidationError(f"item {self.item_id!r}: guessing c must be in [0, 1), got {self.c}")
        if not np.isfinite(self.b):
            raise ValidationError(f"item {self.item_id!r}: difficulty b must be finite, got {self.b}")
        if self.response_count < 0:
            raise ValidationError(f"item {self.item_id!r}: response_count must be >= 0")


@dataclass(frozen=True)
class Ability:
    """A point ability estimate with its standard error."""

    theta: float
    standard_error: float
    n_responses: int = 0

    def __post_init__(self):
        if not np.isfinite(self.theta):
            raise ValidationError(f"ability theta must be finite, got {self.theta}")
        if self.standard_error < 0:
            raise ValidationError(f"standard_error must be >= 0, got {self.standard_error}")


class ItemBank:
    """An ordered collection of items with unique ids.

    Parameter vectors (``a``, ``b``, ``c``) are materialized once so that
    selection and estimation can run vectorized over the whole bank.
    """

    def __init__(self, items: Iterable[ItemParams]):
        self.items: tuple[ItemParams, ...] = tuple(items)
        self._index: dict[str, int] = {}
        for i, item in enumerate(self.items):
            if item.item_id in self._index:
                raise ValidationError(f"duplicate item_id in bank: {item.item_id!r}")
            self._index[item.item_id] = i
        self.a = np.array([it.a for it in self.items], dtype=float)
        self.b = np.array([it.b for it in self.items], dtype=float)
        self.c = np.array([it.c for it in self.items], dtype=float)
        self._id_rank: Optional[np.ndarray] = None

    @property
    def id_rank(self) -> np.ndarray:
        """Rank of each item's id in sorted id order (selection tiebreak)."""
        if self._id_rank is None:
            order = sorted(range(len(self.items)), key=lambda i: self.items[i].item_id)
            rank = np.empty(len(self.items), dtype=np.int64)
            rank[order] = np.arange(len(self.items))
            self._id_rank = rank
        return self._id_rank

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self) -> Iterator[ItemParams]:
        return iter(self.items)

    def __getitem__(self, i: int) -> ItemParams:
        return self.items[i]

    def __contains__(self, item_id: str) -> bool:
        return item_id in self._index

    def index_of(self, item_id: str) -> int:
        return self._index[item_id]

    def by_id(self, item_id: str) -> ItemParams:
        return self.items[self._index[item_id]]

    def restrict(self, item_ids: Iterable[str]) -> "ItemBank":
        """Sub-bank containing only the given ids, in bank order."""
        wanted = set(item_ids)
        return ItemBank(it for it in self.items if it.item_id in wanted)

    def b_range(self) -> tuple[float, float]:
        if not self.items:
            raise ValidationError("b_range requires a non-empty bank")
        return float(self.b.min()), float(self.b.max())


def prob_3pl(theta, a, b, c):
    """3PL response probability ``c + (1-c) * sigmoid(a*(theta-b))``, broadcasting."""
    return c + (1.0 - c) * expit(np.multiply(a, np.subtract(theta, b)))


def info_3pl(theta, a, b, c):
    """3PL Fisher information ``a^2 * (1-P)/P * ((P-c)/(1-c))^2``, broadcasting.

    Defined as 0 by continuity where P reaches its lower asymptote.
    """
    p = prob_3pl(theta, a, b, c)
    p = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        bracket = (p - c) / (1.0 - np.asarray(c, dtype=float))
        out = np.square(a) * ((1.0 - p) / p) * np.square(bracket)
    out = np.where(p > 0, out, 0.0)
    if out.ndim == 0:
        return float(out)
    return out


def prob_correct(theta: float, item: ItemParams) -> float:
    """Probability that an examinee at ``theta`` answers ``item`` correctly.

    Strictly below 1: float saturation at extreme theta is clamped to the
    largest double under 1 so the [c, 1) contract holds everywhere.
    """
    p = float(prob_3pl(theta, item.a, item.b, item.c))
    return min(p, float(np.nextafter(1.0, 0.0)))


def item_information(theta: float, item: ItemParams) -> float:
    """Fisher information the item carries about ability at ``theta``."""
    return float(info_3pl(theta, item.a, item.b, item.c))


def test_information(theta: float, items: Sequence[ItemParams]) -> float:
    """Total information of an item set at ``theta`` (empty set: 0)."""
    if not items:
        return 0.0
    a = np.array([it.a for it in items])
    b = np.array([it.b for it in items])
    c = np.array([it.c for it in items])
    return float(np.sum(info_3pl(theta, a, b, c)))


def sem(theta: float, items: Sequence[ItemParams]) -> float:
    """Standard error of measurement: ``sqrt(1 / test_information)``.

    Raises:
        UndefinedSemError: when total information is zero (callers treat
            the session as non-converged / SEM = +inf).
    """
    total = test_information(theta, items)
    if total <= 0.0:
        raise UndefinedSemError(f"zero test information at theta={theta}")
    return float(np.sqrt(1.0 / total))


def response_log_likelihood(
    theta: float, responses: Sequence[tuple[ItemParams, bool]]
) -> float:
    """Log-likelihood of a scored response sequence at ``theta``.

    Per-response probabilities are clamped to [PROB_EPS, 1 - PROB_EPS] so a
    response contradicting a saturated probability stays finite.
    """
    total = 0.0
    for item, correct in responses:
        p = prob_correct(theta, item)
        p = min(max(p, PROB_EPS), 1.0 - PROB_EPS)
        total += np.log(p) if correct else np.log1p(-p)
    return float(total)
