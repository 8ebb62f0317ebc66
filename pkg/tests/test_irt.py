"""Tests for the 3PL model primitives."""

import math

import numpy as np
import pytest

from catirt.errors import UndefinedSemError, ValidationError
from catirt.irt import (
    Ability,
    ItemBank,
    ItemParams,
    item_information,
    prob_correct,
    response_log_likelihood,
    sem,
)
from catirt.irt import test_information as information_total


def make_item(a=1.0, b=0.0, c=0.0, item_id="q"):
    return ItemParams(item_id=item_id, a=a, b=b, c=c)


def random_items(rng, n, with_guessing=True):
    return [
        ItemParams(
            item_id=f"r{i}",
            a=float(np.exp(rng.normal(0, 0.3))),
            b=float(rng.normal(0, 1.5)),
            c=float(rng.uniform(0, 0.3)) if with_guessing else 0.0,
        )
        for i in range(n)
    ]


class TestItemParams:
    def test_rejects_nonpositive_discrimination(self):
        with pytest.raises(ValidationError):
            ItemParams("q", a=0.0, b=0.0, c=0.0)

    def test_rejects_guessing_out_of_range(self):
        with pytest.raises(ValidationError):
            ItemParams("q", a=1.0, b=0.0, c=1.0)
        with pytest.raises(ValidationError):
            ItemParams("q", a=1.0, b=0.0, c=-0.1)

    def test_rejects_nonfinite_difficulty(self):
        with pytest.raises(ValidationError):
            ItemParams("q", a=1.0, b=float("inf"), c=0.0)

    def test_ability_rejects_negative_se(self):
        with pytest.raises(ValidationError):
            Ability(theta=0.0, standard_error=-1.0)

    def test_ability_allows_inf_se_sentinel(self):
        assert Ability(0.0, float("inf")).standard_error == math.inf


class TestItemBank:
    def test_rejects_duplicate_ids(self):
        items = [make_item(item_id="a"), make_item(item_id="a")]
        with pytest.raises(ValidationError):
            ItemBank(items)

    def test_lookup_and_restrict(self):
        bank = ItemBank([make_item(item_id=f"q{i}", b=float(i)) for i in range(5)])
        assert bank.by_id("q3").b == 3.0
        sub = bank.restrict(["q1", "q4"])
        assert [it.item_id for it in sub] == ["q1", "q4"]

    def test_b_range(self):
        bank = ItemBank([make_item(item_id="a", b=-3.0), make_item(item_id="b", b=3.0)])
        assert bank.b_range() == (-3.0, 3.0)

    def test_b_range_empty_raises(self):
        with pytest.raises(ValidationError):
            ItemBank([]).b_range()


class TestProbCorrect:
    def test_logistic_midpoint(self):
        """theta == b with no guessing is exactly the logistic midpoint."""
        assert abs(prob_correct(0.0, make_item()) - 0.5) < 1e-12

    def test_midpoint_with_guessing(self):
        """theta == b gives c + (1-c)/2 for any discrimination."""
        for a in (0.3, 1.0, 2.7):
            item = make_item(a=a, b=1.2, c=0.25)
            assert abs(prob_correct(1.2, item) - 0.625) < 1e-12

    def test_high_precision_value(self):
        item = make_item(a=2.0, b=0.0, c=0.2)
        assert abs(prob_correct(1.0, item) - 0.904638) < 1e-6

    def test_strictly_increasing_in_theta(self):
        rng = np.random.default_rng(1)
        for item in random_items(rng, 10):
            grid = np.linspace(-4, 4, 200)
            probs = [prob_correct(t, item) for t in grid]
            assert all(p2 > p1 for p1, p2 in zip(probs, probs[1:]))

    def test_bounds(self):
        rng = np.random.default_rng(2)
        for item in random_items(rng, 10):
            for theta in (-50.0, -4.0, 0.0, 4.0, 50.0):
                p = prob_correct(theta, item)
                assert item.c <= p < 1.0

    def test_asymptotes(self):
        item = make_item(a=1.5, b=0.0, c=0.25)
        assert abs(prob_correct(-60.0, item) - 0.25) < 1e-12
        assert prob_correct(60.0, item) > 1.0 - 1e-12

    def test_derivative_matches_finite_differences(self):
        """Analytic slope (1-c) * a * sigma * (1-sigma) vs central differences."""
        rng = np.random.default_rng(3)
        h = 1e-5
        for item in random_items(rng, 8):
            for theta in np.linspace(-3, 3, 13):
                sig = 1.0 / (1.0 + math.exp(-item.a * (theta - item.b)))
                analytic = (1.0 - item.c) * item.a * sig * (1.0 - sig)
                numeric = (prob_correct(theta + h, item) - prob_correct(theta - h, item)) / (2 * h)
                assert abs(analytic - numeric) < 1e-6


class TestItemInformation:
    def test_quarter_a_squared_at_b(self):
        """Without guessing, information at theta == b is a^2 / 4."""
        for a in (0.5, 1.0, 2.0):
            assert abs(item_information(0.0, make_item(a=a)) - a * a / 4.0) < 1e-12

    def test_guessing_value_at_b(self):
        assert abs(item_information(0.0, make_item(a=1.0, c=0.25)) - 0.15) < 1e-12

    def test_vanishes_at_lower_asymptote(self):
        assert item_information(-1000.0, make_item(a=1.0, c=0.25)) == 0.0

    def test_no_guessing_reduction(self):
        """With c = 0 the information reduces to a^2 * P * (1-P)."""
        rng = np.random.default_rng(4)
        for item in random_items(rng, 10, with_guessing=False):
            for theta in np.linspace(-4, 4, 33):
                p = prob_correct(theta, item)
                assert abs(item_information(theta, item) - item.a**2 * p * (1 - p)) < 1e-12

    def test_maximum_at_b_when_no_guessing(self):
        grid = np.arange(-4.0, 4.0, 0.01)
        for b in (-2.0, 0.0, 1.5):
            item = make_item(a=1.3, b=b)
            infos = [item_information(t, item) for t in grid]
            assert abs(grid[int(np.argmax(infos))] - b) <= 0.01 + 1e-9

    def test_nonnegative(self):
        rng = np.random.default_rng(5)
        for item in random_items(rng, 10):
            for theta in np.linspace(-6, 6, 25):
                assert item_information(theta, item) >= 0.0


class TestTestInformation:
    def test_empty_sum_is_zero(self):
        assert information_total(0.0, []) == 0.0

    def test_two_identical_items(self):
        items = [make_item(a=1.4, item_id="a"), make_item(a=1.4, item_id="b")]
        assert abs(information_total(0.0, items) - 1.4**2 / 2.0) < 1e-12

    def test_matches_per_item_sum(self):
        rng = np.random.default_rng(6)
        items = random_items(rng, 3)
        expected = sum(item_information(0.0, it) for it in items)
        assert abs(information_total(0.0, items) - expected) < 1e-12


class TestSem:
    def test_known_totals(self):
        # a=2, c=0, theta=b: each item contributes exactly 1.0 of information.
        unit = [make_item(a=2.0, item_id=f"u{i}") for i in range(25)]
        assert abs(sem(0.0, unit[:4]) - 0.5) < 1e-12
        assert abs(sem(0.0, unit) - 0.2) < 1e-12

    def test_adding_items_never_increases_sem(self):
        rng = np.random.default_rng(7)
        items = random_items(rng, 20)
        for theta in (-2.0, 0.0, 2.0):
            values = [sem(theta, items[: k + 1]) for k in range(len(items))]
            assert all(s2 <= s1 + 1e-15 for s1, s2 in zip(values, values[1:]))

    def test_zero_information_raises(self):
        with pytest.raises(UndefinedSemError):
            sem(0.0, [])
        with pytest.raises(UndefinedSemError):
            sem(-1000.0, [make_item(c=0.25)])


class TestResponseLogLikelihood:
    def test_single_item_midpoint(self):
        item = make_item()
        assert abs(response_log_likelihood(0.0, [(item, True)]) - math.log(0.5)) < 1e-12
        assert abs(response_log_likelihood(0.0, [(item, False)]) - math.log(0.5)) < 1e-12

    def test_empty_is_zero(self):
        assert response_log_likelihood(1.3, []) == 0.0

    def test_matches_product_oracle(self):
        """Brute-force per-response probability product, independently computed."""
        rng = np.random.default_rng(8)
        for _ in range(20):
            items = random_items(rng, int(rng.integers(1, 15)))
            responses = [(it, bool(rng.random() < 0.5)) for it in items]
            theta = float(rng.uniform(-2, 2))
            product = 1.0
            for it, correct in responses:
                sig = 1.0 / (1.0 + math.exp(-it.a * (theta - it.b)))
                p = it.c + (1.0 - it.c) * sig
                product *= p if correct else (1.0 - p)
            assert abs(response_log_likelihood(theta, responses) - math.log(product)) < 1e-10

    def test_contradicting_saturated_response_is_finite(self):
        item = make_item(a=4.0, b=0.0, c=0.0)
        value = response_log_likelihood(-800.0, [(item, True)])
        assert math.isfinite(value)
        assert value <= math.log(1e-12) + 1e-9
