import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.integrate import quad

from errors import DomainError, StructuralError
from oracle import (ExpUniformModel, LowerBoundModel, budget_for_multiplier,
                    expected_payoff, expected_payoff_lb, lower_bound_instance,
                    marginal_payoff, model_payoff, optimal_bid, optimal_bid_lb,
                    reference_instance, upper_bound_regret, waterfill_optimal)

REFERENCE_BUDGETS = {0.1: 25.828, 0.2: 20.870, 0.3: 17.018, 0.4: 13.845}


class TestExpectedPayoff:
    def test_zero_bid(self, five_good_model):
        assert expected_payoff(five_good_model, np.zeros(5)) == 0.0

    def test_against_quadrature(self):
        model = ExpUniformModel([4.0], [5.0])
        integral, _ = quad(lambda lam: (5 - lam) * math.exp(-lam / 4) / 4, 0, 5)
        assert expected_payoff(model, [5.0]) == pytest.approx(integral, abs=1e-6)

    def test_large_bid_limit(self, five_good_model):
        value = expected_payoff(five_good_model, np.full(5, 1e4))
        assert value == pytest.approx(float(np.sum(five_good_model.pi_bar - five_good_model.lambda_bar)))

    def test_marginal_matches_finite_difference(self, five_good_model):
        x = np.array([1.0, 2.0, 3.0, 0.5, 2.5])
        h = 1e-6
        for k in range(5):
            e = np.zeros(5)
            e[k] = h
            numeric = (expected_payoff(five_good_model, x + e) - expected_payoff(five_good_model, x - e)) / (2 * h)
            assert marginal_payoff(five_good_model, x)[k] == pytest.approx(numeric, abs=1e-6)

    def test_invalid_bids(self, five_good_model):
        with pytest.raises(DomainError):
            expected_payoff(five_good_model, [-1.0, 0, 0, 0, 0])
        with pytest.raises(StructuralError):
            expected_payoff(five_good_model, [1.0, 2.0])

    def test_invalid_model(self):
        with pytest.raises(DomainError):
            ExpUniformModel([0.0], [1.0])
        with pytest.raises(StructuralError):
            ExpUniformModel([1.0, 2.0], [1.0])


class TestWaterFilling:
    @pytest.mark.parametrize("gamma, budget", sorted(REFERENCE_BUDGETS.items()))
    def test_reference_budgets(self, five_good_model, gamma, budget):
        assert budget_for_multiplier(five_good_model, gamma) == pytest.approx(budget, abs=1e-3)

    def test_binding_budget(self, five_good_model):
        x_star, gamma = waterfill_optimal(five_good_model, 13.845)
        assert gamma == pytest.approx(0.4, abs=2e-3)
        assert x_star.sum() == pytest.approx(13.845, abs=1e-8)
        active = x_star > 0
        assert_allclose(marginal_payoff(five_good_model, x_star)[active], gamma, atol=1e-6)

    def test_unbinding_budget(self, five_good_model):
        x_star, gamma = waterfill_optimal(five_good_model, 40.0)
        assert_allclose(x_star, five_good_model.pi_bar)
        assert gamma == 0.0

    def test_single_good_unbinding(self):
        x_star, gamma = waterfill_optimal(ExpUniformModel([4.0], [5.0]), 5.0)
        assert_allclose(x_star, [5.0])
        assert gamma == 0.0

    def test_beats_random_feasible_bids(self, five_good_model, rng):
        x_star, _ = waterfill_optimal(five_good_model, 13.845)
        best = expected_payoff(five_good_model, x_star)
        for _ in range(500):
            x = rng.dirichlet(np.ones(5)) * 13.845
            assert expected_payoff(five_good_model, x) <= best + 1e-9

    @pytest.mark.parametrize("budget", [1.0, 3.0])
    def test_inactive_goods_are_below_the_multiplier(self, five_good_model, budget):
        x_star, gamma = waterfill_optimal(five_good_model, budget)
        ratio = five_good_model.pi_bar / five_good_model.lambda_bar
        inactive = x_star == 0
        assert inactive.any()
        assert np.all(ratio[inactive] <= gamma + 1e-9)
        assert np.all(ratio[~inactive] > gamma)
        assert_allclose(marginal_payoff(five_good_model, x_star)[~inactive], gamma, atol=1e-6)

    def test_non_positive_spot_mean(self):
        model = ExpUniformModel([4.0, 6.0], [5.0, -1.0])
        with pytest.raises(DomainError):
            waterfill_optimal(model, 3.0)
        x_star = optimal_bid(model, 3.0)
        assert x_star[1] == 0.0
        assert x_star[0] == pytest.approx(3.0, abs=1e-8)


class TestLowerBound:
    def test_instance_constants(self):
        (minus, plus), floor = lower_bound_instance(100)
        assert plus.epsilon == pytest.approx(0.0223607, abs=1e-7)
        assert floor == pytest.approx(0.279508, abs=1e-6)
        assert minus.pi_mean == pytest.approx(0.5 - plus.epsilon)
        assert plus.pi_mean == pytest.approx(0.5 + plus.epsilon)
        assert reference_instance(100).pi_mean == 0.5

    def test_support_inside_unit_interval(self):
        (model, _), _ = lower_bound_instance(1)
        lo, hi = model.support
        assert 0 < lo < hi < 1

    def test_payoff_values(self):
        (minus, plus), _ = lower_bound_instance(100)
        assert expected_payoff_lb(plus, 0.0) == 0.0
        assert expected_payoff_lb(plus, 1.0) == pytest.approx(plus.epsilon)
        assert expected_payoff_lb(minus, 1.0) == pytest.approx(-minus.epsilon)

    def test_payoff_against_quadrature(self):
        model = LowerBoundModel(0.2, 0.55)
        lo, hi = model.support
        for bid in (0.41, 0.5, 0.55, 0.6):
            integral, _ = quad(lambda lam: (model.pi_mean - lam) / model.epsilon, lo, min(bid, hi))
            assert expected_payoff_lb(model, bid) == pytest.approx(integral, abs=1e-9)

    def test_optimal_bid(self):
        (minus, plus), _ = lower_bound_instance(100)
        assert optimal_bid_lb(plus) == pytest.approx(plus.support[1])
        assert optimal_bid_lb(minus) == 0.0
        assert model_payoff(plus, optimal_bid(plus, 1.0)) == pytest.approx(plus.epsilon)

    @pytest.mark.parametrize("horizon", [1, 10, 1000])
    def test_payoff_is_lipschitz(self, horizon, rng):
        (minus, plus), _ = lower_bound_instance(horizon)
        bids = np.sort(np.concatenate([rng.uniform(0, 1, 400), [0.0, 1.0], plus.support]))
        for model in (minus, plus, reference_instance(horizon)):
            values = np.array([expected_payoff_lb(model, b) for b in bids])
            slopes = np.abs(np.diff(values)) / np.maximum(np.diff(bids), 1e-300)
            assert np.all(slopes[np.diff(bids) > 0] <= 1.5 + 1e-9)

    def test_bid_outside_unit_interval(self):
        model = reference_instance(100)
        with pytest.raises(DomainError):
            expected_payoff_lb(model, 1.5)
        with pytest.raises(DomainError):
            expected_payoff_lb(model, -0.1)

    def test_invalid_instance(self):
        with pytest.raises(DomainError):
            LowerBoundModel(0.0, 0.5)
        with pytest.raises(DomainError):
            lower_bound_instance(0)


def test_upper_bound_regret():
    small = upper_bound_regret(100, 5, 13.845, 1.0, 10.0)
    large = upper_bound_regret(10000, 5, 13.845, 1.0, 10.0)
    assert 0 < small < large
    assert large / small < 100
    with pytest.raises(DomainError):
        upper_bound_regret(100, 5, 13.845, 1.0, 10.0, gamma=0.4)
