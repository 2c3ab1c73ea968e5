#!/usr/bin/env python3
"""
Known-Distribution Oracle Module
Closed-form expected payoffs, the water-filling optimal bid for exponential
clearing prices, and the two-point hard instance used for the regret floor
"""

import logging
import math
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np
from scipy.optimize import bisect

from errors import DomainError, StructuralError

logger = logging.getLogger(__name__)

ROOT_TOLERANCE = 1e-10
BUDGET_TOLERANCE = 1e-8


@dataclass(frozen=True)
class ExpUniformModel:
    """Exponential clearing prices with means lambda_bar, independent uniform spot prices around pi_bar"""
    lambda_bar: np.ndarray
    pi_bar: np.ndarray
    spot_halfwidth: float = 1.0

    def __post_init__(self):
        lambda_bar = np.asarray(self.lambda_bar, dtype=float).ravel()
        pi_bar = np.asarray(self.pi_bar, dtype=float).ravel()
        if lambda_bar.shape != pi_bar.shape:
            raise StructuralError("lambda_bar and pi_bar must have the same length")
        if np.any(~(lambda_bar > 0)):
            raise DomainError("clearing price means must be positive")
        if self.spot_halfwidth < 0:
            raise DomainError("spot half-width must be non-negative")
        object.__setattr__(self, 'lambda_bar', lambda_bar)
        object.__setattr__(self, 'pi_bar', pi_bar)

    @property
    def num_goods(self) -> int:
        return self.lambda_bar.size


@dataclass(frozen=True)
class LowerBoundModel:
    """Single good, clearing uniform on [(1-eps)/2, (1+eps)/2], Bernoulli(pi_mean) spot"""
    epsilon: float
    pi_mean: float

    def __post_init__(self):
        if not 0 < self.epsilon <= 0.5:
            raise DomainError(f"epsilon must lie in (0, 1/2], got {self.epsilon}")
        if not 0 <= self.pi_mean <= 1:
            raise DomainError(f"Bernoulli mean must lie in [0, 1], got {self.pi_mean}")

    @property
    def num_goods(self) -> int:
        return 1

    @property
    def support(self) -> Tuple[float, float]:
        return (1 - self.epsilon) / 2, (1 + self.epsilon) / 2


PriceModel = Union[ExpUniformModel, LowerBoundModel]


def _as_bid(model: ExpUniformModel, bid) -> np.ndarray:
    bid = np.asarray(bid, dtype=float).ravel()
    if bid.size != model.num_goods:
        raise StructuralError(f"bid has {bid.size} goods, model has {model.num_goods}")
    if np.any(bid < 0):
        raise DomainError("bids must be non-negative")
    return bid


def expected_payoff(model: ExpUniformModel, bid) -> float:
    """
    r(x) = sum_k (pi_k - lam_k)(1 - exp(-x_k/lam_k)) + x_k exp(-x_k/lam_k)

    Integral of (pi_k - l) over the exponential density on [0, x_k].
    """
    x = _as_bid(model, bid)
    decay = np.exp(-x / model.lambda_bar)
    per_good = (model.pi_bar - model.lambda_bar) * (1 - decay) + x * decay
    return float(per_good.sum())


def marginal_payoff(model: ExpUniformModel, bid) -> np.ndarray:
    """Partial derivatives (pi_k - x_k) exp(-x_k/lam_k) / lam_k"""
    x = _as_bid(model, bid)
    return (model.pi_bar - x) * np.exp(-x / model.lambda_bar) / model.lambda_bar


def _bid_for_multiplier(pi_bar: float, lambda_bar: float, gamma: float) -> float:
    """Bid whose marginal payoff equals gamma (0 if the good never reaches it)"""
    if gamma <= 0:
        return pi_bar
    if pi_bar / lambda_bar < gamma:
        return 0.0

    def excess(x):
        return (pi_bar - x) * math.exp(-x / lambda_bar) / lambda_bar - gamma

    if excess(0.0) <= 0:
        return 0.0
    return bisect(excess, 0.0, pi_bar, xtol=ROOT_TOLERANCE, maxiter=500)


def _check_positive_means(model: ExpUniformModel):
    if np.any(model.pi_bar <= 0):
        bad = np.nonzero(model.pi_bar <= 0)[0].tolist()
        raise DomainError(f"water-filling needs positive spot means; drop goods {bad}")


def bids_for_multiplier(model: ExpUniformModel, gamma: float) -> np.ndarray:
    """Water-filling bid vector for a given Lagrange multiplier"""
    _check_positive_means(model)
    return np.array([_bid_for_multiplier(p, l, gamma)
                     for p, l in zip(model.pi_bar, model.lambda_bar)])


def budget_for_multiplier(model: ExpUniformModel, gamma: float) -> float:
    """Total budget the water-filling solution spends at multiplier gamma"""
    return float(bids_for_multiplier(model, gamma).sum())


def waterfill_optimal(model: ExpUniformModel, budget: float) -> Tuple[np.ndarray, float]:
    """
    Known-distribution optimal bid.

    Returns:
        (x_star, gamma_star); gamma_star is 0 when the budget does not bind.
    """
    _check_positive_means(model)
    if not budget > 0:
        raise DomainError(f"budget must be positive, got {budget}")

    if model.pi_bar.sum() <= budget:
        return model.pi_bar.copy(), 0.0

    upper = float(np.max(model.pi_bar / model.lambda_bar))
    gamma = bisect(lambda g: budget_for_multiplier(model, g) - budget, 0.0, upper,
                   xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    x_star = bids_for_multiplier(model, gamma)

    spent = x_star.sum()
    if abs(spent - budget) > BUDGET_TOLERANCE:
        logger.warning("water-filling spends %.10f of budget %.10f", spent, budget)
    if spent > budget:
        x_star *= budget / spent
    return x_star, float(gamma)


def lower_bound_instance(horizon: int) -> Tuple[Tuple[LowerBoundModel, LowerBoundModel], float]:
    """
    The two hard instances for horizon T, spot means 1/2 - eps and 1/2 + eps
    with eps = 1/(2 sqrt(5 T)), and the regret floor sqrt(T) / (16 sqrt(5))
    one of them forces on any policy.
    """
    if horizon < 1:
        raise DomainError("horizon must be at least 1")
    epsilon = 1.0 / (2.0 * math.sqrt(5.0) * math.sqrt(horizon))
    models = (LowerBoundModel(epsilon, 0.5 - epsilon), LowerBoundModel(epsilon, 0.5 + epsilon))
    floor = math.sqrt(horizon) / (16.0 * math.sqrt(5.0))
    return models, floor


def reference_instance(horizon: int) -> LowerBoundModel:
    """The pi_mean = 1/2 instance both hard instances are compared against"""
    (low, _), _ = lower_bound_instance(horizon)
    return LowerBoundModel(low.epsilon, 0.5)


def expected_payoff_lb(model: LowerBoundModel, bid: float) -> float:
    """E[(pi - lam) 1{bid >= lam}] under the uniform clearing density"""
    bid = float(np.asarray(bid, dtype=float).ravel()[0]) if np.ndim(bid) else float(bid)
    if not 0 <= bid <= 1:
        raise DomainError(f"bid must lie in [0, 1], got {bid}")
    lo, hi = model.support
    if bid <= lo:
        return 0.0
    top = min(bid, hi)
    integral = model.pi_mean * (top - lo) - (top ** 2 - lo ** 2) / 2
    return integral / model.epsilon


def optimal_bid_lb(model: LowerBoundModel) -> float:
    """Smallest maximizer of expected_payoff_lb"""
    lo, hi = model.support
    if model.pi_mean <= lo:
        return 0.0
    return min(model.pi_mean, hi)


def model_payoff(model: PriceModel, bid) -> float:
    """Expected payoff of a bid under either model family"""
    if isinstance(model, LowerBoundModel):
        return expected_payoff_lb(model, bid)
    return expected_payoff(model, bid)


def optimal_bid(model: PriceModel, budget: float) -> np.ndarray:
    """Known-distribution optimum under either model family"""
    if isinstance(model, LowerBoundModel):
        return np.array([min(optimal_bid_lb(model), budget)])
    active = model.pi_bar > 0
    x_star = np.zeros(model.num_goods)
    if np.any(active):
        sub = ExpUniformModel(model.lambda_bar[active], model.pi_bar[active], model.spot_halfwidth)
        x_star[active], _ = waterfill_optimal(sub, budget)
    return x_star


def upper_bound_regret(horizon: int, num_goods: int, budget: float, lipschitz: float,
                       payoff_range: float, gamma: float = 0.5, p_norm: float = 1.0) -> float:
    """
    DPDS regret guarantee for alpha_t = max(ceil(t^gamma), 2), gamma >= 1/2:
    2(L K^{1/p} B + 4C) sqrt(T) + 2 sqrt(2(gamma+1)K + 1) (u-l) sqrt(T log T),
    with C = min(u-l, L K^{1/p} B).
    """
    if gamma < 0.5:
        raise DomainError("the guarantee needs gamma >= 1/2")
    scale = lipschitz * num_goods ** (1.0 / p_norm) * budget
    c = min(payoff_range, scale)
    first = 2 * (scale + 4 * c) * math.sqrt(horizon)
    second = 2 * math.sqrt(2 * (gamma + 1) * num_goods + 1) * payoff_range \
        * math.sqrt(horizon * math.log(max(horizon, 1)))
    return first + second
