#!/usr/bin/env python3
"""
Bidding Policies Module
Online policies that turn a stream of price observations into one bid vector
per period: DPDS, UCBID-GR, SA (Kiefer-Wolfowitz) and a sliding-window
benchmark, plus fixed-bid references
"""

import logging
import math
from collections import deque
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from allocator import (DEFAULT_SIZE_CAP, BudgetGrid, brute_force_mckp,
                       grid_payoffs, solve_dp)
from errors import ConfigError, DomainError, SizeError, StructuralError
from payoff import MarketObservation, empirical_payoffs, insert_observation

logger = logging.getLogger(__name__)

SCHEDULE_MODES = ('power', 'linear', 'fixed')


@dataclass
class ScheduleParams:
    """Step-size and grid schedules shared by the policies"""
    mode: str = 'power'          # "power", "linear" or "fixed"
    gamma: float = 0.5
    alpha_scale: float = 1.0
    fixed_alpha: int = 100
    a_scale: float = 5.5
    c_scale: float = 2.5
    c_floor: float = 1e-12
    window: int = 10

    def validate(self):
        if self.mode not in SCHEDULE_MODES:
            raise ConfigError(f"unknown grid schedule '{self.mode}', expected one of {SCHEDULE_MODES}")
        if self.gamma <= 0:
            raise ConfigError("gamma must be positive")
        if self.mode == 'power' and self.gamma < 0.5:
            logger.warning("gamma=%.3f is below 1/2; the sqrt(T log T) regret guarantee does not apply",
                           self.gamma)
        if self.alpha_scale <= 0 or self.a_scale <= 0 or self.c_scale <= 0 or self.c_floor <= 0:
            raise ConfigError("schedule scales must be positive")
        if self.fixed_alpha < 1:
            raise ConfigError("fixed_alpha must be at least 1")
        if self.window < 1:
            raise ConfigError("window must be at least 1")
        return self

    def alpha(self, t: int) -> int:
        """Grid resolution after t observations"""
        if self.mode == 'linear':
            return max(int(t), 1)
        if self.mode == 'fixed':
            return int(self.fixed_alpha)
        return max(int(math.ceil(self.alpha_scale * t ** self.gamma)), 2)

    def step_size(self, t: int) -> float:
        return self.a_scale / t

    def perturbation(self, t: int) -> float:
        return max(self.c_scale / t ** 0.25, self.c_floor)


def project_to_feasible(x: np.ndarray, budget: float) -> np.ndarray:
    """Euclidean projection onto {x >= 0, sum(x) <= budget}"""
    x = np.asarray(x, dtype=float)
    clipped = np.maximum(x, 0.0)
    if clipped.sum() <= budget:
        return clipped

    # simplex projection with radius `budget`
    u = np.sort(clipped)[::-1]
    cssv = np.cumsum(u) - budget
    ind = np.arange(1, u.size + 1)
    rho = np.count_nonzero(u - cssv / ind > 0)
    theta = cssv[rho - 1] / rho
    return np.maximum(clipped - theta, 0.0)


class BiddingPolicy:
    """
    Common interface. observe() ingests the newest available observation,
    propose() returns the bid for the coming period. Information lag is the
    caller's business.
    """

    name = 'policy'

    def __init__(self, num_goods: int, budget: float):
        if num_goods < 1:
            raise StructuralError("a policy needs at least one good")
        if not budget > 0:
            raise DomainError(f"budget must be positive, got {budget}")
        self.num_goods = int(num_goods)
        self.budget = float(budget)
        self.count = 0

    def _check(self, observation: MarketObservation):
        if observation.num_goods != self.num_goods:
            raise StructuralError(
                f"{self.name}: observation has {observation.num_goods} goods, expected {self.num_goods}")

    def observe(self, observation: MarketObservation) -> None:
        self._check(observation)
        self.count += 1

    def propose(self) -> np.ndarray:
        raise NotImplementedError

    def step(self, observation: Optional[MarketObservation] = None) -> np.ndarray:
        """Ingest an observation (if any) and return the next bid"""
        if observation is not None:
            self.observe(observation)
        return self.propose()

    def zero_bid(self) -> np.ndarray:
        return np.zeros(self.num_goods)


class DPDSPolicy(BiddingPolicy):
    """Empirical payoff maximization on a budget grid, solved by dynamic programming"""

    name = 'dpds'

    def __init__(self, num_goods: int, budget: float, schedule: Optional[ScheduleParams] = None):
        super().__init__(num_goods, budget)
        self.schedule = (schedule or ScheduleParams()).validate()
        self.payoffs = empirical_payoffs(self.num_goods)
        self.last_value = 0.0

    def observe(self, observation: MarketObservation) -> None:
        self._check(observation)
        insert_observation(self.payoffs, observation)
        self.count += 1

    def propose(self) -> np.ndarray:
        if self.count == 0:
            return self.zero_bid()
        grid = BudgetGrid(self.budget, self.schedule.alpha(self.count))
        values, saturations = grid_payoffs(self.payoffs, grid)
        bids, self.last_value = solve_dp(values, saturations, grid)
        return bids

    def snapshot(self) -> Dict:
        """Payoff state for the `solve` command"""
        return {
            'budget': self.budget,
            'alpha': self.schedule.alpha(max(self.count, 1)),
            'goods': [p.to_dict() for p in self.payoffs],
        }


class UCBIDGreedyPolicy(BiddingPolicy):
    """
    Rank goods by mean spread, bid each good's mean spot price and fill the
    budget greedily. Unaffordable goods are skipped, not the end of the scan.
    """

    name = 'ucbid_gr'

    def __init__(self, num_goods: int, budget: float):
        super().__init__(num_goods, budget)
        self.spread_sum = np.zeros(self.num_goods)
        self.spot_sum = np.zeros(self.num_goods)

    def observe(self, observation: MarketObservation) -> None:
        self._check(observation)
        self.spread_sum += observation.spread
        self.spot_sum += observation.spot
        self.count += 1

    def propose(self) -> np.ndarray:
        bids = self.zero_bid()
        if self.count == 0:
            return bids
        spread_mean = self.spread_sum / self.count
        candidate = self.spot_sum / self.count

        remaining = self.budget
        for k in np.argsort(-spread_mean, kind='stable'):
            if spread_mean[k] <= 0:
                break
            if candidate[k] <= 0 or candidate[k] > remaining:
                continue
            bids[k] = candidate[k]
            remaining -= candidate[k]
        return bids


class StochasticApproximationPolicy(BiddingPolicy):
    """Kiefer-Wolfowitz finite-difference ascent with projection onto the budget set"""

    name = 'sa'

    def __init__(self, num_goods: int, budget: float, schedule: Optional[ScheduleParams] = None,
                 initial_bid: Optional[np.ndarray] = None):
        super().__init__(num_goods, budget)
        self.schedule = (schedule or ScheduleParams()).validate()
        if initial_bid is None:
            self.bid = self.zero_bid()
        else:
            self.bid = project_to_feasible(initial_bid, self.budget)

    def gradient_step(self, observation: MarketObservation) -> np.ndarray:
        """Unprojected update for the next observation count"""
        t = self.count + 1
        a_t = self.schedule.step_size(t)
        c_t = self.schedule.perturbation(t)
        lam = observation.clearing
        fired = (self.bid + c_t >= lam).astype(float) - (self.bid >= lam).astype(float)
        return self.bid + a_t * observation.spread * fired / c_t

    def observe(self, observation: MarketObservation) -> None:
        self._check(observation)
        self.bid = project_to_feasible(self.gradient_step(observation), self.budget)
        self.count += 1

    def propose(self) -> np.ndarray:
        return self.bid.copy()


class SlidingWindowPolicy(BiddingPolicy):
    """Exact empirical payoff maximization over the last `window` observations only"""

    name = 'sw'

    def __init__(self, num_goods: int, budget: float, window: int = 10,
                 size_cap: int = DEFAULT_SIZE_CAP):
        super().__init__(num_goods, budget)
        if window < 1:
            raise ConfigError("window must be at least 1")
        combinations = float(window + 1) ** self.num_goods
        if combinations > size_cap:
            raise SizeError(
                f"sliding window of {window} over {num_goods} goods needs up to "
                f"{combinations:.3g} combinations (cap {size_cap})")
        self.window = int(window)
        self.size_cap = size_cap
        self.buffer = deque(maxlen=self.window)

    def observe(self, observation: MarketObservation) -> None:
        self._check(observation)
        self.buffer.append(observation)
        self.count += 1

    def window_payoffs(self):
        payoffs = empirical_payoffs(self.num_goods)
        for observation in self.buffer:
            insert_observation(payoffs, observation)
        return payoffs

    def propose(self) -> np.ndarray:
        if not self.buffer:
            return self.zero_bid()
        pairs = [p.breakpoint_pairs() for p in self.window_payoffs()]
        bids, _ = brute_force_mckp(pairs, self.budget, self.size_cap)
        return bids


class FixedBidPolicy(BiddingPolicy):
    """Always bids the same vector (the known-distribution optimum, or zero)"""

    def __init__(self, bid: np.ndarray, budget: float, name: str = 'fixed'):
        bid = np.asarray(bid, dtype=float).ravel()
        super().__init__(bid.size, budget)
        if np.any(bid < 0) or bid.sum() > budget * (1 + 1e-9) + 1e-8:
            raise DomainError("fixed bid must lie in the feasible set")
        self.bid = bid
        self.name = name

    def propose(self) -> np.ndarray:
        return self.bid.copy()


POLICY_NAMES = ('dpds', 'ucbid_gr', 'sa', 'sw', 'oracle', 'zero')


def make_policy(name: str, num_goods: int, budget: float,
                schedule: Optional[ScheduleParams] = None,
                optimal_bid: Optional[np.ndarray] = None,
                size_cap: int = DEFAULT_SIZE_CAP) -> BiddingPolicy:
    """Build a fresh policy by name"""
    schedule = schedule or ScheduleParams()
    if name == 'dpds':
        return DPDSPolicy(num_goods, budget, schedule)
    if name == 'ucbid_gr':
        return UCBIDGreedyPolicy(num_goods, budget)
    if name == 'sa':
        return StochasticApproximationPolicy(num_goods, budget, schedule)
    if name == 'sw':
        return SlidingWindowPolicy(num_goods, budget, schedule.window, size_cap)
    if name == 'zero':
        return FixedBidPolicy(np.zeros(num_goods), budget, name='zero')
    if name == 'oracle':
        if optimal_bid is None:
            raise ConfigError("the oracle policy needs a known-distribution model")
        return FixedBidPolicy(optimal_bid, budget, name='oracle')
    raise ConfigError(f"unknown policy '{name}', expected one of {POLICY_NAMES}")
