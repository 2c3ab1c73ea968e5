#!/usr/bin/env python3
"""
Empirical Payoff Module
Piecewise-constant average payoff of one good, kept as sorted clearing-price
breakpoints with running payoff sums
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Tuple

import numpy as np

from errors import DomainError, StructuralError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MarketObservation:
    """Clearing and spot prices of all K goods for one period"""
    clearing: np.ndarray
    spot: np.ndarray

    def __post_init__(self):
        clearing = np.asarray(self.clearing, dtype=float).ravel()
        spot = np.asarray(self.spot, dtype=float).ravel()
        if clearing.shape != spot.shape:
            raise StructuralError(
                f"clearing has {clearing.size} goods but spot has {spot.size}")
        if np.any(~(clearing > 0)):
            raise DomainError("clearing prices must be strictly positive")
        object.__setattr__(self, 'clearing', clearing)
        object.__setattr__(self, 'spot', spot)

    @property
    def num_goods(self) -> int:
        return self.clearing.size

    @property
    def spread(self) -> np.ndarray:
        """Per-unit profit of a cleared bid (spot minus clearing)"""
        return self.spot - self.clearing

    def payoff(self, bids: np.ndarray) -> float:
        """Realized payoff of a bid vector against this period's prices"""
        bids = np.asarray(bids, dtype=float)
        if bids.shape != self.clearing.shape:
            raise StructuralError(
                f"bid has {bids.size} goods, observation has {self.num_goods}")
        return float(np.sum(self.spread * (bids >= self.clearing)))


@dataclass
class EmpiricalPayoff:
    """
    Average payoff r(x) = (1/t) * sum_i (spot_i - clearing_i) * 1{x >= clearing_i}.

    breakpoints[0] is always 0 with a zero sum, and cum_payoffs[i] holds the
    payoff sum of every observation whose clearing price is at most
    breakpoints[i]. Duplicate prices are kept; the rightmost copy carries the
    full sum.
    """
    breakpoints: np.ndarray = field(default_factory=lambda: np.zeros(1))
    cum_payoffs: np.ndarray = field(default_factory=lambda: np.zeros(1))
    count: int = 0

    def insert(self, clearing_price: float, spot_price: float) -> None:
        """Add one observation, O(t)"""
        clearing_price = float(clearing_price)
        if not clearing_price > 0:
            raise DomainError(f"clearing price must be positive, got {clearing_price}")

        # new duplicate sits right of existing equal prices
        pos = int(np.searchsorted(self.breakpoints, clearing_price, side='right'))
        increment = float(spot_price) - clearing_price

        self.breakpoints = np.insert(self.breakpoints, pos, clearing_price)
        self.cum_payoffs = np.insert(self.cum_payoffs, pos, self.cum_payoffs[pos - 1])
        self.cum_payoffs[pos:] += increment
        self.count += 1

    def evaluate(self, bid: float) -> float:
        """Average payoff of bidding `bid`, O(log t)"""
        if bid < 0:
            raise DomainError(f"bid must be non-negative, got {bid}")
        if self.count == 0:
            return 0.0
        i = int(np.searchsorted(self.breakpoints, bid, side='right')) - 1
        return float(self.cum_payoffs[i] / self.count)

    def values_on_grid(self, grid) -> Tuple[np.ndarray, int]:
        """
        Evaluate the average payoff on every point of a budget grid.

        One vectorized binary search per grid point, O(alpha log t), in place
        of a merged scan of grid and breakpoints, O(max(t, alpha)).

        Returns:
            (values, saturation_index) where values[j] = r(j*B/alpha) and
            saturation_index is the first grid index at or beyond the largest
            breakpoint (alpha if the grid never gets there).
        """
        points = grid.points()
        if self.count == 0:
            return np.zeros(points.size), 0

        idx = np.searchsorted(self.breakpoints, points, side='right') - 1
        values = self.cum_payoffs[idx] / self.count

        passed = np.nonzero(points >= self.breakpoints[-1])[0]
        saturation = int(passed[0]) if passed.size else grid.alpha
        return values, saturation

    def breakpoint_pairs(self) -> Tuple[np.ndarray, np.ndarray]:
        """Distinct breakpoints with their average payoffs"""
        if self.count == 0:
            return np.zeros(1), np.zeros(1)
        # keep the last copy of each price
        keep = np.append(self.breakpoints[1:] != self.breakpoints[:-1], True)
        return self.breakpoints[keep].copy(), self.cum_payoffs[keep] / self.count

    def check_invariants(self) -> None:
        """Raise StructuralError if the stored arrays are inconsistent"""
        if not (len(self.breakpoints) == len(self.cum_payoffs) == self.count + 1):
            raise StructuralError("breakpoint and payoff arrays must hold count + 1 entries")
        if self.breakpoints[0] != 0 or self.cum_payoffs[0] != 0:
            raise StructuralError("first breakpoint and payoff must be zero")
        if np.any(np.diff(self.breakpoints) < 0):
            raise StructuralError("breakpoints must be non-decreasing")

    def to_dict(self) -> Dict:
        return {
            'breakpoints': self.breakpoints.tolist(),
            'cum_payoffs': self.cum_payoffs.tolist(),
            'count': self.count,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> 'EmpiricalPayoff':
        payoff = cls(
            breakpoints=np.asarray(data['breakpoints'], dtype=float),
            cum_payoffs=np.asarray(data['cum_payoffs'], dtype=float),
            count=int(data['count']),
        )
        payoff.check_invariants()
        return payoff

    @classmethod
    def from_history(cls, clearing: Iterable[float], spot: Iterable[float]) -> 'EmpiricalPayoff':
        payoff = cls()
        for lam, pi in zip(clearing, spot):
            payoff.insert(lam, pi)
        return payoff


def empirical_payoffs(num_goods: int) -> List[EmpiricalPayoff]:
    """Fresh payoff structures for K goods"""
    return [EmpiricalPayoff() for _ in range(num_goods)]


def insert_observation(payoffs: List[EmpiricalPayoff], observation: MarketObservation) -> None:
    """Insert one period's prices into each good's payoff structure"""
    if observation.num_goods != len(payoffs):
        raise StructuralError(
            f"observation has {observation.num_goods} goods, expected {len(payoffs)}")
    for payoff, lam, pi in zip(payoffs, observation.clearing, observation.spot):
        payoff.insert(lam, pi)
