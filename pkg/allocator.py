#!/usr/bin/env python3
"""
Budget Allocator Module
Dynamic program over a discretized budget grid, plus an exhaustive
multiple-choice knapsack solver for small instances
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from errors import DomainError, SizeError, StructuralError

logger = logging.getLogger(__name__)

DEFAULT_SIZE_CAP = 10_000_000
VALUE_TOLERANCE = 1e-12


@dataclass(frozen=True)
class BudgetGrid:
    """Grid {0, B/alpha, 2B/alpha, ..., B}; all arithmetic is on integer indices"""
    budget: float
    alpha: int

    def __post_init__(self):
        if not self.budget > 0:
            raise DomainError(f"budget must be positive, got {self.budget}")
        if int(self.alpha) != self.alpha or self.alpha < 1:
            raise DomainError(f"grid resolution must be an integer >= 1, got {self.alpha}")
        object.__setattr__(self, 'alpha', int(self.alpha))

    @property
    def step(self) -> float:
        return self.budget / self.alpha

    def point(self, j: int) -> float:
        return j * self.budget / self.alpha

    def points(self) -> np.ndarray:
        return np.arange(self.alpha + 1) * self.budget / self.alpha


@dataclass
class ValueTable:
    """
    Bellman table of the grid allocation problem.

    choices[n - 1][j] is the grid index given to good n when j budget units
    remain for goods 1..n. values is the full (K+1) x (alpha+1) table when it
    was requested, otherwise only the last row is kept in `final_row`.
    """
    choices: np.ndarray
    final_row: np.ndarray
    values: Optional[np.ndarray] = None

    @property
    def optimum(self) -> float:
        return float(self.final_row[-1])


def _check_inputs(grid_values: Sequence[np.ndarray], saturations: Sequence[int], grid: BudgetGrid):
    if len(grid_values) == 0:
        raise StructuralError("at least one good is required")
    if len(saturations) != len(grid_values):
        raise StructuralError(
            f"{len(grid_values)} value lists but {len(saturations)} saturation indices")
    rows = []
    for n, values in enumerate(grid_values):
        values = np.asarray(values, dtype=float)
        if values.shape != (grid.alpha + 1,):
            raise StructuralError(
                f"good {n} has {values.size} grid values, expected {grid.alpha + 1}")
        if values[0] != 0:
            raise StructuralError(f"good {n} must have zero payoff at zero bid")
        rows.append(values)
    return rows


def build_value_table(grid_values: Sequence[np.ndarray], saturations: Sequence[int],
                      grid: BudgetGrid, use_cap: bool = True,
                      keep_values: bool = False) -> ValueTable:
    """
    Fill V_n(j) = max_{0<=i<=min(j, j'_n)} r_n(i) + V_{n-1}(j - i) for n = 1..K.

    The first maximizer in i wins, which matches updating only on strict
    improvement and hands out the smallest bid among equal payoffs.
    """
    rows = _check_inputs(grid_values, saturations, grid)
    alpha = grid.alpha
    num_goods = len(rows)

    previous = np.zeros(alpha + 1)
    choices = np.zeros((num_goods, alpha + 1), dtype=np.int64)
    full = np.zeros((num_goods + 1, alpha + 1)) if keep_values else None
    remaining = np.arange(alpha + 1)

    for n, values in enumerate(rows):
        cap = alpha
        if use_cap:
            cap = int(min(max(saturations[n], 0), alpha))
        offsets = np.arange(cap + 1)

        # candidate[j, i] = r_n(i) + V_{n-1}(j - i), -inf where i > j
        lookup = remaining[:, None] - offsets[None, :]
        valid = lookup >= 0
        candidates = np.where(valid, values[offsets][None, :] + previous[np.maximum(lookup, 0)], -np.inf)

        best = np.argmax(candidates, axis=1)
        current = candidates[remaining, best]

        choices[n] = best
        previous = current
        if full is not None:
            full[n + 1] = current

    return ValueTable(choices=choices, final_row=previous, values=full)


def backtrack(table: ValueTable, grid: BudgetGrid) -> np.ndarray:
    """Recover grid indices good by good, from the last good down to the first"""
    num_goods = table.choices.shape[0]
    indices = np.zeros(num_goods, dtype=np.int64)
    remaining = grid.alpha
    for n in range(num_goods - 1, -1, -1):
        indices[n] = table.choices[n][remaining]
        remaining -= indices[n]
    return indices


def solve_dp(grid_values: Sequence[np.ndarray], saturations: Sequence[int],
             grid: BudgetGrid, use_cap: bool = True) -> Tuple[np.ndarray, float]:
    """
    Optimal grid allocation of the budget among K goods.

    Args:
        grid_values: per-good average payoffs at grid points 0..alpha
        saturations: per-good index beyond which the payoff is constant
        grid: budget grid

    Returns:
        (bids, value) with every bid on the grid and sum(bids) <= budget
    """
    table = build_value_table(grid_values, saturations, grid, use_cap=use_cap)
    indices = backtrack(table, grid)
    bids = indices * grid.budget / grid.alpha
    logger.debug("DP allocation over %d goods, alpha=%d: value %.6f",
                 len(indices), grid.alpha, table.optimum)
    return bids, table.optimum


def allocation_value(grid_values: Sequence[np.ndarray], indices: Sequence[int]) -> float:
    """Total payoff of a grid-index allocation"""
    return float(sum(np.asarray(values)[i] for values, i in zip(grid_values, indices)))


def _pareto_items(breakpoints: np.ndarray, values: np.ndarray, budget: float):
    """Affordable breakpoints whose payoff beats every cheaper breakpoint"""
    keep = [0]
    best = values[0]
    for i in range(1, len(breakpoints)):
        if breakpoints[i] > budget:
            break
        if values[i] > best:
            keep.append(i)
            best = values[i]
    return np.asarray(keep, dtype=np.int64)


def brute_force_mckp(breakpoint_sets: Sequence[Tuple[Sequence[float], Sequence[float]]],
                     budget: float, size_cap: int = DEFAULT_SIZE_CAP) -> Tuple[np.ndarray, float]:
    """
    Exact multiple-choice knapsack: pick one breakpoint per good, bidding its
    price, to maximize total average payoff with total bid <= budget.

    Breakpoints that cost more than a cheaper one without paying more are
    pruned first; that leaves both the optimum and the tie-break (smaller
    total bid, then lexicographically smaller choice) unchanged.
    """
    if len(breakpoint_sets) == 0:
        raise StructuralError("at least one good is required")
    if budget < 0:
        raise DomainError(f"budget must be non-negative, got {budget}")

    prices, payoffs, kept = [], [], []
    for k, (breakpoints, values) in enumerate(breakpoint_sets):
        breakpoints = np.asarray(breakpoints, dtype=float)
        values = np.asarray(values, dtype=float)
        if breakpoints.shape != values.shape or breakpoints.size == 0:
            raise StructuralError(f"good {k}: breakpoints and values must be equal-length, non-empty")
        if breakpoints[0] != 0:
            raise StructuralError(f"good {k}: first breakpoint must be zero")
        items = _pareto_items(breakpoints, values, budget)
        prices.append(breakpoints[items])
        payoffs.append(values[items])
        kept.append(items)

    combinations = int(np.prod([p.size for p in prices], dtype=np.float64))
    if combinations > size_cap:
        raise SizeError(f"{combinations} combinations exceed the cap of {size_cap}")

    # broadcast one axis per good; C order of the flattened grid is lexicographic
    total_bid = np.zeros(())
    total_value = np.zeros(())
    for p, v in zip(prices, payoffs):
        total_bid = np.add.outer(total_bid, p)
        total_value = np.add.outer(total_value, v)
    total_bid = total_bid.ravel()
    total_value = total_value.ravel()

    feasible = total_bid <= budget
    masked = np.where(feasible, total_value, -np.inf)
    best_value = masked.max()
    candidates = masked >= best_value - VALUE_TOLERANCE * max(1.0, abs(best_value))
    cheapest = np.where(candidates, total_bid, np.inf)
    flat = int(np.argmin(cheapest))

    choice = np.unravel_index(flat, tuple(p.size for p in prices))
    bids = np.array([p[c] for p, c in zip(prices, choice)])
    value = float(sum(v[c] for v, c in zip(payoffs, choice)))
    return bids, value


def is_feasible(bids: np.ndarray, budget: float, tolerance: float = 1e-9) -> bool:
    """Membership in {x >= 0, sum(x) <= budget}"""
    bids = np.asarray(bids, dtype=float)
    return bool(np.all(bids >= 0) and bids.sum() <= budget * (1 + tolerance) + tolerance)


def grid_payoffs(payoffs: List, grid: BudgetGrid) -> Tuple[List[np.ndarray], List[int]]:
    """values_on_grid for every good"""
    values, saturations = [], []
    for payoff in payoffs:
        v, s = payoff.values_on_grid(grid)
        values.append(v)
        saturations.append(s)
    return values, saturations
