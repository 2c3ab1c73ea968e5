import itertools

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from allocator import (BudgetGrid, allocation_value, backtrack, brute_force_mckp,
                       build_value_table, grid_payoffs, is_feasible, solve_dp)
from conftest import random_history
from errors import DomainError, SizeError, StructuralError
from payoff import EmpiricalPayoff


def exhaustive_grid_optimum(grid_values, alpha):
    """Best total over all index tuples with sum <= alpha"""
    total = np.zeros(())
    spent = np.zeros((), dtype=np.int64)
    for values in grid_values:
        total = np.add.outer(total, values)
        spent = np.add.outer(spent, np.arange(alpha + 1))
    return total[spent <= alpha].max()


def payoffs_from_history(clearing, spot):
    return [EmpiricalPayoff.from_history(clearing[:, k], spot[:, k]) for k in range(clearing.shape[1])]


class TestBudgetGrid:
    def test_points(self):
        grid = BudgetGrid(3.0, 3)
        assert_array_equal(grid.points(), [0, 1, 2, 3])
        assert grid.step == 1.0
        assert grid.point(2) == 2.0

    @pytest.mark.parametrize("budget, alpha", [(0.0, 3), (-1.0, 3), (1.0, 0), (1.0, 2.5)])
    def test_invalid(self, budget, alpha):
        with pytest.raises(DomainError):
            BudgetGrid(budget, alpha)


class TestSolveDP:
    def test_single_good(self):
        bids, value = solve_dp([np.array([0.0, 5.0, 3.0])], [2], BudgetGrid(2.0, 2))
        assert_array_equal(bids, [1.0])
        assert value == 5.0

    def test_two_goods_tie(self):
        grid = BudgetGrid(2.0, 2)
        values = [np.array([0.0, 4.0, 6.0]), np.array([0.0, 3.0, 7.0])]
        bids, value = solve_dp(values, [2, 2], grid)
        assert value == 7.0
        assert_array_equal(bids, [1.0, 1.0])
        assert value == exhaustive_grid_optimum(values, 2)

    def test_all_zero(self):
        bids, value = solve_dp([np.zeros(5), np.zeros(5)], [4, 4], BudgetGrid(4.0, 4))
        assert_array_equal(bids, [0.0, 0.0])
        assert value == 0.0

    def test_mismatched_lengths(self):
        grid = BudgetGrid(2.0, 2)
        with pytest.raises(StructuralError):
            solve_dp([np.zeros(3)], [2, 2], grid)
        with pytest.raises(StructuralError):
            solve_dp([np.zeros(4)], [2], grid)
        with pytest.raises(StructuralError):
            solve_dp([], [], grid)

    def test_matches_exhaustive_enumeration(self, rng):
        for _ in range(1000):
            num_goods = int(rng.integers(1, 5))
            alpha = int(rng.integers(1, 13))
            grid = BudgetGrid(float(rng.uniform(0.5, 10)), alpha)
            values = []
            for _ in range(num_goods):
                v = rng.normal(0, 3, size=alpha + 1)
                v[0] = 0.0
                values.append(v)
            table = build_value_table(values, [alpha] * num_goods, grid)
            indices = backtrack(table, grid)

            assert indices.sum() <= alpha
            assert table.optimum == pytest.approx(exhaustive_grid_optimum(values, alpha), abs=1e-12)
            assert allocation_value(values, indices) == pytest.approx(table.optimum, abs=1e-12)

    def test_saturation_cap_is_sound(self, rng):
        for _ in range(50):
            clearing, spot = random_history(rng, 3, int(rng.integers(1, 15)))
            grid = BudgetGrid(6.0, int(rng.integers(2, 20)))
            values, saturations = grid_payoffs(payoffs_from_history(clearing, spot), grid)
            capped = solve_dp(values, saturations, grid, use_cap=True)
            uncapped = solve_dp(values, saturations, grid, use_cap=False)
            assert_array_equal(capped[0], uncapped[0])
            assert capped[1] == uncapped[1]

    def test_full_table(self):
        grid = BudgetGrid(2.0, 2)
        values = [np.array([0.0, 4.0, 6.0]), np.array([0.0, 3.0, 7.0])]
        table = build_value_table(values, [2, 2], grid, keep_values=True)
        assert table.values.shape == (3, 3)
        assert_array_equal(table.values[0], [0, 0, 0])
        assert_array_equal(table.values[1], [0, 4, 6])
        assert_array_equal(table.values[2], table.final_row)
        assert_array_equal(table.values[2], [0, 4, 7])

    def test_bids_are_feasible(self, rng):
        clearing, spot = random_history(rng, 4, 12)
        grid = BudgetGrid(7.5, 31)
        values, saturations = grid_payoffs(payoffs_from_history(clearing, spot), grid)
        bids, _ = solve_dp(values, saturations, grid)
        assert is_feasible(bids, 7.5)
        assert np.allclose(bids / grid.step, np.round(bids / grid.step))


class TestBruteForceMCKP:
    def test_budget_excludes_breakpoint(self):
        bids, value = brute_force_mckp([([0.0, 2.0], [0.0, 3.0])], 1.0)
        assert_array_equal(bids, [0.0])
        assert value == 0.0

    def test_affordable_breakpoint(self):
        bids, value = brute_force_mckp([([0.0, 2.0], [0.0, 3.0])], 2.0)
        assert_array_equal(bids, [2.0])
        assert value == 3.0

    def test_tie_prefers_smaller_total_bid(self):
        sets = [([0.0, 1.0, 3.0], [0.0, 2.0, 2.0]), ([0.0, 1.0], [0.0, 2.0])]
        bids, value = brute_force_mckp(sets, 4.0)
        assert value == 4.0
        assert_array_equal(bids, [1.0, 1.0])

    def test_matches_itertools_enumeration(self, rng):
        for _ in range(200):
            num_goods = int(rng.integers(1, 4))
            clearing, spot = random_history(rng, num_goods, int(rng.integers(1, 7)))
            pairs = [p.breakpoint_pairs() for p in payoffs_from_history(clearing, spot)]
            budget = float(rng.uniform(0.5, 10))
            best = max(
                sum(v[i] for (_, v), i in zip(pairs, choice))
                for choice in itertools.product(*[range(len(b)) for b, _ in pairs])
                if sum(b[i] for (b, _), i in zip(pairs, choice)) <= budget
            )
            bids, value = brute_force_mckp(pairs, budget)
            assert value == pytest.approx(best, abs=1e-12)
            assert bids.sum() <= budget

    def test_upper_bounds_grid_dp(self, rng):
        for _ in range(300):
            num_goods = int(rng.integers(1, 4))
            payoffs = payoffs_from_history(*random_history(rng, num_goods, int(rng.integers(1, 7))))
            budget = float(rng.uniform(0.5, 10))
            grid = BudgetGrid(budget, int(rng.integers(1, 30)))
            _, dp_value = solve_dp(*grid_payoffs(payoffs, grid), grid)
            _, exact = brute_force_mckp([p.breakpoint_pairs() for p in payoffs], budget)
            assert exact >= dp_value - 1e-12

    def test_equal_when_breakpoints_on_grid(self, rng):
        for _ in range(300):
            num_goods = int(rng.integers(1, 4))
            budget = int(rng.integers(2, 9))
            clearing, spot = random_history(rng, num_goods, int(rng.integers(1, 7)),
                                            integer_prices=True, max_price=budget + 2)
            payoffs = payoffs_from_history(clearing, spot)
            grid = BudgetGrid(float(budget), budget)
            _, dp_value = solve_dp(*grid_payoffs(payoffs, grid), grid)
            _, exact = brute_force_mckp([p.breakpoint_pairs() for p in payoffs], float(budget))
            assert exact == pytest.approx(dp_value, abs=1e-12)

    def test_size_cap(self):
        sets = [([0.0, 1.0, 2.0, 3.0], [0.0, 1.0, 2.0, 3.0])] * 3
        with pytest.raises(SizeError):
            brute_force_mckp(sets, 10.0, size_cap=10)

    def test_malformed_input(self):
        with pytest.raises(StructuralError):
            brute_force_mckp([], 1.0)
        with pytest.raises(StructuralError):
            brute_force_mckp([([1.0, 2.0], [0.0, 1.0])], 3.0)
        with pytest.raises(StructuralError):
            brute_force_mckp([([0.0, 2.0], [0.0])], 3.0)


def test_is_feasible():
    assert is_feasible([1.0, 2.0], 3.0)
    assert not is_feasible([1.0, 2.5], 3.0)
    assert not is_feasible([-1.0, 2.0], 3.0)
