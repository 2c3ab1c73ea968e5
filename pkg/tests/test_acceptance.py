"""Full-scale reproductions; the Monte-Carlo ones are marked slow"""

import logging
import math

import numpy as np
import pytest

from oracle import lower_bound_instance, waterfill_optimal
from payoff import EmpiricalPayoff
from policies import ScheduleParams
from simulator import ExperimentConfig, benchmark_dpds, run_experiment, run_seed

logger = logging.getLogger(__name__)

REFERENCE_BUDGET = 13.845


def payoff_range(model, bid):
    """u - l of the per-period payoff of a fixed bid"""
    half = model.spot_halfwidth
    upper = np.maximum(0.0, model.pi_bar + half).sum()
    lower = np.minimum(0.0, model.pi_bar - half - bid).sum()
    return upper - lower


@pytest.mark.parametrize("t", [100, 1000])
def test_empirical_payoff_concentrates(five_good_model, t):
    x_star, _ = waterfill_optimal(five_good_model, REFERENCE_BUDGET)
    bids = [x_star, np.full(5, REFERENCE_BUDGET / 5)]
    runs = 500
    for bid in bids:
        decay = np.exp(-bid / five_good_model.lambda_bar)
        exact = float(((five_good_model.pi_bar - five_good_model.lambda_bar) * (1 - decay) + bid * decay).sum())
        radius = payoff_range(five_good_model, bid) * math.sqrt(2 * math.log(t) / t)
        inside = 0
        for r in range(runs):
            rng = np.random.default_rng(run_seed(t, r))
            clearing = rng.exponential(five_good_model.lambda_bar, size=(t, 5))
            spot = rng.uniform(five_good_model.pi_bar - 1, five_good_model.pi_bar + 1, size=(t, 5))
            estimate = float(np.sum((spot - clearing) * (bid >= clearing)) / t)
            if r == 0:
                structured = sum(EmpiricalPayoff.from_history(np.maximum(clearing[:, k], 1e-300), spot[:, k])
                                 .evaluate(bid[k]) for k in range(5))
                assert structured == pytest.approx(estimate, abs=1e-9)
            inside += abs(estimate - exact) <= radius
        assert inside >= 0.9 * runs


@pytest.mark.slow
def test_regret_against_sliding_window(five_good_model):
    config = ExperimentConfig(model=five_good_model, policies=['dpds', 'sw'], horizon=2000, runs=200,
                              budget=REFERENCE_BUDGET, seed=12345, threads=4,
                              schedule=ScheduleParams(mode='linear'))
    trajectory = run_experiment(config)
    dpds = trajectory.mean_cum_regret['dpds']
    assert dpds[-1] <= 0.8 * trajectory.mean_cum_regret['sw'][-1]
    horizon = config.horizon
    quarter = horizon // 4
    assert dpds[-1] / math.sqrt(horizon) <= dpds[quarter - 1] / math.sqrt(quarter)


@pytest.mark.slow
@pytest.mark.parametrize("horizon", [400, 1600])
def test_lower_bound_floor(horizon):
    (minus, plus), floor = lower_bound_instance(horizon)
    regrets = []
    for model in (minus, plus):
        config = ExperimentConfig(model=model, policies=['dpds'], horizon=horizon, runs=500,
                                  budget=1.0, seed=horizon, threads=4)
        regrets.append(run_experiment(config).final_regret('dpds'))
    assert max(regrets) >= floor


@pytest.mark.slow
def test_dpds_timing_report():
    timings = benchmark_dpds(264, 2000, ScheduleParams(mode='power', gamma=0.5), budget=100000.0)
    tail = timings[timings['t'] > 1000]
    slope = np.polyfit(np.log(tail['t']), np.log(tail['seconds'].clip(lower=1e-9)), 1)[0]
    logger.info("per-period DPDS time grows like t^%.2f on 264 goods", slope)
    assert len(timings) == 2000
