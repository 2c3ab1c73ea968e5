#!/usr/bin/env python3
"""
Regret Simulator Module
Monte-Carlo driver: samples i.i.d. price streams from a known model, runs the
bidding policies with an information lag and averages their expected regret
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
import psutil

from errors import ConfigError, StructuralError
from oracle import ExpUniformModel, LowerBoundModel, PriceModel, model_payoff, optimal_bid
from payoff import MarketObservation
from policies import POLICY_NAMES, DPDSPolicy, ScheduleParams, make_policy

logger = logging.getLogger(__name__)

REGRET_TOLERANCE = 1e-9
TINY_PRICE = np.finfo(float).tiny


@dataclass
class ExperimentConfig:
    """Everything one Monte-Carlo experiment needs"""
    model: PriceModel
    policies: Sequence[str]
    horizon: int
    runs: int
    budget: float
    lag: int = 1
    seed: int = 0
    threads: int = 1
    schedule: ScheduleParams = field(default_factory=ScheduleParams)
    keep_raw: bool = False

    def validate(self):
        if self.horizon < 1 or self.runs < 1:
            raise ConfigError("horizon and runs must be at least 1")
        if self.lag < 1:
            raise ConfigError("the simulation lag must be at least 1 period")
        if not self.budget > 0:
            raise ConfigError("budget must be positive")
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")
        if not self.policies:
            raise ConfigError("no policies configured")
        for name in self.policies:
            if name not in POLICY_NAMES:
                raise ConfigError(f"unknown policy '{name}', expected one of {POLICY_NAMES}")
        if isinstance(self.model, LowerBoundModel) and self.budget != 1:
            raise ConfigError("the lower-bound instance is defined for a budget of 1")
        self.schedule.validate()
        return self


@dataclass
class RegretTrajectory:
    """Cumulative expected regret per policy, averaged over runs"""
    periods: np.ndarray
    mean_cum_regret: Dict[str, np.ndarray]
    stderr: Dict[str, np.ndarray]
    optimal_payoff: float
    raw_payoffs: Optional[Dict[str, np.ndarray]] = None

    def final_regret(self, policy: str) -> float:
        return float(self.mean_cum_regret[policy][-1])

    def to_frame(self) -> pd.DataFrame:
        frames = [
            pd.DataFrame({
                't': self.periods,
                'policy': name,
                'mean_cum_regret': self.mean_cum_regret[name],
                'stderr': self.stderr[name],
            })
            for name in self.mean_cum_regret
        ]
        return pd.concat(frames, ignore_index=True)

    def write_csv(self, path) -> None:
        self.to_frame().to_csv(path, index=False, float_format='%.12g')
        logger.info("Regret trajectory written to %s", path)


def run_seed(master_seed: int, run_index: int) -> np.random.SeedSequence:
    """Substream of run `run_index`: SeedSequence([master_seed, run_index])"""
    return np.random.SeedSequence([int(master_seed), int(run_index)])


def sample_prices(model: PriceModel, rng: np.random.Generator) -> MarketObservation:
    """One i.i.d. draw of (clearing, spot)"""
    stream = sample_stream(model, rng, 1)
    return stream[0]


def sample_stream(model: PriceModel, rng: np.random.Generator, horizon: int) -> List[MarketObservation]:
    """`horizon` i.i.d. draws, vectorized"""
    if isinstance(model, LowerBoundModel):
        lo, hi = model.support
        clearing = rng.uniform(lo, hi, size=(horizon, 1))
        spot = (rng.random(size=(horizon, 1)) < model.pi_mean).astype(float)
    elif isinstance(model, ExpUniformModel):
        clearing = rng.exponential(model.lambda_bar, size=(horizon, model.num_goods))
        clearing = np.maximum(clearing, TINY_PRICE)
        half = model.spot_halfwidth
        spot = rng.uniform(model.pi_bar - half, model.pi_bar + half, size=(horizon, model.num_goods))
    else:
        raise ConfigError(f"unsupported price model {type(model).__name__}")
    return [MarketObservation(clearing[t], spot[t]) for t in range(horizon)]


def run_single(config: ExperimentConfig, run_index: int, x_star: np.ndarray,
               optimal_payoff: float) -> Dict[str, np.ndarray]:
    """
    One Monte-Carlo run. At period t (1-based) every policy has seen the
    observations of periods up to t - lag.

    Returns:
        per-policy expected payoff of the bid made at each period
    """
    rng = np.random.default_rng(run_seed(config.seed, run_index))
    stream = sample_stream(config.model, rng, config.horizon)
    num_goods = config.model.num_goods

    payoffs = {}
    for name in config.policies:
        policy = make_policy(name, num_goods, config.budget, config.schedule, optimal_bid=x_star)
        earned = np.empty(config.horizon)
        for t in range(config.horizon):
            newest = t - config.lag
            observation = stream[newest] if newest >= 0 else None
            bid = policy.step(observation)
            if bid.size != num_goods:
                raise StructuralError(f"{name} returned {bid.size} bids for {num_goods} goods")
            earned[t] = model_payoff(config.model, bid)
        regret = optimal_payoff - earned
        if regret.min() < -REGRET_TOLERANCE * max(1.0, abs(optimal_payoff)):
            logger.warning("%s beat the known-distribution optimum by %.3g in run %d",
                           name, -regret.min(), run_index)
        payoffs[name] = earned
    return payoffs


def run_experiment(config: ExperimentConfig,
                   progress_callback: Optional[Callable[[int, int], None]] = None) -> RegretTrajectory:
    """Run every Monte-Carlo replicate and average the cumulative regret"""
    config.validate()
    x_star = optimal_bid(config.model, config.budget)
    optimal_payoff = model_payoff(config.model, x_star)
    logger.info("Known-distribution optimum %s pays %.6f per period", np.round(x_star, 6), optimal_payoff)

    results: List[Optional[Dict[str, np.ndarray]]] = [None] * config.runs
    completed = 0

    if config.threads == 1:
        for r in range(config.runs):
            results[r] = run_single(config, r, x_star, optimal_payoff)
            completed += 1
            if progress_callback:
                progress_callback(completed, config.runs)
    else:
        with ThreadPoolExecutor(max_workers=config.threads) as executor:
            future_to_run = {
                executor.submit(run_single, config, r, x_star, optimal_payoff): r
                for r in range(config.runs)
            }
            for future in as_completed(future_to_run):
                results[future_to_run[future]] = future.result()
                completed += 1
                if progress_callback:
                    progress_callback(completed, config.runs)

    # reduction in run order, independent of completion order
    mean_cum, stderr, raw = {}, {}, {}
    for name in config.policies:
        earned = np.stack([results[r][name] for r in range(config.runs)])
        cum_regret = np.cumsum(optimal_payoff - earned, axis=1)
        mean_cum[name] = cum_regret.mean(axis=0)
        if config.runs > 1:
            stderr[name] = cum_regret.std(axis=0, ddof=1) / np.sqrt(config.runs)
        else:
            stderr[name] = np.zeros(config.horizon)
        raw[name] = earned
        logger.info("%s: mean cumulative regret %.6f after %d periods",
                    name, mean_cum[name][-1], config.horizon)

    return RegretTrajectory(
        periods=np.arange(1, config.horizon + 1),
        mean_cum_regret=mean_cum,
        stderr=stderr,
        optimal_payoff=optimal_payoff,
        raw_payoffs=raw if config.keep_raw else None,
    )


def default_threads() -> int:
    """Physical cores, falling back to logical ones"""
    return psutil.cpu_count(logical=False) or psutil.cpu_count() or 1


def benchmark_dpds(num_goods: int, horizon: int, schedule: Optional[ScheduleParams] = None,
                   budget: float = 100.0, seed: int = 0,
                   progress_callback: Optional[Callable[[int, int], None]] = None) -> pd.DataFrame:
    """
    Wall-clock seconds DPDS spends per period on a synthetic exponential
    market with `num_goods` goods.
    """
    schedule = schedule or ScheduleParams()
    rng = np.random.default_rng(seed)
    model = ExpUniformModel(
        lambda_bar=rng.uniform(20, 60, size=num_goods),
        pi_bar=rng.uniform(20, 60, size=num_goods),
        spot_halfwidth=5.0,
    )
    stream = sample_stream(model, rng, horizon)
    policy = DPDSPolicy(num_goods, budget, schedule)
    process = psutil.Process()

    rows = []
    for t, observation in enumerate(stream, start=1):
        start = time.perf_counter()
        policy.step(observation)
        elapsed = time.perf_counter() - start
        rows.append({
            't': t,
            'alpha': schedule.alpha(t),
            'seconds': elapsed,
            'rss_mb': process.memory_info().rss / 2 ** 20,
        })
        if progress_callback:
            progress_callback(t, horizon)
    return pd.DataFrame(rows)
