#!/usr/bin/env python3
"""
Auction Bidder - command line entry point

  simulate   Monte-Carlo regret of the policies on a known price model
  backtest   replay historical day-ahead / real-time prices
  solve      one-shot allocation from a saved payoff snapshot
  oracle     water-filling optimum of the exponential price model
  benchmark  per-period DPDS timing

Exit codes: 0 success, 1 runtime or data failure, 2 configuration failure.
"""

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
from tqdm import tqdm

from allocator import BudgetGrid, brute_force_mckp, grid_payoffs, solve_dp
from errors import BiddingError, ConfigError, DomainError, SizeError
from market_data import SellTransform, load_panel, run_backtests, write_profit_csv
from oracle import (ExpUniformModel, budget_for_multiplier, expected_payoff,
                    waterfill_optimal)
from payoff import EmpiricalPayoff
from policies import DPDSPolicy, make_policy
from settings import APP_VERSION, SettingsManager
from simulator import ExperimentConfig, benchmark_dpds, default_threads, run_experiment

logger = logging.getLogger("auction_bidder")

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2


def file_hash(path) -> str:
    """sha256 of a file's bytes"""
    digest = hashlib.sha256()
    with open(path, 'rb') as f:
        for chunk in iter(lambda: f.read(1 << 20), b''):
            digest.update(chunk)
    return digest.hexdigest()


def progress_bar(enabled: bool, desc: str):
    """Progress callback bound to a tqdm bar"""
    state = {'bar': None}

    def callback(done: int, total: int):
        if not enabled:
            return
        if state['bar'] is None:
            state['bar'] = tqdm(total=total, desc=desc, unit='step', leave=False)
        state['bar'].update(done - state['bar'].n)
        if done >= total:
            state['bar'].close()

    return callback


def load_manager(args) -> SettingsManager:
    manager = SettingsManager()
    if getattr(args, 'config', None):
        manager.load_settings(args.config)
    return manager


def apply_overrides(manager: SettingsManager, section: str, args) -> None:
    """Command-line flags win over the config file"""
    overrides = {
        'seed': getattr(args, 'seed', None),
        'threads': getattr(args, 'threads', None),
        'budget': getattr(args, 'budget', None),
        'lag': getattr(args, 'lag', None),
    }
    if section == 'backtest':
        overrides['lag_days'] = overrides.pop('lag')
    for key, value in overrides.items():
        if value is not None:
            manager.update_setting(section, key, value)


def output_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args) -> int:
    """Monte-Carlo regret trajectory + manifest"""
    manager = load_manager(args)
    apply_overrides(manager, 'simulation', args)
    settings = manager.settings
    sim = settings.simulation

    config = ExperimentConfig(
        model=settings.price_model(),
        policies=list(sim.policies),
        horizon=sim.horizon,
        runs=sim.runs,
        budget=sim.budget,
        lag=sim.lag,
        seed=sim.seed,
        threads=sim.threads,
        schedule=settings.schedule_params(),
        keep_raw=sim.keep_raw,
    ).validate()
    _check_sliding_window(config.policies, config.model.num_goods, settings)

    out = output_dir(args)
    logger.info("Simulating %s over %d periods x %d runs", config.policies, config.horizon, config.runs)
    trajectory = run_experiment(config, progress_bar(not args.quiet, "runs"))

    csv_path = out / 'regret.csv'
    trajectory.write_csv(csv_path)
    if trajectory.raw_payoffs is not None:
        raw_path = out / 'raw_payoffs.npz'
        np.savez_compressed(raw_path, **trajectory.raw_payoffs)
    manager.export_settings(out / 'manifest.json', extra={
        'command': 'simulate',
        'config_sha256': file_hash(args.config) if args.config else None,
        'outputs': {'regret.csv': file_hash(csv_path)},
        'optimal_payoff': trajectory.optimal_payoff,
        'seed_rule': 'SeedSequence([seed, run_index])',
    })
    for name in config.policies:
        print(f"{name:>10}: cumulative regret {trajectory.final_regret(name):.6f} at T={config.horizon}")
    return EXIT_OK


def _check_sliding_window(policies: List[str], num_goods: int, settings) -> None:
    if 'sw' not in policies:
        return
    combinations = float(settings.sw.window + 1) ** num_goods
    if combinations > settings.sw.size_cap:
        raise ConfigError(
            f"sliding window of {settings.sw.window} over {num_goods} goods needs "
            f"{combinations:.3g} combinations, above sw.size_cap={settings.sw.size_cap}")


def cmd_backtest(args) -> int:
    """Historical replay, one cumulative profit column per policy"""
    manager = load_manager(args)
    apply_overrides(manager, 'backtest', args)
    settings = manager.settings
    bt = settings.backtest
    train_start, score_start, score_end = settings.score_range()

    if 'oracle' in bt.policies:
        raise ConfigError("the oracle policy has no meaning on historical data")

    panel = load_panel(args.data)
    if train_start is not None:
        panel = panel.between(train_start, None)
    transform = SellTransform(bt.price_cap)
    _check_sliding_window(bt.policies, panel.num_goods, settings)

    try:
        policies = [make_policy(name, panel.num_goods, bt.budget, settings.schedule_params(),
                                size_cap=settings.sw.size_cap) for name in bt.policies]
    except SizeError as e:
        raise ConfigError(str(e))
    logger.info("Backtesting %s on %d thread(s)", bt.policies, bt.threads)
    results = run_backtests(panel, policies, bt.budget, threads=bt.threads,
                            progress_callback=progress_bar(not args.quiet, "policies"),
                            lag_days=bt.lag_days, transform=transform,
                            score_start=score_start, score_end=score_end)
    dpds_policy: Optional[DPDSPolicy] = next(
        (p for p in policies if isinstance(p, DPDSPolicy)), None)

    out = output_dir(args)
    csv_path = out / 'profit.csv'
    write_profit_csv(results, csv_path)
    outputs = {'profit.csv': file_hash(csv_path)}
    if args.save_snapshot and dpds_policy is not None:
        snapshot_path = out / 'dpds_snapshot.json'
        with open(snapshot_path, 'w') as f:
            json.dump(dpds_policy.snapshot(), f)
        outputs['dpds_snapshot.json'] = file_hash(snapshot_path)

    manager.export_settings(out / 'manifest.json', extra={
        'command': 'backtest',
        'config_sha256': file_hash(args.config) if args.config else None,
        'data_sha256': {str(p): file_hash(p) for p in args.data},
        'goods': panel.good_labels(),
        'outputs': outputs,
    })
    for result in results:
        print(f"{result.policy:>10}: total profit {result.total_profit:,.2f} over {len(result.days)} days")
    return EXIT_OK


def cmd_solve(args) -> int:
    """Allocate a budget from a payoff snapshot"""
    try:
        with open(args.snapshot) as f:
            data = json.load(f)
        payoffs = [EmpiricalPayoff.from_dict(g) for g in data['goods']]
        budget = float(args.budget if args.budget is not None else data['budget'])
        alpha = int(args.alpha if args.alpha is not None else data.get('alpha', 100))
    except (KeyError, TypeError, json.JSONDecodeError) as e:
        raise ConfigError(f"{args.snapshot}: malformed payoff snapshot ({e})")

    try:
        grid = BudgetGrid(budget, alpha)
    except DomainError as e:
        raise ConfigError(f"solve: {e}")
    values, saturations = grid_payoffs(payoffs, grid)
    bids, value = solve_dp(values, saturations, grid)
    print(f"grid alpha={alpha}, budget={budget}")
    print("dp bids:   " + " ".join(f"{b:.6g}" for b in bids))
    print(f"dp value:  {value:.10g}")

    if args.exact:
        exact_bids, exact_value = brute_force_mckp([p.breakpoint_pairs() for p in payoffs], budget)
        print("exact bids: " + " ".join(f"{b:.6g}" for b in exact_bids))
        print(f"exact value: {exact_value:.10g}")
    return EXIT_OK


def cmd_oracle(args) -> int:
    """Water-filling optimum of the exponential / uniform model"""
    manager = load_manager(args)
    settings = manager.settings
    lambda_bar = args.lambda_bar or settings.model.lambda_bar
    pi_bar = args.pi_bar or settings.model.pi_bar
    try:
        model = ExpUniformModel(lambda_bar, pi_bar, settings.model.spot_halfwidth)
    except ValueError as e:
        raise ConfigError(str(e))

    if args.multiplier is not None:
        print(f"gamma*={args.multiplier:g} -> budget {budget_for_multiplier(model, args.multiplier):.6f}")
        if args.budget is None:
            return EXIT_OK

    budget = args.budget if args.budget is not None else settings.simulation.budget
    x_star, gamma = waterfill_optimal(model, budget)
    print("x*:     " + " ".join(f"{x:.6f}" for x in x_star))
    print(f"gamma*: {gamma:.6f}")
    print(f"r(x*):  {expected_payoff(model, x_star):.6f}")
    return EXIT_OK


def cmd_benchmark(args) -> int:
    """Per-period DPDS wall time on a synthetic market"""
    manager = load_manager(args)
    schedule = manager.settings.schedule_params()
    if args.schedule:
        schedule.mode = args.schedule
        schedule.validate()
    timings = benchmark_dpds(args.goods, args.horizon, schedule, budget=args.budget or 100.0,
                             seed=args.seed or 0,
                             progress_callback=progress_bar(not args.quiet, "periods"))
    out = output_dir(args)
    csv_path = out / 'benchmark.csv'
    timings.to_csv(csv_path, index=False, float_format='%.6g')

    # growth exponent of per-period time in t over the second half of the run
    tail = timings[timings['t'] > args.horizon // 2]
    slope = float('nan')
    if len(tail) > 2:
        slope = float(np.polyfit(np.log(tail['t']), np.log(tail['seconds'].clip(lower=1e-9)), 1)[0])
    print(f"{args.goods} goods, T={args.horizon}: total {timings['seconds'].sum():.2f}s, "
          f"last period {timings['seconds'].iloc[-1] * 1e3:.2f}ms, log-log slope {slope:.2f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Budget-constrained bidding in repeated uniform-price auctions")
    parser.add_argument('--version', action='version', version=f"%(prog)s {APP_VERSION}")
    parser.add_argument('--verbose', action='store_true', help="Debug logging")
    parser.add_argument('--quiet', action='store_true', help="No progress bars")
    sub = parser.add_subparsers(dest='command', required=True)

    def common(p, budget=True, lag=True, seed=True, threads=True):
        p.add_argument('--config', help="JSON settings file")
        p.add_argument('--out-dir', default='results', help="Directory for CSV and manifest")
        if seed:
            p.add_argument('--seed', type=int)
        if threads:
            p.add_argument('--threads', type=int, help="Worker threads")
        if budget:
            p.add_argument('--budget', type=float)
        if lag:
            p.add_argument('--lag', type=int)

    p = sub.add_parser('simulate', help="Monte-Carlo regret experiment")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser('backtest', help="Historical price replay")
    common(p, seed=False)
    p.add_argument('--data', nargs='+', required=True, help="Price CSV files")
    p.add_argument('--save-snapshot', action='store_true', help="Write the final DPDS payoff state")
    p.set_defaults(func=cmd_backtest)

    p = sub.add_parser('solve', help="Allocate from a payoff snapshot")
    p.add_argument('snapshot', help="JSON snapshot with budget, alpha and per-good payoffs")
    p.add_argument('--budget', type=float)
    p.add_argument('--alpha', type=int)
    p.add_argument('--exact', action='store_true', help="Also solve the exact knapsack")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser('oracle', help="Known-distribution optimum")
    p.add_argument('--config', help="JSON settings file (model section)")
    p.add_argument('--lambda-bar', type=float, nargs='+')
    p.add_argument('--pi-bar', type=float, nargs='+')
    p.add_argument('--budget', type=float)
    p.add_argument('--multiplier', type=float, help="Print the budget spent at this multiplier")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser('benchmark', help="DPDS per-period timing")
    common(p, lag=False, threads=False)
    p.add_argument('--goods', type=int, default=264)
    p.add_argument('--horizon', type=int, default=2000)
    p.add_argument('--schedule', choices=['power', 'linear', 'fixed'])
    p.set_defaults(func=cmd_benchmark)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format='%(asctime)s %(levelname)s %(name)s: %(message)s',
    )
    if getattr(args, 'threads', None) is None and args.command == 'simulate' and not getattr(args, 'config', None):
        args.threads = default_threads()

    try:
        return args.func(args)
    except ConfigError as e:
        logger.error("Configuration error: %s", e)
        return EXIT_CONFIG
    except (BiddingError, OSError, ValueError) as e:
        logger.error("%s", e)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
