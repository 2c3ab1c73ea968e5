#!/usr/bin/env python3
"""
Market Data Module
Loads day-ahead / real-time zonal hourly prices, turns each day into one
auction round over buy and sell goods, and backtests policies on realized
profit with a day-lag information rule
"""

import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from datetime import date, timedelta
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from errors import DataGapError, PanelIntegrityError, PanelParseError, StructuralError
from payoff import MarketObservation

logger = logging.getLogger(__name__)

PANEL_COLUMNS = ['date', 'location', 'hour', 'da_price', 'rt_price']
HOURS = 24
SIDES = ('buy', 'sell')
DEFAULT_PRICE_CAP = 1000.0
TINY_PRICE = np.finfo(float).tiny


@dataclass(frozen=True)
class SellTransform:
    """Maps sell bids into buy coordinates: x -> cap - x for bids and both prices"""
    price_cap: float = DEFAULT_PRICE_CAP

    def validate(self, panel: 'PricePanel') -> 'SellTransform':
        highest = panel.frame['da_price'].max()
        if highest > self.price_cap:
            raise PanelIntegrityError(
                f"day-ahead price {highest} exceeds the price cap {self.price_cap}")
        return self

    def clearing(self, da_price: np.ndarray) -> np.ndarray:
        # a DA price exactly at the cap would give a zero sell clearing price
        return np.maximum(self.price_cap - da_price, TINY_PRICE)

    def spot(self, rt_price: np.ndarray) -> np.ndarray:
        return self.price_cap - rt_price


@dataclass
class PricePanel:
    """Validated price records, sorted by date, location and hour"""
    frame: pd.DataFrame
    locations: List[str]
    complete_days: List[date]

    @property
    def days(self) -> List[date]:
        return sorted(self.frame['date'].unique())

    @property
    def num_goods(self) -> int:
        return len(self.locations) * HOURS * len(SIDES)

    def good_labels(self) -> List[str]:
        """Good ordering: location-major, then hour, then side"""
        return [f"{loc}:{hour:02d}:{side}"
                for loc in self.locations for hour in range(HOURS) for side in SIDES]

    def between(self, first_day: Optional[date] = None, last_day: Optional[date] = None) -> 'PricePanel':
        """Panel restricted to days in [first_day, last_day] (open ends allowed)"""
        keep = pd.Series(True, index=self.frame.index)
        if first_day is not None:
            keep &= self.frame['date'] >= first_day
        if last_day is not None:
            keep &= self.frame['date'] <= last_day
        frame = self.frame[keep].reset_index(drop=True)
        complete = [d for d in self.complete_days
                    if (first_day is None or d >= first_day) and (last_day is None or d <= last_day)]
        return PricePanel(frame, list(self.locations), complete)

    def truncate(self, last_day: date) -> 'PricePanel':
        """Panel restricted to days on or before last_day"""
        return self.between(None, last_day)


def _parse_file(path) -> pd.DataFrame:
    try:
        raw = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except pd.errors.ParserError as e:
        raise PanelParseError(path, 0, f"unreadable CSV: {e}")
    missing = [c for c in PANEL_COLUMNS if c not in raw.columns]
    if missing:
        raise PanelParseError(path, 1, f"missing columns {missing}")

    records = []
    for i, row in enumerate(raw[PANEL_COLUMNS].itertuples(index=False)):
        line = i + 2
        day_text, location, hour_text, da_text, rt_text = (str(v).strip() for v in row)
        try:
            day = date.fromisoformat(day_text)
        except ValueError:
            raise PanelParseError(path, line, f"bad date '{day_text}'")
        if not location:
            raise PanelParseError(path, line, "empty location")
        try:
            hour = int(hour_text)
        except ValueError:
            raise PanelParseError(path, line, f"bad hour '{hour_text}'")
        if not 0 <= hour < HOURS:
            raise PanelParseError(path, line, f"hour {hour} outside 0-23")

        if da_text == '' or rt_text == '':
            # kept until the duplicate check in load_panel has seen its key
            records.append((day, location, hour, np.nan, np.nan, str(path), line, True))
            continue
        try:
            da_price = float(da_text)
            rt_price = float(rt_text)
        except ValueError:
            raise PanelParseError(path, line, f"bad price '{da_text}' / '{rt_text}'")
        if not np.isfinite(da_price) or not np.isfinite(rt_price):
            raise PanelParseError(path, line, "prices must be finite")
        if da_price <= 0:
            raise PanelParseError(path, line, f"day-ahead price must be positive, got {da_price}")
        records.append((day, location, hour, da_price, rt_price, str(path), line, False))

    return pd.DataFrame(records, columns=PANEL_COLUMNS + ['source', 'line', 'blank'])


def load_panel(paths: Union[str, Sequence]) -> PricePanel:
    """
    Read one or more price CSVs (header date,location,hour,da_price,rt_price).

    Rows with a missing price are dropped with a warning, and a day that no
    longer has every location-hour is kept out of scoring.
    """
    if isinstance(paths, (str, bytes)) or not isinstance(paths, Sequence):
        paths = [paths]
    frames = [_parse_file(p) for p in paths]
    frame = (pd.concat(frames, ignore_index=True) if frames
             else pd.DataFrame(columns=PANEL_COLUMNS + ['source', 'line', 'blank']))

    keys = ['date', 'location', 'hour']
    duplicated = frame.duplicated(subset=keys, keep=False)
    if duplicated.any():
        first = frame[duplicated].iloc[0]
        raise PanelIntegrityError(
            f"duplicate record for {first['date']} {first['location']} hour {first['hour']} "
            f"({int(duplicated.sum())} rows, first at {first['source']}:{first['line']})")

    blank = frame['blank'].astype(bool)
    for row in frame[blank].itertuples(index=False):
        logger.warning("%s:%d: missing price for %s %s hour %d, row dropped",
                       row.source, row.line, row.date, row.location, row.hour)
    frame = frame[~blank].drop(columns=['blank'])

    frame = frame.sort_values(keys, kind='stable').reset_index(drop=True)
    locations = sorted(frame['location'].unique())

    expected = len(locations) * HOURS
    per_day = frame.groupby('date').size()
    complete = [d for d, n in per_day.items() if n == expected]
    for d, n in per_day.items():
        if n != expected:
            logger.warning("%s has %d of %d location-hours; day excluded from scoring", d, n, expected)

    logger.info("Loaded %d records, %d locations, %d complete days",
                len(frame), len(locations), len(complete))
    return PricePanel(frame.drop(columns=['source', 'line']), locations, complete)


def to_goods(panel: PricePanel, transform: SellTransform = SellTransform()) -> Dict[date, MarketObservation]:
    """
    One MarketObservation per complete day over 2 * locations * 24 goods.
    Buy goods carry (da, rt); sell goods carry (cap - da, cap - rt).
    """
    transform.validate(panel)
    loc_index = {loc: i for i, loc in enumerate(panel.locations)}
    complete = set(panel.complete_days)
    rounds = {}
    for day, rows in panel.frame.groupby('date', sort=True):
        if day not in complete:
            continue
        base = (rows['location'].map(loc_index).to_numpy() * HOURS + rows['hour'].to_numpy()) * 2
        da = rows['da_price'].to_numpy(dtype=float)
        rt = rows['rt_price'].to_numpy(dtype=float)

        clearing = np.empty(panel.num_goods)
        spot = np.empty(panel.num_goods)
        clearing[base], spot[base] = da, rt
        clearing[base + 1], spot[base + 1] = transform.clearing(da), transform.spot(rt)
        rounds[day] = MarketObservation(clearing, spot)
    return rounds


@dataclass
class BacktestResult:
    """Realized profit per scored day"""
    policy: str
    days: List[date]
    daily_profit: np.ndarray
    bids: Optional[List[np.ndarray]] = None

    @property
    def cumulative_profit(self) -> np.ndarray:
        return np.cumsum(self.daily_profit)

    @property
    def total_profit(self) -> float:
        return float(self.daily_profit.sum())

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            'date': [d.isoformat() for d in self.days],
            'policy': self.policy,
            'daily_profit': self.daily_profit,
            'cum_profit': self.cumulative_profit,
        })


def write_profit_csv(results: Sequence[BacktestResult], path) -> None:
    frame = pd.concat([r.to_frame() for r in results], ignore_index=True)
    frame.to_csv(path, index=False, float_format='%.12g')
    logger.info("Profit trajectory written to %s", path)


def realized_profit(observation: MarketObservation, bid: np.ndarray) -> float:
    """Profit of one day's bid: spread summed over the cleared goods"""
    return observation.payoff(bid)


def _check_gaps(start: date, end: date, present: set):
    missing = []
    day = start
    while day <= end:
        if day not in present:
            missing.append(day)
        day += timedelta(days=1)
    if missing:
        raise DataGapError(missing)


def backtest(panel: PricePanel, policy, budget: float, lag_days: int = 2,
             transform: SellTransform = SellTransform(),
             score_start: Optional[date] = None, score_end: Optional[date] = None,
             keep_bids: bool = False,
             progress_callback: Optional[Callable[[int, int], None]] = None) -> BacktestResult:
    """
    Replay the panel day by day. Before bidding on day d the policy has seen
    every complete day up to d - lag_days; days before score_start only train.

    Args:
        policy: BiddingPolicy over panel.num_goods goods (its budget is used as is)
        budget: checked against the policy's own budget
    """
    if lag_days < 1:
        raise StructuralError("lag_days must be at least 1")
    if abs(policy.budget - budget) > 1e-9 * max(1.0, budget):
        raise StructuralError(f"policy budget {policy.budget} differs from backtest budget {budget}")
    if policy.num_goods != panel.num_goods:
        raise StructuralError(f"policy has {policy.num_goods} goods, panel has {panel.num_goods}")

    rounds = to_goods(panel, transform)
    days = panel.days
    if not days:
        raise DataGapError([])
    score_start = score_start or days[0] + timedelta(days=lag_days)
    score_end = score_end or days[-1]
    first_needed = score_start - timedelta(days=lag_days)
    if first_needed < days[0]:
        raise DataGapError([first_needed + timedelta(days=i) for i in range((days[0] - first_needed).days)])
    if score_start > days[-1]:
        raise DataGapError([days[-1] + timedelta(days=i + 1) for i in range((score_start - days[-1]).days)])
    _check_gaps(days[0], score_end, set(days))

    scored_days = [d for d in sorted(rounds) if score_start <= d <= score_end]
    pending = [d for d in sorted(rounds) if d <= score_end]
    fed = 0

    profits, bids = [], []
    for n, day in enumerate(scored_days):
        horizon = day - timedelta(days=lag_days)
        while fed < len(pending) and pending[fed] <= horizon:
            policy.observe(rounds[pending[fed]])
            fed += 1
        bid = policy.propose()
        profits.append(realized_profit(rounds[day], bid))
        if keep_bids:
            bids.append(bid)
        logger.debug("%s %s: profit %.2f, spent %.2f", policy.name, day, profits[-1], bid.sum())
        if progress_callback:
            progress_callback(n + 1, len(scored_days))

    return BacktestResult(
        policy=policy.name,
        days=scored_days,
        daily_profit=np.asarray(profits, dtype=float),
        bids=bids if keep_bids else None,
    )


def run_backtests(panel: PricePanel, policies: Sequence, budget: float, threads: int = 1,
                  progress_callback: Optional[Callable[[int, int], None]] = None,
                  **options) -> List[BacktestResult]:
    """
    Backtest several independent policies on the same panel, at most
    `threads` at a time. Results come back in the order of `policies`.
    `options` are passed to backtest().
    """
    if threads < 1:
        raise StructuralError("threads must be at least 1")
    results: List[Optional[BacktestResult]] = [None] * len(policies)
    completed = 0

    if threads == 1 or len(policies) < 2:
        for i, policy in enumerate(policies):
            logger.info("Backtesting %s", policy.name)
            results[i] = backtest(panel, policy, budget, **options)
            completed += 1
            if progress_callback:
                progress_callback(completed, len(policies))
    else:
        with ThreadPoolExecutor(max_workers=min(threads, len(policies))) as executor:
            future_to_index = {
                executor.submit(backtest, panel, policy, budget, **options): i
                for i, policy in enumerate(policies)
            }
            for future in as_completed(future_to_index):
                i = future_to_index[future]
                results[i] = future.result()
                logger.info("Backtest of %s finished", policies[i].name)
                completed += 1
                if progress_callback:
                    progress_callback(completed, len(policies))
    return results
