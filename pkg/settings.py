#!/usr/bin/env python3
"""
Settings Configuration for the Auction Bidder
Experiment settings with JSON persistence and validation
"""

import json
import logging
from dataclasses import asdict, dataclass, field, fields
from datetime import date
from pathlib import Path
from typing import Any, Dict, List, Optional

from errors import ConfigError
from oracle import ExpUniformModel, LowerBoundModel, lower_bound_instance, reference_instance
from policies import POLICY_NAMES, SCHEDULE_MODES, ScheduleParams

logger = logging.getLogger(__name__)

APP_VERSION = "1.0.0"

# reference market used for the water-filling budgets
REFERENCE_LAMBDA_BAR = [4.0, 6.0, 8.0, 8.0, 4.0]
REFERENCE_PI_BAR = [5.0, 8.0, 8.0, 9.0, 3.0]


@dataclass
class ModelSettings:
    """Known price distribution for simulations"""
    kind: str = "exp_uniform"  # "exp_uniform" or "lower_bound"
    lambda_bar: List[float] = field(default_factory=lambda: list(REFERENCE_LAMBDA_BAR))
    pi_bar: List[float] = field(default_factory=lambda: list(REFERENCE_PI_BAR))
    spot_halfwidth: float = 1.0
    lb_horizon: int = 0  # 0 means: use the simulation horizon
    lb_offset: str = "plus"  # "plus", "minus" or "half"


@dataclass
class SimulationSettings:
    """Monte-Carlo experiment"""
    horizon: int = 2000
    runs: int = 200
    budget: float = 13.845
    lag: int = 1
    seed: int = 12345
    threads: int = 1
    keep_raw: bool = False
    policies: List[str] = field(default_factory=lambda: ["dpds", "sw", "sa"])


@dataclass
class BacktestSettings:
    """Historical replay"""
    budget: float = 100000.0
    lag_days: int = 2
    price_cap: float = 1000.0
    train_start: str = ""
    score_start: str = ""
    score_end: str = ""
    threads: int = 1
    policies: List[str] = field(default_factory=lambda: ["dpds", "ucbid_gr", "sa"])


@dataclass
class DPDSSettings:
    """Grid schedule of the DP policy"""
    schedule: str = "linear"  # "power", "linear" or "fixed"
    gamma: float = 0.5
    alpha_scale: float = 1.0
    fixed_alpha: int = 100


@dataclass
class SASettings:
    """Kiefer-Wolfowitz step sizes a_t = a_scale/t, c_t = c_scale/t^(1/4)"""
    a_scale: float = 5.5
    c_scale: float = 2.5
    c_floor: float = 1e-12


@dataclass
class SWSettings:
    """Sliding-window benchmark"""
    window: int = 10
    size_cap: int = 10_000_000


SECTIONS = {
    'model': ModelSettings,
    'simulation': SimulationSettings,
    'backtest': BacktestSettings,
    'dpds': DPDSSettings,
    'sa': SASettings,
    'sw': SWSettings,
}


def _parse_date(text: str, key: str) -> Optional[date]:
    if not text:
        return None
    try:
        return date.fromisoformat(text)
    except ValueError:
        raise ConfigError(f"backtest.{key}: expected an ISO date, got '{text}'")


@dataclass
class ApplicationSettings:
    """Complete experiment settings"""
    model: ModelSettings
    simulation: SimulationSettings
    backtest: BacktestSettings
    dpds: DPDSSettings
    sa: SASettings
    sw: SWSettings

    def __init__(self):
        self.model = ModelSettings()
        self.simulation = SimulationSettings()
        self.backtest = BacktestSettings()
        self.dpds = DPDSSettings()
        self.sa = SASettings()
        self.sw = SWSettings()

    def to_dict(self) -> Dict[str, Any]:
        return {name: asdict(getattr(self, name)) for name in SECTIONS}

    def schedule_params(self) -> ScheduleParams:
        return ScheduleParams(
            mode=self.dpds.schedule,
            gamma=self.dpds.gamma,
            alpha_scale=self.dpds.alpha_scale,
            fixed_alpha=self.dpds.fixed_alpha,
            a_scale=self.sa.a_scale,
            c_scale=self.sa.c_scale,
            c_floor=self.sa.c_floor,
            window=self.sw.window,
        )

    def price_model(self):
        """ExpUniformModel or LowerBoundModel described by the model section"""
        m = self.model
        if m.kind == "exp_uniform":
            try:
                return ExpUniformModel(m.lambda_bar, m.pi_bar, m.spot_halfwidth)
            except ValueError as e:
                raise ConfigError(f"model: {e}")
        if m.kind == "lower_bound":
            horizon = m.lb_horizon or self.simulation.horizon
            (minus, plus), _ = lower_bound_instance(horizon)
            return {'minus': minus, 'plus': plus, 'half': reference_instance(horizon)}[m.lb_offset]
        raise ConfigError(f"model.kind must be 'exp_uniform' or 'lower_bound', got '{m.kind}'")

    def score_range(self):
        b = self.backtest
        return (_parse_date(b.train_start, 'train_start'),
                _parse_date(b.score_start, 'score_start'),
                _parse_date(b.score_end, 'score_end'))

    def validate(self) -> 'ApplicationSettings':
        """Raise ConfigError on the first invalid value"""
        s, b = self.simulation, self.backtest
        if self.model.kind not in ("exp_uniform", "lower_bound"):
            raise ConfigError(f"model.kind must be 'exp_uniform' or 'lower_bound', got '{self.model.kind}'")
        if self.model.lb_offset not in ("plus", "minus", "half"):
            raise ConfigError("model.lb_offset must be 'plus', 'minus' or 'half'")
        if self.model.lb_horizon < 0:
            raise ConfigError("model.lb_horizon must be non-negative")
        if s.horizon < 1 or s.runs < 1:
            raise ConfigError("simulation.horizon and simulation.runs must be at least 1")
        if s.lag < 1 or b.lag_days < 1:
            raise ConfigError("lags must be at least 1")
        if s.budget <= 0 or b.budget <= 0:
            raise ConfigError("budgets must be positive")
        if s.threads < 1 or b.threads < 1:
            raise ConfigError("threads must be at least 1")
        if b.price_cap <= 0:
            raise ConfigError("backtest.price_cap must be positive")
        for section, names in (('simulation', s.policies), ('backtest', b.policies)):
            unknown = [n for n in names if n not in POLICY_NAMES]
            if unknown:
                raise ConfigError(f"{section}.policies: unknown {unknown}, expected from {POLICY_NAMES}")
            if not names:
                raise ConfigError(f"{section}.policies is empty")
        if self.dpds.schedule not in SCHEDULE_MODES:
            raise ConfigError(f"dpds.schedule must be one of {SCHEDULE_MODES}")
        if self.sw.size_cap < 1:
            raise ConfigError("sw.size_cap must be positive")
        self.schedule_params().validate()
        self.price_model()
        train, start, end = self.score_range()
        if start and end and start > end:
            raise ConfigError("backtest.score_start is after backtest.score_end")
        if train and start and train > start:
            raise ConfigError("backtest.train_start is after backtest.score_start")
        return self


def _coerce(section: str, key: str, current: Any, value: Any) -> Any:
    """Type-check a loaded value against the default's type"""
    if isinstance(current, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{section}.{key}: expected true/false, got {value!r}")
        return value
    if isinstance(current, int):
        if isinstance(value, bool) or not isinstance(value, int):
            if isinstance(value, float) and value.is_integer():
                return int(value)
            raise ConfigError(f"{section}.{key}: expected an integer, got {value!r}")
        return value
    if isinstance(current, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{section}.{key}: expected a number, got {value!r}")
        return float(value)
    if isinstance(current, str):
        if not isinstance(value, str):
            raise ConfigError(f"{section}.{key}: expected a string, got {value!r}")
        return value
    if isinstance(current, list):
        if not isinstance(value, list):
            raise ConfigError(f"{section}.{key}: expected a list, got {value!r}")
        return list(value)
    return value


class SettingsManager:
    """Settings persistence and management"""

    def __init__(self, config_file: Optional[str] = None):
        self.config_file = Path(config_file) if config_file else None
        self.settings = ApplicationSettings()

    def load_settings(self, config_file: Optional[str] = None) -> ApplicationSettings:
        """Load and validate settings from a JSON file"""
        if config_file:
            self.config_file = Path(config_file)
        if self.config_file is None:
            raise ConfigError("no configuration file given")
        try:
            with open(self.config_file, 'r') as f:
                data = json.load(f)
        except FileNotFoundError:
            raise ConfigError(f"configuration file not found: {self.config_file}")
        except json.JSONDecodeError as e:
            raise ConfigError(f"{self.config_file}: invalid JSON at line {e.lineno}: {e.msg}")

        self.settings = self.settings_from_dict(data)
        logger.info("Loaded settings from %s", self.config_file)
        return self.settings

    @staticmethod
    def settings_from_dict(data: Dict[str, Any]) -> ApplicationSettings:
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a JSON object of sections")
        new_settings = ApplicationSettings()

        for section, values in data.items():
            if section not in SECTIONS:
                raise ConfigError(f"unknown settings section: {section}")
            if not isinstance(values, dict):
                raise ConfigError(f"section '{section}' must be an object")
            section_obj = getattr(new_settings, section)
            known = {f.name for f in fields(section_obj)}
            for key, value in values.items():
                if key not in known:
                    logger.warning("Unknown setting key ignored: %s.%s", section, key)
                    continue
                setattr(section_obj, key, _coerce(section, key, getattr(section_obj, key), value))

        return new_settings.validate()

    def save_settings(self, config_file: Optional[str] = None) -> Path:
        """Save current settings to file"""
        path = Path(config_file) if config_file else self.config_file
        if path is None:
            raise ConfigError("no configuration file given")
        with open(path, 'w') as f:
            json.dump(self.settings.to_dict(), f, indent=2, sort_keys=True)
        return path

    def update_setting(self, section: str, key: str, value: Any) -> None:
        """Update a specific setting and re-validate"""
        if section not in SECTIONS:
            raise ConfigError(f"unknown settings section: {section}")
        section_obj = getattr(self.settings, section)
        if not hasattr(section_obj, key):
            raise ConfigError(f"unknown setting key: {section}.{key}")
        setattr(section_obj, key, _coerce(section, key, getattr(section_obj, key), value))
        self.settings.validate()

    def get_setting(self, section: str, key: str, default: Any = None) -> Any:
        """Get a specific setting value"""
        section_obj = getattr(self.settings, section, None)
        return getattr(section_obj, key, default) if section_obj is not None else default

    def reset_to_defaults(self) -> None:
        self.settings = ApplicationSettings()

    def export_settings(self, file_path, extra: Optional[Dict[str, Any]] = None) -> Path:
        """Write the resolved settings plus run metadata (the run manifest)"""
        data = {
            'tool_version': APP_VERSION,
            'settings': self.settings.to_dict(),
        }
        if extra:
            data.update(extra)
        path = Path(file_path)
        with open(path, 'w') as f:
            json.dump(data, f, indent=2, sort_keys=True)
        logger.info("Manifest written to %s", path)
        return path

