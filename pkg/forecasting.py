"""
Day-ahead net-load forecasting and the real-time persistence forecasters.

The day-ahead gross load is the mean of the most similar historical days
(same day type, recent, close in irradiance and temperature). PV is either
replayed from a forecast file or approximated by a clear-sky half-sine.
In real time, net load and aFRR premiums are assumed to persist.
"""

import logging
import math
from dataclasses import dataclass
from datetime import date, datetime, time
from enum import Enum
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from sklearn.preprocessing import StandardScaler

from core import INTERVAL_SECONDS, SUBSTEPS_PER_INTERVAL, TimeGrid, TimeSeries, Unit, read_series_csv
from errors import ConfigError, GridMismatch, InsufficientHistory, InvalidLength, InvalidValue
from markets import PremiumValue, ThresholdedPremium, BLOCKED

logger = logging.getLogger(__name__)

INDEX_COLUMNS = ("date", "day_type", "mean_irradiance", "mean_temperature")


class DayType(str, Enum):
    WORKING = "working"
    NON_WORKING = "non-working"

    @classmethod
    def of(cls, day: date) -> "DayType":
        return cls.WORKING if day.weekday() < 5 else cls.NON_WORKING


@dataclass(frozen=True)
class HistoryDay:
    """One measured day of gross load and PV with its daily weather means"""

    date: date
    day_type: DayType
    mean_irradiance: float
    mean_temperature: float
    gross_load: TimeSeries
    pv: TimeSeries

    def __post_init__(self):
        if len(self.gross_load) != len(self.pv):
            raise InvalidLength(f"{self.date}: gross load and PV differ in length")
        if not math.isfinite(self.mean_irradiance) or self.mean_irradiance < 0:
            raise InvalidValue(f"{self.date}: irradiance must be non-negative")
        if not math.isfinite(self.mean_temperature):
            raise InvalidValue(f"{self.date}: temperature must be finite")


@dataclass(frozen=True)
class ForecastTarget:
    day_type: DayType
    mean_irradiance: float
    mean_temperature: float
    date: Optional[date] = None


@dataclass(frozen=True)
class ForecastConfig:
    """Similar-day selection settings

    Args:
        n_similar (int): Number of days averaged (N)
        meteo_weights (Tuple[float, float]): Weights on normalized (irradiance, temperature)
        recency_window (int): Only this many most recent matching days are considered
    """

    n_similar: int = 5
    meteo_weights: Tuple[float, float] = (1.0, 1.0)
    recency_window: int = 60

    def __post_init__(self):
        if self.n_similar < 1:
            raise InvalidValue("n_similar must be at least 1")
        if self.recency_window < self.n_similar:
            raise InvalidValue("recency_window must not be smaller than n_similar")
        if len(self.meteo_weights) != 2 or any(w < 0 or not math.isfinite(w) for w in self.meteo_weights):
            raise InvalidValue("meteo_weights must be two non-negative numbers")


def select_similar_days(history: Sequence[HistoryDay], target: ForecastTarget, cfg: ForecastConfig) -> List[HistoryDay]:
    """Pick the N most similar days of the target's day type

    Candidates are the most recent matching days (``cfg.recency_window``);
    among them, the z-score normalized weighted Euclidean distance on
    (irradiance, temperature) decides, ties going to the day closest in time.

    Args:
        history (Sequence[HistoryDay]): Available days
        target (ForecastTarget): Day type and weather of the day to forecast
        cfg (ForecastConfig): Selection settings

    Returns:
        List[HistoryDay]: Selected days, most similar first
    """
    matching = [d for d in history if d.day_type == target.day_type]
    if len(matching) < cfg.n_similar:
        raise InsufficientHistory(
            f"{len(matching)} {target.day_type.value} days available, {cfg.n_similar} required"
        )

    def age(day: HistoryDay) -> float:
        if target.date is None:
            return -day.date.toordinal()
        return abs(target.date.toordinal() - day.date.toordinal())

    candidates = sorted(matching, key=age)[: cfg.recency_window]
    features = np.array([[d.mean_irradiance, d.mean_temperature] for d in candidates], dtype=float)
    scaler = StandardScaler().fit(features)
    z = scaler.transform(features)
    z_target = scaler.transform(np.array([[target.mean_irradiance, target.mean_temperature]], dtype=float))[0]
    weights = np.asarray(cfg.meteo_weights, dtype=float)
    distance = np.sqrt(((z - z_target) ** 2 * weights).sum(axis=1))

    order = sorted(range(len(candidates)), key=lambda i: (round(float(distance[i]), 12), age(candidates[i])))
    selected = [candidates[i] for i in order[: cfg.n_similar]]
    logger.debug(f"Similar days for {target.date or target.day_type.value}: {[str(d.date) for d in selected]}")
    return selected


def gross_load_forecast(selected: Sequence[HistoryDay], grid: Optional[TimeGrid] = None) -> TimeSeries:
    """Pointwise mean of the selected days' gross load

    Historical days sit on their own dates, so only step length and count
    must agree; the result is placed on ``grid`` (default: the first day's).
    """
    if not selected:
        raise InvalidLength("no days selected")
    first = selected[0].gross_load.grid
    for day in selected[1:]:
        g = day.gross_load.grid
        if g.step_seconds != first.step_seconds or g.steps != first.steps:
            raise GridMismatch(f"{day.date}: grid {g.step_seconds}s x {g.steps} differs from {first}")
    target = grid or first
    if target.step_seconds != first.step_seconds or target.steps != first.steps:
        raise GridMismatch("target grid does not match the history resolution")
    stacked = np.vstack([np.asarray(d.gross_load.values) for d in selected])
    return TimeSeries(target, stacked.mean(axis=0), Unit.KW)


def net_load_forecast(gross: TimeSeries, pv: TimeSeries) -> TimeSeries:
    gross.require_same_grid(pv, "gross load and PV forecasts")
    return gross.with_values(np.asarray(gross.values) - np.asarray(pv.values))


def clear_sky_pv(grid: TimeGrid, capacity_kw: float, sunrise: time = time(6, 0), sunset: time = time(20, 0)) -> TimeSeries:
    """Half-sine PV proxy between sunrise and sunset, evaluated at step midpoints"""
    if capacity_kw < 0:
        raise InvalidValue("PV capacity must be non-negative")
    rise = sunrise.hour + sunrise.minute / 60.0
    set_ = sunset.hour + sunset.minute / 60.0
    if set_ <= rise:
        raise InvalidValue("sunset must come after sunrise")
    stamps = grid.timestamps()
    hours = stamps.hour + stamps.minute / 60.0 + stamps.second / 3600.0 + grid.step_hours / 2.0
    phase = (np.asarray(hours) - rise) / (set_ - rise)
    profile = np.where((phase > 0.0) & (phase < 1.0), np.sin(np.pi * np.clip(phase, 0.0, 1.0)), 0.0)
    return TimeSeries(grid, capacity_kw * profile, Unit.KW)


def load_history(directory: Union[str, Path], step_seconds: int = INTERVAL_SECONDS) -> List[HistoryDay]:
    """Read ``index.csv`` plus ``<date>_gross.csv`` / ``<date>_pv.csv`` per listed day

    Args:
        directory (Union[str, Path]): History directory
        step_seconds (int, optional): Resolution of the per-day files. Defaults to 15 min

    Returns:
        List[HistoryDay]: Days in index order
    """
    directory = Path(directory)
    index_path = directory / "index.csv"
    if not index_path.is_file():
        raise ConfigError(f"history index not found: {index_path}")
    index = pd.read_csv(index_path, encoding="utf-8", dtype={"date": str})
    missing = [c for c in INDEX_COLUMNS if c not in index.columns]
    if missing:
        raise ConfigError(f"{index_path}: missing columns {', '.join(missing)}")

    days = []
    for row in index.itertuples(index=False):
        gross_path = directory / f"{row.date}_gross.csv"
        pv_path = directory / f"{row.date}_pv.csv"
        for path in (gross_path, pv_path):
            if not path.is_file():
                raise ConfigError(f"history file not found: {path}")
        try:
            day_type = DayType(str(row.day_type).strip().lower())
        except ValueError:
            raise ConfigError(f"{index_path}: unknown day_type {row.day_type!r}")
        days.append(
            HistoryDay(
                date=datetime.strptime(row.date, "%Y-%m-%d").date(),
                day_type=day_type,
                mean_irradiance=float(row.mean_irradiance),
                mean_temperature=float(row.mean_temperature),
                gross_load=read_series_csv(gross_path, Unit.KW, step_seconds),
                pv=read_series_csv(pv_path, Unit.KW, step_seconds),
            )
        )
    logger.info(f"Loaded {len(days)} history days from {directory}")
    return days


def intraday_persistence(meter_history: Sequence[float], t: int, k_star: int, fallback: float,
                         substeps: int = SUBSTEPS_PER_INTERVAL) -> np.ndarray:
    """Persistence forecast of net load for the residual steps of interval t

    Args:
        meter_history (Sequence[float]): All 30-s net-load samples of the day so far
        t (int): Interval index
        k_star (int): Last measured sub-step of interval t, -1 at the interval start
        fallback (float): Day-ahead forecast of interval t, used when no samples exist
        substeps (int, optional): Sub-steps per interval (K). Defaults to 30

    Returns:
        np.ndarray: Constant forecast over sub-steps k_star+1..K-1
    """
    if not -1 <= k_star < substeps - 1:
        raise InvalidValue(f"k_star {k_star} outside [-1, {substeps - 2}]")
    samples = np.asarray(meter_history, dtype=float)
    start = t * substeps
    if samples.size < start + k_star + 1:
        raise InvalidLength(f"{samples.size} samples, interval {t} needs {start + k_star + 1}")
    if k_star >= 0:
        value = float(samples[start:start + k_star + 1].mean())
    elif t > 0:
        value = float(samples[start - substeps:start].mean())
    else:
        value = float(fallback)
    return np.full(substeps - k_star - 1, value)


def premium_persistence(current: PremiumValue, residual: int) -> ThresholdedPremium:
    """Hold the current premium (or Blocked) over the residual steps"""
    if residual < 1:
        raise InvalidLength("residual horizon must be at least one step")
    if current is BLOCKED:
        return ThresholdedPremium.all_blocked(residual)
    return ThresholdedPremium.from_arrays(np.full(residual, float(current)), np.zeros(residual, dtype=bool))
