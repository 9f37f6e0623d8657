"""
Time grids, piecewise-constant series and the numeric primitives shared by the
optimisation, forecasting and simulation modules.

Signals are uniform and piecewise constant, so a series carries its grid and a
plain value array; timestamps are derived from the grid when needed.
"""

import logging
from dataclasses import dataclass
from datetime import datetime, timedelta
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from errors import GridMismatch, InvalidLength, InvalidValue

logger = logging.getLogger(__name__)

SECONDS_PER_DAY = 86400
INTERVAL_SECONDS = 900
SUBSTEP_SECONDS = 30
STEPS_PER_DAY = SECONDS_PER_DAY // INTERVAL_SECONDS  # T
SUBSTEPS_PER_INTERVAL = INTERVAL_SECONDS // SUBSTEP_SECONDS  # K
INTERVAL_HOURS = INTERVAL_SECONDS / 3600.0  # Δ
SUBSTEP_HOURS = SUBSTEP_SECONDS / 3600.0  # δ

CSV_HEADER = ("timestamp_iso8601", "value")


class Unit(str, Enum):
    """Engineering unit attached to a series"""

    KW = "kW"
    KWH = "kWh"
    CHF_PER_KWH = "CHF/kWh"
    CHF_PER_KW = "CHF/kW"


@dataclass(frozen=True)
class TimeGrid:
    """Fixed-resolution time grid

    Args:
        start (datetime): Timestamp of the first step
        step_seconds (int): Step length, must divide one day
        steps (int): Number of steps
    """

    start: datetime
    step_seconds: int
    steps: int

    def __post_init__(self):
        if self.step_seconds <= 0 or SECONDS_PER_DAY % self.step_seconds != 0:
            raise GridMismatch(f"step of {self.step_seconds} s does not divide a day")
        if self.steps <= 0:
            raise InvalidLength("a grid needs at least one step")

    @classmethod
    def day_ahead(cls, start: datetime) -> "TimeGrid":
        return cls(start, INTERVAL_SECONDS, STEPS_PER_DAY)

    @classmethod
    def real_time(cls, start: datetime) -> "TimeGrid":
        return cls(start, SUBSTEP_SECONDS, STEPS_PER_DAY * SUBSTEPS_PER_INTERVAL)

    @property
    def step_hours(self) -> float:
        return self.step_seconds / 3600.0

    @property
    def end(self) -> datetime:
        return self.start + timedelta(seconds=self.step_seconds * self.steps)

    def timestamps(self) -> pd.DatetimeIndex:
        return pd.date_range(self.start, periods=self.steps, freq=f"{self.step_seconds}s")

    def refine(self, step_seconds: int) -> "TimeGrid":
        """Finer grid covering exactly the same horizon"""
        if self.step_seconds % step_seconds != 0:
            raise GridMismatch(f"{step_seconds} s does not divide {self.step_seconds} s")
        return TimeGrid(self.start, step_seconds, self.steps * (self.step_seconds // step_seconds))


@dataclass(frozen=True)
class SiteParams:
    """Grid connection of the site

    Args:
        transformer_kw (float): Transformer rated power
        billing_interval_minutes (int): Demand metering interval
    """

    transformer_kw: float
    billing_interval_minutes: int = 15

    def __post_init__(self):
        if not np.isfinite(self.transformer_kw) or self.transformer_kw <= 0:
            raise InvalidValue("transformer_kw must be a positive number")
        if self.billing_interval_minutes != 15:
            raise InvalidValue("only 15-minute billing intervals are supported")

    def check_battery(self, b_max: float):
        if self.transformer_kw < b_max:
            raise InvalidValue(
                f"transformer rating {self.transformer_kw} kW is below the battery rating {b_max} kW"
            )


class TimeSeries:
    """Piecewise-constant signal on a TimeGrid

    The value array is copied and frozen on construction, so instances can be
    shared between threads.
    """

    __slots__ = ("grid", "values", "unit")

    def __init__(self, grid: TimeGrid, values: Sequence[float], unit: Unit):
        arr = np.array(values, dtype=float).reshape(-1)
        if arr.size != grid.steps:
            raise InvalidLength(f"{arr.size} values for a grid of {grid.steps} steps")
        if not np.all(np.isfinite(arr)):
            raise InvalidValue("time series values must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", arr)
        object.__setattr__(self, "unit", Unit(unit))

    def __setattr__(self, name, value):
        raise AttributeError("TimeSeries is immutable")

    def __len__(self) -> int:
        return self.grid.steps

    def __repr__(self) -> str:
        return f"TimeSeries({self.unit.value}, {self.grid.steps}x{self.grid.step_seconds}s)"

    @classmethod
    def constant(cls, grid: TimeGrid, value: float, unit: Unit) -> "TimeSeries":
        return cls(grid, np.full(grid.steps, float(value)), unit)

    def with_values(self, values: Sequence[float]) -> "TimeSeries":
        return TimeSeries(self.grid, values, self.unit)

    def require_same_grid(self, other: "TimeSeries", what: str = "series"):
        if self.grid != other.grid:
            raise GridMismatch(f"{what} are on different grids: {self.grid} vs {other.grid}")

    def to_series(self, name: str = "value") -> pd.Series:
        return pd.Series(np.asarray(self.values), index=self.grid.timestamps(), name=name)


def cumsum_apply(x: Sequence[float]) -> np.ndarray:
    """Running sum, i.e. multiplication by the lower-triangular all-ones matrix

    Args:
        x (Sequence[float]): Input sequence

    Returns:
        np.ndarray: output[t] = sum of x[0..t]
    """
    arr = np.asarray(x, dtype=float).reshape(-1)
    if arr.size == 0:
        raise InvalidLength("cumulative sum of an empty sequence")
    return np.cumsum(arr)


def cumsum_matrix(n: int) -> np.ndarray:
    """The lower-triangular all-ones matrix C used by the SOE dynamics"""
    if n <= 0:
        raise InvalidLength("cumulative-sum matrix needs n >= 1")
    return np.tril(np.ones((n, n)))


def pos_neg_split(x: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
    """Split a signal into its non-negative positive and negative parts

    Args:
        x (Sequence[float]): Signed values

    Returns:
        Tuple[np.ndarray, np.ndarray]: (max(x, 0), max(-x, 0))
    """
    arr = np.asarray(x, dtype=float).reshape(-1)
    if not np.all(np.isfinite(arr)):
        raise InvalidValue("cannot split non-finite values")
    x_plus = np.where(arr > 0.0, arr, 0.0)
    x_minus = np.where(arr < 0.0, -arr, 0.0)
    return x_plus, x_minus


def resample_avg(x: TimeSeries, target: TimeGrid) -> TimeSeries:
    """Average a fine series onto a coarser, nested grid

    Args:
        x (TimeSeries): Series at the fine resolution (e.g. 30 s)
        target (TimeGrid): Coarse grid covering the same horizon (e.g. 15 min)

    Returns:
        TimeSeries: Mean of the fine values inside each coarse step
    """
    if target.step_seconds % x.grid.step_seconds != 0:
        raise GridMismatch(f"{x.grid.step_seconds} s does not divide {target.step_seconds} s")
    factor = target.step_seconds // x.grid.step_seconds
    if x.grid.start != target.start or len(x) != target.steps * factor:
        raise GridMismatch(
            f"series of {len(x)} steps does not span {target.steps} steps of {factor} samples"
        )
    means = np.asarray(x.values).reshape(target.steps, factor).mean(axis=1)
    return TimeSeries(target, means, x.unit)


def upsample_hold(x: TimeSeries, step_seconds: int) -> TimeSeries:
    """Repeat each value over the finer grid (zero-order hold)"""
    fine = x.grid.refine(step_seconds)
    factor = x.grid.step_seconds // step_seconds
    return TimeSeries(fine, np.repeat(np.asarray(x.values), factor), x.unit)


def write_series_csv(series: TimeSeries, path: Union[str, Path]):
    """Write `timestamp_iso8601,value` rows, UTF-8 with LF line endings"""
    frame = pd.DataFrame(
        {
            CSV_HEADER[0]: [ts.isoformat() for ts in series.grid.timestamps()],
            CSV_HEADER[1]: np.asarray(series.values),
        }
    )
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, encoding="utf-8", lineterminator="\n", float_format="%.10g")


def read_series_csv(path: Union[str, Path], unit: Unit, step_seconds: Optional[int] = None) -> TimeSeries:
    """Read a series written by write_series_csv

    Args:
        path (Union[str, Path]): CSV file
        unit (Unit): Unit of the values
        step_seconds (Optional[int]): Grid step; inferred from the first two rows when omitted

    Returns:
        TimeSeries: The parsed series
    """
    frame = pd.read_csv(path, encoding="utf-8")
    if list(frame.columns[:2]) != list(CSV_HEADER):
        raise InvalidValue(f"{path}: expected header {','.join(CSV_HEADER)}")
    if frame.empty:
        raise InvalidLength(f"{path}: no rows")
    stamps = pd.to_datetime(frame[CSV_HEADER[0]])
    if step_seconds is None:
        if len(stamps) < 2:
            raise InvalidLength(f"{path}: cannot infer the step from a single row")
        step_seconds = int((stamps.iloc[1] - stamps.iloc[0]).total_seconds())
    grid = TimeGrid(stamps.iloc[0].to_pydatetime(), step_seconds, len(frame))
    return TimeSeries(grid, frame[CSV_HEADER[1]].to_numpy(dtype=float), unit)
