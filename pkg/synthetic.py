"""
Bundled synthetic dataset.

A campus-like building with 135 kW of PV: the net load of a sunny working day
has a morning peak near 86 kW, a midday PV surplus and an evening shoulder.
History days vary the weather, the day type and add measurement noise; the
scenario files hold day-ahead-style aFRR activation prices with both blocked
and open periods.
"""

import logging
from datetime import date, datetime, time, timedelta
from pathlib import Path
from typing import Dict, List, Union

import numpy as np
import pandas as pd

from core import TimeGrid, TimeSeries, Unit, write_series_csv
from forecasting import DayType, INDEX_COLUMNS, clear_sky_pv
from markets import write_scenario_csv

logger = logging.getLogger(__name__)

PV_CAPACITY_KW = 135.0
HISTORY_DAYS = 35
SCENARIO_DAYS = 5
DATASET_SEED = 20240612
SUNNY_IRRADIANCE = 250.0


def net_load_shape(hours: np.ndarray) -> np.ndarray:
    """Net load of a sunny working day at the given hours of the day, kW"""
    morning = 49.0 * np.exp(-(((hours - 8.5) / 1.3) ** 2))
    evening = 36.0 * np.exp(-(((hours - 18.0) / 1.6) ** 2))
    midday = 60.0 * np.exp(-(((hours - 13.0) / 2.2) ** 2))
    return 38.0 + morning + evening - midday


def gross_load_shape(grid: TimeGrid) -> np.ndarray:
    """Building demand that yields ``net_load_shape`` under clear-sky PV"""
    stamps = grid.timestamps()
    hours = np.asarray(stamps.hour + stamps.minute / 60.0) + grid.step_hours / 2.0
    pv = np.asarray(clear_sky_pv(grid, PV_CAPACITY_KW).values)
    return net_load_shape(hours) + pv


def _history(directory: Path, target: date, rng: np.random.Generator) -> int:
    rows = []
    for offset in range(HISTORY_DAYS, 0, -1):
        day = target - timedelta(days=offset)
        grid = TimeGrid.day_ahead(datetime.combine(day, time(0, 0)))
        day_type = DayType.of(day)
        sun = float(rng.uniform(0.35, 1.0))
        demand = gross_load_shape(grid) * (1.0 if day_type == DayType.WORKING else 0.55)
        demand = np.maximum(demand * rng.uniform(0.97, 1.03) + rng.normal(0.0, 1.5, grid.steps), 0.0)
        pv = np.asarray(clear_sky_pv(grid, PV_CAPACITY_KW * sun).values)
        write_series_csv(TimeSeries(grid, demand, Unit.KW), directory / f"{day.isoformat()}_gross.csv")
        write_series_csv(TimeSeries(grid, pv, Unit.KW), directory / f"{day.isoformat()}_pv.csv")
        rows.append({
            INDEX_COLUMNS[0]: day.isoformat(),
            INDEX_COLUMNS[1]: day_type.value,
            INDEX_COLUMNS[2]: round(SUNNY_IRRADIANCE * sun, 2),
            INDEX_COLUMNS[3]: round(14.0 + 10.0 * sun + rng.normal(0.0, 1.0), 2),
        })
    pd.DataFrame(rows, columns=list(INDEX_COLUMNS)).to_csv(
        directory / "index.csv", index=False, encoding="utf-8", lineterminator="\n"
    )
    return len(rows)


def _scenario_prices(grid: TimeGrid, rng: np.random.Generator) -> Dict[str, np.ndarray]:
    """Activation prices per 15-min step; at most one direction is attractive at a time"""
    draw = rng.random(grid.steps)
    level = rng.uniform(0.18, 0.60, grid.steps)
    quiet = rng.uniform(-0.05, 0.12, (2, grid.steps))
    up_open = draw < 0.12
    down_open = (draw >= 0.12) & (draw < 0.24)
    return {"up": np.where(up_open, level, quiet[0]), "down": np.where(down_open, level, quiet[1])}


def _scenarios(directory: Path, target: date, rng: np.random.Generator) -> List[Path]:
    paths = []
    for offset in range(SCENARIO_DAYS, 0, -1):
        day = target - timedelta(days=offset)
        grid = TimeGrid.day_ahead(datetime.combine(day, time(0, 0)))
        prices = _scenario_prices(grid, rng)
        path = directory / f"afrr_{day.isoformat()}.csv"
        write_scenario_csv(TimeSeries(grid, prices["down"], Unit.CHF_PER_KWH),
                           TimeSeries(grid, prices["up"], Unit.CHF_PER_KWH), path)
        paths.append(path)
    return paths


def write_bundled_dataset(data_dir: Union[str, Path], target: date) -> Dict[str, object]:
    """Materialise the history and scenario files for ``target``

    The dataset is fixed: the same target date always produces the same files.

    Args:
        data_dir (Union[str, Path]): Destination; ``history/`` and ``scenarios/`` are created below it
        target (date): Day to be scheduled

    Returns:
        Dict[str, object]: History directory, scenario paths and day count
    """
    root = Path(data_dir)
    history_dir = root / "history"
    scenario_dir = root / "scenarios"
    history_dir.mkdir(parents=True, exist_ok=True)
    scenario_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(DATASET_SEED)
    days = _history(history_dir, target, rng)
    scenarios = _scenarios(scenario_dir, target, rng)
    logger.info(f"Bundled dataset written to {root}: {days} history days, {len(scenarios)} scenario days")
    return {"history_dir": str(history_dir), "scenario_files": [str(p) for p in scenarios], "days": days}
