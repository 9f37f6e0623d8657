import shutil
import sys
from datetime import datetime
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from core import SiteParams, TimeGrid, TimeSeries, Unit  # noqa: E402
from markets import ScenarioPremiums, ScenarioSet, TariffBook, ThresholdedPremium  # noqa: E402
from scheduler import BatteryParams  # noqa: E402

DAY = datetime(2024, 6, 12)
BUNDLED_CONFIG = ROOT / "config" / "bundled.json"


def grid(steps: int, step_seconds: int = 900, start: datetime = DAY) -> TimeGrid:
    return TimeGrid(start, step_seconds, steps)


def kw(values, step_seconds: int = 900) -> TimeSeries:
    values = np.asarray(values, dtype=float)
    return TimeSeries(grid(values.size, step_seconds), values, Unit.KW)


def flat_book(steps: int, pi_import: float = 0.2, pi_export: float = 0.0, pi_power: float = 0.0,
              step_seconds: int = 900) -> TariffBook:
    g = grid(steps, step_seconds)
    return TariffBook(
        TimeSeries.constant(g, pi_import, Unit.CHF_PER_KWH),
        TimeSeries.constant(g, pi_export, Unit.CHF_PER_KWH),
        pi_power,
    )


def blocked_scenarios(steps: int, count: int = 1) -> ScenarioSet:
    return ScenarioSet([
        ScenarioPremiums(ThresholdedPremium.all_blocked(steps), ThresholdedPremium.all_blocked(steps))
        for _ in range(count)
    ])


@pytest.fixture
def campus_battery() -> BatteryParams:
    return BatteryParams(e_nom=264.0, e_min=26.4, e_max=237.6, b_max=140.0, eta=0.95, soe0=132.0)


@pytest.fixture
def tiny_battery() -> BatteryParams:
    return BatteryParams(e_nom=20.0, e_min=0.0, e_max=20.0, b_max=40.0, eta=1.0, soe0=10.0)


@pytest.fixture
def site() -> SiteParams:
    return SiteParams(transformer_kw=400.0)


def copy_bundled(directory: Path) -> Path:
    """Copy the bundled configuration so its dataset is generated below ``directory``"""
    config_dir = directory / "config"
    config_dir.mkdir(parents=True, exist_ok=True)
    for name in ("bundled.json", "tariffs.json"):
        shutil.copy(ROOT / "config" / name, config_dir / name)
    return config_dir / "bundled.json"


@pytest.fixture
def bundled_config(tmp_path):
    from config import load_config

    return load_config(copy_bundled(tmp_path), output_dir=tmp_path / "out")
