"""
Run configuration: one JSON file with a section per module.

Relative paths are resolved against the directory of the config file.
"""

import json
import logging
from datetime import date, datetime, time
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, ValidationInfo, field_validator, model_validator

from core import SiteParams, TimeGrid
from errors import ConfigError, InvalidValue
from forecasting import DayType, ForecastConfig, ForecastTarget
from markets import TariffBook
from mpc import MpcConfig
from scheduler import BatteryParams
from simulator import ActivationConfig

logger = logging.getLogger(__name__)


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


def _resolve(value: Optional[str], info: ValidationInfo) -> Optional[Path]:
    if value is None:
        return None
    path = Path(value)
    base = (info.context or {}).get("base_dir")
    if not path.is_absolute() and base is not None:
        path = Path(base) / path
    return path


class PathsSection(_Section):
    """Input and output locations

    Args:
        history_dir (Path): Directory with index.csv and the per-day load/PV files
        scenario_files (List[Path]): One aFRR price CSV per scenario
        tariff_file (Optional[Path]): JSON file holding the tariffs section
        pv_forecast (Optional[Path]): PV forecast CSV, used when forecast.pv_source is "file"
        realization (Optional[Path]): 30-s net-load CSV replayed by the simulator
        output_dir (Path): Where every stage writes its artifacts
    """

    history_dir: Path
    scenario_files: List[Path] = Field(min_length=1)
    tariff_file: Optional[Path] = None
    pv_forecast: Optional[Path] = None
    realization: Optional[Path] = None
    output_dir: Path = Field("out", validate_default=True)

    @field_validator("history_dir", "tariff_file", "pv_forecast", "realization", "output_dir", mode="before")
    @classmethod
    def _resolve_path(cls, value, info: ValidationInfo):
        return _resolve(value, info) if isinstance(value, str) else value

    @field_validator("scenario_files", mode="before")
    @classmethod
    def _resolve_paths(cls, value, info: ValidationInfo):
        if isinstance(value, list):
            return [_resolve(v, info) if isinstance(v, str) else v for v in value]
        return value


class SiteSection(_Section):
    transformer_kw: float = Field(400.0, gt=0)
    billing_interval_minutes: Literal[15] = 15

    def to_params(self) -> SiteParams:
        return SiteParams(self.transformer_kw, self.billing_interval_minutes)


class BatterySection(_Section):
    e_nom: float = Field(264.0, gt=0)
    e_min: float = Field(26.4, ge=0)
    e_max: float = Field(237.6, gt=0)
    b_max: float = Field(140.0, gt=0)
    eta: float = Field(0.95, gt=0, le=1)
    soe0: float = Field(132.0, ge=0)

    @model_validator(mode="after")
    def _envelope(self):
        if not self.e_min < self.e_max <= self.e_nom:
            raise ValueError("need e_min < e_max <= e_nom")
        return self

    def to_params(self) -> BatteryParams:
        params = BatteryParams(self.e_nom, self.e_min, self.e_max, self.b_max, self.eta, self.e_min)
        return params.with_soe0(self.soe0)


class TariffSection(_Section):
    """Two-level time-of-use tariffs and the scenario weights"""

    peak_import: float = 0.171
    offpeak_import: float = 0.162
    export: float = 0.0068
    power_per_year: float = Field(150.0, ge=0)
    days_per_year: int = Field(365, gt=0)
    peak_start: time = time(7, 0)
    peak_end: time = time(20, 0)
    scenario_probabilities: Optional[List[float]] = None

    @model_validator(mode="after")
    def _convex(self):
        if min(self.peak_import, self.offpeak_import) < self.export:
            raise ValueError("import tariffs must not be below the export tariff")
        return self

    def to_book(self, grid: TimeGrid) -> TariffBook:
        return TariffBook.from_windows(
            grid,
            peak_import=self.peak_import,
            offpeak_import=self.offpeak_import,
            export=self.export,
            power_per_year=self.power_per_year,
            peak_start=self.peak_start,
            peak_end=self.peak_end,
            days_per_year=self.days_per_year,
        )


class ForecastSection(_Section):
    """Target day and similar-day settings

    ``day_type`` defaults to the calendar day type of the target date.
    """

    target_date: date = Field(alias="date")
    day_type: Optional[DayType] = None
    mean_irradiance: float = Field(ge=0)
    mean_temperature: float
    n_similar: int = Field(5, ge=1)
    meteo_weights: Tuple[float, float] = (1.0, 1.0)
    recency_window: int = Field(60, ge=1)
    pv_source: Literal["clear_sky", "file"] = "clear_sky"
    pv_capacity_kw: float = Field(135.0, ge=0)
    sunrise: time = time(6, 0)
    sunset: time = time(20, 0)

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid.day_ahead(datetime.combine(self.target_date, time(0, 0)))

    def to_target(self) -> ForecastTarget:
        day_type = self.day_type or DayType.of(self.target_date)
        return ForecastTarget(day_type, self.mean_irradiance, self.mean_temperature, self.target_date)

    def to_config(self) -> ForecastConfig:
        return ForecastConfig(self.n_similar, tuple(self.meteo_weights), self.recency_window)


class ScheduleSection(_Section):
    node_limit: int = Field(5000, ge=1)


class MpcSection(_Section):
    epsilon: float = Field(1e-3, ge=0)
    soe_penalty: float = Field(1e3, ge=0)
    soe_margin: float = Field(10.0, ge=0)
    node_limit: int = Field(200, ge=1)

    def to_config(self) -> MpcConfig:
        return MpcConfig(self.epsilon, self.soe_penalty, self.soe_margin, self.node_limit)


class ActivationSection(_Section):
    p_up: float = Field(0.05, ge=0, le=1)
    p_down: float = Field(0.05, ge=0, le=1)
    price_low: float = 0.18
    price_high: float = 0.60

    def to_config(self, seed: int) -> ActivationConfig:
        return ActivationConfig(self.p_up, self.p_down, self.price_low, self.price_high, seed)


class SimulationSection(_Section):
    """Realization and plant settings

    Args:
        noise_kw (float): Amplitude of the uniform noise added to the forecast
        plant_eta (Optional[float]): Plant efficiency when it differs from the model
        html (bool): Also write an interactive plotly overview in the report
    """

    noise_kw: float = Field(0.0, ge=0)
    plant_eta: Optional[float] = Field(None, gt=0, le=1)
    html: bool = False


class RunConfig(_Section):
    """Complete configuration of a pipeline run"""

    paths: PathsSection
    site: SiteSection = SiteSection()
    battery: BatterySection = BatterySection()
    tariffs: Optional[TariffSection] = None
    forecast: ForecastSection
    schedule: ScheduleSection = ScheduleSection()
    mpc: MpcSection = MpcSection()
    activation: ActivationSection = ActivationSection()
    simulation: SimulationSection = SimulationSection()
    seed: int = 0
    bundled_dataset: bool = False

    @model_validator(mode="after")
    def _tariff_source(self):
        if self.tariffs is None and self.paths.tariff_file is None:
            raise ValueError("either a tariffs section or paths.tariff_file is required")
        return self

    @property
    def output_dir(self) -> Path:
        return self.paths.output_dir

    def tariff_section(self) -> TariffSection:
        """Inline tariffs, or the tariff file when one is configured"""
        if self.paths.tariff_file is None:
            return self.tariffs
        return load_tariff_file(self.paths.tariff_file)

    def check_inputs(self):
        """Raise ConfigError for referenced input files that do not exist"""
        required: List[Path] = [self.paths.history_dir / "index.csv", *self.paths.scenario_files]
        if self.paths.tariff_file is not None:
            required.append(self.paths.tariff_file)
        if self.forecast.pv_source == "file":
            if self.paths.pv_forecast is None:
                raise ConfigError("forecast.pv_source is 'file' but paths.pv_forecast is not set")
            required.append(self.paths.pv_forecast)
        if self.paths.realization is not None:
            required.append(self.paths.realization)
        missing = [str(p) for p in required if not p.is_file()]
        if missing:
            raise ConfigError(f"input file not found: {', '.join(missing)}")
        probs = self.tariff_section().scenario_probabilities
        if probs is not None and len(probs) != len(self.paths.scenario_files):
            raise ConfigError(f"{len(probs)} scenario probabilities for {len(self.paths.scenario_files)} scenario files")


def _read_json(path: Path) -> Dict[str, Any]:
    try:
        with open(path, encoding="utf-8") as f:
            return json.load(f)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON: {e}")


def _describe(e: ValidationError) -> str:
    return "; ".join(f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors())


def load_tariff_file(path: Union[str, Path]) -> TariffSection:
    path = Path(path)
    try:
        return TariffSection.model_validate(_read_json(path))
    except ValidationError as e:
        raise ConfigError(f"{path}: {_describe(e)}")


def load_config(path: Union[str, Path], seed: Optional[int] = None, output_dir: Optional[Union[str, Path]] = None) -> RunConfig:
    """Parse and validate a run configuration

    Args:
        path (Union[str, Path]): JSON config file
        seed (Optional[int]): Replaces the configured seed when given
        output_dir (Optional[Union[str, Path]]): Replaces paths.output_dir when given

    Returns:
        RunConfig: Validated configuration with absolute paths
    """
    path = Path(path)
    data = _read_json(path)
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    if seed is not None:
        data["seed"] = seed
    if output_dir is not None:
        data.setdefault("paths", {})["output_dir"] = str(Path(output_dir).resolve())
    try:
        config = RunConfig.model_validate(data, context={"base_dir": path.resolve().parent})
        config.battery.to_params()
        config.site.to_params().check_battery(config.battery.b_max)
    except ValidationError as e:
        raise ConfigError(f"{path}: {_describe(e)}")
    except InvalidValue as e:
        raise ConfigError(f"{path}: {e}")
    logger.info(f"Loaded configuration {path} (seed {config.seed}, output {config.output_dir})")
    return config
