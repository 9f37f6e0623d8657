"""
Tariff book, aFRR premium thresholding and the cost/revenue evaluators.

Grid power is split into import (p_plus) and export (p_minus); both are billed
per step of length Δ. Regulation premiums are the activation price in excess
of the import tariff; steps where that excess is not strictly positive are
Blocked and never carry an allocation.
"""

import logging
from dataclasses import dataclass, field
from datetime import time
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from core import CSV_HEADER, TimeGrid, TimeSeries, Unit, pos_neg_split, upsample_hold
from errors import GatingViolation, GridMismatch, InvalidLength, InvalidModel, InvalidValue, NonConvexTariffs

logger = logging.getLogger(__name__)

DAYS_PER_YEAR = 365
GATING_TOL = 1e-9
SCENARIO_COLUMNS = (CSV_HEADER[0], "pi_afrr_down", "pi_afrr_up")

ArrayLike = Union[TimeSeries, Sequence[float], np.ndarray]


class _Blocked:
    """Marker for a step where regulation is not worth offering"""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "Blocked"

    def __reduce__(self):
        return (_Blocked, ())


BLOCKED = _Blocked()
PremiumValue = Union[float, _Blocked]


def _values(x: ArrayLike) -> np.ndarray:
    if isinstance(x, TimeSeries):
        return np.asarray(x.values, dtype=float)
    return np.asarray(x, dtype=float).reshape(-1)


class ThresholdedPremium:
    """Per-step premium: a strictly positive amount in CHF/kWh or Blocked

    Stored as an amount array (zero where blocked) plus a boolean mask, so the
    sentinel never becomes a numeric coefficient.
    """

    __slots__ = ("amounts", "blocked")

    def __init__(self, values: Sequence[PremiumValue]):
        blocked = np.array([v is BLOCKED for v in values], dtype=bool)
        amounts = np.array([0.0 if v is BLOCKED else float(v) for v in values], dtype=float)
        self._set(amounts, blocked)

    @classmethod
    def from_arrays(cls, amounts: Sequence[float], blocked: Sequence[bool]) -> "ThresholdedPremium":
        obj = cls.__new__(cls)
        obj._set(np.asarray(amounts, dtype=float).copy(), np.asarray(blocked, dtype=bool).copy())
        return obj

    @classmethod
    def all_blocked(cls, steps: int) -> "ThresholdedPremium":
        return cls.from_arrays(np.zeros(steps), np.ones(steps, dtype=bool))

    def _set(self, amounts: np.ndarray, blocked: np.ndarray):
        if amounts.shape != blocked.shape:
            raise InvalidLength("premium amounts and mask differ in length")
        amounts = np.where(blocked, 0.0, amounts)
        open_steps = amounts[~blocked]
        if not np.all(np.isfinite(open_steps)) or np.any(open_steps <= 0.0):
            raise InvalidValue("premiums must be finite and strictly positive")
        amounts.setflags(write=False)
        blocked.setflags(write=False)
        object.__setattr__(self, "amounts", amounts)
        object.__setattr__(self, "blocked", blocked)

    def __setattr__(self, name, value):
        raise AttributeError("ThresholdedPremium is immutable")

    def __len__(self) -> int:
        return self.amounts.size

    def __getitem__(self, t: int) -> PremiumValue:
        return BLOCKED if self.blocked[t] else float(self.amounts[t])

    def __repr__(self) -> str:
        return f"ThresholdedPremium({len(self)} steps, {int(self.blocked.sum())} blocked)"

    @property
    def available(self) -> np.ndarray:
        return ~self.blocked

    def window(self, start: int, stop: int) -> "ThresholdedPremium":
        return ThresholdedPremium.from_arrays(self.amounts[start:stop], self.blocked[start:stop])


@dataclass(frozen=True)
class TariffBook:
    """Retail, feed-in, power and aFRR price data for one day

    Args:
        pi_import (TimeSeries): Import tariff, CHF/kWh
        pi_export (TimeSeries): Feed-in tariff, CHF/kWh
        pi_power_per_day (float): Demand charge prorated to one day, CHF/kW
        pi_afrr_up (Optional[TimeSeries]): Raw up-regulation activation price (π⁻)
        pi_afrr_down (Optional[TimeSeries]): Raw down-regulation activation price (π⁺)
    """

    pi_import: TimeSeries
    pi_export: TimeSeries
    pi_power_per_day: float
    pi_afrr_up: Optional[TimeSeries] = None
    pi_afrr_down: Optional[TimeSeries] = None

    def __post_init__(self):
        self.pi_import.require_same_grid(self.pi_export, "import and export tariffs")
        for extra in (self.pi_afrr_up, self.pi_afrr_down):
            if extra is not None:
                self.pi_import.require_same_grid(extra, "tariffs and aFRR prices")
        if not np.isfinite(self.pi_power_per_day) or self.pi_power_per_day < 0:
            raise InvalidValue("power tariff must be finite and non-negative")
        gap = np.asarray(self.pi_import.values) - np.asarray(self.pi_export.values)
        if np.any(gap < 0.0):
            t = int(np.argmin(gap))
            raise NonConvexTariffs(f"import tariff below export tariff at step {t}")

    @property
    def grid(self) -> TimeGrid:
        return self.pi_import.grid

    @classmethod
    def from_windows(cls, grid: TimeGrid, peak_import: float = 0.171, offpeak_import: float = 0.162,
                     export: float = 0.0068, power_per_year: float = 150.0,
                     peak_start: time = time(7, 0), peak_end: time = time(20, 0),
                     days_per_year: int = DAYS_PER_YEAR) -> "TariffBook":
        """Build a two-level time-of-use book

        Args:
            grid (TimeGrid): Grid the tariffs are defined on
            peak_import (float): Import tariff inside the peak window, CHF/kWh
            offpeak_import (float): Import tariff outside it, CHF/kWh
            export (float): Flat feed-in tariff, CHF/kWh
            power_per_year (float): Annual demand charge, CHF/kW
            peak_start (time): Start of the peak window
            peak_end (time): End of the peak window (exclusive)
            days_per_year (int): Proration divisor for the demand charge

        Returns:
            TariffBook: Book without aFRR prices
        """
        stamps = grid.timestamps()
        clock = stamps.hour * 60 + stamps.minute
        lo, hi = peak_start.hour * 60 + peak_start.minute, peak_end.hour * 60 + peak_end.minute
        in_peak = (clock >= lo) & (clock < hi) if lo <= hi else (clock >= lo) | (clock < hi)
        pi_import = np.where(in_peak, peak_import, offpeak_import)
        return cls(
            TimeSeries(grid, pi_import, Unit.CHF_PER_KWH),
            TimeSeries.constant(grid, export, Unit.CHF_PER_KWH),
            power_per_year / days_per_year,
        )

    def with_afrr(self, pi_afrr_up: TimeSeries, pi_afrr_down: TimeSeries) -> "TariffBook":
        return TariffBook(self.pi_import, self.pi_export, self.pi_power_per_day, pi_afrr_up, pi_afrr_down)

    def refine(self, step_seconds: int) -> "TariffBook":
        """Same book held constant onto a finer grid"""

        def hold(x: Optional[TimeSeries]) -> Optional[TimeSeries]:
            return None if x is None else upsample_hold(x, step_seconds)

        return TariffBook(hold(self.pi_import), hold(self.pi_export), self.pi_power_per_day,
                          hold(self.pi_afrr_up), hold(self.pi_afrr_down))


@dataclass(frozen=True)
class ScenarioPremiums:
    premium_up: ThresholdedPremium
    premium_down: ThresholdedPremium
    name: str = ""


@dataclass(frozen=True)
class ScenarioSet:
    """Equally or unequally weighted aFRR premium scenarios"""

    scenarios: List[ScenarioPremiums]
    probabilities: np.ndarray = field(default=None)

    def __post_init__(self):
        if not self.scenarios:
            raise InvalidLength("a scenario set needs at least one scenario")
        probs = self.probabilities
        if probs is None:
            probs = np.full(len(self.scenarios), 1.0 / len(self.scenarios))
        probs = np.asarray(probs, dtype=float).reshape(-1)
        if probs.size != len(self.scenarios):
            raise InvalidLength(f"{probs.size} probabilities for {len(self.scenarios)} scenarios")
        if np.any(probs < 0.0) or not np.all(np.isfinite(probs)):
            raise InvalidValue("scenario probabilities must be finite and non-negative")
        if abs(probs.sum() - 1.0) > 1e-12:
            raise InvalidValue(f"scenario probabilities sum to {probs.sum():.15g}, not 1")
        steps = len(self.scenarios[0].premium_up)
        for sc in self.scenarios:
            if len(sc.premium_up) != steps or len(sc.premium_down) != steps:
                raise InvalidLength("every scenario must span the same number of steps")
        probs.setflags(write=False)
        object.__setattr__(self, "probabilities", probs)

    def __len__(self) -> int:
        return len(self.scenarios)

    @property
    def steps(self) -> int:
        return len(self.scenarios[0].premium_up)


def threshold_premiums(pi_afrr: TimeSeries, pi_import: TimeSeries) -> ThresholdedPremium:
    """Premium over the import tariff, Blocked where the price does not exceed it"""
    pi_afrr.require_same_grid(pi_import, "aFRR price and import tariff")
    excess = np.asarray(pi_afrr.values) - np.asarray(pi_import.values)
    blocked = ~(excess > 0.0)
    return ThresholdedPremium.from_arrays(np.where(blocked, 0.0, excess), blocked)


def energy_charge(p_plus: ArrayLike, p_minus: ArrayLike, book: TariffBook) -> float:
    """Energy cost of a day

    Args:
        p_plus (ArrayLike): Imported power per step, kW
        p_minus (ArrayLike): Exported power per step, kW
        book (TariffBook): Tariffs; the step length is taken from its grid

    Returns:
        float: Δ·(π_import·p_plus − π_export·p_minus) in CHF
    """
    for x in (p_plus, p_minus):
        if isinstance(x, TimeSeries) and x.grid != book.grid:
            raise GridMismatch("power series and tariff book are on different grids")
    plus, minus = _values(p_plus), _values(p_minus)
    if plus.size != book.grid.steps or minus.size != book.grid.steps:
        raise InvalidLength(f"power series must have {book.grid.steps} steps")
    if np.any(plus < 0.0) or np.any(minus < 0.0):
        raise InvalidValue("import and export powers must be non-negative")
    step = book.grid.step_hours
    return float(step * (np.dot(book.pi_import.values, plus) - np.dot(book.pi_export.values, minus)))


def reformulated_energy_cost(x: ArrayLike, book: TariffBook) -> float:
    """Energy cost of a signed grid profile in its convex form Δ·((π_imp−π_exp)ᵀ[x]⁺ + π_expᵀx)"""
    arr = _values(x)
    if arr.size != book.grid.steps:
        raise InvalidLength(f"grid profile must have {book.grid.steps} steps")
    gap = np.asarray(book.pi_import.values) - np.asarray(book.pi_export.values)
    return float(book.grid.step_hours * (np.dot(gap, np.maximum(arr, 0.0)) + np.dot(book.pi_export.values, arr)))


def grid_energy_cost(x: ArrayLike, book: TariffBook) -> float:
    return energy_charge(*pos_neg_split(_values(x)), book)


def power_charge(p_plus: ArrayLike, pi_power_per_day: float) -> float:
    """Demand charge: peak import times the daily power tariff"""
    arr = _values(p_plus)
    if arr.size == 0:
        raise InvalidLength("power charge of an empty profile")
    if np.any(arr < 0.0):
        raise InvalidValue("import power must be non-negative")
    return float(arr.max() * pi_power_per_day)


def regulation_revenue(b_down: ArrayLike, b_up: ArrayLike, prem_down: ThresholdedPremium,
                       prem_up: ThresholdedPremium, step_hours: float = 0.25) -> float:
    """Revenue from offering down- and up-regulation power

    Args:
        b_down (ArrayLike): Down-regulation (charging) allocation per step, kW
        b_up (ArrayLike): Up-regulation (discharging) allocation per step, kW
        prem_down (ThresholdedPremium): Down-regulation premium (π⁺ excess)
        prem_up (ThresholdedPremium): Up-regulation premium (π⁻ excess)
        step_hours (float, optional): Step length Δ. Defaults to 0.25

    Returns:
        float: Revenue in CHF
    """
    down, up = _values(b_down), _values(b_up)
    if not (down.size == up.size == len(prem_down) == len(prem_up)):
        raise InvalidLength("allocations and premiums must have the same length")
    if np.any(down < 0.0) or np.any(up < 0.0):
        raise InvalidValue("regulation allocations must be non-negative")
    for alloc, prem, label in ((down, prem_down, "down"), (up, prem_up, "up")):
        bad = np.nonzero(prem.blocked & (alloc > GATING_TOL))[0]
        if bad.size:
            raise GatingViolation(f"{label}-regulation allocated at blocked step {int(bad[0])}")
    return float(step_hours * (np.dot(prem_down.amounts, down) + np.dot(prem_up.amounts, up)))


def expected_regulation_revenue(allocations: Sequence[Tuple[ArrayLike, ArrayLike]], scen: ScenarioSet,
                                step_hours: float = 0.25) -> float:
    """Probability-weighted regulation revenue, one (b_down, b_up) pair per scenario"""
    if len(allocations) != len(scen):
        raise InvalidModel(f"{len(allocations)} allocation pairs for {len(scen)} scenarios")
    total = 0.0
    for p, (down, up), sc in zip(scen.probabilities, allocations, scen.scenarios):
        total += p * regulation_revenue(down, up, sc.premium_down, sc.premium_up, step_hours)
    return float(total)


def write_scenario_csv(pi_afrr_down: TimeSeries, pi_afrr_up: TimeSeries, path: Union[str, Path]):
    pi_afrr_down.require_same_grid(pi_afrr_up, "aFRR price series")
    frame = pd.DataFrame(
        {
            SCENARIO_COLUMNS[0]: [ts.isoformat() for ts in pi_afrr_down.grid.timestamps()],
            SCENARIO_COLUMNS[1]: np.asarray(pi_afrr_down.values),
            SCENARIO_COLUMNS[2]: np.asarray(pi_afrr_up.values),
        }
    )
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, encoding="utf-8", lineterminator="\n", float_format="%.10g")


def read_scenario_prices(path: Union[str, Path], grid: TimeGrid) -> Tuple[TimeSeries, TimeSeries]:
    """Raw (down, up) activation prices of one scenario day, placed on ``grid``

    Scenario days are historical, so only the step count and spacing must
    match the target grid, not the calendar date.
    """
    frame = pd.read_csv(path, encoding="utf-8")
    missing = [c for c in SCENARIO_COLUMNS if c not in frame.columns]
    if missing:
        raise InvalidValue(f"{path}: missing columns {', '.join(missing)}")
    if len(frame) != grid.steps:
        raise InvalidLength(f"{path}: {len(frame)} rows, expected {grid.steps}")
    stamps = pd.to_datetime(frame[SCENARIO_COLUMNS[0]])
    if len(stamps) > 1 and int((stamps.iloc[1] - stamps.iloc[0]).total_seconds()) != grid.step_seconds:
        raise GridMismatch(f"{path}: step does not match {grid.step_seconds} s")
    down = TimeSeries(grid, frame[SCENARIO_COLUMNS[1]].to_numpy(dtype=float), Unit.CHF_PER_KWH)
    up = TimeSeries(grid, frame[SCENARIO_COLUMNS[2]].to_numpy(dtype=float), Unit.CHF_PER_KWH)
    return down, up


def load_scenarios(paths: Sequence[Union[str, Path]], pi_import: TimeSeries,
                   probabilities: Optional[Sequence[float]] = None) -> ScenarioSet:
    """Read scenario CSVs and threshold them against the import tariff

    Args:
        paths (Sequence[Union[str, Path]]): One CSV per scenario
        pi_import (TimeSeries): Import tariff of the scheduled day
        probabilities (Optional[Sequence[float]]): p_ω; equiprobable when omitted

    Returns:
        ScenarioSet: Thresholded premiums per scenario
    """
    scenarios = []
    for path in paths:
        down, up = read_scenario_prices(path, pi_import.grid)
        premiums = ScenarioPremiums(threshold_premiums(up, pi_import), threshold_premiums(down, pi_import),
                                    Path(path).stem)
        logger.info(
            f"Scenario {premiums.name}: {int(premiums.premium_down.available.sum())} down / "
            f"{int(premiums.premium_up.available.sum())} up steps open"
        )
        scenarios.append(premiums)
    probs = None if probabilities is None else np.asarray(probabilities, dtype=float)
    return ScenarioSet(scenarios, probs)
