"""
Plant stand-in and closed-loop driver.

The plant integrates the battery at 30-s resolution and clamps setpoints to the
power rating and the SOE envelope. The driver replays a net-load realization,
issues synthetic aFRR activations, runs the controller every step and records
a trace with one row per 30-s step.
"""

import contextlib
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional, Sequence, Union

import numpy as np
import pandas as pd

from core import (
    CSV_HEADER,
    SUBSTEP_HOURS,
    SUBSTEP_SECONDS,
    SUBSTEPS_PER_INTERVAL,
    TimeGrid,
    TimeSeries,
    Unit,
    SiteParams,
    read_series_csv,
    upsample_hold,
)
from errors import GridMismatch, InvalidState, InvalidValue
from forecasting import intraday_persistence
from markets import TariffBook, ThresholdedPremium
from mpc import MpcConfig, MpcState, mpc_step
from scheduler import BatteryParams, Schedule

logger = logging.getLogger(__name__)
alarm_logger = logging.getLogger("simulator.alarms")

TRACE_COLUMNS = (
    CSV_HEADER[0],
    "interval",
    "substep",
    "l_kw",
    "l_forecast_kw",
    "p_hat_kw",
    "expected_avg_kw",
    "b_cmd_kw",
    "b_local_kw",
    "b_afrr_kw",
    "p_billed_kw",
    "p_meter_kw",
    "soe_kwh",
    "premium_up",
    "premium_down",
    "price_up",
    "price_down",
    "clamped",
    "alarm",
)


@dataclass(frozen=True)
class PlantState:
    soe: float
    last_applied_kw: float = 0.0
    clamp_events: int = 0

    def __post_init__(self):
        if not np.isfinite(self.soe) or self.soe < 0.0:
            raise InvalidState(f"plant SOE {self.soe} must be a non-negative number")


@dataclass(frozen=True)
class ActivationConfig:
    """Synthetic aFRR activation process

    Args:
        p_up (float): Probability of an up-regulation request per 30-s step
        p_down (float): Probability of a down-regulation request per 30-s step
        price_low (float): Lower end of the uniform activation price, CHF/kWh
        price_high (float): Upper end of the uniform activation price, CHF/kWh
        rng_seed (int): Seed of the activation stream
    """

    p_up: float = 0.05
    p_down: float = 0.05
    price_low: float = 0.18
    price_high: float = 0.60
    rng_seed: int = 0

    def __post_init__(self):
        for p in (self.p_up, self.p_down):
            if not 0.0 <= p <= 1.0:
                raise InvalidValue("activation probabilities must lie in [0, 1]")
        if self.p_up + self.p_down > 1.0 + 1e-12:
            raise InvalidValue("p_up + p_down must not exceed 1")
        if self.price_low > self.price_high:
            raise InvalidValue("price_low must not exceed price_high")


@dataclass(frozen=True)
class ActivationStream:
    """Issued activation prices and their premiums over the import tariff"""

    premium_up: ThresholdedPremium
    premium_down: ThresholdedPremium
    price_up: np.ndarray
    price_down: np.ndarray

    def __len__(self) -> int:
        return len(self.premium_up)


def battery_step(state: PlantState, b_cmd: float, battery: BatteryParams, eta: Optional[float] = None,
                 step_hours: float = SUBSTEP_HOURS) -> PlantState:
    """Apply one setpoint to the plant

    Args:
        state (PlantState): Plant before the step
        b_cmd (float): Signed setpoint, kW (positive charges)
        battery (BatteryParams): Ratings and SOE limits
        eta (Optional[float]): Plant efficiency; the model efficiency when omitted
        step_hours (float, optional): Step length. Defaults to 30 s

    Returns:
        PlantState: Plant after the step
    """
    eta = battery.eta if eta is None else eta
    applied = float(np.clip(b_cmd, -battery.b_max, battery.b_max))
    if applied > 0.0:
        headroom = max(battery.e_max - state.soe, 0.0) / (step_hours * eta)
        applied = min(applied, headroom)
    elif applied < 0.0:
        available = max(state.soe - battery.e_min, 0.0) * eta / step_hours
        applied = max(applied, -available)
    clamped = abs(applied - b_cmd) > 1e-12
    soe = state.soe + step_hours * eta * max(applied, 0.0) - step_hours * max(-applied, 0.0) / eta
    return PlantState(soe, applied, state.clamp_events + int(clamped))


def activation_stream(cfg: ActivationConfig, steps: int, pi_import: Union[float, Sequence[float], TimeSeries]) -> ActivationStream:
    """Draw the activation requests of a run

    Each step carries at most one direction. Issued prices are uniform on
    [price_low, price_high] and become a premium only where they exceed the
    import tariff.

    Args:
        cfg (ActivationConfig): Activation process
        steps (int): Number of 30-s steps
        pi_import (Union[float, Sequence[float], TimeSeries]): Import tariff per step

    Returns:
        ActivationStream: Prices (0 where not issued) and thresholded premiums
    """
    tariff = np.asarray(pi_import.values if isinstance(pi_import, TimeSeries) else pi_import, dtype=float)
    tariff = np.broadcast_to(tariff, (steps,))
    rng = np.random.default_rng(cfg.rng_seed)
    draw = rng.random(steps)
    prices = rng.uniform(cfg.price_low, cfg.price_high, steps)
    up = draw < cfg.p_up
    down = (draw >= cfg.p_up) & (draw < cfg.p_up + cfg.p_down)
    price_up = np.where(up, prices, 0.0)
    price_down = np.where(down, prices, 0.0)

    def premiums(active: np.ndarray, price: np.ndarray) -> ThresholdedPremium:
        excess = price - tariff
        blocked = ~(active & (excess > 0.0))
        return ThresholdedPremium.from_arrays(np.where(blocked, 0.0, excess), blocked)

    return ActivationStream(premiums(up, price_up), premiums(down, price_down), price_up, price_down)


def make_realization(l_hat: TimeSeries, noise_kw: float = 0.0, seed: int = 0) -> TimeSeries:
    """30-s net-load realization: the 15-min forecast held constant plus uniform noise"""
    if noise_kw < 0:
        raise InvalidValue("noise amplitude must be non-negative")
    base = upsample_hold(l_hat, SUBSTEP_SECONDS)
    if noise_kw == 0:
        return base
    rng = np.random.default_rng(seed)
    noise = rng.uniform(-noise_kw, noise_kw, len(base))
    return base.with_values(np.asarray(base.values) + noise)


def load_realization(path: Union[str, Path]) -> TimeSeries:
    return read_series_csv(path, Unit.KW, SUBSTEP_SECONDS)


@dataclass
class SimTrace:
    """Closed-loop record, one row per 30-s step

    ``premium_up`` / ``premium_down`` hold NaN where the premium was Blocked.
    """

    frame: pd.DataFrame
    soe0: float
    substeps: int = SUBSTEPS_PER_INTERVAL
    clamp_events: int = 0
    alarms: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.frame)

    @property
    def grid(self) -> TimeGrid:
        stamps = pd.to_datetime(self.frame[CSV_HEADER[0]])
        return TimeGrid(stamps.iloc[0].to_pydatetime(), SUBSTEP_SECONDS, len(self.frame))

    def column(self, name: str) -> np.ndarray:
        return self.frame[name].to_numpy(dtype=float)

    def to_csv(self, path: Union[str, Path]):
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        self.frame.to_csv(path, index=False, encoding="utf-8", lineterminator="\n", float_format="%.10g")

    @classmethod
    def from_csv(cls, path: Union[str, Path], soe0: float) -> "SimTrace":
        frame = pd.read_csv(path, encoding="utf-8", keep_default_na=True)
        missing = [c for c in TRACE_COLUMNS if c not in frame.columns]
        if missing:
            raise InvalidValue(f"{path}: missing trace columns {', '.join(missing)}")
        frame["alarm"] = frame["alarm"].fillna("").astype(str)
        return cls(frame, float(soe0), clamp_events=int(frame["clamped"].sum()),
                   alarms=[a for a in frame["alarm"] if a])


@contextlib.contextmanager
def alarm_log(path: Union[str, Path]) -> Iterator[None]:
    """Route controller and plant alarms to ``path`` while the block runs"""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(path, mode="w", encoding="utf-8")
    handler.setFormatter(logging.Formatter("%(asctime)s - %(levelname)s - %(message)s"))
    alarm_logger.addHandler(handler)
    try:
        yield
    finally:
        alarm_logger.removeHandler(handler)
        handler.close()


def run_closed_loop(schedule: Schedule, realization: TimeSeries, cfg: ActivationConfig, battery: BatteryParams,
                    site: SiteParams, book: TariffBook, mpc_cfg: MpcConfig = MpcConfig(),
                    plant_eta: Optional[float] = None) -> SimTrace:
    """Simulate one day of real-time operation

    Args:
        schedule (Schedule): Day-ahead schedule providing P̂ and the SOE envelope
        realization (TimeSeries): Net load at 30-s resolution over the same day
        cfg (ActivationConfig): aFRR activation process
        battery (BatteryParams): Battery model; soe0 starts the plant
        site (SiteParams): Grid connection
        book (TariffBook): Day-ahead tariff book; import prices threshold the activations
        mpc_cfg (MpcConfig, optional): Controller weights. Defaults to MpcConfig()
        plant_eta (Optional[float]): Plant efficiency if it differs from the model

    Returns:
        SimTrace: One record per 30-s step
    """
    K = SUBSTEPS_PER_INTERVAL
    intervals = schedule.grid.steps
    expected = schedule.grid.refine(SUBSTEP_SECONDS)
    if realization.grid.step_seconds != SUBSTEP_SECONDS or len(realization) != expected.steps:
        raise GridMismatch(f"realization has {len(realization)} steps of {realization.grid.step_seconds} s, "
                           f"expected {expected.steps} of {SUBSTEP_SECONDS} s")
    if realization.grid.start != expected.start:
        raise GridMismatch("realization and schedule start at different times")
    book.pi_import.require_same_grid(schedule.dispatch_plan, "tariff book and schedule")

    steps = expected.steps
    tariff_rt = np.repeat(np.asarray(book.pi_import.values), K)
    stream = activation_stream(cfg, steps, tariff_rt)
    l_real = np.asarray(realization.values)
    plan = np.asarray(schedule.dispatch_plan.values)
    l_hat = plan - np.asarray(schedule.b_local_plus.values) + np.asarray(schedule.b_local_minus.values)

    rec = {name: np.zeros(steps) for name in TRACE_COLUMNS[1:17]}
    clamped_col = np.zeros(steps, dtype=int)
    alarms_col = [""] * steps
    plant = PlantState(battery.soe0)
    alarms = []

    for n in range(steps):
        t, k = divmod(n, K)
        k_star = k - 1
        start = t * K
        forecast = intraday_persistence(l_real[:n], t, k_star, fallback=l_hat[t], substeps=K)
        state = MpcState(
            t=t,
            k_star=k_star,
            p_hat_t=plan[t],
            meter_samples=rec["p_billed_kw"][start:n],
            soe_meas=min(max(plant.soe, 0.0), battery.e_nom),
            l_hat_residual=forecast,
            premium_up=stream.premium_up[n],
            premium_down=stream.premium_down[n],
            battery=battery,
            soe_envelope=schedule.soe_envelope(t),
            substeps=K,
        )
        decision = mpc_step(state, mpc_cfg)
        plant_next = battery_step(plant, decision.b0, battery, eta=plant_eta)

        # A clamped setpoint is shared out in proportion to the commanded parts
        scale = plant_next.last_applied_kw / decision.b0 if decision.b0 != 0.0 else 0.0
        b_local = decision.b_local * scale
        b_afrr = decision.b_afrr * scale
        p_billed = l_real[n] + b_local

        alarm = decision.alarm or ""
        if plant_next.clamp_events > plant.clamp_events:
            note = (f"step {n}: setpoint {decision.b0:.3f} kW clamped to {plant_next.last_applied_kw:.3f} kW "
                    f"at SOE {plant.soe:.3f} kWh")
            alarm = f"{alarm}; {note}" if alarm else note
        if alarm:
            alarm_logger.warning(alarm)
            alarms.append(alarm)

        rec["interval"][n] = t
        rec["substep"][n] = k
        rec["l_kw"][n] = l_real[n]
        rec["l_forecast_kw"][n] = forecast[0]
        rec["p_hat_kw"][n] = plan[t]
        rec["expected_avg_kw"][n] = (state.meter_samples.sum() + forecast.sum()) / K
        rec["b_cmd_kw"][n] = decision.b0
        rec["b_local_kw"][n] = b_local
        rec["b_afrr_kw"][n] = b_afrr
        rec["p_billed_kw"][n] = p_billed
        rec["p_meter_kw"][n] = p_billed + b_afrr
        rec["soe_kwh"][n] = plant_next.soe
        rec["premium_up"][n] = np.nan if stream.premium_up.blocked[n] else stream.premium_up.amounts[n]
        rec["premium_down"][n] = np.nan if stream.premium_down.blocked[n] else stream.premium_down.amounts[n]
        rec["price_up"][n] = stream.price_up[n]
        rec["price_down"][n] = stream.price_down[n]
        clamped_col[n] = plant_next.clamp_events - plant.clamp_events
        alarms_col[n] = alarm
        plant = plant_next

        if k == K - 1:
            logger.debug(f"Interval {t}: mean billed {rec['p_billed_kw'][start:n + 1].mean():.2f} kW, plan {plan[t]:.2f} kW")

    frame = pd.DataFrame({CSV_HEADER[0]: [ts.isoformat() for ts in expected.timestamps()]})
    for name in TRACE_COLUMNS[1:17]:
        frame[name] = rec[name]
    frame["interval"] = frame["interval"].astype(int)
    frame["substep"] = frame["substep"].astype(int)
    frame["clamped"] = clamped_col
    frame["alarm"] = alarms_col
    logger.info(
        f"Closed loop finished: {steps} steps over {intervals} intervals, final SOE {plant.soe:.2f} kWh, "
        f"{plant.clamp_events} clamp events, {len(alarms)} alarms"
    )
    return SimTrace(frame, battery.soe0, K, plant.clamp_events, alarms)
