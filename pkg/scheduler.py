"""
Day-ahead two-stage stochastic schedule.

The first stage is the local battery power (B_L⁺, B_L⁻) shared by all
scenarios; it fixes the dispatch plan P̂ = L̂ + B_L⁺ − B_L⁻. The second stage is
the aFRR allocation per premium scenario. Energy cost uses an epigraph
variable for the import part, the peak term is an epigraph over P̂, and the SOE
of each scenario is written through the running-sum matrix so no SOE variables
are needed.
"""

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from core import CSV_HEADER, SiteParams, TimeGrid, TimeSeries, Unit, cumsum_matrix, pos_neg_split
from errors import GridMismatch, InfeasibleProblem, InvalidLength, InvalidModel, InvalidValue, ResourceExhausted
from markets import (
    ScenarioSet,
    TariffBook,
    expected_regulation_revenue,
    grid_energy_cost,
    power_charge,
)
from solver import LinearProgram, Relation, Solution, Status, solve_milp

logger = logging.getLogger(__name__)

MUTUAL_EXCLUSIVITY_TOL = 1e-6


@dataclass(frozen=True)
class BatteryParams:
    """Battery model shared by the scheduler, the controller and the plant

    Args:
        e_nom (float): Nominal capacity, kWh
        e_min (float): Lower SOE limit, kWh
        e_max (float): Upper SOE limit, kWh
        b_max (float): Power rating for charge and discharge, kW
        eta (float): One-way efficiency in (0, 1]
        soe0 (float): SOE at the start of the day, kWh
    """

    e_nom: float
    e_min: float
    e_max: float
    b_max: float
    eta: float
    soe0: float

    def __post_init__(self):
        values = (self.e_nom, self.e_min, self.e_max, self.b_max, self.eta, self.soe0)
        if not all(np.isfinite(v) for v in values):
            raise InvalidValue("battery parameters must be finite")
        if not 0.0 <= self.e_min < self.e_max <= self.e_nom:
            raise InvalidValue(f"need 0 <= e_min < e_max <= e_nom, got {self.e_min}, {self.e_max}, {self.e_nom}")
        if not self.e_min <= self.soe0 <= self.e_max:
            raise InvalidValue(f"soe0 {self.soe0} kWh outside [{self.e_min}, {self.e_max}]")
        if self.b_max <= 0.0:
            raise InvalidValue("b_max must be positive")
        if not 0.0 < self.eta <= 1.0:
            raise InvalidValue("eta must lie in (0, 1]")

    def with_soe0(self, soe0: float) -> "BatteryParams":
        """Copy with a new initial SOE, clamped into [e_min, e_max]"""
        clamped = float(np.clip(soe0, self.e_min, self.e_max))
        if clamped != soe0:
            logger.warning(f"Initial SOE {soe0:.3f} kWh outside [{self.e_min}, {self.e_max}], clamped to {clamped:.3f}")
        return replace(self, soe0=clamped)

    def soe_trajectory(self, charge: np.ndarray, discharge: np.ndarray, step_hours: float,
                       soe_start: Optional[float] = None) -> np.ndarray:
        """SOE at the end of each step for the given charge/discharge powers"""
        start = self.soe0 if soe_start is None else soe_start
        delta = step_hours * (self.eta * np.asarray(charge) - np.asarray(discharge) / self.eta)
        return start + np.cumsum(delta)


@dataclass
class Schedule:
    """Solved day-ahead schedule

    Per-scenario series are lists indexed by scenario in ScenarioSet order.
    """

    b_local_plus: TimeSeries
    b_local_minus: TimeSeries
    b_afrr_plus: List[TimeSeries]
    b_afrr_minus: List[TimeSeries]
    soe: List[TimeSeries]
    p_peak_shave: float
    dispatch_plan: TimeSeries
    objective_chf: float
    soe0: float
    probabilities: np.ndarray = field(default_factory=lambda: np.ones(1))
    soe_local: Optional[TimeSeries] = None
    summary: Dict[str, float] = field(default_factory=dict)

    @property
    def grid(self) -> TimeGrid:
        return self.dispatch_plan.grid

    @property
    def scenarios(self) -> int:
        return len(self.soe)

    def soe_envelope(self, t: int) -> Tuple[float, float]:
        """Range of the scheduled SOE at the end of interval t

        Covers every scenario and the path without any aFRR activation.
        """
        values = [s.values[t] for s in self.soe]
        if self.soe_local is not None:
            values.append(self.soe_local.values[t])
        return float(min(values)), float(max(values))


def _names(prefix: str, steps: int) -> List[str]:
    return [f"{prefix}[{t}]" for t in range(steps)]


def build_day_ahead(l_hat: TimeSeries, battery: BatteryParams, site: SiteParams, book: TariffBook,
                    scen: ScenarioSet) -> LinearProgram:
    """Formulate the stochastic day-ahead MILP

    Args:
        l_hat (TimeSeries): Net-load forecast, kW
        battery (BatteryParams): Battery model; soe0 is the SOE at midnight
        site (SiteParams): Transformer rating
        book (TariffBook): Tariffs on the same grid as the forecast
        scen (ScenarioSet): Thresholded premium scenarios

    Returns:
        LinearProgram: Program whose optimum is the schedule
    """
    if l_hat.grid != book.grid:
        raise GridMismatch("forecast and tariff book are on different grids")
    steps = l_hat.grid.steps
    if scen.steps != steps:
        raise GridMismatch(f"scenarios span {scen.steps} steps, forecast {steps}")
    if battery.e_min >= battery.e_max:
        raise InvalidModel("empty SOE envelope")
    site.check_battery(battery.b_max)

    dt = l_hat.grid.step_hours
    l_vals = np.asarray(l_hat.values)
    pi_imp = np.asarray(book.pi_import.values)
    pi_exp = np.asarray(book.pi_export.values)
    b_max, eta = battery.b_max, battery.eta
    C = cumsum_matrix(steps)

    lp = LinearProgram("day_ahead")
    bl_plus = lp.add_variables("bl_plus", steps, 0.0, b_max)
    bl_minus = lp.add_variables("bl_minus", steps, 0.0, b_max)
    s = lp.add_variables("s", steps, 0.0)
    p_peak = lp.add_variable("p_peak", 0.0)

    # Energy cost: Δ[(π_imp − π_exp)ᵀs + π_expᵀ(L̂ + B_L⁺ − B_L⁻)]
    for t in range(steps):
        lp.add_objective({s[t]: dt * (pi_imp[t] - pi_exp[t]), bl_plus[t]: dt * pi_exp[t], bl_minus[t]: -dt * pi_exp[t]})
        lp.add_constraint({s[t]: 1.0, bl_plus[t]: -1.0, bl_minus[t]: 1.0}, Relation.GE, l_vals[t], f"import[{t}]")
        lp.add_constraint({p_peak: 1.0, bl_plus[t]: -1.0, bl_minus[t]: 1.0}, Relation.GE, l_vals[t], f"peak[{t}]")
    lp.add_objective({p_peak: book.pi_power_per_day}, constant=float(dt * pi_exp @ l_vals))

    for w, (prob, sc) in enumerate(zip(scen.probabilities, scen.scenarios)):
        af_plus = lp.add_variables(f"afrr_plus_{w}", steps, 0.0, b_max)
        af_minus = lp.add_variables(f"afrr_minus_{w}", steps, 0.0, b_max)
        c = lp.add_variables(f"c_{w}", steps, is_binary=True)
        for t in range(steps):
            if sc.premium_down.blocked[t]:
                lp.fix(af_plus[t], 0.0)
            if sc.premium_up.blocked[t]:
                lp.fix(af_minus[t], 0.0)
            lp.add_objective({
                af_plus[t]: -prob * dt * sc.premium_down.amounts[t],
                af_minus[t]: -prob * dt * sc.premium_up.amounts[t],
            })
            lp.add_constraint({bl_plus[t]: 1.0, af_plus[t]: 1.0, c[t]: -b_max}, Relation.LE, 0.0, f"charge_{w}[{t}]")
            lp.add_constraint({bl_minus[t]: 1.0, af_minus[t]: 1.0, c[t]: b_max}, Relation.LE, b_max,
                              f"discharge_{w}[{t}]")
            lp.add_constraint(
                {bl_plus[t]: 1.0, bl_minus[t]: -1.0, af_plus[t]: 1.0, af_minus[t]: -1.0},
                Relation.LE, site.transformer_kw - l_vals[t], f"transformer_{w}[{t}]",
            )

        # SOE_ω = SOE(0) + C(Δη(B_L⁺ + B⁺_ω) − Δ/η(B_L⁻ + B⁻_ω))
        for t in range(steps):
            row: Dict[str, float] = {}
            for tau in np.nonzero(C[t])[0]:
                row[bl_plus[tau]] = dt * eta
                row[af_plus[tau]] = dt * eta
                row[bl_minus[tau]] = -dt / eta
                row[af_minus[tau]] = -dt / eta
            if t == steps - 1:
                lp.add_constraint(row, Relation.EQ, 0.0, f"terminal_soe_{w}")
            else:
                lp.add_constraint(row, Relation.LE, battery.e_max - battery.soe0, f"soe_max_{w}[{t}]")
                lp.add_constraint(row, Relation.GE, battery.e_min - battery.soe0, f"soe_min_{w}[{t}]")

    logger.debug(f"Day-ahead program: {lp.num_variables} variables, {len(lp.constraints)} constraints")
    return lp


def _diagnose(l_hat: TimeSeries, battery: BatteryParams, site: SiteParams) -> str:
    l_vals = np.asarray(l_hat.values)
    over = np.nonzero(l_vals - battery.b_max > site.transformer_kw)[0]
    if over.size:
        return f"transformer envelope: forecast exceeds {site.transformer_kw} kW plus battery at step {int(over[0])}"
    return "SOE envelope or terminal SOE condition cannot be met"


def solve_day_ahead(l_hat: TimeSeries, battery: BatteryParams, site: SiteParams, book: TariffBook,
                    scen: ScenarioSet, node_limit: int = 5000) -> Schedule:
    """Build and solve the day-ahead MILP and assemble the schedule

    Args:
        l_hat (TimeSeries): Net-load forecast, kW
        battery (BatteryParams): Battery model
        site (SiteParams): Transformer rating
        book (TariffBook): Tariffs
        scen (ScenarioSet): Premium scenarios
        node_limit (int, optional): Branch-and-bound node limit. Defaults to 5000

    Returns:
        Schedule: Solved schedule with its cost summary
    """
    lp = build_day_ahead(l_hat, battery, site, book, scen)
    try:
        solution = solve_milp(lp, node_limit=node_limit)
    except ResourceExhausted as e:
        if e.incumbent is None:
            raise
        logger.warning(f"Day-ahead solve stopped at the node limit, using the best schedule found")
        solution = e.incumbent
    if solution.status == Status.INFEASIBLE:
        raise InfeasibleProblem("day-ahead schedule is infeasible", _diagnose(l_hat, battery, site))
    if solution.status != Status.OPTIMAL:
        raise InvalidModel(f"day-ahead program is {solution.status.value}")

    schedule = _assemble(solution, l_hat, battery, book, scen)
    logger.info(
        f"Day-ahead schedule: objective {schedule.objective_chf:.4f} CHF, "
        f"peak {schedule.p_peak_shave:.2f} kW, {solution.nodes} nodes"
    )
    return schedule


def _assemble(solution: Solution, l_hat: TimeSeries, battery: BatteryParams, book: TariffBook,
              scen: ScenarioSet) -> Schedule:
    grid = l_hat.grid
    steps, dt = grid.steps, grid.step_hours
    bl_plus = solution.vector(_names("bl_plus", steps))
    bl_minus = solution.vector(_names("bl_minus", steps))

    af_plus, af_minus, soe = [], [], []
    for w in range(len(scen)):
        up = solution.vector(_names(f"afrr_plus_{w}", steps))
        down = solution.vector(_names(f"afrr_minus_{w}", steps))
        charge, discharge = bl_plus + up, bl_minus + down
        if np.any(charge * discharge > MUTUAL_EXCLUSIVITY_TOL):
            raise InvalidModel(f"scenario {w}: simultaneous charge and discharge in the solved schedule")
        af_plus.append(TimeSeries(grid, up, Unit.KW))
        af_minus.append(TimeSeries(grid, down, Unit.KW))
        soe.append(TimeSeries(grid, battery.soe_trajectory(charge, discharge, dt), Unit.KWH))

    l_vals = np.asarray(l_hat.values)
    plan = TimeSeries(grid, l_vals + bl_plus - bl_minus, Unit.KW)
    peak = max(0.0, float(np.max(plan.values)))

    energy = grid_energy_cost(plan.values, book)
    power = power_charge(pos_neg_split(plan.values)[0], book.pi_power_per_day)
    revenue = expected_regulation_revenue(
        [(a.values, b.values) for a, b in zip(af_plus, af_minus)], scen, dt
    )
    summary = {
        "objective_chf": float(solution.objective),
        "energy_cost_chf": energy,
        "power_cost_chf": power,
        "expected_regulation_revenue_chf": revenue,
        "p_peak_shave_kw": peak,
        "baseline_energy_cost_chf": grid_energy_cost(l_vals, book),
        "baseline_power_cost_chf": power_charge(pos_neg_split(l_vals)[0], book.pi_power_per_day),
        "baseline_peak_kw": max(0.0, float(np.max(l_vals))),
    }
    return Schedule(
        b_local_plus=TimeSeries(grid, bl_plus, Unit.KW),
        b_local_minus=TimeSeries(grid, bl_minus, Unit.KW),
        b_afrr_plus=af_plus,
        b_afrr_minus=af_minus,
        soe=soe,
        p_peak_shave=peak,
        dispatch_plan=plan,
        objective_chf=float(solution.objective),
        soe0=battery.soe0,
        probabilities=np.asarray(scen.probabilities, dtype=float),
        soe_local=TimeSeries(grid, battery.soe_trajectory(bl_plus, bl_minus, dt), Unit.KWH),
        summary=summary,
    )


def dispatch_plan(schedule: Schedule, l_hat: TimeSeries) -> TimeSeries:
    """P̂ = L̂ + B_L⁺ − B_L⁻; aFRR allocations are not part of the plan"""
    l_hat.require_same_grid(schedule.b_local_plus, "forecast and schedule")
    return l_hat.with_values(
        np.asarray(l_hat.values) + np.asarray(schedule.b_local_plus.values) - np.asarray(schedule.b_local_minus.values)
    )


def write_schedule(schedule: Schedule, out_dir: Union[str, Path]) -> Dict[str, str]:
    """Write ``schedule.csv`` (one row per 15-min step) and ``schedule_summary.json``"""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    columns = {
        CSV_HEADER[0]: [ts.isoformat() for ts in schedule.grid.timestamps()],
        "p_hat_kw": schedule.dispatch_plan.values,
        "b_local_plus_kw": schedule.b_local_plus.values,
        "b_local_minus_kw": schedule.b_local_minus.values,
    }
    for w in range(schedule.scenarios):
        columns[f"afrr_plus_kw_{w}"] = schedule.b_afrr_plus[w].values
        columns[f"afrr_minus_kw_{w}"] = schedule.b_afrr_minus[w].values
        columns[f"soe_kwh_{w}"] = schedule.soe[w].values
    if schedule.soe_local is not None:
        columns["soe_local_kwh"] = schedule.soe_local.values
    csv_path = out / "schedule.csv"
    pd.DataFrame(columns).to_csv(csv_path, index=False, encoding="utf-8", lineterminator="\n", float_format="%.10g")

    summary = dict(schedule.summary)
    summary.update({
        "objective_chf": schedule.objective_chf,
        "p_peak_shave_kw": schedule.p_peak_shave,
        "soe0_kwh": schedule.soe0,
        "scenarios": schedule.scenarios,
        "probabilities": [float(p) for p in schedule.probabilities],
    })
    summary_path = out / "schedule_summary.json"
    with open(summary_path, "w", encoding="utf-8") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
        f.write("\n")
    logger.info(f"Schedule written to {csv_path}")
    return {"schedule": str(csv_path), "summary": str(summary_path)}


def read_schedule(out_dir: Union[str, Path]) -> Schedule:
    """Load a schedule written by write_schedule"""
    out = Path(out_dir)
    frame = pd.read_csv(out / "schedule.csv", encoding="utf-8")
    with open(out / "schedule_summary.json", encoding="utf-8") as f:
        summary = json.load(f)
    if frame.empty:
        raise InvalidLength("schedule.csv has no rows")
    stamps = pd.to_datetime(frame[CSV_HEADER[0]])
    step = int((stamps.iloc[1] - stamps.iloc[0]).total_seconds()) if len(stamps) > 1 else 900
    grid = TimeGrid(stamps.iloc[0].to_pydatetime(), step, len(frame))

    def series(column: str, unit: Unit) -> TimeSeries:
        return TimeSeries(grid, frame[column].to_numpy(dtype=float), unit)

    count = int(summary["scenarios"])
    return Schedule(
        b_local_plus=series("b_local_plus_kw", Unit.KW),
        b_local_minus=series("b_local_minus_kw", Unit.KW),
        b_afrr_plus=[series(f"afrr_plus_kw_{w}", Unit.KW) for w in range(count)],
        b_afrr_minus=[series(f"afrr_minus_kw_{w}", Unit.KW) for w in range(count)],
        soe=[series(f"soe_kwh_{w}", Unit.KWH) for w in range(count)],
        p_peak_shave=float(summary["p_peak_shave_kw"]),
        dispatch_plan=series("p_hat_kw", Unit.KW),
        objective_chf=float(summary["objective_chf"]),
        soe0=float(summary["soe0_kwh"]),
        probabilities=np.asarray(summary["probabilities"], dtype=float),
        soe_local=series("soe_local_kwh", Unit.KWH) if "soe_local_kwh" in frame.columns else None,
        summary={k: v for k, v in summary.items() if isinstance(v, (int, float))},
    )
