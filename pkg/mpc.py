"""
Shrinking-horizon tracking controller.

Every 30 s the controller re-plans the rest of the current 15-minute interval:
it drives the interval's accumulated deviation from the dispatch plan to zero
with the local battery power and, where a premium is open, sells aFRR power in
the premium's direction. Only the first step of the plan is applied.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from core import SUBSTEP_HOURS, SUBSTEPS_PER_INTERVAL
from errors import InvalidState, ResourceExhausted
from forecasting import premium_persistence
from markets import PremiumValue
from scheduler import BatteryParams
from solver import LinearProgram, Relation, Status, solve_milp

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MpcConfig:
    """Controller weights

    Args:
        epsilon (float): Weight of the peak local tracking power tie-break, CHF/kW; aFRR power is not part of it
        soe_penalty (float): Penalty on leaving the scheduled SOE envelope, CHF/kWh
        soe_margin (float): Width added on both sides of the scheduled envelope, kWh
        node_limit (int): Branch-and-bound node limit per step
    """

    epsilon: float = 1e-3
    soe_penalty: float = 1e3
    soe_margin: float = 10.0
    node_limit: int = 200


@dataclass(frozen=True)
class MpcTerms:
    a: float
    b: np.ndarray
    residual: int

    def __post_init__(self):
        if not np.isfinite(self.a):
            raise InvalidState("accumulated tracking term is not finite")
        if self.residual < 1 or self.b.size != self.residual:
            raise InvalidState("residual horizon must be at least one step")


@dataclass
class MpcState:
    """Everything the controller knows when acting on a sub-step

    ``meter_samples`` holds the billed grid power P(t, 0..k_star) of the
    current interval, so it is empty at the interval start (k_star = -1).
    """

    t: int
    k_star: int
    p_hat_t: float
    meter_samples: np.ndarray
    soe_meas: float
    l_hat_residual: np.ndarray
    premium_up: PremiumValue
    premium_down: PremiumValue
    battery: BatteryParams
    soe_envelope: Optional[Tuple[float, float]] = None
    substeps: int = SUBSTEPS_PER_INTERVAL

    def __post_init__(self):
        self.meter_samples = np.asarray(self.meter_samples, dtype=float).reshape(-1)
        self.l_hat_residual = np.asarray(self.l_hat_residual, dtype=float).reshape(-1)
        if not -1 <= self.k_star <= self.substeps - 2:
            raise InvalidState(f"k_star {self.k_star} outside [-1, {self.substeps - 2}]")
        if self.meter_samples.size != self.k_star + 1:
            raise InvalidState(f"{self.meter_samples.size} meter samples for k_star = {self.k_star}")
        if self.l_hat_residual.size != self.residual:
            raise InvalidState(f"{self.l_hat_residual.size} forecast values for {self.residual} residual steps")
        if not 0.0 <= self.soe_meas <= self.battery.e_nom + 1e-9:
            raise InvalidState(f"measured SOE {self.soe_meas} outside [0, {self.battery.e_nom}]")

    @property
    def residual(self) -> int:
        return self.substeps - self.k_star - 1


@dataclass(frozen=True)
class MpcDecision:
    """First action of the solved plan

    Args:
        b0 (float): Total signed setpoint, kW (positive charges)
        b_local_plus (float): Local tracking charge, kW
        b_local_minus (float): Local tracking discharge, kW
        b_afrr_plus (float): Down-regulation (charging) power, kW
        b_afrr_minus (float): Up-regulation (discharging) power, kW
        alarm (Optional[str]): Set when the controller fell back to zero power
    """

    b0: float
    b_local_plus: float = 0.0
    b_local_minus: float = 0.0
    b_afrr_plus: float = 0.0
    b_afrr_minus: float = 0.0
    alarm: Optional[str] = None

    @property
    def b_local(self) -> float:
        return self.b_local_plus - self.b_local_minus

    @property
    def b_afrr(self) -> float:
        return self.b_afrr_plus - self.b_afrr_minus


def tracking_terms(state: MpcState) -> MpcTerms:
    """a = K·P̂(t) − Σ measured P − Σ forecast L̂ over the residual steps"""
    a = state.substeps * state.p_hat_t - state.meter_samples.sum() - state.l_hat_residual.sum()
    return MpcTerms(float(a), np.ones(state.residual), state.residual)


def build_mpc(terms: MpcTerms, state: MpcState, cfg: MpcConfig = MpcConfig()) -> LinearProgram:
    """Formulate the residual-horizon problem

    Args:
        terms (MpcTerms): Known part of the interval's tracking error
        state (MpcState): Current measurements and forecasts
        cfg (MpcConfig, optional): Weights. Defaults to MpcConfig()

    Returns:
        LinearProgram: Small MILP with one binary per residual step
    """
    R = terms.residual
    bat = state.battery
    dt = SUBSTEP_HOURS
    prem_up = premium_persistence(state.premium_up, R)
    prem_down = premium_persistence(state.premium_down, R)

    lp = LinearProgram(f"mpc_{state.t}_{state.k_star + 1}")
    bl_plus = lp.add_variables("bl_plus", R, 0.0, bat.b_max)
    bl_minus = lp.add_variables("bl_minus", R, 0.0, bat.b_max)
    af_plus = lp.add_variables("afrr_plus", R, 0.0, bat.b_max)
    af_minus = lp.add_variables("afrr_minus", R, 0.0, bat.b_max)
    c = lp.add_variables("c", R, is_binary=True)
    z = lp.add_variable("z", 0.0)
    m = lp.add_variable("m", 0.0)

    # |a − bᵀ(B_L⁺ − B_L⁻)| <= z
    local = {}
    for k in range(R):
        local[bl_plus[k]] = terms.b[k]
        local[bl_minus[k]] = -terms.b[k]
    lp.add_constraint({z: 1.0, **local}, Relation.GE, terms.a, "abs_pos")
    lp.add_constraint({z: 1.0, **{k: -v for k, v in local.items()}}, Relation.GE, -terms.a, "abs_neg")
    lp.add_objective({z: dt, m: cfg.epsilon})

    for k in range(R):
        if prem_down.blocked[k]:
            lp.fix(af_plus[k], 0.0)
        if prem_up.blocked[k]:
            lp.fix(af_minus[k], 0.0)
        lp.add_objective({af_plus[k]: -dt * prem_down.amounts[k], af_minus[k]: -dt * prem_up.amounts[k]})
        lp.add_constraint({bl_plus[k]: 1.0, af_plus[k]: 1.0, c[k]: -bat.b_max}, Relation.LE, 0.0, f"charge[{k}]")
        lp.add_constraint({bl_minus[k]: 1.0, af_minus[k]: 1.0, c[k]: bat.b_max}, Relation.LE, bat.b_max,
                          f"discharge[{k}]")
        lp.add_constraint({m: 1.0, bl_plus[k]: -1.0}, Relation.GE, 0.0, f"peak_plus[{k}]")
        lp.add_constraint({m: 1.0, bl_minus[k]: -1.0}, Relation.GE, 0.0, f"peak_minus[{k}]")

    # SOE from the measurement; hard limits widened to include it after plant drift
    lo_hard = min(bat.e_min, state.soe_meas)
    hi_hard = max(bat.e_max, state.soe_meas)
    row = {}
    for k in range(R):
        row[bl_plus[k]] = dt * bat.eta
        row[af_plus[k]] = dt * bat.eta
        row[bl_minus[k]] = -dt / bat.eta
        row[af_minus[k]] = -dt / bat.eta
        lp.add_constraint(dict(row), Relation.LE, hi_hard - state.soe_meas, f"soe_max[{k}]")
        lp.add_constraint(dict(row), Relation.GE, lo_hard - state.soe_meas, f"soe_min[{k}]")

    if state.soe_envelope is not None:
        env_lo = state.soe_envelope[0] - cfg.soe_margin
        env_hi = state.soe_envelope[1] + cfg.soe_margin
        under = lp.add_variable("soe_under", 0.0)
        over = lp.add_variable("soe_over", 0.0)
        lp.add_constraint({**row, under: 1.0}, Relation.GE, env_lo - state.soe_meas, "soe_envelope_min")
        lp.add_constraint({**row, over: -1.0}, Relation.LE, env_hi - state.soe_meas, "soe_envelope_max")
        lp.add_objective({under: cfg.soe_penalty, over: cfg.soe_penalty})
    return lp


def mpc_step(state: MpcState, cfg: MpcConfig = MpcConfig()) -> MpcDecision:
    """Solve the residual problem and return its first action

    Falls back to B₀ = 0 with an alarm when no solution is available.
    """
    terms = tracking_terms(state)
    lp = build_mpc(terms, state, cfg)
    try:
        solution = solve_milp(lp, node_limit=cfg.node_limit)
    except ResourceExhausted as e:
        if e.incumbent is None:
            return _fallback(state, f"node limit reached without a solution: {e}")
        solution = e.incumbent
    if solution.status != Status.OPTIMAL:
        return _fallback(state, f"controller problem {solution.status.value}")

    parts = [solution[f"{name}[0]"] for name in ("bl_plus", "bl_minus", "afrr_plus", "afrr_minus")]
    b0 = (parts[0] - parts[1]) + (parts[2] - parts[3])
    return MpcDecision(float(b0), *(float(p) for p in parts))


def _fallback(state: MpcState, reason: str) -> MpcDecision:
    message = f"interval {state.t} sub-step {state.k_star + 1}: {reason}, applying 0 kW"
    logger.warning(message)
    return MpcDecision(0.0, alarm=message)
