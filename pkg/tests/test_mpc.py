import numpy as np
import pytest

from errors import InvalidState
from markets import BLOCKED
from mpc import MpcConfig, MpcDecision, MpcState, build_mpc, mpc_step, tracking_terms
from solver import solve_milp


def state(battery, k_star=0, p_hat=10.0, meter=(12.0,), l_hat=(10.0, 10.0), soe=None, up=BLOCKED, down=BLOCKED,
          substeps=3, envelope=None) -> MpcState:
    return MpcState(
        t=0,
        k_star=k_star,
        p_hat_t=p_hat,
        meter_samples=np.asarray(meter, dtype=float),
        soe_meas=battery.soe0 if soe is None else soe,
        l_hat_residual=np.asarray(l_hat, dtype=float),
        premium_up=up,
        premium_down=down,
        battery=battery,
        soe_envelope=envelope,
        substeps=substeps,
    )


def test_tracking_terms_example(tiny_battery):
    terms = tracking_terms(state(tiny_battery))
    assert terms.a == pytest.approx(-2.0)
    assert terms.b.tolist() == [1.0, 1.0]
    assert terms.residual == 2


def test_tracking_terms_perfect_tracking(tiny_battery):
    s = state(tiny_battery, k_star=5, meter=np.full(6, 10.0), l_hat=np.full(24, 10.0), substeps=30)
    assert tracking_terms(s).a == pytest.approx(0.0)


def test_tracking_terms_last_residual_step(tiny_battery):
    s = state(tiny_battery, k_star=28, meter=np.full(29, 10.0), l_hat=[10.0], substeps=30)
    terms = tracking_terms(s)
    assert terms.b.tolist() == [1.0]
    assert terms.residual == 1


def test_residual_shrinks_by_one_per_step(tiny_battery):
    residuals = [
        state(tiny_battery, k_star=k, meter=np.full(k + 1, 10.0), l_hat=np.full(29 - k, 10.0), substeps=30).residual
        for k in range(-1, 29)
    ]
    assert residuals[0] == 30
    assert np.all(np.diff(residuals) == -1)


def test_invalid_states(tiny_battery):
    with pytest.raises(InvalidState):
        state(tiny_battery, meter=(12.0, 11.0))
    with pytest.raises(InvalidState):
        state(tiny_battery, l_hat=(10.0,))
    with pytest.raises(InvalidState):
        state(tiny_battery, k_star=2, meter=(1.0, 1.0, 1.0), l_hat=())
    with pytest.raises(InvalidState):
        state(tiny_battery, soe=25.0)


def test_discharge_spread_uniformly(tiny_battery):
    decision = mpc_step(state(tiny_battery))
    assert decision.b0 == pytest.approx(-1.0, abs=1e-6)
    assert decision.b_local_minus == pytest.approx(1.0, abs=1e-6)
    assert decision.b_afrr == pytest.approx(0.0, abs=1e-9)
    assert decision.alarm is None

    lp = build_mpc(tracking_terms(state(tiny_battery)), state(tiny_battery))
    solution = solve_milp(lp)
    assert solution["bl_minus[1]"] == pytest.approx(1.0, abs=1e-6)
    assert solution["z"] == pytest.approx(0.0, abs=1e-9)


def test_perfect_tracking_and_blocked_premiums_do_nothing(tiny_battery):
    s = state(tiny_battery, meter=(10.0,))
    solution = solve_milp(build_mpc(tracking_terms(s), s))
    assert solution.objective == pytest.approx(0.0, abs=1e-12)
    decision = mpc_step(s)
    assert decision.b0 == pytest.approx(0.0, abs=1e-9)


def test_open_up_premium_sells_full_power(tiny_battery):
    s = state(tiny_battery, k_star=-1, meter=(), l_hat=(10.0, 10.0, 10.0), up=0.5)
    solution = solve_milp(build_mpc(tracking_terms(s), s))
    for k in range(3):
        assert solution[f"afrr_minus[{k}]"] == pytest.approx(tiny_battery.b_max, abs=1e-6)
    decision = mpc_step(s)
    assert decision.b_afrr_minus == pytest.approx(tiny_battery.b_max, abs=1e-6)
    assert decision.b0 == pytest.approx(-tiny_battery.b_max, abs=1e-6)


def test_small_premium_is_sold_on_the_last_sub_step(campus_battery):
    s = state(campus_battery, k_star=28, meter=np.full(29, 10.0), l_hat=[10.0], up=0.01, substeps=30)
    decision = mpc_step(s)
    assert decision.b_local == pytest.approx(0.0, abs=1e-6)
    assert decision.b_afrr_minus == pytest.approx(campus_battery.b_max, abs=1e-6)


def test_blocked_direction_is_never_used(tiny_battery):
    s = state(tiny_battery, k_star=-1, meter=(), l_hat=(10.0, 10.0, 10.0), up=0.5)
    decision = mpc_step(s)
    assert decision.b_afrr_plus == pytest.approx(0.0, abs=1e-12)


def test_empty_battery_cannot_discharge(tiny_battery):
    decision = mpc_step(state(tiny_battery, soe=tiny_battery.e_min))
    assert decision.b0 == pytest.approx(0.0, abs=1e-9)


def test_soft_envelope_pulls_soe_back(tiny_battery):
    s = state(tiny_battery, meter=(10.0,), envelope=(15.0, 16.0))
    decision = mpc_step(s, MpcConfig(soe_margin=0.0))
    assert decision.alarm is None
    assert decision.b0 > 0.0


def test_decision_components():
    decision = MpcDecision(-3.0, b_local_plus=0.0, b_local_minus=1.0, b_afrr_plus=0.0, b_afrr_minus=2.0)
    assert decision.b_local == -1.0
    assert decision.b_afrr == -2.0
