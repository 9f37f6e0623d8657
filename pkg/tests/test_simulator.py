import numpy as np
import pandas as pd
import pytest

from conftest import blocked_scenarios, flat_book, kw
from core import SUBSTEP_HOURS, TimeGrid, TimeSeries, Unit, write_series_csv
from errors import GridMismatch, InvalidValue
from scheduler import solve_day_ahead
from simulator import (
    ActivationConfig,
    PlantState,
    SimTrace,
    activation_stream,
    alarm_log,
    alarm_logger,
    battery_step,
    load_realization,
    make_realization,
    run_closed_loop,
)

LOAD = [60.0, 90.0, 40.0, 70.0]
QUIET = ActivationConfig(p_up=0.0, p_down=0.0)


@pytest.fixture
def setup(campus_battery, site):
    l_hat = kw(LOAD)
    book = flat_book(4, 0.171, 0.0068, 150 / 365)
    schedule = solve_day_ahead(l_hat, campus_battery, site, book, blocked_scenarios(4))
    return l_hat, book, schedule


def interval_errors(trace: SimTrace) -> np.ndarray:
    gap = trace.column("p_billed_kw") - trace.column("p_hat_kw")
    return SUBSTEP_HOURS * gap.reshape(-1, trace.substeps).sum(axis=1)


def test_battery_step_examples(campus_battery):
    idle = battery_step(PlantState(132.0), 0.0, campus_battery)
    assert idle.soe == 132.0
    assert idle.clamp_events == 0

    charged = battery_step(PlantState(132.0), 140.0, campus_battery)
    assert charged.soe - 132.0 == pytest.approx(1.1083, abs=1e-4)
    assert charged.last_applied_kw == 140.0

    full = battery_step(PlantState(campus_battery.e_max), 50.0, campus_battery)
    assert full.last_applied_kw == 0.0
    assert full.soe == campus_battery.e_max
    assert full.clamp_events == 1


def test_battery_step_clamps_power_and_energy(campus_battery):
    over = battery_step(PlantState(132.0), -500.0, campus_battery)
    assert over.last_applied_kw == -campus_battery.b_max
    assert over.clamp_events == 1

    near_empty = PlantState(campus_battery.e_min + 0.1)
    drained = battery_step(near_empty, -140.0, campus_battery)
    assert drained.soe == pytest.approx(campus_battery.e_min, abs=1e-12)
    assert drained.clamp_events == 1


def test_battery_step_is_linear_within_limits(campus_battery):
    a = battery_step(PlantState(132.0), 30.0, campus_battery).soe - 132.0
    b = battery_step(PlantState(132.0), 60.0, campus_battery).soe - 132.0
    assert b == pytest.approx(2 * a, rel=1e-12)
    discharge = battery_step(PlantState(132.0), -60.0, campus_battery).soe - 132.0
    assert discharge == pytest.approx(-SUBSTEP_HOURS * 60.0 / 0.95)


def test_plant_efficiency_override(campus_battery):
    plant = battery_step(PlantState(132.0), 120.0, campus_battery, eta=0.9)
    assert plant.soe - 132.0 == pytest.approx(SUBSTEP_HOURS * 0.9 * 120.0)


def test_activation_config_validation():
    with pytest.raises(InvalidValue):
        ActivationConfig(p_up=0.7, p_down=0.4)
    with pytest.raises(InvalidValue):
        ActivationConfig(p_up=-0.1)
    with pytest.raises(InvalidValue):
        ActivationConfig(price_low=0.5, price_high=0.2)


def test_activation_stream_quiet():
    stream = activation_stream(QUIET, 500, 0.171)
    assert stream.premium_up.blocked.all()
    assert stream.premium_down.blocked.all()
    assert np.all(stream.price_up == 0.0)


def test_activation_stream_is_deterministic():
    cfg = ActivationConfig(rng_seed=7)
    a, b = activation_stream(cfg, 2880, 0.171), activation_stream(cfg, 2880, 0.171)
    np.testing.assert_array_equal(a.price_up, b.price_up)
    np.testing.assert_array_equal(a.premium_down.blocked, b.premium_down.blocked)
    other = activation_stream(ActivationConfig(rng_seed=8), 2880, 0.171)
    assert not np.array_equal(a.price_up, other.price_up)


def test_activation_frequency():
    stream = activation_stream(ActivationConfig(p_up=0.1, p_down=0.0, rng_seed=3), 100_000, 0.0)
    assert (stream.price_up > 0.0).mean() == pytest.approx(0.1, abs=0.005)
    assert stream.premium_down.blocked.all()


def test_activation_stream_one_direction_and_thresholded():
    stream = activation_stream(ActivationConfig(p_up=0.3, p_down=0.3, rng_seed=1), 5000, 0.4)
    assert not np.any((stream.price_up > 0) & (stream.price_down > 0))
    open_up = ~stream.premium_up.blocked
    assert np.all(stream.price_up[open_up] > 0.4)
    assert stream.premium_up.blocked[(stream.price_up > 0) & (stream.price_up <= 0.4)].all()
    np.testing.assert_allclose(stream.premium_up.amounts[open_up], stream.price_up[open_up] - 0.4)


def test_make_realization():
    l_hat = kw([10.0, 20.0])
    flat = make_realization(l_hat)
    assert len(flat) == 60
    assert flat.values[29] == 10.0 and flat.values[30] == 20.0
    noisy = make_realization(l_hat, noise_kw=5.0, seed=1)
    np.testing.assert_array_equal(noisy.values, make_realization(l_hat, noise_kw=5.0, seed=1).values)
    assert np.max(np.abs(np.asarray(noisy.values) - np.asarray(flat.values))) <= 5.0


def test_load_realization_reads_fine_series(tmp_path):
    realization = make_realization(kw([10.0, 20.0]), noise_kw=5.0, seed=4)
    write_series_csv(realization, tmp_path / "realization.csv")
    loaded = load_realization(tmp_path / "realization.csv")
    assert loaded.grid.step_seconds == 30
    assert len(loaded) == 60
    np.testing.assert_allclose(loaded.values, realization.values, rtol=1e-9)


def test_closed_loop_rejects_wrong_length(setup, campus_battery, site):
    l_hat, book, schedule = setup
    realization = make_realization(l_hat)
    short = TimeSeries(TimeGrid(realization.grid.start, 30, 119), realization.values[:119], Unit.KW)
    with pytest.raises(GridMismatch):
        run_closed_loop(schedule, short, QUIET, campus_battery, site, book)


def test_perfect_forecast_tracks_the_plan(setup, campus_battery, site):
    l_hat, book, schedule = setup
    trace = run_closed_loop(schedule, make_realization(l_hat), QUIET, campus_battery, site, book)
    assert len(trace) == 120
    assert np.all(np.abs(interval_errors(trace)) <= 1e-3)
    assert trace.clamp_events == 0
    assert np.all(trace.column("b_afrr_kw") == 0.0)


def test_trace_power_balance_and_energy_accounting(setup, campus_battery, site):
    l_hat, book, schedule = setup
    cfg = ActivationConfig(p_up=0.2, p_down=0.2, price_low=0.18, price_high=0.6, rng_seed=5)
    trace = run_closed_loop(schedule, make_realization(l_hat, 8.0, seed=2), cfg, campus_battery, site, book)

    l, b_local, b_afrr = trace.column("l_kw"), trace.column("b_local_kw"), trace.column("b_afrr_kw")
    np.testing.assert_array_equal(trace.column("p_meter_kw"), (l + b_local) + b_afrr)

    b = b_local + b_afrr
    eta = campus_battery.eta
    energy = SUBSTEP_HOURS * (eta * np.maximum(b, 0.0) - np.maximum(-b, 0.0) / eta)
    soe = trace.column("soe_kwh")
    assert soe[-1] - trace.soe0 == pytest.approx(energy.sum(), rel=1e-9, abs=1e-9)
    assert np.all(soe >= campus_battery.e_min - 1e-9) and np.all(soe <= campus_battery.e_max + 1e-9)

    # regulation power only in the direction of an issued premium
    up_open = ~np.isnan(trace.column("premium_up"))
    down_open = ~np.isnan(trace.column("premium_down"))
    assert np.all(b_afrr[~up_open] >= -1e-9)
    assert np.all(b_afrr[~down_open] <= 1e-9)


def test_closed_loop_is_deterministic(setup, campus_battery, site):
    l_hat, book, schedule = setup
    cfg = ActivationConfig(rng_seed=11)
    realization = make_realization(l_hat, 5.0, seed=4)
    first = run_closed_loop(schedule, realization, cfg, campus_battery, site, book)
    second = run_closed_loop(schedule, realization, cfg, campus_battery, site, book)
    pd.testing.assert_frame_equal(first.frame, second.frame)


def test_trace_csv_round_trip(tmp_path, setup, campus_battery, site):
    l_hat, book, schedule = setup
    trace = run_closed_loop(schedule, make_realization(l_hat), QUIET, campus_battery, site, book)
    path = tmp_path / "trace.csv"
    trace.to_csv(path)
    back = SimTrace.from_csv(path, campus_battery.soe0)
    assert len(back) == len(trace)
    assert back.grid == trace.grid
    np.testing.assert_allclose(back.column("soe_kwh"), trace.column("soe_kwh"), rtol=1e-9)
    assert back.alarms == trace.alarms


def test_trace_csv_requires_columns(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("timestamp_iso8601,l_kw\n2024-06-12T00:00:00,1\n", encoding="utf-8")
    with pytest.raises(InvalidValue):
        SimTrace.from_csv(path, 0.0)


def test_alarm_log_collects_alarms(tmp_path):
    path = tmp_path / "alarms.log"
    with alarm_log(path):
        alarm_logger.warning("step 3: setpoint clamped")
    alarm_logger.warning("outside the block")
    text = path.read_text(encoding="utf-8")
    assert "step 3: setpoint clamped" in text
    assert "outside the block" not in text
