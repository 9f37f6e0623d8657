from datetime import time

import numpy as np
import pytest

from conftest import DAY, flat_book, grid
from core import TimeGrid, TimeSeries, Unit
from errors import GatingViolation, GridMismatch, InvalidLength, InvalidModel, InvalidValue, NonConvexTariffs
from markets import (
    BLOCKED,
    ScenarioPremiums,
    ScenarioSet,
    TariffBook,
    ThresholdedPremium,
    energy_charge,
    expected_regulation_revenue,
    grid_energy_cost,
    load_scenarios,
    power_charge,
    reformulated_energy_cost,
    regulation_revenue,
    threshold_premiums,
    write_scenario_csv,
)


def prices(values):
    return TimeSeries(grid(len(values)), values, Unit.CHF_PER_KWH)


def test_threshold_premiums():
    prem = threshold_premiums(prices([0.20, 0.10, 0.171]), prices([0.171, 0.171, 0.171]))
    assert prem[0] == pytest.approx(0.029)
    assert prem[1] is BLOCKED
    assert prem[2] is BLOCKED
    assert prem.blocked.tolist() == [False, True, True]


def test_threshold_premiums_grid_mismatch():
    with pytest.raises(GridMismatch):
        threshold_premiums(prices([0.2, 0.2]), prices([0.1]))


def test_premium_must_be_strictly_positive():
    with pytest.raises(InvalidValue):
        ThresholdedPremium([0.0])
    prem = ThresholdedPremium([0.1, BLOCKED])
    assert prem.available.tolist() == [True, False]
    with pytest.raises(AttributeError):
        prem.amounts = np.zeros(2)


def test_tariff_book_rejects_negative_gap():
    g = grid(2)
    with pytest.raises(NonConvexTariffs):
        TariffBook(
            TimeSeries(g, [0.2, 0.05], Unit.CHF_PER_KWH),
            TimeSeries.constant(g, 0.1, Unit.CHF_PER_KWH),
            0.0,
        )


def test_tariff_book_from_windows():
    book = TariffBook.from_windows(TimeGrid.day_ahead(DAY))
    pi = np.asarray(book.pi_import.values)
    assert pi[27] == pytest.approx(0.162)  # 06:45
    assert pi[28] == pytest.approx(0.171)  # 07:00
    assert pi[79] == pytest.approx(0.171)  # 19:45
    assert pi[80] == pytest.approx(0.162)  # 20:00
    np.testing.assert_allclose(book.pi_export.values, 0.0068)
    assert book.pi_power_per_day == pytest.approx(150 / 365)

    night = TariffBook.from_windows(TimeGrid.day_ahead(DAY), peak_start=time(22), peak_end=time(6))
    assert night.pi_import.values[0] == pytest.approx(0.171)
    assert night.pi_import.values[48] == pytest.approx(0.162)


def test_tariff_book_refine_holds_values():
    book = flat_book(2).refine(30)
    assert book.grid.steps == 60
    assert book.grid.step_seconds == 30


def test_energy_charge_examples():
    assert energy_charge(np.full(96, 10.0), np.zeros(96), flat_book(96, 0.171)) == pytest.approx(41.04)
    assert energy_charge(np.zeros(4), np.full(4, 5.0), flat_book(4, 0.171, 0.0068)) == pytest.approx(-0.034)
    assert energy_charge(np.zeros(4), np.zeros(4), flat_book(4)) == 0.0


def test_energy_charge_rejects_negative_and_wrong_length():
    with pytest.raises(InvalidValue):
        energy_charge([-1.0, 0.0], [0.0, 0.0], flat_book(2))
    with pytest.raises(InvalidLength):
        energy_charge([1.0], [0.0], flat_book(2))


def test_energy_charge_monotone():
    book = flat_book(3, 0.2, 0.05)
    base = energy_charge([1.0, 2.0, 3.0], [1.0, 0.0, 0.0], book)
    assert energy_charge([1.0, 2.5, 3.0], [1.0, 0.0, 0.0], book) >= base
    assert energy_charge([1.0, 2.0, 3.0], [1.5, 0.0, 0.0], book) <= base


def test_power_charge_examples():
    assert power_charge([10.0, 20.0, 15.0], 150 / 365) == pytest.approx(8.2192, abs=1e-4)
    assert power_charge(np.zeros(5), 150 / 365) == 0.0
    assert power_charge([85.74], 1.0) == pytest.approx(85.74)
    with pytest.raises(InvalidLength):
        power_charge([], 1.0)


def test_reformulated_cost_matches_direct_evaluation():
    rng = np.random.default_rng(42)
    book = TariffBook(
        prices(rng.uniform(0.15, 0.3, 96)),
        prices(rng.uniform(0.0, 0.1, 96)),
        0.4,
    )
    for _ in range(1000):
        x = rng.normal(0.0, 60.0, 96)
        direct = grid_energy_cost(x, book)
        assert reformulated_energy_cost(x, book) == pytest.approx(direct, rel=1e-9, abs=1e-12)


def test_regulation_revenue_examples():
    prem = ThresholdedPremium([0.029, 0.029, BLOCKED])
    blocked = ThresholdedPremium.all_blocked(3)
    assert regulation_revenue([50.0, 50.0, 0.0], np.zeros(3), prem, blocked) == pytest.approx(0.725)
    assert regulation_revenue(np.zeros(3), np.zeros(3), blocked, blocked) == 0.0
    with pytest.raises(GatingViolation):
        regulation_revenue([0.0, 0.0, 10.0], np.zeros(3), prem, blocked)
    with pytest.raises(GatingViolation):
        regulation_revenue(np.zeros(3), [10.0, 0.0, 0.0], prem, blocked)


def _scenario(amount):
    return ScenarioPremiums(premium_up=ThresholdedPremium.all_blocked(1), premium_down=ThresholdedPremium([amount]))


def test_expected_regulation_revenue():
    single = ScenarioSet([_scenario(0.2)])
    alloc = ([10.0], [0.0])
    assert expected_regulation_revenue([alloc], single, 1.0) == pytest.approx(
        regulation_revenue(*alloc, single.scenarios[0].premium_down, single.scenarios[0].premium_up, 1.0)
    )

    pair = ScenarioSet([_scenario(0.2), _scenario(0.4)])
    assert expected_regulation_revenue([([10.0], [0.0]), ([10.0], [0.0])], pair, 1.0) == pytest.approx(3.0)

    weighted = ScenarioSet([_scenario(1.0), _scenario(1.0)], [0.3, 0.7])
    assert expected_regulation_revenue([([10.0], [0.0]), ([0.0], [0.0])], weighted, 1.0) == pytest.approx(3.0)

    with pytest.raises(InvalidModel):
        expected_regulation_revenue([alloc], pair, 1.0)


def test_scenario_set_probabilities():
    assert ScenarioSet([_scenario(0.1)] * 4).probabilities.tolist() == [0.25] * 4
    with pytest.raises(InvalidValue):
        ScenarioSet([_scenario(0.1)] * 2, [0.5, 0.6])
    with pytest.raises(InvalidLength):
        ScenarioSet([])


def test_load_scenarios_thresholds_against_import(tmp_path):
    g = grid(4)
    down = TimeSeries(g, [0.30, 0.10, -0.02, 0.171], Unit.CHF_PER_KWH)
    up = TimeSeries(g, [0.05, 0.50, 0.18, 0.0], Unit.CHF_PER_KWH)
    path = tmp_path / "afrr_day.csv"
    write_scenario_csv(down, up, path)
    assert path.read_text(encoding="utf-8").splitlines()[0] == "timestamp_iso8601,pi_afrr_down,pi_afrr_up"

    scen = load_scenarios([path, path], TimeSeries.constant(g, 0.171, Unit.CHF_PER_KWH))
    sc = scen.scenarios[0]
    assert sc.name == "afrr_day"
    assert sc.premium_down.blocked.tolist() == [False, True, True, True]
    assert sc.premium_down.amounts[0] == pytest.approx(0.129)
    assert sc.premium_up.blocked.tolist() == [True, False, False, True]
    assert sc.premium_up.amounts[2] == pytest.approx(0.009)
    assert scen.probabilities.tolist() == [0.5, 0.5]


def test_load_scenarios_wrong_length(tmp_path):
    g = grid(3)
    path = tmp_path / "short.csv"
    write_scenario_csv(TimeSeries.constant(g, 0.2, Unit.CHF_PER_KWH), TimeSeries.constant(g, 0.2, Unit.CHF_PER_KWH), path)
    with pytest.raises(InvalidLength):
        load_scenarios([path], TimeSeries.constant(grid(4), 0.171, Unit.CHF_PER_KWH))
