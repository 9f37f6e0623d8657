"""
Stage orchestration for the command line: forecast, schedule, simulate, report.

Each stage reads the artifacts of the previous one from the output directory
and runs it first when they are missing.
"""

import json
import logging
from pathlib import Path
from typing import Any, Callable, Dict

from config import RunConfig
from core import SUBSTEP_SECONDS, TimeSeries, Unit, read_series_csv, write_series_csv
from errors import ConfigError, InfeasibleProblem, ToolkitError
from forecasting import clear_sky_pv, gross_load_forecast, load_history, net_load_forecast, select_similar_days
from markets import TariffBook, load_scenarios
from reporting import realized_costs, write_report
from scheduler import read_schedule, solve_day_ahead, write_schedule
from simulator import SimTrace, alarm_log, load_realization, make_realization, run_closed_loop
from synthetic import write_bundled_dataset

logger = logging.getLogger(__name__)

SUBCOMMANDS = ("forecast", "schedule", "simulate", "report")


class BatteryPipeline:
    """Runs the stages of one configuration against its output directory"""

    def __init__(self, config: RunConfig):
        self.config = config
        self.out = Path(config.output_dir)
        self.forecast_dir = self.out / "forecast"
        self.schedule_dir = self.out / "schedule"
        self.simulate_dir = self.out / "simulate"
        self.report_dir = self.out / "report"

    def tariff_book(self) -> TariffBook:
        return self.config.tariff_section().to_book(self.config.forecast.grid)

    def prepare_inputs(self):
        """Materialise the bundled dataset when requested and check the inputs exist"""
        if self.config.bundled_dataset:
            write_bundled_dataset(self.config.paths.history_dir.parent, self.config.forecast.target_date)
        self.config.check_inputs()

    def forecast(self) -> Dict[str, str]:
        """Similar-day gross load minus the PV forecast"""
        cfg = self.config.forecast
        grid = cfg.grid
        history = load_history(self.config.paths.history_dir)
        selected = select_similar_days(history, cfg.to_target(), cfg.to_config())
        gross = gross_load_forecast(selected, grid)
        if cfg.pv_source == "file":
            pv = read_series_csv(self.config.paths.pv_forecast, Unit.KW, grid.step_seconds)
            if pv.grid.steps != grid.steps:
                raise ConfigError(f"{self.config.paths.pv_forecast}: {pv.grid.steps} rows, expected {grid.steps}")
            pv = TimeSeries(grid, pv.values, Unit.KW)
        else:
            pv = clear_sky_pv(grid, cfg.pv_capacity_kw, cfg.sunrise, cfg.sunset)
        net = net_load_forecast(gross, pv)

        files = {}
        for name, series in (("gross_load", gross), ("pv", pv), ("net_load", net)):
            path = self.forecast_dir / f"{name}.csv"
            write_series_csv(series, path)
            files[name] = str(path)
        days_path = self.forecast_dir / "similar_days.json"
        with open(days_path, "w", encoding="utf-8") as f:
            json.dump([d.date.isoformat() for d in selected], f, indent=2)
            f.write("\n")
        files["similar_days"] = str(days_path)
        logger.info(f"Net-load forecast for {cfg.target_date}: peak {max(net.values):.2f} kW from {len(selected)} days")
        return files

    def load_forecast(self) -> TimeSeries:
        path = self.forecast_dir / "net_load.csv"
        if not path.is_file():
            self.forecast()
        series = read_series_csv(path, Unit.KW, self.config.forecast.grid.step_seconds)
        return TimeSeries(self.config.forecast.grid, series.values, Unit.KW)

    def schedule(self) -> Dict[str, str]:
        """Day-ahead stochastic schedule"""
        l_hat = self.load_forecast()
        book = self.tariff_book()
        tariffs = self.config.tariff_section()
        scen = load_scenarios(self.config.paths.scenario_files, book.pi_import, tariffs.scenario_probabilities)
        schedule = solve_day_ahead(
            l_hat,
            self.config.battery.to_params(),
            self.config.site.to_params(),
            book,
            scen,
            node_limit=self.config.schedule.node_limit,
        )
        return write_schedule(schedule, self.schedule_dir)

    def simulate(self) -> Dict[str, str]:
        """Closed-loop day against a realization of the net load"""
        if not (self.schedule_dir / "schedule.csv").is_file():
            self.schedule()
        schedule = read_schedule(self.schedule_dir)
        l_hat = self.load_forecast()
        if self.config.paths.realization is not None:
            realization = load_realization(self.config.paths.realization)
        else:
            realization = make_realization(l_hat, self.config.simulation.noise_kw, self.config.seed)

        battery = self.config.battery.to_params().with_soe0(schedule.soe0)
        self.simulate_dir.mkdir(parents=True, exist_ok=True)
        alarms_path = self.simulate_dir / "alarms.log"
        with alarm_log(alarms_path):
            trace = run_closed_loop(
                schedule,
                realization,
                self.config.activation.to_config(self.config.seed),
                battery,
                self.config.site.to_params(),
                self.tariff_book(),
                self.config.mpc.to_config(),
                self.config.simulation.plant_eta,
            )
        trace_path = self.simulate_dir / "trace.csv"
        trace.to_csv(trace_path)
        realization_path = self.simulate_dir / "realization.csv"
        write_series_csv(realization, realization_path)
        if trace.alarms:
            logger.warning(f"{len(trace.alarms)} alarms raised, see {alarms_path}")
        return {"trace": str(trace_path), "realization": str(realization_path), "alarms": str(alarms_path)}

    def report(self) -> Dict[str, str]:
        """Realized costs and tracking KPIs of the simulated day"""
        trace_path = self.simulate_dir / "trace.csv"
        if not trace_path.is_file():
            self.simulate()
        schedule = read_schedule(self.schedule_dir)
        book = self.tariff_book()
        trace = SimTrace.from_csv(trace_path, schedule.soe0)
        if trace.grid.step_seconds != SUBSTEP_SECONDS:
            raise ConfigError(f"{trace_path}: not a 30-s trace")
        report = realized_costs(trace, book, schedule)
        return write_report(report, self.report_dir, trace, book, html=self.config.simulation.html)

    def stage(self, subcommand: str) -> Callable[[], Dict[str, str]]:
        stages = {
            "forecast": self.forecast,
            "schedule": self.schedule,
            "simulate": self.simulate,
            "report": self.report,
        }
        if subcommand not in stages:
            raise ConfigError(f"unknown subcommand {subcommand!r}, expected one of {', '.join(SUBCOMMANDS)}")
        return stages[subcommand]


def run_pipeline(config: RunConfig, subcommand: str) -> Dict[str, Any]:
    """Run one stage and report its outcome

    Args:
        config (RunConfig): Validated configuration
        subcommand (str): forecast, schedule, simulate or report

    Returns:
        Dict[str, Any]: ``files`` and ``exit_code`` 0 on success, otherwise
            ``error`` with exit code 2 (configuration), 3 (infeasible) or 1
    """
    pipeline = BatteryPipeline(config)
    try:
        run = pipeline.stage(subcommand)
        pipeline.out.mkdir(parents=True, exist_ok=True)
        pipeline.prepare_inputs()
        files = run()
        logger.info(f"✅ {subcommand} finished, {len(files)} artifacts in {pipeline.out}")
        return {"subcommand": subcommand, "files": files, "exit_code": 0}
    except InfeasibleProblem as e:
        logger.error(f"❌ {subcommand} failed: {str(e)}")
        return {"subcommand": subcommand, "error": str(e), "diagnostic": e.diagnostic, "exit_code": e.exit_code}
    except ToolkitError as e:
        logger.error(f"❌ {subcommand} failed: {str(e)}")
        return {"subcommand": subcommand, "error": str(e), "exit_code": e.exit_code}
    except OSError as e:
        logger.error(f"❌ {subcommand} failed: {str(e)}")
        return {"subcommand": subcommand, "error": str(e), "exit_code": ConfigError.exit_code}
