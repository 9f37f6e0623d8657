"""
Realized economics and tracking KPIs of a simulated day.
"""

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np
import pandas as pd
import plotly.graph_objects as go
from plotly.subplots import make_subplots

from core import SUBSTEP_HOURS, TimeSeries, pos_neg_split
from errors import InvalidLength
from markets import TariffBook, ThresholdedPremium, energy_charge, power_charge, regulation_revenue
from scheduler import Schedule
from simulator import SimTrace

logger = logging.getLogger(__name__)


@dataclass
class PeakMetrics:
    baseline_peak_kw: float
    realized_peak_kw: float
    peak_reduction_pct: float


@dataclass
class DayReport:
    """Realized costs, revenue and tracking quality of one day

    Args:
        c_energy (float): Energy cost with the battery, CHF
        c_power (float): Demand charge with the battery, CHF
        c_electricity (float): c_energy + c_power, CHF
        r_regulation (float): Realized aFRR revenue, CHF
        baseline_peak_kw (float): Peak 15-min import without the battery
        realized_peak_kw (float): Peak 15-min import with the battery
        peak_reduction_pct (float): 100·(baseline − realized)/baseline
        interval_errors_kwh (List[float]): Terminal tracking error per interval, kWh
    """

    c_energy: float
    c_power: float
    c_electricity: float
    r_regulation: float
    baseline_peak_kw: float
    realized_peak_kw: float
    peak_reduction_pct: float
    interval_errors_kwh: List[float] = field(default_factory=list)
    baseline_energy: float = 0.0
    baseline_power: float = 0.0
    scheduled_peak_kw: Optional[float] = None

    @property
    def baseline_electricity(self) -> float:
        return self.baseline_energy + self.baseline_power

    @property
    def net_cost(self) -> float:
        return self.c_electricity - self.r_regulation


def peak_metrics(baseline: Union[TimeSeries, np.ndarray], realized: Union[TimeSeries, np.ndarray]) -> PeakMetrics:
    """Peak import with and without the battery and the relative reduction"""
    if isinstance(baseline, TimeSeries) and isinstance(realized, TimeSeries):
        baseline.require_same_grid(realized, "baseline and realized power")
    base = np.asarray(baseline.values if isinstance(baseline, TimeSeries) else baseline, dtype=float)
    real = np.asarray(realized.values if isinstance(realized, TimeSeries) else realized, dtype=float)
    if base.size == 0 or real.size == 0:
        raise InvalidLength("peak metrics of an empty profile")
    base_peak = float(pos_neg_split(base)[0].max())
    real_peak = float(pos_neg_split(real)[0].max())
    reduction = 100.0 * (base_peak - real_peak) / base_peak if base_peak > 0.0 else 0.0
    return PeakMetrics(base_peak, real_peak, reduction)


def _interval_means(values: np.ndarray, substeps: int) -> np.ndarray:
    return values.reshape(-1, substeps).mean(axis=1)


def _issued_premium(column: np.ndarray) -> ThresholdedPremium:
    blocked = np.isnan(column)
    return ThresholdedPremium.from_arrays(np.where(blocked, 0.0, column), blocked)


def tracking_errors(trace: SimTrace) -> np.ndarray:
    """δ·Σ_k (P̂(t) − P(t, k)) per interval, kWh"""
    K = trace.substeps
    diff = trace.column("p_hat_kw") - trace.column("p_billed_kw")
    return SUBSTEP_HOURS * diff.reshape(-1, K).sum(axis=1)


def realized_costs(trace: SimTrace, book: TariffBook, schedule: Optional[Schedule] = None) -> DayReport:
    """Price a simulated day

    Billing uses the meter power without the aFRR component, averaged to the
    tariff grid. Revenue is counted at the premiums actually issued.

    Args:
        trace (SimTrace): Full-day trace
        book (TariffBook): Day tariffs on the 15-min grid
        schedule (Optional[Schedule]): Adds the scheduled peak to the report

    Returns:
        DayReport: Realized costs and KPIs
    """
    K = trace.substeps
    if len(trace) != book.grid.steps * K:
        raise InvalidLength(f"trace has {len(trace)} steps, a full day needs {book.grid.steps * K}")

    billed = _interval_means(trace.column("p_billed_kw"), K)
    baseline = _interval_means(trace.column("l_kw"), K)
    p_plus, p_minus = pos_neg_split(billed)
    c_energy = energy_charge(p_plus, p_minus, book)
    c_power = power_charge(p_plus, book.pi_power_per_day)
    base_plus, base_minus = pos_neg_split(baseline)

    b_afrr = trace.column("b_afrr_kw")
    b_down, b_up = pos_neg_split(b_afrr)
    revenue = regulation_revenue(
        b_down, b_up, _issued_premium(trace.column("premium_down")), _issued_premium(trace.column("premium_up")),
        SUBSTEP_HOURS,
    )
    peaks = peak_metrics(baseline, billed)
    report = DayReport(
        c_energy=c_energy,
        c_power=c_power,
        c_electricity=c_energy + c_power,
        r_regulation=revenue,
        baseline_peak_kw=peaks.baseline_peak_kw,
        realized_peak_kw=peaks.realized_peak_kw,
        peak_reduction_pct=peaks.peak_reduction_pct,
        interval_errors_kwh=tracking_errors(trace).tolist(),
        baseline_energy=energy_charge(base_plus, base_minus, book),
        baseline_power=power_charge(base_plus, book.pi_power_per_day),
        scheduled_peak_kw=None if schedule is None else schedule.p_peak_shave,
    )
    logger.info(
        f"Realized day: electricity {report.c_electricity:.2f} CHF (baseline {report.baseline_electricity:.2f}), "
        f"aFRR revenue {report.r_regulation:.2f} CHF, peak {report.realized_peak_kw:.2f} kW"
    )
    return report


def format_report(report: DayReport) -> str:
    errors = np.abs(np.asarray(report.interval_errors_kwh)) if report.interval_errors_kwh else np.zeros(1)
    lines = [
        "Day report",
        "==========",
        "",
        "Electricity cost              without battery    with battery",
        f"  energy [CHF]                {report.baseline_energy:15.2f} {report.c_energy:15.2f}",
        f"  power [CHF]                 {report.baseline_power:15.2f} {report.c_power:15.2f}",
        f"  total [CHF]                 {report.baseline_electricity:15.2f} {report.c_electricity:15.2f}",
        "",
        f"aFRR revenue [CHF]            {report.r_regulation:.2f}",
        f"Net cost [CHF]                {report.net_cost:.2f}",
        "",
        f"Peak grid power [kW]          baseline {report.baseline_peak_kw:.2f}, realized {report.realized_peak_kw:.2f}",
    ]
    if report.scheduled_peak_kw is not None:
        lines.append(f"Scheduled peak [kW]           {report.scheduled_peak_kw:.2f}")
    lines += [
        f"Peak reduction [%]            {report.peak_reduction_pct:.2f}",
        "",
        f"Tracking error [kWh]          max |e| {errors.max():.6f}, mean |e| {errors.mean():.6f}",
    ]
    return "\n".join(lines) + "\n"


def _write_dat(path: Path, header: str, columns: Dict[str, np.ndarray]):
    frame = pd.DataFrame(columns)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(f"# {header}\n# {' '.join(frame.columns)}\n")
        frame.to_csv(f, sep=" ", header=False, index=False, float_format="%.6f", lineterminator="\n")


def write_figure_data(trace: SimTrace, book: TariffBook, out_dir: Union[str, Path]) -> List[str]:
    """Whitespace-separated data files for dispatch, power, SOE and aFRR plots"""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    K = trace.substeps
    hours = np.arange(len(trace)) * SUBSTEP_HOURS
    interval_hours = np.arange(len(trace) // K) * book.grid.step_hours
    files = {
        "dispatch_tracking.dat": ("15-min dispatch plan against realized and baseline averages", {
            "hour": interval_hours,
            "p_hat_kw": _interval_means(trace.column("p_hat_kw"), K),
            "p_realized_kw": _interval_means(trace.column("p_billed_kw"), K),
            "p_baseline_kw": _interval_means(trace.column("l_kw"), K),
        }),
        "controller_view.dat": ("per-step meter power and the expected interval average", {
            "hour": hours,
            "p_billed_kw": trace.column("p_billed_kw"),
            "expected_avg_kw": trace.column("expected_avg_kw"),
            "p_hat_kw": trace.column("p_hat_kw"),
        }),
        "local_power.dat": ("local battery power", {"hour": hours, "b_local_kw": trace.column("b_local_kw")}),
        "soe.dat": ("battery state of energy", {"hour": hours, "soe_kwh": trace.column("soe_kwh")}),
        "afrr_prices.dat": ("issued activation prices and import tariff", {
            "hour": hours,
            "price_up": trace.column("price_up"),
            "price_down": trace.column("price_down"),
            "pi_import": np.repeat(np.asarray(book.pi_import.values), K),
        }),
        "afrr_power.dat": ("delivered aFRR power", {"hour": hours, "b_afrr_kw": trace.column("b_afrr_kw")}),
    }
    written = []
    for name, (header, columns) in files.items():
        _write_dat(out / name, header, columns)
        written.append(str(out / name))
    return written


def write_html_overview(trace: SimTrace, path: Union[str, Path]) -> str:
    """Interactive overview of power, SOE and aFRR activity"""
    hours = np.arange(len(trace)) * SUBSTEP_HOURS
    fig = make_subplots(rows=3, cols=1, shared_xaxes=True,
                        subplot_titles=("Grid power", "State of energy", "aFRR power"))
    fig.add_trace(go.Scatter(x=hours, y=trace.column("p_billed_kw"), name="billed power [kW]"), row=1, col=1)
    fig.add_trace(go.Scatter(x=hours, y=trace.column("p_hat_kw"), name="dispatch plan [kW]"), row=1, col=1)
    fig.add_trace(go.Scatter(x=hours, y=trace.column("l_kw"), name="net load [kW]"), row=1, col=1)
    fig.add_trace(go.Scatter(x=hours, y=trace.column("soe_kwh"), name="SOE [kWh]"), row=2, col=1)
    fig.add_trace(go.Scatter(x=hours, y=trace.column("b_afrr_kw"), name="aFRR [kW]"), row=3, col=1)
    fig.update_layout(title="Battery operation", xaxis3_title="hour of day")
    fig.write_html(str(path), include_plotlyjs="cdn")
    return str(path)


def write_report(report: DayReport, out_dir: Union[str, Path], trace: Optional[SimTrace] = None,
                 book: Optional[TariffBook] = None, html: bool = False) -> Dict[str, str]:
    """Write report.txt, report.json, interval_errors.csv and optional figure data

    Args:
        report (DayReport): Report to write
        out_dir (Union[str, Path]): Output directory
        trace (Optional[SimTrace]): Source trace, needed for figure data
        book (Optional[TariffBook]): Tariffs, needed for figure data
        html (bool, optional): Also write a plotly overview. Defaults to False

    Returns:
        Dict[str, str]: Paths of the written files
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {}

    text_path = out / "report.txt"
    with open(text_path, "w", encoding="utf-8", newline="\n") as f:
        f.write(format_report(report))
    files["report"] = str(text_path)

    json_path = out / "report.json"
    payload = asdict(report)
    payload["c_electricity_baseline"] = report.baseline_electricity
    with open(json_path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")
    files["report_json"] = str(json_path)

    errors_path = out / "interval_errors.csv"
    pd.DataFrame({
        "interval": np.arange(len(report.interval_errors_kwh)),
        "terminal_error_kwh": report.interval_errors_kwh,
    }).to_csv(errors_path, index=False, encoding="utf-8", lineterminator="\n", float_format="%.10g")
    files["interval_errors"] = str(errors_path)

    if trace is not None and book is not None:
        figures = write_figure_data(trace, book, out / "figures")
        files["figures"] = str(out / "figures")
        if html:
            files["html"] = write_html_overview(trace, out / "figures" / "overview.html")
        logger.info(f"Wrote {len(figures)} figure data files")

    logger.info(f"Report written to {text_path}")
    return files
