"""Command-line frontend.

Each ``cmd_*`` function does the work of one command and returns a ``CommandResult``; the
click commands only translate options and exit with the result's code. Validation happens
before any output is written, so a command failing with exit 1 leaves no partial files.
"""

from __future__ import annotations

import functools
import logging
import sys
from collections.abc import Callable
from dataclasses import dataclass
from pathlib import Path

import click

from pathloss_dsa.exceptions import (
    ActionRejectedError,
    CapacityError,
    DomainError,
    MeasurementFormatError,
    ScenarioError,
    SimulationError,
)
from pathloss_dsa.phy import ber_curve, spectrum, write_psd_csv
from pathloss_dsa.propagation import (
    CurveMode,
    FrequencyUnit,
    fit_alpha,
    fit_report_table,
    load_measurement,
    rss_curve,
    write_curve_csv,
)
from pathloss_dsa.scenario import bundled_scenarios, load_scenario
from pathloss_dsa.sim import received_frame, run, summarize
from pathloss_dsa.sinks import write_events_log, write_metrics, write_summary
from pathloss_dsa.utils import parse_frequency
from pathloss_dsa.utils.tables import EXTENSION_MAPPING, write_csv_file

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2
EXIT_SIMULATION = 3
MIN_BITS_PER_POINT = 10_000


@dataclass(frozen=True)
class CommandResult:
    exit_code: int
    outputs: tuple[Path, ...] = ()


def _exit_code(exc: Exception) -> int | None:
    if isinstance(exc, (SimulationError, CapacityError, ActionRejectedError)):
        return EXIT_SIMULATION
    if isinstance(exc, (DomainError, MeasurementFormatError, ScenarioError)):
        return EXIT_VALIDATION
    if isinstance(exc, OSError):
        return EXIT_IO
    return None


def _reported(func: Callable[..., CommandResult]) -> Callable[..., CommandResult]:
    """Turn the package's errors into exit codes with a one-line diagnostic on stderr."""

    @functools.wraps(func)
    def wrapper(*args, **kwargs) -> CommandResult:
        try:
            return func(*args, **kwargs)
        except Exception as exc:
            code = _exit_code(exc)
            if code is None:
                raise
            click.echo(f"error: {exc}", err=True)
            return CommandResult(code)

    return wrapper


def _validation_error(message: str) -> CommandResult:
    click.echo(f"error: {message}", err=True)
    return CommandResult(EXIT_VALIDATION)


def _prepare(path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


@_reported
def cmd_fit_alpha(
    input_csv: str | Path, unit: str = FrequencyUnit.HZ.value, out: str | Path | None = None
) -> CommandResult:
    """Print alpha and per-point residuals; optionally write the fit report CSV."""
    measurements = load_measurement(str(input_csv))
    estimate = fit_alpha(measurements, FrequencyUnit(unit))
    click.echo(f"{measurements.label}: alpha = {estimate.alpha_db:.6f} dB ({estimate.frequency_unit_convention.value})")
    for (f, _), residual in zip(measurements.points, estimate.residuals_db):
        click.echo(f"  {f}: residual {residual:+.4f} dB")
    outputs = ()
    if out is not None:
        path = _prepare(out)
        write_csv_file(fit_report_table(measurements, estimate), path)
        outputs = (path,)
    return CommandResult(EXIT_OK, outputs)


@_reported
def cmd_curve(
    input_csv: str | Path,
    out: str | Path,
    steps: int = 100,
    mode: str = CurveMode.PIECEWISE_LOG_LINEAR.value,
    f_lo: str | None = None,
    f_hi: str | None = None,
    unit: str = FrequencyUnit.HZ.value,
) -> CommandResult:
    """Write a ``freq_hz,rss_dbm,mode`` curve over the measured range (or ``f_lo``..``f_hi``)."""
    if steps < 2:
        return _validation_error(f"--steps must be >= 2, got {steps}")
    measurements = load_measurement(str(input_csv))
    try:
        lo = parse_frequency(f_lo) if f_lo else measurements.f_min
        hi = parse_frequency(f_hi) if f_hi else measurements.f_max
    except ValueError as exc:
        return _validation_error(str(exc))
    curve = rss_curve(measurements, lo, hi, steps, CurveMode(mode), FrequencyUnit(unit))
    path = _prepare(out)
    write_curve_csv(curve, path)
    return CommandResult(EXIT_OK, (path,))


@_reported
def cmd_simulate(
    scenario_file: str | Path,
    out_prefix: str | Path,
    seed: int | None = None,
    parquet: bool = False,
    compression: str = "gzip",
) -> CommandResult:
    """Run a scenario; write ``<prefix>_metrics.csv``, ``<prefix>_events.log`` and ``<prefix>_summary.txt``."""
    scenario = load_scenario(scenario_file)
    if seed is not None:
        scenario = scenario.with_seed(seed)
    log = run(scenario)
    summary = summarize(log)
    prefix = _prepare(out_prefix)
    outputs = write_metrics(log.table, prefix, parquet=parquet, compression_method=compression)
    outputs.append(write_events_log(list(log.actions), prefix))
    outputs.append(write_summary({"scenario": scenario.name, "seed": scenario.seed, **summary.to_dict()}, prefix))
    for path in outputs:
        logger.info(f"Wrote {path}")
    return CommandResult(EXIT_OK, tuple(outputs))


@_reported
def cmd_spectrum(
    scenario_file: str | Path, tick: int, out: str | Path, seed: int | None = None, nfft: int | None = None
) -> CommandResult:
    """Write the passband-labelled PSD of the frame received at ``tick``."""
    scenario = load_scenario(scenario_file)
    if seed is not None:
        scenario = scenario.with_seed(seed)
    if not 0 <= tick < scenario.duration_ticks:
        return _validation_error(f"--tick {tick} is outside [0, {scenario.duration_ticks})")
    frame, band = received_frame(scenario, tick)
    psd = spectrum(frame, nfft or scenario.phy.fft_size, band)
    path = _prepare(out)
    write_psd_csv(psd, path)
    return CommandResult(EXIT_OK, (path,))


@_reported
def cmd_ber_curve(esn0_list: str, bits_per_point: int, seed: int, out: str | Path) -> CommandResult:
    """Monte-Carlo BER through the OFDM chain next to the closed-form value, one row per Es/N0."""
    try:
        points = [float(item) for item in esn0_list.split(",") if item.strip()]
    except ValueError:
        return _validation_error(f"--esn0 must be a comma-separated list of dB values, got {esn0_list!r}")
    if not points:
        return _validation_error("--esn0 lists no values")
    if bits_per_point < MIN_BITS_PER_POINT:
        return _validation_error(f"--bits must be >= {MIN_BITS_PER_POINT}, got {bits_per_point}")
    table = ber_curve(points, bits_per_point, seed)
    path = _prepare(out)
    write_csv_file(table, path)
    return CommandResult(EXIT_OK, (path,))


def _finish(result: CommandResult) -> None:
    for path in result.outputs:
        click.echo(str(path))
    sys.exit(result.exit_code)


@click.group()
@click.option(
    "--log-level",
    type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False),
    default="WARNING",
    show_default=True,
)
def cli(log_level: str) -> None:
    """Path-loss modelling, OFDM link simulation and dynamic spectrum access."""
    logging.basicConfig(
        level=log_level.upper(), stream=sys.stderr, format="%(asctime)s %(levelname)s %(name)s: %(message)s"
    )


@cli.command("fit-alpha")
@click.option("--input", "input_csv", required=True, help="Measurement CSV or table1/setN.")
@click.option("--unit", type=click.Choice([u.value for u in FrequencyUnit]), default=FrequencyUnit.HZ.value)
@click.option("--out", default=None, help="Optional fit report CSV.")
def fit_alpha_command(input_csv: str, unit: str, out: str | None) -> None:
    """Fit alpha to a measurement set."""
    _finish(cmd_fit_alpha(input_csv, unit, out))


@cli.command("curve")
@click.option("--input", "input_csv", required=True, help="Measurement CSV or table1/setN.")
@click.option("--out", required=True)
@click.option("--steps", type=int, default=100, show_default=True)
@click.option("--mode", type=click.Choice([m.value for m in CurveMode]), default=CurveMode.PIECEWISE_LOG_LINEAR.value)
@click.option("--from", "f_lo", default=None, help="Lower frequency, e.g. 830MHz.")
@click.option("--to", "f_hi", default=None, help="Upper frequency, e.g. 1.9GHz.")
@click.option("--unit", type=click.Choice([u.value for u in FrequencyUnit]), default=FrequencyUnit.HZ.value)
def curve_command(
    input_csv: str, out: str, steps: int, mode: str, f_lo: str | None, f_hi: str | None, unit: str
) -> None:
    """Write an RSS-vs-frequency curve."""
    _finish(cmd_curve(input_csv, out, steps, mode, f_lo, f_hi, unit))


@cli.command("simulate")
@click.option("--input", "scenario_file", required=True, help="Scenario file or bundled scenario name.")
@click.option("--out", "out_prefix", required=True, help="Output prefix.")
@click.option("--seed", type=int, default=None, help="Overrides the scenario seed.")
@click.option("--parquet", is_flag=True, help="Also write the metrics as parquet.")
@click.option("--compression", type=click.Choice(sorted(EXTENSION_MAPPING)), default="gzip", show_default=True)
def simulate_command(scenario_file: str, out_prefix: str, seed: int | None, parquet: bool, compression: str) -> None:
    """Run a scenario."""
    _finish(cmd_simulate(scenario_file, out_prefix, seed, parquet, compression))


@cli.command("spectrum")
@click.option("--input", "scenario_file", required=True, help="Scenario file or bundled scenario name.")
@click.option("--tick", type=int, required=True)
@click.option("--out", required=True)
@click.option("--seed", type=int, default=None, help="Overrides the scenario seed.")
@click.option("--nfft", type=int, default=None, help="Welch segment length; the FFT size by default.")
def spectrum_command(scenario_file: str, tick: int, out: str, seed: int | None, nfft: int | None) -> None:
    """Write the PSD of the frame received at one tick."""
    _finish(cmd_spectrum(scenario_file, tick, out, seed, nfft))


@cli.command("ber-curve")
@click.option("--esn0", "esn0_list", default="0,2,4,6,8,10,12,14,16", show_default=True, help="Es/N0 list, dB.")
@click.option("--bits", "bits_per_point", type=int, default=100_000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", required=True)
def ber_curve_command(esn0_list: str, bits_per_point: int, seed: int, out: str) -> None:
    """Monte-Carlo 16-QAM BER against the closed form."""
    _finish(cmd_ber_curve(esn0_list, bits_per_point, seed, out))


@cli.command("scenarios")
def scenarios_command() -> None:
    """List the bundled scenarios."""
    for name in bundled_scenarios():
        click.echo(name)
