import json

import numpy as np
import pandas as pd
import pytest
from click.testing import CliRunner

from pathloss_dsa.cli import EXIT_IO, EXIT_OK, EXIT_SIMULATION, EXIT_VALIDATION, cli
from pathloss_dsa.phy import theoretical_ber_qam16
from pathloss_dsa.propagation import read_fit_report_csv

BROKEN_POOL = """\
[run]
duration_ticks = 4
[channel]
alpha_db = 127.25
[schedule]
1 set_pool_capacity 1.9GHz 0
"""

UNKNOWN_KEY = """\
[run]
duration_ticks = 4
colour = blue
"""

# 30 dB under the floor at 1.9 GHz with a flat gain chain.
NOISE_ONLY = """\
[run]
duration_ticks = 2
controller = false
[channel]
alpha_db = 65.575
rx_gain_db = 0
"""


@pytest.fixture()
def runner():
    return CliRunner()


@pytest.fixture()
def scenario_file(tmp_path):
    def write(text, name="custom.scenario"):
        path = tmp_path / name
        path.write_text(text)
        return str(path)

    return write


def invoke(runner, *args):
    return runner.invoke(cli, [str(arg) for arg in args])


def test_scenarios_command(runner):
    result = invoke(runner, "scenarios")
    assert result.exit_code == EXIT_OK
    assert result.output.split() == ["gain_sweep", "obstruction_rescue", "table1_sweep"]


def test_fit_alpha(runner, tmp_path):
    out = tmp_path / "fit.csv"

    result = invoke(runner, "fit-alpha", "--input", "table1/set1", "--out", out)

    assert result.exit_code == EXIT_OK
    assert "Set1: alpha = 127.25" in result.output
    assert "(hz)" in result.output
    report = pd.read_csv(out)
    assert list(report.columns) == ["freq_hz", "rss_dbm", "model_rss_dbm", "residual_db"]
    assert report.shape == (4, 4)
    assert report["residual_db"].sum() == pytest.approx(0.0, abs=1e-9)
    assert np.allclose(report["rss_dbm"] - report["model_rss_dbm"], report["residual_db"])


def test_fit_alpha_mhz_convention(runner):
    result = invoke(runner, "fit-alpha", "--input", "table1/set1", "--unit", "mhz")
    assert result.exit_code == EXIT_OK
    assert "alpha = 7.25" in result.output
    assert "(mhz)" in result.output


def test_fit_alpha_exact_model(runner, tmp_path):
    path = tmp_path / "exact.csv"
    freqs = [830e6, 1.2e9, 1.9e9]
    rows = "\n".join(f"{hz:.0f},{125.0 - 20 * np.log10(hz)!r}" for hz in freqs)
    path.write_text(f"freq_hz,rss_dbm\n{rows}\n")

    result = invoke(runner, "fit-alpha", "--input", path)

    assert result.exit_code == EXIT_OK
    assert "alpha = 125.000000" in result.output
    assert result.output.count("residual +0.0000 dB") + result.output.count("residual -0.0000 dB") == 3


def test_fit_alpha_empty_file(runner, tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("")
    out = tmp_path / "fit.csv"

    result = invoke(runner, "fit-alpha", "--input", path, "--out", out)

    assert result.exit_code == EXIT_VALIDATION
    assert "line 1" in result.output
    assert not out.exists()


def test_fit_alpha_missing_file(runner, tmp_path):
    result = invoke(runner, "fit-alpha", "--input", tmp_path / "absent.csv")
    assert result.exit_code == EXIT_IO


def test_curve_interpolation(runner, tmp_path):
    out = tmp_path / "curves" / "set1.csv"

    result = invoke(runner, "curve", "--input", "table1/set1", "--out", out, "--steps", 100)

    assert result.exit_code == EXIT_OK
    curve = pd.read_csv(out)
    assert list(curve.columns) == ["freq_hz", "rss_dbm", "mode"]
    assert len(curve) == 100
    assert curve["rss_dbm"].iloc[0] == pytest.approx(-43.09)
    assert curve["rss_dbm"].iloc[-1] == pytest.approx(-63.15)
    assert set(curve["mode"]) == {"interp"}


def test_curve_analytic_is_decreasing(runner, tmp_path):
    out = tmp_path / "analytic.csv"

    result = invoke(
        runner, "curve", "--input", "table1/set2", "--out", out, "--mode", "analytic", "--from", "700MHz", "--to", "3GHz"
    )

    assert result.exit_code == EXIT_OK
    curve = pd.read_csv(out)
    assert (curve["rss_dbm"].diff().dropna() < 0).all()
    assert curve["freq_hz"].iloc[0] == pytest.approx(700e6)


@pytest.mark.parametrize(
    "extra",
    [
        pytest.param(["--steps", "1"], id="one_step"),
        pytest.param(["--from", "700MHz"], id="below_measured_range"),
        pytest.param(["--from", "fast"], id="bad_frequency"),
    ],
)
def test_curve_validation(runner, tmp_path, extra):
    out = tmp_path / "curve.csv"
    result = invoke(runner, "curve", "--input", "table1/set1", "--out", out, *extra)
    assert result.exit_code == EXIT_VALIDATION
    assert result.output.startswith("error: ")
    assert not out.exists()


def test_simulate_table1_sweep(runner, tmp_path):
    prefix = tmp_path / "runs" / "sweep"

    result = invoke(runner, "simulate", "--input", "table1_sweep", "--out", prefix)

    assert result.exit_code == EXIT_OK
    metrics = pd.read_csv(tmp_path / "runs" / "sweep_metrics.csv")
    assert metrics.shape == (40, 11)
    means = metrics.groupby("band_hz")["rss_db"].mean()
    assert means.loc[1.9e9] == pytest.approx(-63.15, abs=0.5)
    assert means.loc[1.6e9] == pytest.approx(-60.85, abs=0.5)
    assert means.loc[1.2e9] == pytest.approx(-53.53, abs=0.5)
    assert means.loc[830e6] == pytest.approx(-43.09, abs=0.5)
    assert (tmp_path / "runs" / "sweep_events.log").read_text() == ""
    summary = json.loads((tmp_path / "runs" / "sweep_summary.txt").read_text())
    assert summary["scenario"] == "table1_sweep"
    assert summary["seed"] == 1
    assert summary["action_counts"] == {"SetFrequency": 3}
    assert summary["final_band"] == "830MHz"


def test_simulate_obstruction_rescue(runner, tmp_path):
    prefix = tmp_path / "rescue"

    result = invoke(runner, "simulate", "--input", "obstruction_rescue", "--out", prefix, "--parquet")

    assert result.exit_code == EXIT_OK
    events = (tmp_path / "rescue_events.log").read_text().splitlines()
    assert [line.split(" reason=")[0] for line in events] == [
        "tick=21 action=Downshift",
        "tick=26 action=Downshift",
        "tick=31 action=Downshift",
    ]
    summary = json.loads((tmp_path / "rescue_summary.txt").read_text())
    assert summary["final_band"] == "830MHz"
    assert summary["action_counts"]["Downshift"] == 3
    parquet = pd.read_parquet(tmp_path / "rescue_metrics.gz.parquet")
    assert parquet.shape == (60, 11)
    assert str(tmp_path / "rescue_metrics.csv") in result.output


def test_simulate_is_byte_identical(runner, tmp_path):
    for name in ("first", "second"):
        result = invoke(runner, "simulate", "--input", "gain_sweep", "--out", tmp_path / name, "--seed", 5)
        assert result.exit_code == EXIT_OK
    for suffix in ("_metrics.csv", "_events.log", "_summary.txt"):
        assert (tmp_path / f"first{suffix}").read_bytes() == (tmp_path / f"second{suffix}").read_bytes()


def test_simulate_unknown_key(runner, tmp_path, scenario_file):
    result = invoke(runner, "simulate", "--input", scenario_file(UNKNOWN_KEY), "--out", tmp_path / "bad")

    assert result.exit_code == EXIT_VALIDATION
    assert "line 3" in result.output
    assert "run.colour" in result.output
    assert not list(tmp_path.glob("bad_*"))


def test_simulate_run_time_failure(runner, tmp_path, scenario_file):
    result = invoke(runner, "simulate", "--input", scenario_file(BROKEN_POOL), "--out", tmp_path / "broken")

    assert result.exit_code == EXIT_SIMULATION
    assert not list(tmp_path.glob("broken_*"))


def test_simulate_missing_scenario(runner, tmp_path):
    result = invoke(runner, "simulate", "--input", tmp_path / "absent.scenario", "--out", tmp_path / "x")
    assert result.exit_code == EXIT_IO


def test_spectrum_at_830mhz_tick(runner, tmp_path):
    out = tmp_path / "psd.csv"

    result = invoke(runner, "spectrum", "--input", "table1_sweep", "--tick", 35, "--out", out)

    assert result.exit_code == EXIT_OK
    psd = pd.read_csv(out)
    assert list(psd.columns) == ["freq_hz", "psd_db"]
    offset = psd["freq_hz"] - 830e6
    in_band = psd.loc[offset.abs() < 1.9e6, "psd_db"]
    out_of_band = psd.loc[offset.abs() > 3e6, "psd_db"]
    assert in_band.median() - out_of_band.median() >= 20.0
    assert in_band.median() == pytest.approx(-43.09, abs=1.0)


def test_spectrum_noise_only_tick(runner, tmp_path, scenario_file):
    out = tmp_path / "noise.csv"

    result = invoke(runner, "spectrum", "--input", scenario_file(NOISE_ONLY), "--tick", 1, "--out", out)

    assert result.exit_code == EXIT_OK
    psd = pd.read_csv(out)
    in_band = psd.loc[(psd["freq_hz"] - 1.9e9).abs() < 1.9e6, "psd_db"]
    assert in_band.mean() == pytest.approx(-90.0, abs=1.0)


def test_spectrum_tick_out_of_range(runner, tmp_path):
    out = tmp_path / "psd.csv"
    result = invoke(runner, "spectrum", "--input", "table1_sweep", "--tick", 40, "--out", out)
    assert result.exit_code == EXIT_VALIDATION
    assert not out.exists()


def test_ber_curve(runner, tmp_path):
    out = tmp_path / "ber.csv"

    result = invoke(runner, "ber-curve", "--esn0", "40,10", "--bits", 100_000, "--seed", 3, "--out", out)

    assert result.exit_code == EXIT_OK
    curve = pd.read_csv(out)
    assert list(curve.columns) == ["esn0_db", "ber", "theory_ber"]
    assert curve["ber"].iloc[0] == 0.0
    assert curve["ber"].iloc[1] == pytest.approx(theoretical_ber_qam16(10.0), rel=0.2)
    assert curve["theory_ber"].iloc[1] == pytest.approx(theoretical_ber_qam16(10.0))


def test_ber_curve_is_byte_identical(runner, tmp_path):
    for name in ("first.csv", "second.csv"):
        result = invoke(runner, "ber-curve", "--esn0", "4,8", "--bits", 10_000, "--seed", 1, "--out", tmp_path / name)
        assert result.exit_code == EXIT_OK
    assert (tmp_path / "first.csv").read_bytes() == (tmp_path / "second.csv").read_bytes()


@pytest.mark.parametrize(
    "extra",
    [
        pytest.param(["--esn0", "a,b"], id="not_numbers"),
        pytest.param(["--esn0", ","], id="empty_list"),
        pytest.param(["--bits", "100"], id="too_few_bits"),
    ],
)
def test_ber_curve_validation(runner, tmp_path, extra):
    out = tmp_path / "ber.csv"
    result = invoke(runner, "ber-curve", "--out", out, *extra)
    assert result.exit_code == EXIT_VALIDATION
    assert not out.exists()


def test_log_level_option(runner):
    result = invoke(runner, "--log-level", "info", "scenarios")
    assert result.exit_code == EXIT_OK


def test_fit_report_reads_back(runner, tmp_path, set1):
    out = tmp_path / "fit.csv"
    assert invoke(runner, "fit-alpha", "--input", "table1/set1", "--out", out).exit_code == EXIT_OK

    report = read_fit_report_csv(out)

    assert report.column("freq_hz").to_pylist() == [f.hertz for f, _ in set1.points]
    assert report.column("rss_dbm").to_pylist() == pytest.approx([rss for _, rss in set1.points])
