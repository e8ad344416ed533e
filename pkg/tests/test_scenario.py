import math

import pytest

from pathloss_dsa.channel import LinkMode
from pathloss_dsa.dsa import Preference
from pathloss_dsa.exceptions import ScenarioError
from pathloss_dsa.propagation import FrequencyUnit
from pathloss_dsa.scenario import bundled_scenarios, load_scenario, parse_scenario
from pathloss_dsa.sim import EventKind

MINIMAL = """\
[run]
duration_ticks = 10

[channel]
alpha_db = 127.25
"""


def test_parse_minimal_scenario_fills_defaults():
    scenario = parse_scenario(MINIMAL, name="minimal")

    assert scenario.name == "minimal"
    assert scenario.duration_ticks == 10
    assert scenario.symbols_per_tick == 100
    assert scenario.seed == 0
    assert scenario.controller_enabled is True
    assert scenario.channel.mode is LinkMode.ANALYTIC_ALPHA
    assert scenario.channel.alpha.alpha_db == 127.25
    assert scenario.channel.freq.hertz == 1.9e9
    assert scenario.channel.rx_gain_db == 10.0
    assert scenario.channel.noise_floor_db == -90.0
    assert [f.hertz for f in scenario.plan.bands] == [830e6, 1.2e9, 1.6e9, 1.9e9]
    assert scenario.pool.capacity == (1, 1, 1, 1)
    assert scenario.policy.rss_margin_db == 3.0
    assert scenario.policy.prefer is Preference.DOWNSHIFT_FIRST
    assert scenario.environment.sigma_db == 0.2
    assert scenario.block_bits == 800
    assert scenario.schedule == ()


def test_parse_full_scenario():
    text = """\
# every section
[RUN]
Name = custom
duration_ticks = 30
symbols_per_tick = 10   # short ticks
seed = 9
controller = off

[channel]
mode = analytic
measurement = table1/set2
alpha_unit = mhz
frequency = 1.6 GHz
tx_gain_db = 13

[bands]
plan = 830MHz, 1.6GHz

[pool]
default_capacity = 3
830MHz = 5, 4

[policy]
prefer = gain_first
hysteresis_db = inf
dwell_ticks = 2

[phy]
block_bits = 400

[schedule]
5 obstruction_start 12.5
8 obstruction_end
10 set_gain 26
12 set_frequency 830MHz
14 set_pool_capacity 1.6GHz 2
"""
    scenario = parse_scenario(text)

    assert scenario.name == "custom"
    assert scenario.seed == 9
    assert scenario.controller_enabled is False
    assert scenario.channel.alpha.frequency_unit_convention is FrequencyUnit.MHZ
    assert scenario.channel.alpha.alpha_db == pytest.approx(126.568 - 120.0, abs=1e-2)
    assert scenario.channel.freq.hertz == 1.6e9
    assert scenario.channel.tx_gain_db == 13.0
    assert scenario.pool.capacity == (5, 3)
    assert scenario.pool.occupied == (4, 0)
    assert scenario.policy.prefer is Preference.GAIN_FIRST
    assert math.isinf(scenario.policy.hysteresis_db)
    assert scenario.block_bits == 400
    assert [event.kind for event in scenario.schedule] == [
        EventKind.OBSTRUCTION_START,
        EventKind.OBSTRUCTION_END,
        EventKind.SET_GAIN,
        EventKind.SET_FREQUENCY,
        EventKind.SET_POOL_CAPACITY,
    ]
    assert scenario.schedule[0].value_db == 12.5
    assert scenario.schedule[3].band.hertz == 830e6
    assert scenario.schedule[4].units == 2


def test_parse_itu_scenario():
    text = """\
[run]
duration_ticks = 5
[channel]
mode = itu
p_t_dbm = 10
n_coeff = 28
distance_m = 3
"""
    channel = parse_scenario(text).channel
    assert channel.mode is LinkMode.ITU_MODEL
    assert channel.p_t_dbm == 10.0
    assert channel.params.n_coeff == 28.0
    assert channel.params.distance_m == 3.0


def test_bundled_scenarios():
    assert bundled_scenarios() == ["gain_sweep", "obstruction_rescue", "table1_sweep"]


def test_load_bundled_rescue():
    scenario = load_scenario("obstruction_rescue")

    assert scenario.name == "obstruction_rescue"
    assert scenario.seed == 3
    assert scenario.duration_ticks == 60
    assert scenario.channel.mode is LinkMode.EMPIRICAL
    assert scenario.channel.empirical_set.label == "Set1"
    assert scenario.channel.fixed_loss_db == 26.85
    assert scenario.pool.capacity == (4, 4, 4, 4)
    assert scenario.pool.occupied == (2, 0, 0, 0)
    assert scenario.policy.bler_max == 1.0
    assert len(scenario.schedule) == 1
    assert scenario.schedule[0].tick == 20


def test_load_scenario_file_with_relative_measurement(tmp_path):
    (tmp_path / "lab.csv").write_text("freq_hz,rss_dbm\n830000000,-40\n1900000000,-60\n")
    path = tmp_path / "lab_run.scenario"
    path.write_text(
        "[run]\nduration_ticks = 4\n[channel]\nmode = empirical\nmeasurement = lab.csv\n"
        "[bands]\nplan = 830MHz, 1.9GHz\n"
    )

    scenario = load_scenario(path)

    assert scenario.name == "lab_run"
    assert scenario.channel.empirical_set.label == "lab"
    assert scenario.channel.empirical_set.rss_dbm.tolist() == [-40.0, -60.0]


def test_load_scenario_missing_file(tmp_path):
    with pytest.raises(OSError):
        load_scenario(tmp_path / "absent.scenario")


def test_missing_measurement_file(tmp_path):
    path = tmp_path / "run.scenario"
    path.write_text("[run]\nduration_ticks = 4\n[channel]\nmode = empirical\nmeasurement = nowhere.csv\n")
    with pytest.raises(OSError):
        load_scenario(path)


def test_with_seed_override():
    scenario = load_scenario("gain_sweep").with_seed(42)
    assert scenario.seed == 42
    assert scenario.environment.seed == 42


@pytest.mark.parametrize(
    "text, line, key",
    [
        pytest.param("duration_ticks = 10\n", 1, None, id="content_before_header"),
        pytest.param("[run\nduration_ticks = 10\n", 1, None, id="unterminated_header"),
        pytest.param("[run]\nduration_ticks = 10\n[weather]\n", 3, "weather", id="unknown_section"),
        pytest.param("[run]\nduration_ticks = 10\n[run]\n", 3, "run", id="duplicate_section"),
        pytest.param("[run]\nduration_ticks = 10\nspeed = 3\n", 3, "run.speed", id="unknown_key"),
        pytest.param("[run]\nduration_ticks = 10\nduration_ticks = 11\n", 3, "run.duration_ticks", id="duplicate_key"),
        pytest.param("[run]\nduration_ticks 10\n", 2, None, id="missing_equals"),
        pytest.param("[run]\nduration_ticks = ten\n", 2, "run.duration_ticks", id="not_an_integer"),
        pytest.param("[run]\nseed = 1\n", 1, "run.duration_ticks", id="missing_duration"),
        pytest.param(
            "[run]\nduration_ticks = 10\n[channel]\nalpha_db = 127\nmode = magic\n", 5, "channel.mode", id="bad_mode"
        ),
        pytest.param(
            "[run]\nduration_ticks = 10\n[channel]\nalpha_db = 127\n[policy]\ndwell_ticks = 0\n",
            5,
            "policy",
            id="policy_domain_error",
        ),
        pytest.param("[run]\nduration_ticks = 10\n[channel]\ntx_gain_db = 3\n", 3, "channel.mode", id="no_alpha"),
        pytest.param(
            "[run]\nduration_ticks = 10\n[channel]\nalpha_db = 127\n[pool]\n2.4GHz = 3\n",
            6,
            "pool.2.4ghz",
            id="pool_band",
        ),
        pytest.param(
            "[run]\nduration_ticks = 10\n[channel]\nalpha_db = 127\n[schedule]\n3 set_gain 13\n10 set_gain 26\n",
            7,
            "schedule",
            id="event_after_end",
        ),
        pytest.param(
            "[run]\nduration_ticks = 10\n[channel]\nalpha_db = 127\n[schedule]\n3 jump 13\n",
            6,
            "schedule",
            id="unknown_event",
        ),
        pytest.param(
            "[run]\nduration_ticks = 10\n[channel]\nalpha_db = 127\n[schedule]\n3 set_frequency 2.4GHz\n",
            6,
            "schedule",
            id="event_band_not_in_plan",
        ),
        pytest.param(
            "[run]\nduration_ticks = 10\n[channel]\nalpha_db = 127\n[schedule]\n3 set_pool_capacity 830MHz\n",
            6,
            "schedule",
            id="missing_event_argument",
        ),
        pytest.param(
            "[run]\nduration_ticks = 10\n[channel]\nalpha_db = 127\n[schedule]\n3 set_rx_gain\n",
            6,
            "schedule",
            id="set_rx_gain_without_value",
        ),
        pytest.param(
            "[run]\nduration_ticks = 10\n[channel]\nalpha_db = 127\nalpha_unit = ghz\n",
            5,
            "channel.alpha_unit",
            id="bad_alpha_unit",
        ),
        pytest.param(
            "[run]\nduration_ticks = 10\n[channel]\nalpha_db = 127\n[bands]\nplan = 1.9GHz, 830MHz\n",
            6,
            "bands.plan",
            id="descending_plan",
        ),
    ],
)
def test_scenario_errors_name_line_and_key(text, line, key):
    with pytest.raises(ScenarioError) as excinfo:
        parse_scenario(text)
    assert excinfo.value.line == line
    assert excinfo.value.key == key
    assert str(excinfo.value).startswith(f"line {line}: ")


def test_starting_band_outside_plan():
    with pytest.raises(ScenarioError, match="channel frequency"):
        parse_scenario(MINIMAL + "frequency = 2.4GHz\n")


def test_parse_set_rx_gain_event():
    scenario = parse_scenario(MINIMAL + "\n[schedule]\n4 set_rx_gain -6\n7 set_rx_gain 12.5\n")

    assert [event.kind for event in scenario.schedule] == [EventKind.SET_RX_GAIN] * 2
    assert [event.value_db for event in scenario.schedule] == [-6.0, 12.5]
    assert [event.tick for event in scenario.schedule] == [4, 7]
