"""Scenario files: a sectioned ``key = value`` format declared once as a JSON schema.

Example::

    [run]
    duration_ticks = 40
    controller = false

    [channel]
    mode = empirical
    measurement = table1/set1
    frequency = 1.9GHz

    [schedule]
    10 set_frequency 1.6GHz
    20 obstruction_start 25
"""

from __future__ import annotations

import contextlib
import logging
from importlib import resources
from pathlib import Path

from jsonschema import Draft7Validator
from singer_sdk import typing as th

from pathloss_dsa.channel import (
    DEFAULT_NOISE_FLOOR_DB,
    DEFAULT_RX_GAIN_DB,
    ChannelState,
    EnvironmentProcess,
    LinkMode,
)
from pathloss_dsa.dsa import DEFAULT_BANDS_HZ, BandPlan, DsaPolicy, Preference, SpectrumPool
from pathloss_dsa.exceptions import DomainError, MeasurementFormatError, ScenarioError
from pathloss_dsa.phy import OfdmConfig
from pathloss_dsa.propagation import AlphaEstimate, FrequencyUnit, PathLossParams, fit_alpha, load_measurement
from pathloss_dsa.sim import EventKind, Scenario, TimedEvent
from pathloss_dsa.utils import format_frequency, parse_frequency

logger = logging.getLogger(__name__)

SCENARIO_SUFFIX = ".scenario"
_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}

SCENARIO_SCHEMA = th.PropertiesList(
    th.Property(
        "run",
        th.ObjectType(
            th.Property("name", th.StringType, description="Run name; defaults to the file stem"),
            th.Property("duration_ticks", th.IntegerType, required=True, description="Number of ticks to simulate"),
            th.Property("symbols_per_tick", th.IntegerType, default=100, description="OFDM symbols per tick"),
            th.Property("seed", th.IntegerType, default=0, description="Root seed of every random stream"),
            th.Property(
                "controller",
                th.BooleanType,
                default=True,
                description="Run the DSA controller; off reproduces open-loop sweeps",
            ),
        ),
        required=True,
    ),
    th.Property(
        "channel",
        th.ObjectType(
            th.Property(
                "mode",
                th.StringType,
                default=LinkMode.ANALYTIC_ALPHA.value,
                allowed_values=[m.value for m in LinkMode],
            ),
            th.Property("frequency", th.StringType, description="Starting carrier; defaults to the highest band"),
            th.Property("tx_gain_db", th.NumberType, default=0.0),
            th.Property("rx_gain_db", th.NumberType, default=DEFAULT_RX_GAIN_DB),
            th.Property("noise_floor_db", th.NumberType, default=DEFAULT_NOISE_FLOOR_DB),
            th.Property("fixed_loss_db", th.NumberType, default=0.0, description="Frequency-flat pad loss"),
            th.Property(
                "measurement",
                th.StringType,
                description="`table1/setN` or a CSV path relative to the scenario file",
            ),
            th.Property("alpha_db", th.NumberType, description="Analytic alpha; fitted from `measurement` if unset"),
            th.Property(
                "alpha_unit",
                th.StringType,
                default=FrequencyUnit.HZ.value,
                allowed_values=[u.value for u in FrequencyUnit],
            ),
            th.Property("n_coeff", th.NumberType, default=30.0, description="Distance power loss coefficient"),
            th.Property("distance_m", th.NumberType, default=2.0),
            th.Property("floors", th.IntegerType, default=0),
            th.Property("floor_penetration_db", th.NumberType, default=0.0),
            th.Property("p_t_dbm", th.NumberType, default=0.0, description="Transmit power of the ITU mode"),
            th.Property("beta_sigma_db", th.NumberType, default=0.2, description="beta(t) step, dB per sqrt(second)"),
            th.Property("beta_clip_db", th.NumberType, default=2.0),
        ),
    ),
    th.Property(
        "bands",
        th.ObjectType(
            th.Property(
                "plan",
                th.StringType,
                default=", ".join(format_frequency(hz) for hz in DEFAULT_BANDS_HZ),
                description="Comma-separated candidate carriers, ascending",
            ),
        ),
    ),
    th.Property(
        "pool",
        th.ObjectType(
            th.Property("default_capacity", th.IntegerType, default=1, description="Units on bands not listed"),
        ),
    ),
    th.Property(
        "policy",
        th.ObjectType(
            th.Property("rss_margin_db", th.NumberType, default=3.0),
            th.Property("bler_max", th.NumberType, default=0.1),
            th.Property("hysteresis_db", th.NumberType, default=3.0, description="`inf` disables Upshift"),
            th.Property("dwell_ticks", th.IntegerType, default=5),
            th.Property("gain_step_db", th.NumberType, default=13.0),
            th.Property("gain_max_db", th.NumberType, default=40.0),
            th.Property(
                "prefer",
                th.StringType,
                default=Preference.DOWNSHIFT_FIRST.value,
                allowed_values=[p.value for p in Preference],
            ),
        ),
    ),
    th.Property(
        "phy",
        th.ObjectType(
            th.Property("fft_size", th.IntegerType, default=512),
            th.Property("occupied_tones", th.IntegerType, default=200),
            th.Property("cp_len", th.IntegerType, default=128),
            th.Property("sample_rate_hz", th.NumberType, default=10e6),
            th.Property("block_bits", th.IntegerType, description="BLER block size; one OFDM symbol if unset"),
        ),
    ),
    th.Property("schedule", th.ArrayType(th.StringType), description="`tick kind args`, one event per line"),
).to_dict()

SECTIONS = tuple(SCENARIO_SCHEMA["properties"])


def _declared_type(section: str, key: str) -> str:
    types = SCENARIO_SCHEMA["properties"][section]["properties"][key]["type"]
    types = [types] if isinstance(types, str) else types
    return next(t for t in types if t != "null")


def _coerce(value: str, json_type: str):
    """Convert by declared type; unconvertible text is kept for the validator to report."""
    try:
        if json_type == "integer":
            return int(value)
        if json_type == "number":
            return float(value)
    except ValueError:
        return value
    if json_type == "boolean":
        lowered = value.lower()
        if lowered in _TRUE:
            return True
        if lowered in _FALSE:
            return False
    return value


class _Document:
    """Tokenized scenario text with the line number of every section and key."""

    def __init__(self):
        self.values: dict[str, dict] = {}
        self.lines: dict[str, int] = {}
        self.pool_entries: list[tuple[int, str, str]] = []
        self.schedule: list[tuple[int, str]] = []

    def line_of(self, section: str, key: str | None = None) -> int | None:
        if key is not None and f"{section}.{key}" in self.lines:
            return self.lines[f"{section}.{key}"]
        return self.lines.get(section)

    @classmethod
    def tokenize(cls, text: str) -> _Document:
        doc = cls()
        section = None
        for number, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if line.startswith("["):
                if not line.endswith("]"):
                    raise ScenarioError("unterminated section header", number)
                section = line[1:-1].strip().lower()
                if section not in SECTIONS:
                    raise ScenarioError("unknown section", number, section)
                if section in doc.lines:
                    raise ScenarioError("duplicate section", number, section)
                doc.lines[section] = number
                doc.values.setdefault(section, {})
                continue
            if section is None:
                raise ScenarioError("content before the first section header", number)
            if section == "schedule":
                doc.schedule.append((number, line))
                continue
            if "=" not in line:
                raise ScenarioError("expected `key = value`", number)
            key, value = (part.strip() for part in line.split("=", 1))
            key = key.lower()
            qualified = f"{section}.{key}"
            if qualified in doc.lines:
                raise ScenarioError("duplicate key", number, qualified)
            if section == "pool" and key != "default_capacity":
                doc.pool_entries.append((number, key, value))
                doc.lines[qualified] = number
                continue
            if key not in SCENARIO_SCHEMA["properties"][section]["properties"]:
                raise ScenarioError("unknown key", number, qualified)
            doc.lines[qualified] = number
            doc.values[section][key] = _coerce(value, _declared_type(section, key))
        return doc

    def assemble(self) -> dict:
        """Fill schema defaults and validate the document."""
        assembled = {}
        for section in SECTIONS:
            if section == "schedule":
                assembled[section] = [text for _, text in self.schedule]
                continue
            values = dict(self.values.get(section, {}))
            for key, schema in SCENARIO_SCHEMA["properties"][section]["properties"].items():
                if key not in values and "default" in schema:
                    values[key] = schema["default"]
            if section in self.values or section != "run":
                assembled[section] = values
        errors = sorted(Draft7Validator(SCENARIO_SCHEMA).iter_errors(assembled), key=lambda e: list(e.absolute_path))
        if errors:
            error = errors[0]
            path = [str(part) for part in error.absolute_path]
            if error.validator == "required":
                path.append(error.message.split("'")[1])
            section = path[0] if path else None
            key = path[1] if len(path) > 1 else None
            line = self.line_of(section, key) if section else None
            raise ScenarioError(error.message, line, ".".join(path) or None)
        return assembled


@contextlib.contextmanager
def _section_errors(doc: _Document, section: str, key: str | None = None):
    """Report domain errors against the line of the section (or key) being built."""
    label = f"{section}.{key}" if key else section
    try:
        yield
    except ScenarioError as exc:
        if exc.line is not None:
            raise
        raise ScenarioError(str(exc), doc.line_of(section, key), exc.key or label) from exc
    except (DomainError, MeasurementFormatError, ValueError) as exc:
        raise ScenarioError(str(exc), doc.line_of(section, key), label) from exc


def _parse_event(number: int, text: str) -> TimedEvent:
    tokens = text.split()
    if len(tokens) < 2:
        raise ScenarioError("expected `tick kind args`", number, "schedule")
    try:
        tick = int(tokens[0])
        kind = EventKind(tokens[1].lower())
    except ValueError as exc:
        raise ScenarioError(f"bad event {text!r}: {exc}", number, "schedule") from exc
    args = tokens[2:]
    expected = {
        EventKind.OBSTRUCTION_START: 1,
        EventKind.OBSTRUCTION_END: 0,
        EventKind.SET_GAIN: 1,
        EventKind.SET_RX_GAIN: 1,
        EventKind.SET_FREQUENCY: 1,
        EventKind.SET_POOL_CAPACITY: 2,
    }[kind]
    if len(args) != expected:
        raise ScenarioError(f"{kind.value} takes {expected} argument(s), got {len(args)}", number, "schedule")
    try:
        if kind in (EventKind.OBSTRUCTION_START, EventKind.SET_GAIN, EventKind.SET_RX_GAIN):
            return TimedEvent(tick, kind, value_db=float(args[0]))
        if kind is EventKind.SET_FREQUENCY:
            return TimedEvent(tick, kind, band=parse_frequency(args[0]))
        if kind is EventKind.SET_POOL_CAPACITY:
            return TimedEvent(tick, kind, band=parse_frequency(args[0]), units=int(args[1]))
        return TimedEvent(tick, kind)
    except ValueError as exc:
        raise ScenarioError(str(exc), number, "schedule") from exc


def _build_pool(doc: _Document, plan: BandPlan, default_capacity: int) -> SpectrumPool:
    capacity = [default_capacity] * len(plan)
    occupied = [0] * len(plan)
    for number, key, value in doc.pool_entries:
        try:
            index = plan.index_of(parse_frequency(key))
            parts = [int(part) for part in value.split(",")]
        except ValueError as exc:
            raise ScenarioError(str(exc), number, f"pool.{key}") from exc
        if len(parts) not in (1, 2):
            raise ScenarioError("expected `capacity` or `capacity, occupied`", number, f"pool.{key}")
        capacity[index] = parts[0]
        occupied[index] = parts[1] if len(parts) == 2 else 0
    with _section_errors(doc, "pool"):
        return SpectrumPool(plan.bands, tuple(capacity), tuple(occupied))


def _build_channel(
    doc: _Document, values: dict, plan: BandPlan, policy: DsaPolicy, base_dir: Path | None
) -> ChannelState:
    mode = LinkMode(values["mode"])
    measurement = None
    if "measurement" in values:
        with _section_errors(doc, "channel", "measurement"):
            measurement = load_measurement(values["measurement"], base_dir)

    unit = FrequencyUnit(values["alpha_unit"])
    alpha = None
    if mode is LinkMode.ANALYTIC_ALPHA:
        if "alpha_db" in values:
            alpha = AlphaEstimate(alpha_db=values["alpha_db"], frequency_unit_convention=unit)
        elif measurement is not None:
            alpha = fit_alpha(measurement, unit)
        else:
            line = doc.line_of("channel", "mode")
            raise ScenarioError("analytic mode needs alpha_db or measurement", line, "channel.mode")

    params = None
    if mode is LinkMode.ITU_MODEL:
        with _section_errors(doc, "channel"):
            params = PathLossParams(
                n_coeff=values["n_coeff"],
                distance_m=values["distance_m"],
                floors=values["floors"],
                floor_penetration_db=values["floor_penetration_db"],
            )

    with _section_errors(doc, "channel", "frequency"):
        freq = parse_frequency(values["frequency"]) if "frequency" in values else plan[-1]
    with _section_errors(doc, "channel"):
        return ChannelState(
            freq=freq,
            mode=mode,
            tx_gain_db=values["tx_gain_db"],
            rx_gain_db=values["rx_gain_db"],
            alpha=alpha,
            params=params,
            p_t_dbm=values["p_t_dbm"],
            empirical_set=measurement,
            noise_floor_db=values["noise_floor_db"],
            fixed_loss_db=values["fixed_loss_db"],
            tx_gain_max_db=policy.gain_max_db,
        )


def parse_scenario(text: str, name: str = "scenario", base_dir: str | Path | None = None) -> Scenario:
    """Parse and validate scenario text.

    Raises:
        ScenarioError: syntax, schema or domain violation, with line and key when known.
        OSError: a referenced measurement file could not be read.
    """
    doc = _Document.tokenize(text)
    values = doc.assemble()
    base_dir = Path(base_dir) if base_dir is not None else None
    run_values = values["run"]

    with _section_errors(doc, "bands", "plan"):
        plan = BandPlan(tuple(parse_frequency(part) for part in values["bands"]["plan"].split(",")))
    with _section_errors(doc, "policy"):
        policy = DsaPolicy(**values["policy"])
    with _section_errors(doc, "phy"):
        phy_values = dict(values["phy"])
        block_bits = phy_values.pop("block_bits", None)
        phy = OfdmConfig(**phy_values)
    with _section_errors(doc, "channel"):
        environment = EnvironmentProcess(
            sigma_db=values["channel"]["beta_sigma_db"], clip_db=values["channel"]["beta_clip_db"]
        )
    pool = _build_pool(doc, plan, values["pool"]["default_capacity"])
    channel = _build_channel(doc, values["channel"], plan, policy, base_dir)

    schedule = []
    for number, event_text in doc.schedule:
        event = _parse_event(number, event_text)
        if event.tick >= run_values["duration_ticks"]:
            raise ScenarioError(
                f"tick {event.tick} is outside the {run_values['duration_ticks']}-tick run", number, "schedule"
            )
        if event.band is not None:
            try:
                plan.index_of(event.band)
            except DomainError as exc:
                raise ScenarioError(str(exc), number, "schedule") from exc
        schedule.append(event)

    with _section_errors(doc, "run"):
        scenario = Scenario(
            duration_ticks=run_values["duration_ticks"],
            channel=channel,
            plan=plan,
            pool=pool,
            policy=policy,
            phy=phy,
            environment=environment,
            schedule=tuple(schedule),
            symbols_per_tick=run_values["symbols_per_tick"],
            seed=run_values["seed"],
            controller_enabled=run_values["controller"],
            block_bits=block_bits,
            name=run_values.get("name", name),
        )
    logger.info(f"Loaded scenario {scenario.name!r}: {scenario.duration_ticks} ticks, {len(schedule)} events")
    return scenario


def bundled_scenarios() -> list[str]:
    """Names of the scenarios shipped with the package."""
    root = resources.files("pathloss_dsa") / "scenarios"
    names = (entry.name for entry in root.iterdir())
    return sorted(name[: -len(SCENARIO_SUFFIX)] for name in names if name.endswith(SCENARIO_SUFFIX))


def load_scenario(source: str | Path) -> Scenario:
    """Load a scenario from a file path or by bundled name (e.g. ``obstruction_rescue``)."""
    path = Path(source)
    if not path.exists() and str(source) in bundled_scenarios():
        resource = resources.files("pathloss_dsa") / "scenarios" / f"{source}{SCENARIO_SUFFIX}"
        return parse_scenario(resource.read_text(encoding="utf-8"), name=str(source))
    text = path.read_text(encoding="utf-8")
    return parse_scenario(text, name=path.stem, base_dir=path.parent)
