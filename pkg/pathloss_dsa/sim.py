"""Deterministic discrete-time engine wiring the PHY, the channel and the DSA controller together.

Each tick carries ``symbols_per_tick`` OFDM symbols. Per tick the engine applies the scheduled
events, steps beta(t), pushes fresh random bits through modulation, the channel and
demodulation, measures the link and lets the controller decide. A decision changes the link
from the next tick on and is reported on that tick's row. All randomness derives from
``Scenario.seed`` and the tick index, so identical scenarios give identical logs.
"""

from __future__ import annotations

import enum
import logging
import math
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import pyarrow as pa

from pathloss_dsa.channel import (
    ChannelState,
    EnvironmentProcess,
    LinkMode,
    ObstructionEvent,
    active_obstruction_loss,
    apply_channel,
    link_budget,
    retune_loss_db,
    step_environment,
)
from pathloss_dsa.dsa import (
    Action,
    ActionKind,
    BandPlan,
    ControllerState,
    DsaPolicy,
    LinkStatus,
    SpectrumPool,
    advance,
    apply_action,
    evaluate,
    release,
    reserve,
)
from pathloss_dsa.exceptions import (
    ActionRejectedError,
    CapacityError,
    DomainError,
    ScenarioError,
    SimulationError,
)
from pathloss_dsa.phy import (
    IqFrame,
    LinkMetrics,
    OfdmConfig,
    generate_bits,
    link_metrics,
    ofdm_demodulate,
    ofdm_modulate,
    qam16_demodulate,
    qam16_modulate,
)
from pathloss_dsa.propagation import Frequency, as_frequency
from pathloss_dsa.sinks import METRICS_SCHEMA, MetricsSink
from pathloss_dsa.utils import db_to_linear, format_frequency
from pathloss_dsa.utils.tables import read_csv_file, write_csv_file

logger = logging.getLogger(__name__)

ACTION_SEPARATOR = ";"


class EventKind(str, enum.Enum):
    """Scheduled event kinds; values are the tokens used in scenario files."""

    OBSTRUCTION_START = "obstruction_start"
    OBSTRUCTION_END = "obstruction_end"
    SET_GAIN = "set_gain"
    SET_RX_GAIN = "set_rx_gain"
    SET_FREQUENCY = "set_frequency"
    SET_POOL_CAPACITY = "set_pool_capacity"

    @property
    def label(self) -> str:
        """Name written into the metrics ``action`` column, e.g. ``SetFrequency``."""
        return "".join(part.capitalize() for part in self.value.split("_"))


@dataclass(frozen=True)
class TimedEvent:
    tick: int
    kind: EventKind
    value_db: float | None = None
    band: Frequency | None = None
    units: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", EventKind(self.kind))
        if self.band is not None:
            object.__setattr__(self, "band", as_frequency(self.band))
        if self.tick < 0:
            raise DomainError(f"event tick must be >= 0, got {self.tick}")
        if self.kind in (EventKind.OBSTRUCTION_START, EventKind.SET_GAIN):
            if self.value_db is None or self.value_db < 0:
                raise DomainError(f"{self.kind.value} needs a non-negative dB value, got {self.value_db}")
        if self.kind is EventKind.SET_RX_GAIN and self.value_db is None:
            raise DomainError("set_rx_gain needs a dB value")
        if self.kind in (EventKind.SET_FREQUENCY, EventKind.SET_POOL_CAPACITY) and self.band is None:
            raise DomainError(f"{self.kind.value} needs a band")
        if self.kind is EventKind.SET_POOL_CAPACITY and (self.units is None or self.units < 0):
            raise DomainError(f"set_pool_capacity needs a non-negative unit count, got {self.units}")


@dataclass(frozen=True)
class Scenario:
    """A complete, validated simulation input.

    ``pool.occupied`` counts units held by other links; the simulated link reserves its own
    unit on ``channel.freq`` when the run starts.
    """

    duration_ticks: int
    channel: ChannelState
    plan: BandPlan = field(default_factory=BandPlan)
    pool: SpectrumPool | None = None
    policy: DsaPolicy = field(default_factory=DsaPolicy)
    phy: OfdmConfig = field(default_factory=OfdmConfig)
    environment: EnvironmentProcess = field(default_factory=EnvironmentProcess)
    schedule: tuple[TimedEvent, ...] = ()
    symbols_per_tick: int = 100
    seed: int = 0
    controller_enabled: bool = True
    block_bits: int | None = None
    name: str = "scenario"

    def __post_init__(self):
        object.__setattr__(self, "schedule", tuple(sorted(self.schedule, key=lambda event: event.tick)))
        if self.pool is None:
            object.__setattr__(self, "pool", SpectrumPool.for_plan(self.plan, capacity=1))
        if self.block_bits is None:
            object.__setattr__(self, "block_bits", self.phy.bits_per_ofdm_symbol)
        if self.seed < 0:
            raise ScenarioError(f"seed must be >= 0, got {self.seed}")
        object.__setattr__(self, "environment", replace(self.environment, seed=self.seed))

        if self.duration_ticks <= 0:
            raise ScenarioError(f"duration_ticks must be positive, got {self.duration_ticks}")
        if self.symbols_per_tick <= 0:
            raise ScenarioError(f"symbols_per_tick must be positive, got {self.symbols_per_tick}")
        if self.pool.bands != self.plan.bands:
            raise ScenarioError("spectrum pool bands do not match the band plan")
        bits_per_tick = self.symbols_per_tick * self.phy.bits_per_ofdm_symbol
        if self.block_bits <= 0 or bits_per_tick % self.block_bits:
            raise ScenarioError(f"block_bits ({self.block_bits}) must divide the {bits_per_tick} bits of a tick")

        start_index = self._band_index(self.channel.freq, "channel frequency")
        if not self.pool.has_free(start_index):
            raise ScenarioError(f"no free unit on the starting band {self.channel.freq}")
        for event in self.schedule:
            if event.tick >= self.duration_ticks:
                raise ScenarioError(f"event at tick {event.tick} is outside the {self.duration_ticks}-tick run")
            if event.band is not None:
                self._band_index(event.band, f"{event.kind.value} band")
            if event.kind is EventKind.SET_GAIN and event.value_db > self.channel.tx_gain_max_db:
                raise ScenarioError(f"set_gain {event.value_db:g} dB exceeds {self.channel.tx_gain_max_db:g} dB")
        if self.channel.mode is LinkMode.EMPIRICAL:
            for band in self.plan.bands:
                if not self.channel.empirical_set.covers(band):
                    raise ScenarioError(
                        f"band {band} is outside the measured range "
                        f"[{self.channel.empirical_set.f_min}, {self.channel.empirical_set.f_max}]"
                    )

    def _band_index(self, band: Frequency, what: str) -> int:
        try:
            return self.plan.index_of(band)
        except DomainError as exc:
            raise ScenarioError(f"{what}: {exc}") from exc

    @property
    def tick_duration_s(self) -> float:
        return self.symbols_per_tick * self.phy.symbol_duration_s

    @property
    def bits_per_tick(self) -> int:
        return self.symbols_per_tick * self.phy.bits_per_ofdm_symbol

    def with_seed(self, seed: int) -> Scenario:
        return replace(self, seed=seed)


@dataclass(frozen=True)
class TickRecord:
    """Everything one tick produced, including the received frame.

    ``band``, ``tx_gain_db`` and ``status`` are the values in effect during the tick. ``action`` is the
    controller decision taken on the previous tick, whose effect starts on this one.
    """

    tick: int
    time_s: float
    band: Frequency
    tx_gain_db: float
    beta_db: float
    obstruction_db: float
    metrics: LinkMetrics
    action: Action
    forced: tuple[EventKind, ...]
    status: LinkStatus
    rx_frame: IqFrame = field(repr=False)

    @property
    def action_label(self) -> str:
        """The controller action taking effect on this tick, then the forced events; ``Hold`` if neither."""
        labels = [] if self.action.is_hold else [self.action.kind.value]
        labels.extend(kind.label for kind in self.forced)
        return ACTION_SEPARATOR.join(labels) or self.action.kind.value

    def to_row(self) -> dict:
        return {
            "tick": self.tick,
            "time_s": self.time_s,
            "band_hz": self.band.hertz,
            "tx_gain_db": self.tx_gain_db,
            "rss_db": self.metrics.rss_db,
            "ber": self.metrics.ber,
            "bler": self.metrics.bler,
            "beta_db": self.beta_db,
            "obstruction_db": self.obstruction_db,
            "action": self.action_label,
            "status": self.status.value,
        }


@dataclass(frozen=True, eq=False)
class MetricsLog:
    """Per-tick metrics table plus the reasons behind every non-Hold controller action."""

    table: pa.Table
    actions: tuple[tuple[int, str, str], ...] = ()

    def __post_init__(self):
        if self.table.schema.names != METRICS_SCHEMA.names:
            raise DomainError(f"metrics table columns {self.table.schema.names} != {METRICS_SCHEMA.names}")

    def __len__(self) -> int:
        return self.table.num_rows

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MetricsLog):
            return NotImplemented
        return self.table.equals(other.table) and self.actions == other.actions

    @property
    def rows(self) -> list[dict]:
        return self.table.to_pylist()

    def column(self, name: str) -> list:
        return self.table.column(name).to_pylist()

    def to_csv(self, path: str | Path) -> None:
        write_csv_file(self.table, path)

    @classmethod
    def from_csv(cls, path: str | Path) -> MetricsLog:
        column_types = {field.name: field.type for field in METRICS_SCHEMA}
        return cls(read_csv_file(path, column_types).cast(METRICS_SCHEMA))


class Simulation:
    """Stepwise execution of one scenario with private state and RNG streams."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.tick = 0
        self.channel = scenario.channel
        self.environment = scenario.environment
        start = scenario.plan.index_of(scenario.channel.freq)
        self.controller = ControllerState.initial(start, scenario.policy, scenario.channel.tx_gain_db)
        self.pool = reserve(scenario.pool, scenario.plan[start])
        self._pending = Action(ActionKind.HOLD, "no decision yet")
        self._events: dict[int, list[TimedEvent]] = {}
        for event in scenario.schedule:
            self._events.setdefault(event.tick, []).append(event)

    @property
    def finished(self) -> bool:
        return self.tick >= self.scenario.duration_ticks

    @property
    def time_s(self) -> float:
        return self.tick * self.scenario.tick_duration_s

    def _apply_event(self, event: TimedEvent) -> None:
        t = self.time_s
        logger.info(f"tick={self.tick} forced {event.kind.label}")
        if event.kind is EventKind.OBSTRUCTION_START:
            self.channel = self.channel.with_obstruction(ObstructionEvent(start_s=t, extra_loss_db=event.value_db))
        elif event.kind is EventKind.OBSTRUCTION_END:
            self.channel = self.channel.end_obstructions(t)
        elif event.kind is EventKind.SET_GAIN:
            self.channel = self.channel.with_tx_gain(event.value_db)
            self.controller = replace(self.controller, tx_gain_db=event.value_db)
        elif event.kind is EventKind.SET_RX_GAIN:
            self.channel = self.channel.with_rx_gain(event.value_db)
        elif event.kind is EventKind.SET_FREQUENCY:
            plan = self.scenario.plan
            target = plan.index_of(event.band)
            if target != self.controller.band_index:
                if self.controller.status is LinkStatus.ACTIVE:
                    self.pool = reserve(release(self.pool, plan[self.controller.band_index]), plan[target])
                self.controller = replace(self.controller, band_index=target)
                self.channel = self.channel.with_frequency(plan[target])
        else:
            self.pool = self.pool.with_capacity(event.band, event.units)

    def _rngs(self) -> tuple[int, np.random.Generator]:
        bits_seq, noise_seq = np.random.SeedSequence([self.scenario.seed, self.tick]).spawn(2)
        return int(bits_seq.generate_state(1)[0]), np.random.default_rng(noise_seq)

    def _decide(self, metrics: LinkMetrics) -> Action:
        scenario = self.scenario
        if not scenario.controller_enabled:
            return Action(ActionKind.HOLD, "controller disabled")
        action = evaluate(
            metrics,
            scenario.policy,
            self.pool,
            self.controller,
            self.channel.noise_floor_db,
            upshift_penalty_db=lambda current, upper: retune_loss_db(self.channel, current, upper),
        )
        if action.is_hold:
            return action
        try:
            self.controller, self.pool = apply_action(
                self.controller, action, scenario.plan, self.pool, scenario.policy
            )
        except ActionRejectedError as exc:
            logger.warning(f"tick={self.tick} {exc}; state unchanged")
            return Action(ActionKind.HOLD, str(exc))
        self.channel = self.channel.with_frequency(scenario.plan[self.controller.band_index]).with_tx_gain(
            self.controller.tx_gain_db
        )
        logger.info(f"tick={self.tick} action={action.kind.value} from tick {self.tick + 1} reason={action.reason}")
        return action

    def step(self) -> TickRecord:
        """Run one tick and return what it produced.

        Raises:
            SimulationError: a scheduled event could not be applied.
        """
        if self.finished:
            raise SimulationError(f"scenario {self.scenario.name!r} already ran {self.tick} ticks")
        scenario = self.scenario
        events = self._events.get(self.tick, [])
        try:
            for event in events:
                self._apply_event(event)
        except (CapacityError, DomainError) as exc:
            raise SimulationError(f"tick {self.tick}: {exc}") from exc

        t = self.time_s
        self.environment = step_environment(self.environment, scenario.tick_duration_s)
        self.channel = self.channel.with_beta(self.environment.current)

        bits_seed, noise_rng = self._rngs()
        tx_bits = generate_bits(scenario.bits_per_tick, seed=bits_seed)
        tx_frame = ofdm_modulate(qam16_modulate(tx_bits), scenario.phy)
        rx_frame = apply_channel(tx_frame, self.channel, t, noise_rng)
        # Ideal AGC: the receiver knows the expected RSS and normalizes before demodulating.
        agc = 1.0 / math.sqrt(db_to_linear(link_budget(self.channel, t).expected_rss_db))
        rx_bits = qam16_demodulate(ofdm_demodulate(rx_frame.scaled(agc), scenario.phy))
        metrics = link_metrics(
            tx_bits, rx_bits, rx_frame, scenario.phy, self.channel.noise_floor_db, scenario.block_bits
        )
        band, gain, status = self.channel.freq, self.channel.tx_gain_db, self.controller.status
        logger.debug(
            f"tick={self.tick} band={band} gain={gain:g} rss={metrics.rss_db:.2f} "
            f"ber={metrics.ber:.3g} bler={metrics.bler:.3g}"
        )

        action, self._pending = self._pending, Action(ActionKind.HOLD, "final tick")
        if self.tick + 1 < scenario.duration_ticks:
            self._pending = self._decide(metrics)
        record = TickRecord(
            tick=self.tick,
            time_s=t,
            band=band,
            tx_gain_db=gain,
            beta_db=self.channel.beta_db,
            obstruction_db=active_obstruction_loss(self.channel, t),
            metrics=metrics,
            action=action,
            forced=tuple(event.kind for event in events),
            status=status,
            rx_frame=rx_frame,
        )
        self.controller = advance(self.controller)
        self.tick += 1
        return record


def run(scenario: Scenario) -> MetricsLog:
    """Run a scenario to completion."""
    logger.info(f"Running {scenario.name!r}: {scenario.duration_ticks} ticks, seed {scenario.seed}")
    simulation = Simulation(scenario)
    sink = MetricsSink(METRICS_SCHEMA)
    actions = []
    while not simulation.finished:
        record = simulation.step()
        sink.process_record(record.to_row())
        if not record.action.is_hold:
            actions.append((record.tick, record.action.kind.value, record.action.reason))
    log = MetricsLog(sink.clean_up(), tuple(actions))
    logger.info(f"Finished {scenario.name!r}: final band {simulation.channel.freq}, {len(actions)} actions")
    return log


def received_frame(scenario: Scenario, tick: int) -> tuple[IqFrame, Frequency]:
    """The received frame of ``tick`` and the carrier it was sent on."""
    if not 0 <= tick < scenario.duration_ticks:
        raise DomainError(f"tick {tick} is outside [0, {scenario.duration_ticks})")
    simulation = Simulation(scenario)
    while True:
        record = simulation.step()
        if record.tick == tick:
            return record.rx_frame, record.band


@dataclass(frozen=True)
class Phase:
    """A maximal run of ticks sharing band, transmit gain and obstruction loss."""

    start_tick: int
    end_tick: int
    band_hz: float
    tx_gain_db: float
    obstruction_db: float
    mean_rss_db: float

    @property
    def ticks(self) -> int:
        return self.end_tick - self.start_tick + 1


@dataclass(frozen=True)
class RunSummary:
    duration_ticks: int
    band_dwell_ticks: dict[float, int]
    action_counts: dict[str, int]
    transitions: int
    phases: tuple[Phase, ...]
    failed: bool
    final_band_hz: float
    final_tx_gain_db: float

    def to_dict(self) -> dict:
        return {
            "duration_ticks": self.duration_ticks,
            "band_dwell_ticks": {format_frequency(hz): ticks for hz, ticks in self.band_dwell_ticks.items()},
            "action_counts": dict(self.action_counts),
            "transitions": self.transitions,
            "phases": [
                {
                    "start_tick": phase.start_tick,
                    "end_tick": phase.end_tick,
                    "band": format_frequency(phase.band_hz),
                    "tx_gain_db": phase.tx_gain_db,
                    "obstruction_db": phase.obstruction_db,
                    "mean_rss_db": phase.mean_rss_db,
                }
                for phase in self.phases
            ],
            "failed": self.failed,
            "final_band": format_frequency(self.final_band_hz),
            "final_tx_gain_db": self.final_tx_gain_db,
        }


def summarize(log: MetricsLog) -> RunSummary:
    """Dwell per band, action counts, mean RSS per phase and the failure flag."""
    if not len(log):
        raise DomainError("cannot summarize an empty metrics log")
    ticks = np.asarray(log.column("tick"))
    bands = np.asarray(log.column("band_hz"))
    gains = np.asarray(log.column("tx_gain_db"))
    obstruction = np.asarray(log.column("obstruction_db"))
    rss = np.asarray(log.column("rss_db"))

    dwell = Counter(float(hz) for hz in bands)
    counts = Counter(
        label
        for cell in log.column("action")
        for label in cell.split(ACTION_SEPARATOR)
        if label != ActionKind.HOLD.value
    )
    changed = (np.diff(bands) != 0) | (np.diff(gains) != 0)
    boundaries = np.flatnonzero(changed | (np.diff(obstruction) != 0)) + 1
    phases = tuple(
        Phase(
            start_tick=int(ticks[segment[0]]),
            end_tick=int(ticks[segment[-1]]),
            band_hz=float(bands[segment[0]]),
            tx_gain_db=float(gains[segment[0]]),
            obstruction_db=float(obstruction[segment[0]]),
            mean_rss_db=float(np.mean(rss[segment])),
        )
        for segment in np.split(np.arange(len(ticks)), boundaries)
    )
    return RunSummary(
        duration_ticks=len(log),
        band_dwell_ticks=dict(sorted(dwell.items())),
        action_counts=dict(sorted(counts.items())),
        transitions=int(np.count_nonzero(changed)),
        phases=phases,
        failed=LinkStatus.FAILED.value in log.column("status"),
        final_band_hz=float(bands[-1]),
        final_tx_gain_db=float(gains[-1]),
    )
