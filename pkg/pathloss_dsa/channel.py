"""Frequency-dependent link budget applied to baseband frames."""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from pathloss_dsa.exceptions import DomainError
from pathloss_dsa.phy import IqFrame, complex_awgn
from pathloss_dsa.propagation import (
    AlphaEstimate,
    Frequency,
    MeasurementSet,
    PathLossParams,
    as_frequency,
    interpolate_rss,
    itu_indoor_path_loss,
    rss_from_alpha,
)
from pathloss_dsa.utils import db_to_linear

logger = logging.getLogger(__name__)

TX_GAIN_MAX_DB = 40.0
DEFAULT_RX_GAIN_DB = 10.0
DEFAULT_NOISE_FLOOR_DB = -90.0


class LinkMode(str, enum.Enum):
    """Which model supplies the frequency-dependent base RSS."""

    ANALYTIC_ALPHA = "analytic"
    ITU_MODEL = "itu"
    EMPIRICAL = "empirical"


@dataclass(frozen=True)
class ObstructionEvent:
    """Extra loss between ``start_s`` (inclusive) and ``end_s`` (exclusive); ``end_s=None`` is open."""

    start_s: float
    end_s: float | None = None
    extra_loss_db: float = 0.0

    def __post_init__(self):
        if self.end_s is not None and not self.end_s > self.start_s:
            raise DomainError(f"obstruction must end after it starts ({self.start_s} .. {self.end_s})")
        if self.extra_loss_db < 0:
            raise DomainError(f"extra_loss_db must be >= 0, got {self.extra_loss_db}")

    def is_active(self, t: float) -> bool:
        return self.start_s <= t and (self.end_s is None or t < self.end_s)


@dataclass(frozen=True)
class EnvironmentProcess:
    """Clipped Gaussian random walk driving beta(t), in dB."""

    sigma_db: float = 0.2
    clip_db: float = 2.0
    seed: int = 0
    current: float = 0.0
    steps: int = 0

    def __post_init__(self):
        if self.sigma_db < 0 or self.clip_db < 0:
            raise DomainError("sigma_db and clip_db must be >= 0")
        if self.seed < 0:
            raise DomainError(f"seed must be >= 0, got {self.seed}")
        if abs(self.current) > self.clip_db:
            raise DomainError(f"|current| ({self.current}) exceeds clip_db ({self.clip_db})")


@dataclass(frozen=True)
class LinkBudget:
    expected_rss_db: float
    noise_db: float
    snr_db: float
    components: tuple[tuple[str, float], ...]

    def component(self, name: str) -> float:
        return dict(self.components)[name]


@dataclass(frozen=True)
class ChannelState:
    """Everything that fixes the link budget at a given time.

    ``mode`` selects the base RSS: ``alpha`` for ANALYTIC_ALPHA, ``params`` with ``p_t_dbm``
    for ITU_MODEL, ``empirical_set`` for EMPIRICAL.
    """

    freq: Frequency
    mode: LinkMode = LinkMode.ANALYTIC_ALPHA
    tx_gain_db: float = 0.0
    rx_gain_db: float = DEFAULT_RX_GAIN_DB
    alpha: AlphaEstimate | None = None
    params: PathLossParams | None = None
    p_t_dbm: float = 0.0
    empirical_set: MeasurementSet | None = None
    noise_floor_db: float = DEFAULT_NOISE_FLOOR_DB
    fixed_loss_db: float = 0.0
    beta_db: float = 0.0
    obstructions: tuple[ObstructionEvent, ...] = ()
    tx_gain_max_db: float = TX_GAIN_MAX_DB

    def __post_init__(self):
        object.__setattr__(self, "freq", as_frequency(self.freq))
        object.__setattr__(self, "mode", LinkMode(self.mode))
        object.__setattr__(self, "obstructions", tuple(self.obstructions))
        if not 0.0 <= self.tx_gain_db <= self.tx_gain_max_db:
            raise DomainError(f"tx_gain_db must be in [0, {self.tx_gain_max_db}], got {self.tx_gain_db}")
        if not self.noise_floor_db < 0:
            raise DomainError(f"noise_floor_db must be negative, got {self.noise_floor_db}")
        if self.fixed_loss_db < 0:
            raise DomainError(f"fixed_loss_db must be >= 0, got {self.fixed_loss_db}")
        required = {
            LinkMode.ANALYTIC_ALPHA: ("alpha", self.alpha),
            LinkMode.ITU_MODEL: ("params", self.params),
            LinkMode.EMPIRICAL: ("empirical_set", self.empirical_set),
        }[self.mode]
        if required[1] is None:
            raise DomainError(f"{self.mode.value} mode needs {required[0]}")

    def with_frequency(self, f: Frequency | float) -> ChannelState:
        return replace(self, freq=as_frequency(f))

    def with_tx_gain(self, gain_db: float) -> ChannelState:
        return replace(self, tx_gain_db=gain_db)

    def with_rx_gain(self, gain_db: float) -> ChannelState:
        return replace(self, rx_gain_db=gain_db)

    def with_beta(self, beta_db: float) -> ChannelState:
        return replace(self, beta_db=beta_db)

    def with_obstruction(self, event: ObstructionEvent) -> ChannelState:
        return replace(self, obstructions=(*self.obstructions, event))

    def end_obstructions(self, t: float) -> ChannelState:
        """Close every open obstruction started at or before ``t``; ones starting at ``t`` are dropped."""
        closed = []
        for event in self.obstructions:
            if event.end_s is None and event.start_s <= t:
                if event.start_s == t:
                    continue
                event = replace(event, end_s=t)
            closed.append(event)
        return replace(self, obstructions=tuple(closed))


def base_rss(state: ChannelState, f: Frequency | float | None = None) -> float:
    """Mode-dependent RSS at unit gain chain, before environment and obstruction terms."""
    f = state.freq if f is None else as_frequency(f)
    if state.mode is LinkMode.ANALYTIC_ALPHA:
        return rss_from_alpha(state.alpha, f)
    if state.mode is LinkMode.ITU_MODEL:
        return state.p_t_dbm - itu_indoor_path_loss(f, state.params)
    return interpolate_rss(state.empirical_set, f)


def retune_loss_db(state: ChannelState, f_from: Frequency | float, f_to: Frequency | float) -> float:
    """Base-RSS drop the channel's own model predicts when moving from ``f_from`` to ``f_to``."""
    return base_rss(state, f_from) - base_rss(state, f_to)


def active_obstruction_loss(state: ChannelState, t: float) -> float:
    """Sum of the losses of all obstructions active at ``t``; overlapping screens add in dB."""
    return sum(event.extra_loss_db for event in state.obstructions if event.is_active(t))


def link_budget(state: ChannelState, t: float) -> LinkBudget:
    components = (
        ("base_rss", base_rss(state)),
        ("tx_gain", state.tx_gain_db),
        ("rx_gain", state.rx_gain_db),
        ("fixed_loss", -state.fixed_loss_db),
        ("beta", state.beta_db),
        ("obstruction", -active_obstruction_loss(state, t)),
    )
    expected = sum(value for _, value in components)
    return LinkBudget(
        expected_rss_db=expected,
        noise_db=state.noise_floor_db,
        snr_db=expected - state.noise_floor_db,
        components=components,
    )


def apply_channel(
    frame: IqFrame, state: ChannelState, t: float, rng: np.random.Generator | int
) -> IqFrame:
    """Scale a unit-reference frame to the expected RSS and add noise at the floor.

    With orthonormal FFTs the per-sample noise power equals the per-tone noise power,
    so the injected variance is the floor itself.
    """
    if not len(frame):
        raise DomainError("cannot apply the channel to an empty frame")
    budget = link_budget(state, t)
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    amplitude = math.sqrt(db_to_linear(budget.expected_rss_db))
    noise = complex_awgn(len(frame), db_to_linear(state.noise_floor_db), rng)
    return IqFrame(frame.samples * amplitude + noise, frame.sample_rate_hz, frame.symbols_contained)


def step_environment(env: EnvironmentProcess, dt: float) -> EnvironmentProcess:
    """Advance beta(t) by one Gaussian increment of standard deviation ``sigma_db * sqrt(dt)``."""
    if not dt > 0:
        raise DomainError(f"dt must be positive, got {dt}")
    draw = np.random.default_rng([env.seed, env.steps]).standard_normal()
    current = float(np.clip(env.current + env.sigma_db * math.sqrt(dt) * draw, -env.clip_db, env.clip_db))
    return replace(env, current=current, steps=env.steps + 1)
