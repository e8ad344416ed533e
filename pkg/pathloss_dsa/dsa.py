"""Dynamic spectrum access controller.

The controller watches per-tick link metrics and, when the link degrades, moves it to a
lower carrier (where path loss is smaller) or raises the transmit gain, subject to spectrum
availability. Uplink and downlink share one carrier, so a band change is a single
reassignment of one pool unit.
"""

from __future__ import annotations

import enum
import logging
import math
from collections.abc import Callable
from dataclasses import dataclass, replace

from pathloss_dsa.exceptions import ActionRejectedError, CapacityError, DomainError
from pathloss_dsa.phy import LinkMetrics
from pathloss_dsa.propagation import Frequency, as_frequency

logger = logging.getLogger(__name__)

DEFAULT_BANDS_HZ = (830e6, 1.2e9, 1.6e9, 1.9e9)
_BAND_TOLERANCE = 1e-9


class ActionKind(str, enum.Enum):
    HOLD = "Hold"
    DOWNSHIFT = "Downshift"
    UPSHIFT = "Upshift"
    INCREASE_GAIN = "IncreaseGain"
    DECREASE_GAIN = "DecreaseGain"
    DECLARE_FAILURE = "DeclareFailure"


class Preference(str, enum.Enum):
    """Which remedy the controller tries first on a degraded link."""

    DOWNSHIFT_FIRST = "downshift_first"
    GAIN_FIRST = "gain_first"


class LinkStatus(str, enum.Enum):
    ACTIVE = "Active"
    FAILED = "Failed"


def _find_band(bands: tuple[Frequency, ...], band: Frequency | float) -> int:
    hertz = as_frequency(band).hertz
    for index, candidate in enumerate(bands):
        if math.isclose(candidate.hertz, hertz, rel_tol=_BAND_TOLERANCE):
            return index
    raise DomainError(f"{as_frequency(band)} is not a band of the plan")


@dataclass(frozen=True)
class BandPlan:
    """Candidate carriers, ascending."""

    bands: tuple[Frequency, ...] = tuple(Frequency(hz) for hz in DEFAULT_BANDS_HZ)

    def __post_init__(self):
        bands = tuple(as_frequency(f) for f in self.bands)
        object.__setattr__(self, "bands", bands)
        if not bands:
            raise DomainError("band plan must not be empty")
        for lower, upper in zip(bands, bands[1:]):
            if not upper.hertz > lower.hertz:
                raise DomainError(f"band plan must be strictly ascending ({lower} then {upper})")

    def __len__(self) -> int:
        return len(self.bands)

    def __getitem__(self, index: int) -> Frequency:
        return self.bands[index]

    def index_of(self, band: Frequency | float) -> int:
        return _find_band(self.bands, band)


@dataclass(frozen=True)
class SpectrumPool:
    """Per-band resource units; ``occupied`` counts units held by every link, this one included."""

    bands: tuple[Frequency, ...]
    capacity: tuple[int, ...]
    occupied: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "bands", tuple(as_frequency(f) for f in self.bands))
        object.__setattr__(self, "capacity", tuple(int(c) for c in self.capacity))
        object.__setattr__(self, "occupied", tuple(int(o) for o in self.occupied))
        if not len(self.bands) == len(self.capacity) == len(self.occupied):
            raise DomainError("bands, capacity and occupied must have the same length")
        for band, cap, occ in zip(self.bands, self.capacity, self.occupied):
            if cap < 0 or not 0 <= occ <= cap:
                raise DomainError(f"{band}: need 0 <= occupied ({occ}) <= capacity ({cap})")

    @classmethod
    def for_plan(cls, plan: BandPlan, capacity: int | tuple[int, ...] = 1, occupied: tuple[int, ...] | None = None):
        capacities = (capacity,) * len(plan) if isinstance(capacity, int) else tuple(capacity)
        return cls(plan.bands, capacities, occupied if occupied is not None else (0,) * len(plan))

    def index_of(self, band: Frequency | float) -> int:
        return _find_band(self.bands, band)

    def free(self, index: int) -> int:
        return self.capacity[index] - self.occupied[index]

    def has_free(self, index: int) -> bool:
        return self.free(index) > 0

    @property
    def total_occupied(self) -> int:
        return sum(self.occupied)

    def _with_occupied(self, index: int, value: int) -> SpectrumPool:
        occupied = list(self.occupied)
        occupied[index] = value
        return replace(self, occupied=tuple(occupied))

    def with_capacity(self, band: Frequency | float, units: int) -> SpectrumPool:
        index = self.index_of(band)
        if units < self.occupied[index]:
            raise CapacityError(f"{self.bands[index]}: capacity {units} is below occupancy {self.occupied[index]}")
        capacity = list(self.capacity)
        capacity[index] = units
        return replace(self, capacity=tuple(capacity))


def reserve(pool: SpectrumPool, band: Frequency | float) -> SpectrumPool:
    index = pool.index_of(band)
    if not pool.has_free(index):
        raise CapacityError(f"{pool.bands[index]} is full ({pool.occupied[index]}/{pool.capacity[index]})")
    return pool._with_occupied(index, pool.occupied[index] + 1)


def release(pool: SpectrumPool, band: Frequency | float) -> SpectrumPool:
    index = pool.index_of(band)
    if pool.occupied[index] <= 0:
        raise CapacityError(f"{pool.bands[index]} has no occupied unit to release")
    return pool._with_occupied(index, pool.occupied[index] - 1)


@dataclass(frozen=True)
class DsaPolicy:
    rss_margin_db: float = 3.0
    bler_max: float = 0.1
    hysteresis_db: float = 3.0
    dwell_ticks: int = 5
    gain_step_db: float = 13.0
    gain_max_db: float = 40.0
    prefer: Preference = Preference.DOWNSHIFT_FIRST

    def __post_init__(self):
        object.__setattr__(self, "prefer", Preference(self.prefer))
        if self.rss_margin_db < 0 or self.hysteresis_db < 0:
            raise DomainError("rss_margin_db and hysteresis_db must be >= 0")
        if not 0.0 <= self.bler_max <= 1.0:
            raise DomainError(f"bler_max must be in [0, 1], got {self.bler_max}")
        if self.dwell_ticks < 1:
            raise DomainError(f"dwell_ticks must be positive, got {self.dwell_ticks}")
        if not self.gain_step_db > 0:
            raise DomainError(f"gain_step_db must be positive, got {self.gain_step_db}")
        if self.gain_max_db < 0:
            raise DomainError(f"gain_max_db must be >= 0, got {self.gain_max_db}")

    @property
    def gain_steps(self) -> int:
        return int(self.gain_max_db // self.gain_step_db)


@dataclass(frozen=True)
class ControllerState:
    band_index: int
    tx_gain_db: float = 0.0
    ticks_since_change: int = 0
    status: LinkStatus = LinkStatus.ACTIVE

    def __post_init__(self):
        object.__setattr__(self, "status", LinkStatus(self.status))
        if self.band_index < 0:
            raise DomainError(f"band_index must be >= 0, got {self.band_index}")
        if self.tx_gain_db < 0:
            raise DomainError(f"tx_gain_db must be >= 0, got {self.tx_gain_db}")

    @classmethod
    def initial(cls, band_index: int, policy: DsaPolicy, tx_gain_db: float = 0.0) -> ControllerState:
        """A controller that may act on its first evaluation."""
        return cls(band_index=band_index, tx_gain_db=tx_gain_db, ticks_since_change=policy.dwell_ticks)


@dataclass(frozen=True)
class Action:
    kind: ActionKind
    reason: str = ""
    target_band_index: int | None = None
    target_gain_db: float | None = None

    @property
    def is_hold(self) -> bool:
        return self.kind is ActionKind.HOLD


def _lower_free_band(pool: SpectrumPool, band_index: int) -> int | None:
    for index in range(band_index - 1, -1, -1):
        if pool.has_free(index):
            return index
    return None


def evaluate(
    metrics: LinkMetrics,
    policy: DsaPolicy,
    pool: SpectrumPool,
    cs: ControllerState,
    noise_floor_db: float,
    upshift_penalty_db: Callable[[Frequency, Frequency], float] | None = None,
) -> Action:
    """Decide the next action from one tick of link metrics. Pure and total.

    An Upshift is proposed only when the current RSS clears the threshold plus hysteresis by the
    RSS drop expected on the next band up. ``upshift_penalty_db(current, upper)`` supplies that
    drop; without it the free-space value ``20 log10(upper / current)`` is used, which
    underestimates measured channels (830 MHz to 1.2 GHz loses about 10.4 dB on the bundled
    Set1 data against 3.2 dB in free space) and lets the link ping-pong between bands.
    """
    if cs.status is LinkStatus.FAILED:
        return Action(ActionKind.HOLD, "link failed")
    if cs.ticks_since_change < policy.dwell_ticks:
        return Action(ActionKind.HOLD, f"dwell {cs.ticks_since_change}/{policy.dwell_ticks}")

    threshold = noise_floor_db + policy.rss_margin_db
    low_rss = metrics.rss_db < threshold
    high_bler = metrics.bler > policy.bler_max

    if low_rss or high_bler:
        reason = (
            f"rss {metrics.rss_db:.2f} dB < {threshold:.2f} dB"
            if low_rss
            else f"bler {metrics.bler:.3f} > {policy.bler_max:.3f}"
        )
        remedies = (
            ("band", "gain") if policy.prefer is Preference.DOWNSHIFT_FIRST else ("gain", "band")
        )
        for remedy in remedies:
            if remedy == "band":
                lower = _lower_free_band(pool, cs.band_index)
                if lower is not None:
                    return Action(ActionKind.DOWNSHIFT, reason, target_band_index=lower)
            elif cs.tx_gain_db + policy.gain_step_db <= policy.gain_max_db:
                return Action(
                    ActionKind.INCREASE_GAIN, reason, target_gain_db=cs.tx_gain_db + policy.gain_step_db
                )
        return Action(ActionKind.DECLARE_FAILURE, f"{reason}; no lower band free and gain exhausted")

    # Undo remedies in the reverse order they are applied.
    undo = ("gain", "band") if policy.prefer is Preference.DOWNSHIFT_FIRST else ("band", "gain")
    for remedy in undo:
        if remedy == "gain":
            lowered = cs.tx_gain_db - policy.gain_step_db
            if lowered >= 0 and metrics.rss_db - policy.gain_step_db > threshold + policy.hysteresis_db:
                return Action(
                    ActionKind.DECREASE_GAIN,
                    f"rss {metrics.rss_db:.2f} dB leaves room for -{policy.gain_step_db:g} dB",
                    target_gain_db=lowered,
                )
        else:
            upper = cs.band_index + 1
            if upper < len(pool.bands) and pool.has_free(upper):
                current, candidate = pool.bands[cs.band_index], pool.bands[upper]
                penalty = (
                    upshift_penalty_db(current, candidate)
                    if upshift_penalty_db is not None
                    else 20.0 * math.log10(candidate.hertz / current.hertz)
                )
                if metrics.rss_db > threshold + policy.hysteresis_db + penalty:
                    return Action(
                        ActionKind.UPSHIFT,
                        f"rss {metrics.rss_db:.2f} dB covers the {penalty:.2f} dB penalty of {candidate}",
                        target_band_index=upper,
                    )
    return Action(ActionKind.HOLD, "link healthy")


def apply_action(
    cs: ControllerState,
    a: Action,
    plan: BandPlan,
    pool: SpectrumPool,
    policy: DsaPolicy | None = None,
) -> tuple[ControllerState, SpectrumPool]:
    """Apply an action atomically.

    Raises:
        ActionRejectedError: the action is infeasible; the caller keeps its old state.
    """
    policy = policy or DsaPolicy()
    if len(plan) != len(pool.bands):
        raise DomainError("band plan and spectrum pool are not aligned")
    if not 0 <= cs.band_index < len(plan):
        raise DomainError(f"band_index {cs.band_index} is outside the plan")
    if a.kind is ActionKind.HOLD:
        return cs, pool
    if cs.status is LinkStatus.FAILED:
        raise ActionRejectedError(f"{a.kind.value} rejected: link has failed")

    current = plan[cs.band_index]
    if a.kind in (ActionKind.DOWNSHIFT, ActionKind.UPSHIFT):
        target = a.target_band_index
        downward = a.kind is ActionKind.DOWNSHIFT
        if target is None or not 0 <= target < len(plan) or (target < cs.band_index) != downward:
            raise ActionRejectedError(f"{a.kind.value} rejected: invalid target band {target}")
        if target == cs.band_index:
            raise ActionRejectedError(f"{a.kind.value} rejected: already on {current}")
        try:
            new_pool = reserve(release(pool, current), plan[target])
        except CapacityError as exc:
            raise ActionRejectedError(f"{a.kind.value} rejected: {exc}") from exc
        return replace(cs, band_index=target, ticks_since_change=0), new_pool

    if a.kind in (ActionKind.INCREASE_GAIN, ActionKind.DECREASE_GAIN):
        step = policy.gain_step_db if a.kind is ActionKind.INCREASE_GAIN else -policy.gain_step_db
        gain = a.target_gain_db if a.target_gain_db is not None else cs.tx_gain_db + step
        if not 0.0 <= gain <= policy.gain_max_db:
            raise ActionRejectedError(f"{a.kind.value} rejected: {gain:g} dB outside [0, {policy.gain_max_db:g}] dB")
        if (gain > cs.tx_gain_db) != (a.kind is ActionKind.INCREASE_GAIN):
            raise ActionRejectedError(f"{a.kind.value} rejected: target {gain:g} dB moves the wrong way")
        return replace(cs, tx_gain_db=gain, ticks_since_change=0), pool

    try:
        new_pool = release(pool, current)
    except CapacityError as exc:
        raise ActionRejectedError(f"{a.kind.value} rejected: {exc}") from exc
    return replace(cs, status=LinkStatus.FAILED, ticks_since_change=0), new_pool


def advance(cs: ControllerState) -> ControllerState:
    """Count one more tick since the last change."""
    return replace(cs, ticks_since_change=cs.ticks_since_change + 1)
