"""ITU indoor path-loss model, alpha estimation and RSS-vs-frequency curves."""

from __future__ import annotations

import enum
import logging
import math
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
import pyarrow as pa
from singer_sdk import typing as th

from pathloss_dsa.exceptions import DomainError, MeasurementFormatError, OutOfRangeError
from pathloss_dsa.utils import format_frequency, parse_frequency
from pathloss_dsa.utils.tables import (
    create_pyarrow_table,
    properties_to_pyarrow_schema,
    read_csv_file,
    write_csv_file,
)

logger = logging.getLogger(__name__)

MEASUREMENT_COLUMNS = {"freq_hz": pa.float64(), "rss_dbm": pa.float64()}

CURVE_SCHEMA = properties_to_pyarrow_schema(
    th.PropertiesList(
        th.Property("freq_hz", th.NumberType, required=True, description="Carrier frequency, Hz"),
        th.Property("rss_dbm", th.NumberType, required=True, description="Received signal strength, dBm"),
        th.Property("mode", th.StringType, required=True, description="Curve generation mode"),
    ).to_dict()
)

FIT_REPORT_SCHEMA = properties_to_pyarrow_schema(
    th.PropertiesList(
        th.Property("freq_hz", th.NumberType, required=True),
        th.Property("rss_dbm", th.NumberType, required=True),
        th.Property("model_rss_dbm", th.NumberType, required=True),
        th.Property("residual_db", th.NumberType, required=True),
    ).to_dict()
)

# Reported alpha_avg per measurement session, dB (frequency in Hz).
TABLE1_ALPHA_AVG = {"Set1": 126.59, "Set2": 126.20, "Set3": 126.03, "Set4": 126.23}

_TABLE1_REFERENCE = re.compile(r"^table1/set([1-4])$", re.IGNORECASE)
_TABLE1_LABEL = re.compile(r"^set([1-4])$", re.IGNORECASE)
_ROW_NUMBER = re.compile(r"Row #(\d+)")
_RANGE_TOLERANCE = 1e-12


class FrequencyUnit(str, enum.Enum):
    """Unit the frequency is expressed in inside ``20 log10 f``."""

    HZ = "hz"
    MHZ = "mhz"

    @property
    def scale(self) -> float:
        return 1.0 if self is FrequencyUnit.HZ else 1e6


class CurveMode(str, enum.Enum):
    """How an RSS curve is produced from a measurement set."""

    ANALYTIC_ALPHA = "analytic"
    PIECEWISE_LOG_LINEAR = "interp"


@dataclass(frozen=True, order=True)
class Frequency:
    """A carrier frequency in Hz."""

    hertz: float

    def __post_init__(self):
        if not (math.isfinite(self.hertz) and self.hertz > 0):
            raise DomainError(f"Frequency must be positive and finite, got {self.hertz} Hz")

    @classmethod
    def parse(cls, text: str) -> Frequency:
        try:
            return cls(parse_frequency(text))
        except ValueError as exc:
            raise DomainError(str(exc)) from None

    @property
    def mhz(self) -> float:
        return self.hertz / 1e6

    def in_unit(self, unit: FrequencyUnit) -> float:
        return self.hertz / unit.scale

    def __str__(self) -> str:
        return format_frequency(self.hertz)


def as_frequency(value: Frequency | float) -> Frequency:
    """Accept either a Frequency or a plain number of Hz."""
    return value if isinstance(value, Frequency) else Frequency(float(value))


@dataclass(frozen=True)
class PathLossParams:
    """Frequency-independent inputs of the ITU indoor model."""

    n_coeff: float
    distance_m: float
    floors: int = 0
    floor_penetration_db: float = 0.0

    def __post_init__(self):
        if not self.distance_m > 0:
            raise DomainError(f"distance_m must be > 0, got {self.distance_m}")
        if not self.n_coeff > 0:
            raise DomainError(f"n_coeff must be > 0, got {self.n_coeff}")
        if self.floors < 0:
            raise DomainError(f"floors must be >= 0, got {self.floors}")
        if self.floor_penetration_db < 0:
            raise DomainError(f"floor_penetration_db must be >= 0, got {self.floor_penetration_db}")
        if self.floors == 0 and self.floor_penetration_db != 0:
            raise DomainError("floor_penetration_db must be 0 when floors = 0")


@dataclass(frozen=True)
class MeasurementSet:
    """RSS-vs-frequency samples of one measurement session."""

    label: str
    points: tuple[tuple[Frequency, float], ...]

    def __post_init__(self):
        points = tuple((as_frequency(f), float(rss)) for f, rss in self.points)
        object.__setattr__(self, "points", points)
        if len(points) < 2:
            raise DomainError(f"{self.label}: a measurement set needs at least 2 points, got {len(points)}")
        for (f_prev, _), (f_next, _) in zip(points, points[1:]):
            if not f_next.hertz > f_prev.hertz:
                raise DomainError(f"{self.label}: frequencies must be strictly increasing ({f_prev} then {f_next})")

    @classmethod
    def from_arrays(cls, label: str, freqs_hz: list[float] | np.ndarray, rss_dbm: list[float] | np.ndarray):
        return cls(label, tuple(zip(freqs_hz, rss_dbm)))

    @property
    def frequencies_hz(self) -> np.ndarray:
        return np.array([f.hertz for f, _ in self.points])

    @property
    def rss_dbm(self) -> np.ndarray:
        return np.array([rss for _, rss in self.points])

    @property
    def f_min(self) -> Frequency:
        return self.points[0][0]

    @property
    def f_max(self) -> Frequency:
        return self.points[-1][0]

    def covers(self, f: Frequency | float) -> bool:
        hertz = as_frequency(f).hertz
        return (
            self.f_min.hertz * (1 - _RANGE_TOLERANCE) <= hertz <= self.f_max.hertz * (1 + _RANGE_TOLERANCE)
        )


@dataclass(frozen=True)
class AlphaEstimate:
    """Aggregate frequency-independent link constant and its fit residuals."""

    alpha_db: float
    residuals_db: tuple[float, ...] = ()
    frequency_unit_convention: FrequencyUnit = FrequencyUnit.HZ


@dataclass(frozen=True)
class RssCurve:
    samples: tuple[tuple[float, float], ...]
    mode: CurveMode

    def __post_init__(self):
        for (f_prev, _), (f_next, _) in zip(self.samples, self.samples[1:]):
            if not f_next > f_prev:
                raise DomainError("curve frequencies must be strictly increasing")

    @property
    def frequencies_hz(self) -> np.ndarray:
        return np.array([f for f, _ in self.samples])

    @property
    def rss_dbm(self) -> np.ndarray:
        return np.array([rss for _, rss in self.samples])


def itu_indoor_path_loss(f: Frequency | float, p: PathLossParams) -> float:
    """Path loss in dB: ``20 log10(f_MHz) + N log10(d) + P_f(n) - 28``."""
    f = as_frequency(f)
    return 20.0 * math.log10(f.mhz) + p.n_coeff * math.log10(p.distance_m) + p.floor_penetration_db - 28.0


def received_power_model(p_t_dbm: float, f: Frequency | float, p: PathLossParams) -> float:
    """Received power in dBm with the floor term neglected: ``P_t - 20 log10(f_MHz) - N log10(d) + 28``."""
    f = as_frequency(f)
    return p_t_dbm - 20.0 * math.log10(f.mhz) - p.n_coeff * math.log10(p.distance_m) + 28.0


def rss_from_alpha(alpha: AlphaEstimate, f: Frequency | float) -> float:
    """``alpha - 20 log10 f`` with f in the estimate's unit convention."""
    f = as_frequency(f)
    return alpha.alpha_db - 20.0 * math.log10(f.in_unit(alpha.frequency_unit_convention))


def fit_alpha(measurements: MeasurementSet, unit: FrequencyUnit = FrequencyUnit.HZ) -> AlphaEstimate:
    """Average the per-point alpha implied by each measured RSS.

    For a unit-slope model in log f this mean is also the least-squares estimate, so the
    residuals always sum to zero.
    """
    if len(measurements.points) < 2:
        raise DomainError("fit_alpha needs at least 2 points")
    per_point = measurements.rss_dbm + 20.0 * np.log10(measurements.frequencies_hz / unit.scale)
    alpha_db = float(np.mean(per_point))
    residuals = tuple(float(r) for r in per_point - alpha_db)
    logger.debug(f"{measurements.label}: alpha={alpha_db:.4f} dB ({unit.value} convention)")
    return AlphaEstimate(alpha_db=alpha_db, residuals_db=residuals, frequency_unit_convention=unit)


def interpolate_rss(measurements: MeasurementSet, f: Frequency | float) -> float:
    """Piecewise-linear RSS in (log10 f, dB); exact at the measured points."""
    f = as_frequency(f)
    if not measurements.covers(f):
        raise OutOfRangeError(
            f"{f} is outside the measured band {measurements.f_min}..{measurements.f_max} of {measurements.label}"
        )
    xp = np.log10(measurements.frequencies_hz)
    x = min(max(math.log10(f.hertz), xp[0]), xp[-1])
    return float(np.interp(x, xp, measurements.rss_dbm))


def rss_curve(
    measurements: MeasurementSet,
    f_lo: Frequency | float,
    f_hi: Frequency | float,
    steps: int,
    mode: CurveMode = CurveMode.PIECEWISE_LOG_LINEAR,
    unit: FrequencyUnit = FrequencyUnit.HZ,
) -> RssCurve:
    """Sample ``steps`` log-spaced points between ``f_lo`` and ``f_hi``."""
    f_lo, f_hi = as_frequency(f_lo), as_frequency(f_hi)
    mode = CurveMode(mode)
    if steps < 2:
        raise DomainError(f"steps must be >= 2, got {steps}")
    if not f_lo.hertz < f_hi.hertz:
        raise DomainError(f"f_lo ({f_lo}) must be below f_hi ({f_hi})")

    freqs = np.geomspace(f_lo.hertz, f_hi.hertz, steps)
    if mode is CurveMode.ANALYTIC_ALPHA:
        alpha = fit_alpha(measurements, unit)
        values = [rss_from_alpha(alpha, hz) for hz in freqs]
    else:
        values = [interpolate_rss(measurements, hz) for hz in freqs]
    return RssCurve(samples=tuple(zip((float(hz) for hz in freqs), values)), mode=mode)


def read_measurement_csv(path: str | Path, label: str | None = None) -> MeasurementSet:
    """Read a ``freq_hz,rss_dbm`` CSV into a MeasurementSet."""
    label = label or Path(path).stem
    try:
        table = read_csv_file(path, MEASUREMENT_COLUMNS)
    except pa.ArrowInvalid as exc:
        message = str(exc)
        row = _ROW_NUMBER.search(message)
        line = int(row.group(1)) if row else 1
        raise MeasurementFormatError(message, line=line) from None
    except ValueError as exc:
        raise MeasurementFormatError(str(exc), line=1) from None

    freqs = table.column("freq_hz").to_pylist()
    rss = table.column("rss_dbm").to_pylist()
    if len(freqs) < 2:
        raise MeasurementFormatError(f"expected at least 2 measurement points, got {len(freqs)}", line=len(freqs) + 2)
    for index, (hz, value) in enumerate(zip(freqs, rss)):
        line = index + 2
        if hz is None or value is None or not (math.isfinite(hz) and math.isfinite(value)):
            raise MeasurementFormatError("missing or non-finite value", line=line)
        if hz <= 0:
            raise MeasurementFormatError(f"frequency must be positive, got {hz}", line=line)
        if index and hz <= freqs[index - 1]:
            raise MeasurementFormatError("frequencies must be strictly increasing", line=line)
    return MeasurementSet.from_arrays(label, freqs, rss)


def table1_set(label: str) -> MeasurementSet:
    """Load one of the four bundled measurement sessions (``"Set1"`` .. ``"Set4"``)."""
    match = _TABLE1_LABEL.match(label.strip())
    if not match:
        raise DomainError(f"No bundled measurement set named {label!r}")
    number = match.group(1)
    resource = resources.files("pathloss_dsa") / "data" / f"table1_set{number}.csv"
    with resources.as_file(resource) as path:
        return read_measurement_csv(path, label=f"Set{number}")


def load_measurement(reference: str, base_dir: str | Path | None = None) -> MeasurementSet:
    """Resolve ``table1/setN`` to a bundled set, anything else to a CSV path."""
    match = _TABLE1_REFERENCE.match(reference.strip())
    if match:
        return table1_set(f"Set{match.group(1)}")
    path = Path(reference)
    if base_dir is not None and not path.is_absolute():
        path = Path(base_dir) / path
    return read_measurement_csv(path)


def curve_to_table(curve: RssCurve) -> pa.Table:
    return create_pyarrow_table(
        [{"freq_hz": hz, "rss_dbm": rss, "mode": curve.mode.value} for hz, rss in curve.samples],
        CURVE_SCHEMA,
    )


def write_curve_csv(curve: RssCurve, path: str | Path) -> None:
    write_csv_file(curve_to_table(curve), path)


def read_curve_csv(path: str | Path) -> RssCurve:
    table = read_csv_file(path, {"freq_hz": pa.float64(), "rss_dbm": pa.float64(), "mode": pa.string()})
    modes = set(table.column("mode").to_pylist())
    if len(modes) != 1:
        raise MeasurementFormatError(f"curve file must hold a single mode, got {sorted(modes)}")
    samples = tuple(zip(table.column("freq_hz").to_pylist(), table.column("rss_dbm").to_pylist()))
    return RssCurve(samples=samples, mode=CurveMode(modes.pop()))


def fit_report_table(measurements: MeasurementSet, alpha: AlphaEstimate) -> pa.Table:
    rows = [
        {
            "freq_hz": f.hertz,
            "rss_dbm": rss,
            "model_rss_dbm": rss_from_alpha(alpha, f),
            "residual_db": residual,
        }
        for (f, rss), residual in zip(measurements.points, alpha.residuals_db)
    ]
    return create_pyarrow_table(rows, FIT_REPORT_SCHEMA)


def read_fit_report_csv(path: str | Path) -> pa.Table:
    return read_csv_file(path, {field.name: field.type for field in FIT_REPORT_SCHEMA})
