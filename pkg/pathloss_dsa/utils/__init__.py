from __future__ import annotations

import math
import re

import numpy as np

FREQUENCY_UNITS = {
    "": 1.0,
    "hz": 1.0,
    "khz": 1e3,
    "mhz": 1e6,
    "ghz": 1e9,
}

_FREQUENCY_PATTERN = re.compile(r"^\s*([0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)\s*([A-Za-z]*)\s*$")


def db_to_linear(value_db: float | np.ndarray) -> float | np.ndarray:
    """Convert a power ratio in dB to linear scale."""
    return 10.0 ** (value_db / 10.0)


def linear_to_db(value: float | np.ndarray) -> float | np.ndarray:
    """Convert a linear power ratio to dB."""
    if isinstance(value, np.ndarray):
        return 10.0 * np.log10(value)
    return 10.0 * math.log10(value)


def parse_frequency(text: str) -> float:
    """Convert a frequency string to Hz.

    Accepts plain numbers (Hz) or a `Hz`/`kHz`/`MHz`/`GHz` suffix, case-insensitive,
    e.g. ``"830MHz"``, ``"1.9 GHz"`` or ``"1.2e9"``.
    """
    match = _FREQUENCY_PATTERN.match(text)
    if not match:
        raise ValueError(f"Invalid frequency: {text!r}")

    value, unit = match.groups()
    try:
        scale = FREQUENCY_UNITS[unit.lower()]
    except KeyError:
        raise ValueError(f"Invalid frequency unit: {unit!r}") from None

    hertz = float(value) * scale
    if hertz <= 0:
        raise ValueError(f"Frequency must be positive: {text!r}")
    return hertz


def format_frequency(hertz: float) -> str:
    """Render Hz with the largest unit that keeps the value >= 1, e.g. ``1.9GHz``."""
    for unit, scale in (("GHz", 1e9), ("MHz", 1e6), ("kHz", 1e3)):
        if hertz >= scale:
            return f"{hertz / scale:g}{unit}"
    return f"{hertz:g}Hz"
