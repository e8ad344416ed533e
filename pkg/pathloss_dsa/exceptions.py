"""Exceptions raised by pathloss-dsa."""

from __future__ import annotations


class PathlossDsaError(Exception):
    """Base class for all pathloss-dsa errors."""


class DomainError(PathlossDsaError, ValueError):
    """Invalid physical input or violated value invariant."""


class OutOfRangeError(DomainError):
    """Frequency outside the measured band of a measurement set."""


class MeasurementFormatError(PathlossDsaError, ValueError):
    """Malformed measurement CSV."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class ScenarioError(PathlossDsaError, ValueError):
    """Scenario file could not be parsed or failed validation."""

    def __init__(self, message: str, line: int | None = None, key: str | None = None):
        self.line = line
        self.key = key
        prefix = ""
        if line is not None:
            prefix += f"line {line}: "
        if key is not None:
            prefix += f"{key}: "
        super().__init__(prefix + message)


class CapacityError(PathlossDsaError):
    """Spectrum pool reserve/release precondition violated."""


class ActionRejectedError(PathlossDsaError):
    """Controller action is infeasible against the current state."""


class SimulationError(PathlossDsaError):
    """A scenario run aborted."""
