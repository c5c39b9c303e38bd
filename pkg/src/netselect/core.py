"""Shared vocabulary: gains, decisions, policy parameters, and error types."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Optional


class InvalidInputError(ValueError):
    """A numeric argument is non-finite or outside its domain."""


class InvalidStateError(RuntimeError):
    """A learner or allocator was asked to act on an impossible state."""


class ConfigurationError(ValueError):
    """A scenario, delay model or event is malformed.

    ``line`` is filled in when the error can be traced back to a line of a
    scenario file.
    """

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DecisionKind(enum.IntEnum):
    INITIAL_EXPLORATION = 0
    RANDOM = 1
    GREEDY = 2
    SWITCH_BACK = 3
    ASSIGNED = 4

    @property
    def label(self) -> str:
        return self.name.lower().replace("_", "-")


@dataclass(frozen=True)
class Decision:
    """Network chosen for a slot (or block) and the probability it was chosen with."""

    network: int
    selection_probability: float
    kind: DecisionKind = DecisionKind.RANDOM

    def __post_init__(self):
        if not (0.0 < self.selection_probability <= 1.0):
            raise InvalidStateError(
                f"selection probability {self.selection_probability!r} outside (0, 1]")


def gamma_power(index: int, exponent: float = -1.0 / 3.0) -> float:
    """Exploration rate ``index ** exponent`` for a one-based index."""
    if index < 1:
        raise InvalidInputError(f"gamma index must be >= 1, got {index}")
    return min(1.0, index ** exponent)


@dataclass
class PolicyParameters:
    """Knobs shared by the weight-based learners.

    ``gamma_index`` picks what the exploration schedule counts: ``"block"``
    (one-based block index, the default) or ``"slot"`` (one-based slot count).
    """

    beta: float = 0.1
    gamma_index: str = "block"
    gamma_exponent: float = -1.0 / 3.0
    slot_seconds: float = 15.0
    gain_scale_mbps: float = 22.0

    def __post_init__(self):
        if not (0.0 < self.beta <= 1.0):
            raise InvalidInputError(f"beta must be in (0, 1], got {self.beta}")
        if self.gamma_index not in ("block", "slot"):
            raise InvalidInputError(f"gamma_index must be 'block' or 'slot', got {self.gamma_index!r}")
        if not (self.gamma_exponent < 0.0):
            raise InvalidInputError("gamma_exponent must be negative so that gamma decays")
        if not (self.slot_seconds > 0.0) or not math.isfinite(self.slot_seconds):
            raise InvalidInputError(f"slot_seconds must be positive, got {self.slot_seconds}")
        if not (self.gain_scale_mbps > 0.0) or not math.isfinite(self.gain_scale_mbps):
            raise InvalidInputError(f"gain_scale_mbps must be positive, got {self.gain_scale_mbps}")

    @property
    def gamma_schedule(self) -> Callable[[int], float]:
        exponent = self.gamma_exponent
        return lambda index: gamma_power(index, exponent)


@dataclass(frozen=True)
class SimulationClock:
    slot: int
    horizon: int
    slot_seconds: float = 15.0

    def __post_init__(self):
        if self.horizon < 1:
            raise InvalidInputError("horizon must be at least one slot")
        if not (0 <= self.slot < self.horizon):
            raise InvalidInputError(f"slot {self.slot} outside [0, {self.horizon})")


def scale_gain(bit_rate_mbps: float, gain_scale_mbps: float) -> float:
    """Map a bit rate to [0, 1] by dividing by the scale and clamping at 1."""
    if not (math.isfinite(bit_rate_mbps) and math.isfinite(gain_scale_mbps)):
        raise InvalidInputError("bit rate and gain scale must be finite")
    if gain_scale_mbps <= 0.0:
        raise InvalidInputError(f"gain scale must be positive, got {gain_scale_mbps}")
    if bit_rate_mbps < 0.0:
        raise InvalidInputError(f"bit rate must be non-negative, got {bit_rate_mbps}")
    return min(bit_rate_mbps / gain_scale_mbps, 1.0)


MEGABIT_BYTES = 1e6 / 8.0
GB = 1e9
MB = 1e6


def mbps_to_bytes(mbps: float, seconds: float) -> float:
    return mbps * seconds * MEGABIT_BYTES
