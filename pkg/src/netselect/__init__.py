"""Wireless network selection with Smart EXP3, its baselines, and a slotted simulator."""
from .core import (
    ConfigurationError,
    Decision,
    DecisionKind,
    InvalidInputError,
    InvalidStateError,
    PolicyParameters,
    SimulationClock,
    scale_gain,
)
from .engine import RunResult, Scenario, run_batch, run_simulation
from .smart import SmartConfig, SmartExp3

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError", "Decision", "DecisionKind", "InvalidInputError", "InvalidStateError",
    "PolicyParameters", "SimulationClock", "scale_gain", "RunResult", "Scenario",
    "run_batch", "run_simulation", "SmartConfig", "SmartExp3",
]
