import numpy as np
import pytest

from netselect.core import SimulationClock
from netselect.rng import UniformStream


@pytest.fixture
def stream():
    return UniformStream.for_device(1234, 0)


def clock(t=0, horizon=10_000):
    return SimulationClock(t, horizon)


def drive(policy, gains, rng, slots):
    """Run a policy for ``slots`` slots; ``gains`` maps network id -> scaled gain."""
    out = []
    for t in range(slots):
        d = policy.decide(clock(t), rng)
        out.append(d)
        full = dict(gains) if policy.needs_full_information else None
        policy.observe(gains[d.network], full)
    return out


# filled by test_acceptance, echoed once at the end of the session
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: float(s.split()[2].rstrip(":").rstrip("ab") or 0)):
            terminalreporter.write_line(line)
