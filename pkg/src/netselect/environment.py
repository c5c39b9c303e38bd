"""World model: shared bandwidth, switching delays, population events, traces."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .core import ConfigurationError, InvalidInputError

DELAY_FAMILIES = ("constant", "johnson-su", "student-t")

_FAMILY_PARAMS = {
    "constant": ("value",),
    "johnson-su": ("gamma", "delta", "xi", "lambda"),
    "student-t": ("df", "loc", "scale"),
}

_REJECTION_BATCH = 64
_REJECTION_ROUNDS = 1000


class EndOfTrace(Exception):
    """Raised when a trace is read past its last slot."""


@dataclass(frozen=True)
class DelayModel:
    """Switching-delay distribution in seconds, truncated to [0, ``high``]."""

    family: str = "constant"
    params: Tuple[Tuple[str, float], ...] = (("value", 2.0),)
    high: float = 15.0

    @classmethod
    def make(cls, family: str, high: float = 15.0, **params) -> "DelayModel":
        model = cls(family, tuple(sorted((k, float(v)) for k, v in params.items())), float(high))
        model.validate()
        return model

    @classmethod
    def constant(cls, value: float = 2.0, high: float = 15.0) -> "DelayModel":
        return cls.make("constant", high, value=value)

    @classmethod
    def wifi_default(cls, high: float = 15.0) -> "DelayModel":
        return cls.make("johnson-su", high, gamma=0.3, delta=1.0, xi=0.5, **{"lambda": 1.0})

    @classmethod
    def cellular_default(cls, high: float = 15.0) -> "DelayModel":
        return cls.make("student-t", high, df=5.0, loc=2.0, scale=0.5)

    @property
    def p(self) -> Dict[str, float]:
        return dict(self.params)

    def validate(self) -> None:
        if self.family not in DELAY_FAMILIES:
            raise ConfigurationError(f"unknown delay family {self.family!r}; expected one of {DELAY_FAMILIES}")
        p = self.p
        expected = set(_FAMILY_PARAMS[self.family])
        if set(p) != expected:
            raise ConfigurationError(
                f"{self.family} delay needs parameters {sorted(expected)}, got {sorted(p)}")
        if not all(math.isfinite(v) for v in p.values()):
            raise ConfigurationError("delay parameters must be finite")
        if not (self.high > 0.0 and math.isfinite(self.high)):
            raise ConfigurationError("delay truncation bound must be positive")
        if self.family == "constant" and not (0.0 <= p["value"] <= self.high):
            raise ConfigurationError(f"constant delay {p['value']} outside [0, {self.high}]")
        if self.family == "johnson-su" and (p["delta"] <= 0 or p["lambda"] <= 0):
            raise ConfigurationError("johnson-su needs delta > 0 and lambda > 0")
        if self.family == "student-t" and (p["df"] <= 0 or p["scale"] <= 0):
            raise ConfigurationError("student-t needs df > 0 and scale > 0")

    def mean(self) -> float:
        """Mean of the untruncated family."""
        p = self.p
        if self.family == "constant":
            return p["value"]
        if self.family == "johnson-su":
            return p["xi"] - p["lambda"] * math.exp(0.5 / p["delta"] ** 2) * math.sinh(p["gamma"] / p["delta"])
        return p["loc"] if p["df"] > 1 else math.nan

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Untruncated draws."""
        p = self.p
        if self.family == "constant":
            return np.full(size, p["value"])
        if self.family == "johnson-su":
            z = rng.standard_normal(size)
            return p["xi"] + p["lambda"] * np.sinh((z - p["gamma"]) / p["delta"])
        return p["loc"] + p["scale"] * rng.standard_t(p["df"], size)

    def to_dict(self) -> dict:
        return {"family": self.family, **self.p}


def sample_delay(model: DelayModel, rng: np.random.Generator) -> float:
    """One delay sample in [0, model.high], by rejection from the untruncated family."""
    if model.family == "constant":
        return model.p["value"]
    for _ in range(_REJECTION_ROUNDS):
        xs = model.draw(rng, _REJECTION_BATCH)
        ok = xs[(xs >= 0.0) & (xs <= model.high)]
        if ok.size:
            return float(ok[0])
    raise ConfigurationError(f"delay model {model.to_dict()} puts almost no mass on [0, {model.high}]")


class DelaySampler:
    """Buffered rejection sampler; consumes one generator per device."""

    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self._buf: Dict[DelayModel, list] = {}

    def __call__(self, model: DelayModel) -> float:
        if model.family == "constant":
            return model.p["value"]
        buf = self._buf.get(model)
        rounds = 0
        while not buf:
            xs = model.draw(self.rng, _REJECTION_BATCH)
            buf = xs[(xs >= 0.0) & (xs <= model.high)].tolist()[::-1]
            rounds += 1
            if rounds > _REJECTION_ROUNDS:
                raise ConfigurationError(f"delay model {model.to_dict()} puts almost no mass on [0, {model.high}]")
        self._buf[model] = buf
        return buf.pop()


@dataclass
class NetworkModel:
    id: int
    bandwidth_mbps: float = 0.0
    kind: str = "wifi"
    delay: DelayModel = field(default_factory=DelayModel.constant)
    trace: Optional[Sequence[float]] = None

    def __post_init__(self):
        if self.kind not in ("wifi", "cellular"):
            raise ConfigurationError(f"network {self.id}: kind must be wifi or cellular, got {self.kind!r}")
        if self.trace is None and not (self.bandwidth_mbps > 0 and math.isfinite(self.bandwidth_mbps)):
            raise ConfigurationError(f"network {self.id}: bandwidth must be positive, got {self.bandwidth_mbps}")
        if self.trace is not None and any(not (v >= 0 and math.isfinite(v)) for v in self.trace):
            raise ConfigurationError(f"network {self.id}: trace values must be non-negative")

    def bandwidth_at(self, t: int) -> float:
        if self.trace is None:
            return self.bandwidth_mbps
        if t >= len(self.trace):
            raise EndOfTrace(f"network {self.id} trace ends at slot {len(self.trace)}")
        return self.trace[t]

    @property
    def peak_mbps(self) -> float:
        return max(self.trace) if self.trace is not None else self.bandwidth_mbps


def per_slot_gains(allocation: Mapping[int, int], networks, rng=None, t: int = 0) -> Dict[int, float]:
    """Equal share: every device on network i gets bandwidth_i / n_i Mbps.

    ``networks`` is either a mapping id -> bandwidth (Mbps) or id -> NetworkModel.
    ``rng`` is accepted for interface symmetry; sharing is deterministic.
    """
    occupancy: Dict[int, int] = {}
    for net in allocation.values():
        if net not in networks:
            raise InvalidInputError(f"device mapped to unknown network {net}")
        occupancy[net] = occupancy.get(net, 0) + 1
    out = {}
    for dev, net in allocation.items():
        bw = networks[net]
        if isinstance(bw, NetworkModel):
            bw = bw.bandwidth_at(t)
        out[dev] = bw / occupancy[net]
    return out


@dataclass(frozen=True)
class ScenarioEvent:
    at_slot: int
    action: str
    group: str
    networks: Optional[Tuple[int, ...]] = None

    def __post_init__(self):
        if self.action not in ("join", "leave", "set_networks"):
            raise ConfigurationError(f"unknown event action {self.action!r}")
        if self.at_slot < 0:
            raise ConfigurationError(f"event slot must be non-negative, got {self.at_slot}")
        if self.action == "set_networks" and not self.networks:
            raise ConfigurationError("set_networks needs a non-empty network list")


@dataclass
class Population:
    """Which devices are active and which networks each one can see."""

    groups: Dict[str, List[int]]
    active: List[bool]
    available: List[Tuple[int, ...]]

    @property
    def n_devices(self) -> int:
        return len(self.active)

    def active_devices(self) -> List[int]:
        return [d for d, a in enumerate(self.active) if a]


def apply_scenario_events(t: int, population: Population, events: Iterable[ScenarioEvent]):
    """Apply the events due at slot ``t``.

    Returns the effects the engine has to act on, as tuples
    ``("join", device)``, ``("leave", device)`` or
    ``("networks", device, added, removed)``.  Applying the same events twice
    yields no further effects.
    """
    effects = []
    for ev in events:
        if ev.at_slot != t:
            continue
        if ev.group not in population.groups:
            raise ConfigurationError(f"event at slot {t} references unknown group {ev.group!r}")
        for d in population.groups[ev.group]:
            if ev.action == "join":
                if not population.active[d]:
                    population.active[d] = True
                    effects.append(("join", d))
            elif ev.action == "leave":
                if population.active[d]:
                    population.active[d] = False
                    effects.append(("leave", d))
            else:
                old = set(population.available[d])
                new = set(ev.networks)
                if old != new:
                    population.available[d] = tuple(sorted(new))
                    effects.append(("networks", d, tuple(sorted(new - old)), tuple(sorted(old - new))))
    return effects


@dataclass
class TracePair:
    wifi: List[float]
    cellular: List[float]

    def __post_init__(self):
        if len(self.wifi) != len(self.cellular):
            raise ConfigurationError("trace series must have equal lengths")
        if not self.wifi:
            raise ConfigurationError("trace is empty")
        for v in self.wifi + self.cellular:
            if not (v >= 0 and math.isfinite(v)):
                raise ConfigurationError(f"trace values must be non-negative and finite, got {v}")

    def __len__(self):
        return len(self.wifi)

    def series(self, network: int) -> List[float]:
        if network == 0:
            return self.wifi
        if network == 1:
            return self.cellular
        raise InvalidInputError(f"trace pairs have networks 0 (wifi) and 1 (cellular), got {network}")


TRACE_HEADER = ["slot", "wifi_mbps", "cellular_mbps"]


def load_trace_csv(path) -> TracePair:
    path = Path(path)
    wifi: List[float] = []
    cell: List[float] = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != TRACE_HEADER:
            raise ConfigurationError(f"{path}: header must be {','.join(TRACE_HEADER)}", line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise ConfigurationError(f"{path}: expected 3 columns, got {len(row)}", line=lineno)
            try:
                slot, w, c = int(row[0]), float(row[1]), float(row[2])
            except ValueError as exc:
                raise ConfigurationError(f"{path}: {exc}", line=lineno) from None
            if slot != len(wifi):
                raise ConfigurationError(f"{path}: slots must run 0,1,2,...; got {slot}", line=lineno)
            if not (w >= 0 and c >= 0 and math.isfinite(w) and math.isfinite(c)):
                raise ConfigurationError(f"{path}: bit rates must be non-negative", line=lineno)
            wifi.append(w)
            cell.append(c)
    return TracePair(wifi, cell)


def write_trace_csv(trace: TracePair, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for t, (a, b) in enumerate(zip(trace.wifi, trace.cellular)):
            w.writerow([t, repr(a), repr(b)])


def trace_gain(trace: TracePair, t: int, network: int) -> float:
    """Recorded bit rate of ``network`` at slot ``t`` (single-device playback)."""
    if t < 0:
        raise InvalidInputError(f"slot must be non-negative, got {t}")
    series = trace.series(network)
    if t >= len(series):
        raise EndOfTrace(f"trace has {len(series)} slots, asked for slot {t}")
    return series[t]
