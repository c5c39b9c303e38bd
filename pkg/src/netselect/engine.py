"""Slotted simulation loop and batch runner."""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Sequence

import numpy as np

from .core import (
    ConfigurationError,
    DecisionKind,
    InvalidStateError,
    MEGABIT_BYTES,
    PolicyParameters,
    SimulationClock,
)
from .environment import (
    DelaySampler,
    NetworkModel,
    Population,
    ScenarioEvent,
    apply_scenario_events,
)
from .policies import (
    BlockExp3,
    Centralized,
    Coordinator,
    Exp3,
    FixedRandom,
    FullInformation,
    Greedy,
    Policy,
)
from .rng import DECISION, DELAY, UniformStream, make_generator
from .smart import VARIANTS, SmartConfig, SmartExp3

POLICY_NAMES = (
    "exp3", "block_exp3", "hybrid_block_exp3", "smart_exp3_no_reset", "smart_exp3",
    "greedy", "full_information", "fixed_random", "centralized",
)

_SMART_KEYS = set(SmartConfig.__dataclass_fields__)
_PARAM_KEYS = {"beta", "gamma_index", "gamma_exponent"}


@dataclass
class DeviceGroup:
    name: str
    count: int
    policy: str = "smart_exp3"
    params: Dict[str, object] = field(default_factory=dict)
    networks: Optional[List[int]] = None
    active: bool = True


@dataclass
class Scenario:
    name: str
    networks: List[NetworkModel]
    device_groups: List[DeviceGroup]
    horizon_slots: int = 1200
    slot_seconds: float = 15.0
    events: List[ScenarioEvent] = field(default_factory=list)
    gain_scale_mbps: Optional[float] = None
    epsilon: float = 7.5
    seeds: Optional[List[int]] = None

    def validate(self) -> None:
        if self.horizon_slots < 1:
            raise ConfigurationError("horizon_slots must be at least 1")
        if not (self.slot_seconds > 0 and math.isfinite(self.slot_seconds)):
            raise ConfigurationError("slot_seconds must be positive")
        if not self.networks:
            raise ConfigurationError("scenario needs at least one network")
        ids = [n.id for n in self.networks]
        if len(set(ids)) != len(ids):
            raise ConfigurationError(f"duplicate network ids {ids}")
        if not self.device_groups or sum(g.count for g in self.device_groups) < 1:
            raise ConfigurationError("scenario needs at least one device")
        names = [g.name for g in self.device_groups]
        if len(set(names)) != len(names):
            raise ConfigurationError(f"duplicate group names {names}")
        for g in self.device_groups:
            if g.count < 0:
                raise ConfigurationError(f"group {g.name}: negative count")
            if g.policy not in POLICY_NAMES:
                raise ConfigurationError(f"group {g.name}: unknown policy {g.policy!r}; known: {', '.join(POLICY_NAMES)}")
            if g.networks is not None:
                if not g.networks:
                    raise ConfigurationError(f"group {g.name}: empty network list")
                bad = set(g.networks) - set(ids)
                if bad:
                    raise ConfigurationError(f"group {g.name}: unknown networks {sorted(bad)}")
            unknown = set(g.params) - _SMART_KEYS - _PARAM_KEYS - {"eta"}
            if unknown:
                raise ConfigurationError(f"group {g.name}: unknown policy parameters {sorted(unknown)}")
        for ev in self.events:
            if ev.group not in names:
                raise ConfigurationError(f"event at slot {ev.at_slot} references unknown group {ev.group!r}")
            if ev.at_slot >= self.horizon_slots:
                raise ConfigurationError(f"event at slot {ev.at_slot} is beyond the horizon {self.horizon_slots}")
            if ev.networks and set(ev.networks) - set(ids):
                raise ConfigurationError(f"event at slot {ev.at_slot} uses unknown networks")
        if self.gain_scale_mbps is not None and not (self.gain_scale_mbps > 0):
            raise ConfigurationError("gain_scale_mbps must be positive")
        for n in self.networks:
            n.delay.validate()
            if n.delay.high != self.slot_seconds:
                raise ConfigurationError(f"network {n.id}: delay truncation must equal slot_seconds")

    @property
    def gain_scale(self) -> float:
        if self.gain_scale_mbps is not None:
            return self.gain_scale_mbps
        return max(n.peak_mbps for n in self.networks)

    @property
    def n_devices(self) -> int:
        return sum(g.count for g in self.device_groups)

    @property
    def effective_horizon(self) -> int:
        lengths = [len(n.trace) for n in self.networks if n.trace is not None]
        return min([self.horizon_slots] + lengths)

    def bandwidths(self) -> List[float]:
        return [n.bandwidth_mbps for n in self.networks]

    def with_policy(self, policy: str, params: Optional[dict] = None) -> "Scenario":
        """Copy of the scenario with every group running ``policy``."""
        groups = [DeviceGroup(g.name, g.count, policy, dict(params or {}), g.networks, g.active)
                  for g in self.device_groups]
        return Scenario(self.name, self.networks, groups, self.horizon_slots, self.slot_seconds,
                        list(self.events), self.gain_scale_mbps, self.epsilon, self.seeds)


def make_policy(name: str, networks, scenario: Scenario, params: Optional[dict] = None,
                coordinator: Optional[Coordinator] = None, device: int = 0) -> Policy:
    params = dict(params or {})
    base = {k: params[k] for k in _PARAM_KEYS if k in params}
    common = dict(slot_seconds=scenario.slot_seconds, gain_scale_mbps=scenario.gain_scale)
    if name == "exp3":
        base.setdefault("gamma_index", "slot")
    pp = PolicyParameters(**common, **base)
    if name == "exp3":
        return Exp3(networks, pp)
    if name == "block_exp3":
        return BlockExp3(networks, pp)
    if name in VARIANTS:
        cfg = SmartConfig(**{**VARIANTS[name].__dict__, **{k: params[k] for k in _SMART_KEYS if k in params}})
        return SmartExp3(networks, pp, cfg, name=name)
    if name == "greedy":
        return Greedy(networks, pp)
    if name == "full_information":
        return FullInformation(networks, pp, eta=float(params.get("eta", 0.3)))
    if name == "fixed_random":
        return FixedRandom(networks, pp)
    if name == "centralized":
        return Centralized(networks, pp, coordinator=coordinator, device=device)
    raise ConfigurationError(f"unknown policy {name!r}; known: {', '.join(POLICY_NAMES)}")


@dataclass(frozen=True)
class SlotRecord:
    slot: int
    device: int
    network: int
    bit_rate_mbps: float
    gain: float
    delay_seconds: float
    kind: str
    block: int


CSV_HEADER = ["slot", "device", "network", "bitrate_mbps", "gain", "delay_s", "kind", "block"]
_KIND_LABELS = [k.label for k in DecisionKind]


@dataclass
class RunResult:
    """Everything one run produced.

    Per-slot arrays have shape ``[T, n_devices]``; inactive device-slots hold
    network -1 and zeros.  ``probs`` is ``[T, n_devices, K]`` with NaN where
    the policy keeps no distribution or the device is inactive.
    """

    seed: int
    scenario_name: str
    network_ids: List[int]
    slot_seconds: float
    gain_scale_mbps: float
    network: np.ndarray
    bitrate: np.ndarray
    gain: np.ndarray
    delay: np.ndarray
    kind: np.ndarray
    block: np.ndarray
    probs: np.ndarray
    allocation: np.ndarray
    bandwidth: np.ndarray
    switches: np.ndarray
    resets: np.ndarray
    download_bytes: np.ndarray
    policies: List[str]
    final_gamma: np.ndarray
    max_block_length: np.ndarray

    @property
    def horizon(self) -> int:
        return self.network.shape[0]

    @property
    def n_devices(self) -> int:
        return self.network.shape[1]

    @property
    def active(self) -> np.ndarray:
        return self.network >= 0

    def records(self) -> Iterator[SlotRecord]:
        T, n = self.network.shape
        ids = self.network_ids
        for t in range(T):
            for d in range(n):
                j = self.network[t, d]
                if j < 0:
                    continue
                yield SlotRecord(t, d, ids[j], float(self.bitrate[t, d]), float(self.gain[t, d]),
                                 float(self.delay[t, d]), _KIND_LABELS[self.kind[t, d]], int(self.block[t, d]))

    def write_csv(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.records():
            w.writerow([r.slot, r.device, r.network, f"{r.bit_rate_mbps:.6f}", f"{r.gain:.9f}",
                        f"{r.delay_seconds:.6f}", r.kind, r.block])

    def to_csv(self) -> str:
        buf = io.StringIO()
        self.write_csv(buf)
        return buf.getvalue()

    def median_download(self) -> float:
        return float(np.median(self.download_bytes))

    def summary(self) -> Dict[str, object]:
        return {
            "seed": self.seed,
            "scenario": self.scenario_name,
            "policy": "+".join(sorted(set(self.policies))),
            "median_download_bytes": self.median_download(),
            "mean_download_bytes": float(np.mean(self.download_bytes)),
            "median_switches": float(np.median(self.switches)),
            "total_resets": int(self.resets.sum()),
        }


def _index_events(events: Sequence[ScenarioEvent]) -> Dict[int, List[ScenarioEvent]]:
    by_slot: Dict[int, List[ScenarioEvent]] = {}
    for ev in sorted(events, key=lambda e: e.at_slot):
        by_slot.setdefault(ev.at_slot, []).append(ev)
    return by_slot


def run_simulation(scenario: Scenario, seed: int) -> RunResult:
    """Run one seeded simulation of ``scenario``."""
    scenario.validate()
    T = scenario.effective_horizon
    td = scenario.slot_seconds
    scale = scenario.gain_scale
    nets = scenario.networks
    ids = [n.id for n in nets]
    K = len(nets)
    col = {nid: j for j, nid in enumerate(ids)}
    bw = np.array([[n.bandwidth_at(t) for n in nets] for t in range(T)], dtype=float)
    bw_rows = bw.tolist()

    groups: Dict[str, List[int]] = {}
    group_of: List[DeviceGroup] = []
    for g in scenario.device_groups:
        start = len(group_of)
        groups[g.name] = list(range(start, start + g.count))
        group_of += [g] * g.count
    n = len(group_of)
    pop = Population(
        groups=groups,
        active=[g.active for g in group_of],
        available=[tuple(sorted(g.networks if g.networks is not None else ids)) for g in group_of],
    )
    events = _index_events(scenario.events)

    coordinator = Coordinator(lambda nid, t: bw_rows[t][col[nid]])
    streams = [UniformStream.for_device(seed, d, DECISION) for d in range(n)]
    delays = [DelaySampler(make_generator(seed, d, DELAY)) for d in range(n)]

    def fresh(d: int) -> Policy:
        g = group_of[d]
        return make_policy(g.policy, pop.available[d], scenario, g.params, coordinator, d)

    policies: List[Optional[Policy]] = [fresh(d) if pop.active[d] else None for d in range(n)]
    prev = [-1] * n

    net_a = np.full((T, n), -1, dtype=np.int16)
    rate_a = np.zeros((T, n))
    gain_a = np.zeros((T, n))
    delay_a = np.zeros((T, n))
    kind_a = np.zeros((T, n), dtype=np.int8)
    block_a = np.zeros((T, n), dtype=np.int32)
    probs_a = np.full((T, n, K), np.nan)
    alloc_a = np.zeros((T, K), dtype=np.int16)
    switches = np.zeros(n, dtype=np.int64)
    download = np.zeros(n)

    for t in range(T):
        for eff in apply_scenario_events(t, pop, events.get(t, ())):
            d = eff[1]
            if eff[0] == "join":
                policies[d] = fresh(d)
                prev[d] = -1
            elif eff[0] == "leave":
                prev[d] = -1
                if isinstance(policies[d], Centralized):
                    policies[d].active = False
            elif policies[d] is not None:
                policies[d].on_network_set_change(eff[2], eff[3])

        clock = SimulationClock(t, T, td)
        active = [d for d in range(n) if pop.active[d]]
        chosen = {}
        counts = [0] * K
        for d in active:
            dec = policies[d].decide(clock, streams[d])
            if dec.network not in pop.available[d]:
                raise InvalidStateError(f"device {d} chose unavailable network {dec.network} at slot {t}")
            j = col[dec.network]
            chosen[d] = (j, dec)
            counts[j] += 1
        row = bw_rows[t]
        for d in active:
            j, dec = chosen[d]
            pol = policies[d]
            rate = row[j] / counts[j]
            g = rate / scale
            if g > 1.0:
                g = 1.0
            p = prev[d]
            if p != -1 and p != j:
                delay = delays[d](nets[j].delay)
                switches[d] += 1
            else:
                delay = 0.0
            prev[d] = j
            download[d] += rate * (td - delay) * MEGABIT_BYTES
            full = None
            if pol.needs_full_information:
                full = {}
                for nid in pol.networks:
                    i = col[nid]
                    share = row[i] / (counts[i] if i == j else counts[i] + 1)
                    full[nid] = min(share / scale, 1.0)
            block_a[t, d] = pol.block_index
            pol.observe(g, full)
            net_a[t, d] = j
            rate_a[t, d] = rate
            gain_a[t, d] = g
            delay_a[t, d] = delay
            kind_a[t, d] = dec.kind
            pr = pol.probabilities()
            if pr is not None:
                for nid, v in zip(pol.networks, pr):
                    probs_a[t, d, col[nid]] = v
        alloc_a[t] = counts

    final = [p for p in policies]
    return RunResult(
        seed=seed,
        scenario_name=scenario.name,
        network_ids=ids,
        slot_seconds=td,
        gain_scale_mbps=scale,
        network=net_a,
        bitrate=rate_a,
        gain=gain_a,
        delay=delay_a,
        kind=kind_a,
        block=block_a,
        probs=probs_a,
        allocation=alloc_a,
        bandwidth=bw,
        switches=switches,
        resets=np.array([p.resets if p is not None else 0 for p in final], dtype=np.int64),
        download_bytes=download,
        policies=[g.policy for g in group_of],
        final_gamma=np.array([p.gamma if p is not None else np.nan for p in final]),
        max_block_length=np.array([p.max_block_length if p is not None else 0 for p in final]),
    )


def _run_one(args):
    scenario, seed = args
    return run_simulation(scenario, seed)


def run_batch(scenario: Scenario, seeds: Sequence[int], parallelism: int = 1) -> List[RunResult]:
    """Run every seed; results come back ordered by seed whatever the parallelism."""
    seeds = sorted(int(s) for s in seeds)
    if len(set(seeds)) != len(seeds):
        raise ConfigurationError("seeds must be distinct")
    scenario.validate()
    if parallelism <= 1 or len(seeds) <= 1:
        return [run_simulation(scenario, s) for s in seeds]
    with ProcessPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(_run_one, [(scenario, s) for s in seeds]))


def trace_scenario(trace, policy: str = "smart_exp3", params: Optional[dict] = None,
                   slot_seconds: float = 15.0, delay=None, name: str = "trace") -> Scenario:
    """Single-device scenario replaying a wifi/cellular trace pair (networks 0 and 1)."""
    from .environment import DelayModel

    delay = delay or DelayModel.constant(2.0, slot_seconds)
    nets = [
        NetworkModel(0, 0.0, "wifi", delay, trace=list(trace.wifi)),
        NetworkModel(1, 0.0, "cellular", delay, trace=list(trace.cellular)),
    ]
    peak = max(max(trace.wifi), max(trace.cellular))
    return Scenario(name, nets, [DeviceGroup("device", 1, policy, dict(params or {}))],
                    horizon_slots=len(trace), slot_seconds=slot_seconds,
                    gain_scale_mbps=peak if peak > 0 else 1.0)
