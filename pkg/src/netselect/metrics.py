"""Evaluation quantities: equilibria, distance to equilibrium, stability, fairness, waste."""
from __future__ import annotations

import itertools
import logging
import math
import warnings
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .core import InvalidInputError, MEGABIT_BYTES
from .policies import centralized_allocate

log = logging.getLogger(__name__)

# compositions of n into k parts: C(n + k - 1, k - 1); 40 devices over 5 networks is ~136k
ENUMERATION_LIMIT = 200_000
DISTANCE_CAP = 1e6


@dataclass(frozen=True)
class NashAllocation:
    counts: Tuple[int, ...]
    bandwidths: Tuple[float, ...]
    exhaustive: bool = True

    @property
    def per_device_gain(self) -> Tuple[float, ...]:
        """Gain B_i / n_i of one device on each network (0 for empty networks)."""
        return tuple(b / c if c else 0.0 for b, c in zip(self.bandwidths, self.counts))

    def device_gains(self) -> List[float]:
        """Sorted multiset of per-device gains."""
        return sorted(allocation_gains(self.counts, self.bandwidths))


def is_nash(counts: Sequence[int], bandwidths: Sequence[float]) -> bool:
    """B_i / n_i >= B_j / (n_j + 1) for every occupied i and every j != i."""
    for i, (bi, ni) in enumerate(zip(bandwidths, counts)):
        if ni == 0:
            continue
        for j, (bj, nj) in enumerate(zip(bandwidths, counts)):
            if j != i and bi * (nj + 1) < bj * ni:
                return False
    return True


def _compositions(n: int, k: int):
    for cuts in itertools.combinations(range(n + k - 1), k - 1):
        prev = -1
        parts = []
        for c in cuts:
            parts.append(c - prev - 1)
            prev = c
        parts.append(n + k - 1 - prev - 1)
        yield tuple(parts)


def enumerate_nash(bandwidths: Sequence[float], n_devices: int) -> List[NashAllocation]:
    """Every device-count vector that is a pure Nash equilibrium, by brute force.

    Above ENUMERATION_LIMIT compositions the water-filling equilibrium is
    returned alone, marked ``exhaustive=False``.
    """
    bw = tuple(float(b) for b in bandwidths)
    if not bw or any(not (b > 0 and math.isfinite(b)) for b in bw):
        raise InvalidInputError(f"bandwidths must be positive, got {list(bandwidths)}")
    if n_devices < 1:
        raise InvalidInputError("need at least one device")
    k = len(bw)
    if math.comb(n_devices + k - 1, k - 1) > ENUMERATION_LIMIT:
        warnings.warn(f"{n_devices} devices over {k} networks exceeds the enumeration bound; "
                      "returning the water-filling equilibrium only")
        return [NashAllocation(tuple(centralized_allocate(bw, n_devices)), bw, exhaustive=False)]
    return [NashAllocation(c, bw) for c in _compositions(n_devices, k) if is_nash(c, bw)]


def allocation_gains(counts: Sequence[int], bandwidths: Sequence[float]) -> List[float]:
    out = []
    for b, c in zip(bandwidths, counts):
        if c:
            out += [b / c] * int(c)
    return out


def distance_to_ne(current_gains: Sequence[float], ne) -> float:
    """Largest percentage by which a device's gain falls short of its rank-paired NE gain.

    ``ne`` is one NashAllocation or a list of them; with several, the minimum
    distance is returned.  A zero current gain facing a positive NE gain gives
    DISTANCE_CAP.
    """
    if isinstance(ne, NashAllocation):
        ne = [ne]
    if not ne:
        raise InvalidInputError("empty equilibrium set")
    cur = sorted(current_gains)
    best = math.inf
    for alloc in ne:
        target = alloc.device_gains()
        if len(target) != len(cur):
            raise InvalidInputError(f"{len(cur)} devices but the equilibrium places {len(target)}")
        worst = 0.0
        for g, g_ne in zip(cur, target):
            if g_ne > g:
                d = DISTANCE_CAP if g <= 0 else min((g_ne - g) / g * 100.0, DISTANCE_CAP)
                worst = max(worst, d)
        best = min(best, worst)
    return best


def detect_stable_state(prob_history, threshold: float = 0.75, devices=None) -> Optional[int]:
    """Earliest slot from which every device keeps p >= threshold on one fixed network.

    ``prob_history`` has shape [T, n_devices, K].  Devices whose last row is
    all-NaN (inactive at the end) are ignored unless listed in ``devices``.
    Returns None when some device does not end on such a network.
    """
    p = np.asarray(prob_history, dtype=float)
    if p.ndim == 2:
        p = p[:, None, :]
    T, n, _ = p.shape
    if devices is None:
        devices = [d for d in range(n) if not np.all(np.isnan(p[-1, d]))]
        if not devices:
            return None
    start = 0
    for d in devices:
        last = p[-1, d]
        if np.any(np.isnan(last)):
            return None
        j = int(np.argmax(last))
        if not last[j] >= threshold:
            return None
        ok = p[:, d, j] >= threshold
        bad = np.flatnonzero(~ok)
        s = int(bad[-1]) + 1 if bad.size else 0
        start = max(start, s)
    return start


def stable_networks(prob_history, threshold: float = 0.75) -> Optional[List[int]]:
    """Column index of the network each device ends on with p >= threshold (None if any fails)."""
    p = np.asarray(prob_history, dtype=float)
    out = []
    for d in range(p.shape[1]):
        last = p[-1, d]
        if np.all(np.isnan(last)):
            continue
        j = int(np.nanargmax(last))
        if not last[j] >= threshold:
            return None
        out.append(j)
    return out


def stable_at_ne(prob_history, ne_set: Sequence[NashAllocation], threshold: float = 0.75) -> bool:
    """Run ends in a stable state whose allocation is an equilibrium."""
    if detect_stable_state(prob_history, threshold) is None:
        return False
    nets = stable_networks(prob_history, threshold)
    k = np.asarray(prob_history).shape[2]
    counts = tuple(int(c) for c in np.bincount(nets, minlength=k))
    return any(counts == ne.counts for ne in ne_set)


def fairness_stddev(per_device_downloads: Sequence[float]) -> float:
    x = np.asarray(per_device_downloads, dtype=float)
    if x.size < 2:
        raise InvalidInputError("fairness needs at least two devices")
    return float(np.std(x))


def unutilized_resources(run, aggregate_mbps: Optional[float] = None, horizon: Optional[int] = None,
                         slot_seconds: Optional[float] = None) -> float:
    """Capacity in bytes left on the table because networks sat empty.

    Capacity is aggregate bandwidth times horizon; used volume is what the
    devices received ignoring switching delay (an occupied network is fully
    used).  Defaults are taken from the run.
    """
    td = run.slot_seconds if slot_seconds is None else slot_seconds
    T = run.horizon if horizon is None else horizon
    if aggregate_mbps is None:
        capacity = float(run.bandwidth[:T].sum()) * td * MEGABIT_BYTES
    else:
        capacity = aggregate_mbps * T * td * MEGABIT_BYTES
    used = float(run.bitrate[:T].sum()) * td * MEGABIT_BYTES
    return max(capacity - used, 0.0)


def time_at_ne(allocation_history, ne_set: Sequence[NashAllocation], epsilon: float = 7.5,
               bandwidths: Optional[Sequence[float]] = None) -> Dict[str, float]:
    """Fraction of slots at an equilibrium allocation and within epsilon percent of one."""
    if epsilon < 0:
        raise InvalidInputError("epsilon must be non-negative")
    alloc = np.asarray(allocation_history, dtype=int)
    if not len(ne_set):
        raise InvalidInputError("empty equilibrium set")
    bw = ne_set[0].bandwidths if bandwidths is None else tuple(bandwidths)
    targets = {ne.counts for ne in ne_set}
    at_ne = at_eps = 0
    cache: Dict[Tuple[int, ...], float] = {}
    for row in alloc:
        key = tuple(int(v) for v in row)
        if key in targets:
            at_ne += 1
            at_eps += 1
            continue
        if key not in cache:
            cache[key] = distance_to_ne(allocation_gains(key, bw), ne_set)
        if cache[key] <= epsilon:
            at_eps += 1
    T = max(len(alloc), 1)
    return {"fraction_at_ne": at_ne / T, "fraction_at_eps": at_eps / T}


def distance_from_avg_bitrate(per_device_gains_mbps: Sequence[float], estimated_aggregate_mbps: float,
                              n_devices: Optional[int] = None) -> float:
    n = len(per_device_gains_mbps) if n_devices is None else n_devices
    if n < 1:
        raise InvalidInputError("need at least one device")
    if not (estimated_aggregate_mbps > 0):
        raise InvalidInputError("aggregate bandwidth must be positive")
    g = estimated_aggregate_mbps / n
    return sum(max(g - x, 0.0) * 100.0 / g for x in per_device_gains_mbps) / n


def best_response_equilibrium(bandwidths: Sequence[float], availability: Sequence[Sequence[int]],
                              max_rounds: int = 10_000) -> List[int]:
    """One pure equilibrium when devices see different network subsets.

    Best-response dynamics from a water-filling start; congestion games with
    equal sharing are potential games, so this terminates.  ``availability``
    lists network column indices per device.  Returns a network column per device.
    """
    bw = list(bandwidths)
    counts = [0] * len(bw)
    choice = []
    for nets in availability:
        j = max(nets, key=lambda i: (bw[i] / (counts[i] + 1), -i))
        counts[j] += 1
        choice.append(j)
    for _ in range(max_rounds):
        moved = False
        for d, nets in enumerate(availability):
            cur = choice[d]
            best = max(nets, key=lambda i: (bw[i] / (counts[i] + (0 if i == cur else 1)), -i))
            if bw[best] / (counts[best] + 1) > bw[cur] / counts[cur] * (1 + 1e-12):
                counts[cur] -= 1
                counts[best] += 1
                choice[d] = best
                moved = True
        if not moved:
            return choice
    raise InvalidInputError("best-response dynamics did not settle")


def distance_series(run, scenario=None, availability=None) -> np.ndarray:
    """Per-slot distance to equilibrium over the devices active in each slot.

    Uses the exhaustive equilibrium set when every active device sees every
    network, and a best-response equilibrium otherwise (an approximation
    with heterogeneous coverage).
    """
    T, n = run.network.shape
    K = len(run.network_ids)
    col = {nid: j for j, nid in enumerate(run.network_ids)}
    out = np.zeros(T)
    cache: Dict[tuple, object] = {}
    for t in range(T):
        active = np.flatnonzero(run.network[t] >= 0)
        if active.size == 0:
            out[t] = 0.0
            continue
        bw = tuple(float(b) for b in run.bandwidth[t])
        if availability is None:
            key = (bw, int(active.size))
            if key not in cache:
                cache[key] = enumerate_nash(bw, int(active.size))
            out[t] = distance_to_ne(run.bitrate[t, active], cache[key])
        else:
            avail = tuple(tuple(col[x] for x in availability(t, int(d))) for d in active)
            key = (bw, avail)
            if key not in cache:
                choice = best_response_equilibrium(bw, avail)
                counts = tuple(int(c) for c in np.bincount(choice, minlength=K))
                cache[key] = [NashAllocation(counts, bw, exhaustive=False)]
            out[t] = distance_to_ne(run.bitrate[t, active], cache[key])
    return out
