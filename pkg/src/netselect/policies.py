"""Baseline selection policies and the exponential-weight primitives they share.

Every policy follows the same per-slot protocol driven by the engine::

    decision = policy.decide(clock, rng)   # once per slot
    policy.observe(scaled_gain, full_gains)  # once, after the slot

Block-based policies return the same :class:`Decision` for every slot of a
block and only touch their weights when the block ends.
"""
from __future__ import annotations

import logging
import math
import sys
from typing import Dict, Iterable, List, Optional, Sequence

from .core import (
    Decision,
    DecisionKind,
    InvalidInputError,
    InvalidStateError,
    PolicyParameters,
    SimulationClock,
)
from .rng import UniformStream

log = logging.getLogger(__name__)

MAX_BLOCK_LENGTH = 2**31 - 1
_TINY = sys.float_info.min
_EXP_LIMIT = 700.0


def _check_weights(weights: Sequence[float]) -> None:
    if not weights:
        raise InvalidStateError("empty weight vector")
    for w in weights:
        if not (w > 0.0 and math.isfinite(w)):
            raise InvalidStateError(f"weights must be positive and finite, got {list(weights)}")


def probability_update(weights: Sequence[float], gamma: float) -> List[float]:
    """Mix the normalised weights with the uniform distribution.

    p_i = (1 - gamma) * w_i / sum(w) + gamma / k
    """
    _check_weights(weights)
    if not (0.0 <= gamma <= 1.0):
        raise InvalidInputError(f"gamma must be in [0, 1], got {gamma}")
    k = len(weights)
    total = math.fsum(weights)
    mix = 1.0 - gamma
    floor = gamma / k
    return [mix * (w / total) + floor for w in weights]


def weight_update(weights: Sequence[float], chosen: int, gain: float, p_bar: float,
                  gamma: float, k: Optional[int] = None) -> List[float]:
    """Multiply the chosen weight by exp(gamma * (gain / p_bar) / k).

    If the product would overflow, every weight is divided by the largest one
    first; the probability rule is scale-invariant so nothing observable
    changes.
    """
    if not (0.0 < p_bar <= 1.0):
        raise InvalidInputError(f"p_bar must be in (0, 1], got {p_bar}")
    if not (gain >= 0.0 and math.isfinite(gain)):
        raise InvalidInputError(f"gain must be finite and non-negative, got {gain}")
    k = len(weights) if k is None else k
    out = list(weights)
    if gain == 0.0:
        return out
    exponent = gamma * (gain / p_bar) / k
    log_new = math.log(out[chosen]) + exponent
    if log_new < _EXP_LIMIT:
        out[chosen] = math.exp(log_new)
        return out
    logs = [math.log(w) for w in out]
    logs[chosen] = log_new
    top = max(logs)
    return [max(math.exp(v - top), _TINY) for v in logs]


def block_length(x: int, beta: float) -> int:
    """Block length ceil((1 + beta) ** x), saturating at MAX_BLOCK_LENGTH."""
    if x < 0:
        raise InvalidInputError(f"selection count must be non-negative, got {x}")
    if not (0.0 < beta <= 1.0):
        raise InvalidInputError(f"beta must be in (0, 1], got {beta}")
    try:
        value = (1.0 + beta) ** x
    except OverflowError:
        value = math.inf
    if value >= MAX_BLOCK_LENGTH:
        log.warning("block length saturated at %d (x=%d, beta=%g)", MAX_BLOCK_LENGTH, x, beta)
        return MAX_BLOCK_LENGTH
    return int(math.ceil(value))


def centralized_allocate(bandwidths: Sequence[float], n_devices: int) -> List[int]:
    """Water-filling: each device joins the network maximising B_i / (n_i + 1)."""
    if n_devices < 1:
        raise InvalidInputError("need at least one device")
    if not bandwidths or any(not (b > 0.0) for b in bandwidths):
        raise InvalidInputError(f"bandwidths must be positive, got {list(bandwidths)}")
    counts = [0] * len(bandwidths)
    for _ in range(n_devices):
        best = 0
        for i in range(1, len(bandwidths)):
            # B_i/(n_i+1) > B_best/(n_best+1), cross-multiplied; ties keep the lower id
            if bandwidths[i] * (counts[best] + 1) > bandwidths[best] * (counts[i] + 1):
                best = i
        counts[best] += 1
    return counts


class Policy:
    """Common surface of all selection policies."""

    name = "policy"
    needs_full_information = False

    def __init__(self, networks: Iterable[int], params: Optional[PolicyParameters] = None):
        self.networks: List[int] = sorted(set(networks))
        if not self.networks:
            raise InvalidStateError("a policy needs at least one network")
        self.params = params or PolicyParameters()
        self.resets = 0
        self.block_index = 0
        self.max_block_length = 1
        self.gamma = 1.0

    @property
    def k(self) -> int:
        return len(self.networks)

    def decide(self, clock: SimulationClock, rng: UniformStream) -> Decision:
        raise NotImplementedError

    def observe(self, slot_gain: float, full_gains: Optional[Dict[int, float]] = None) -> None:
        pass

    def on_network_set_change(self, added: Iterable[int], removed: Iterable[int]) -> None:
        raise NotImplementedError

    def probabilities(self) -> Optional[List[float]]:
        """Current selection distribution aligned with ``networks`` (None if the policy has none)."""
        return None

    def _gamma_at(self, block: int, slot: int) -> float:
        index = block if self.params.gamma_index == "block" else slot
        return self.params.gamma_schedule(max(index, 1))

    def _rebuild(self, added, removed, columns: Dict[str, list], fill: Dict[str, object]) -> None:
        """Re-key per-network columns after the available set changes."""
        removed = set(removed)
        new = sorted((set(self.networks) - removed) | set(added))
        if not new:
            raise InvalidStateError("no network left available")
        for key, col in columns.items():
            old = dict(zip(self.networks, col))
            col[:] = [old[n] if n in old else fill[key] for n in new]
        self.networks = new


class _WeightPolicy(Policy):
    def __init__(self, networks, params=None):
        super().__init__(networks, params)
        self.weights = [1.0] * self.k

    def _new_weight(self, removed) -> float:
        kept = [w for n, w in zip(self.networks, self.weights) if n not in set(removed)]
        return max(kept) if kept else 1.0


class Exp3(_WeightPolicy):
    """Per-slot EXP3: draw from the mixed distribution every slot, update the drawn arm."""

    name = "exp3"

    def __init__(self, networks, params=None):
        params = params or PolicyParameters(gamma_index="slot")
        super().__init__(networks, params)
        self.slots = 0
        self.probs = [1.0 / self.k] * self.k
        self._chosen = 0
        self._p = 1.0

    def decide(self, clock, rng):
        self.slots += 1
        self.block_index = self.slots
        self.gamma = self._gamma_at(self.slots, self.slots)
        self.probs = probability_update(self.weights, self.gamma)
        i = rng.categorical(self.probs)
        self._chosen, self._p = i, self.probs[i]
        return Decision(self.networks[i], self._p, DecisionKind.RANDOM)

    def observe(self, slot_gain, full_gains=None):
        self.weights = weight_update(self.weights, self._chosen, slot_gain, self._p, self.gamma, self.k)

    def on_network_set_change(self, added, removed):
        w = self._new_weight(removed)
        self._rebuild(added, removed, {"weights": self.weights}, {"weights": w})
        self.probs = probability_update(self.weights, self.gamma)

    def probabilities(self):
        return self.probs


class BlockExp3(_WeightPolicy):
    """EXP3 that holds each draw for ceil((1 + beta) ** x) slots."""

    name = "block_exp3"

    def __init__(self, networks, params=None):
        super().__init__(networks, params)
        self.x = [0] * self.k
        self.probs = [1.0 / self.k] * self.k
        self.slots = 0
        self._decision: Optional[Decision] = None
        self._remaining = 0
        self._block_gain = 0.0
        self._block_gamma = 1.0

    def decide(self, clock, rng):
        self.slots += 1
        if self._remaining == 0:
            self.block_index += 1
            self._block_gamma = self.gamma = self._gamma_at(self.block_index, self.slots)
            self.probs = probability_update(self.weights, self.gamma)
            i = rng.categorical(self.probs)
            length = block_length(self.x[i], self.params.beta)
            self.x[i] += 1
            self.max_block_length = max(self.max_block_length, length)
            self._remaining = length
            self._block_gain = 0.0
            self._decision = Decision(self.networks[i], self.probs[i], DecisionKind.RANDOM)
        return self._decision

    def observe(self, slot_gain, full_gains=None):
        self._block_gain += slot_gain
        self._remaining -= 1
        if self._remaining == 0:
            self._end_block()

    def _end_block(self):
        d = self._decision
        i = self.networks.index(d.network)
        self.weights = weight_update(self.weights, i, self._block_gain, d.selection_probability,
                                     self._block_gamma, self.k)
        self._remaining = 0

    def on_network_set_change(self, added, removed):
        removed = set(removed)
        if self._decision is not None and self._remaining and self._decision.network in removed:
            self._end_block()
        w = self._new_weight(removed)
        self._rebuild(added, removed, {"weights": self.weights, "x": self.x}, {"weights": w, "x": 0})
        self.probs = probability_update(self.weights, self._block_gamma)

    def probabilities(self):
        return self.probs


class Greedy(Policy):
    """Try every network once in random order, then always take the best average."""

    name = "greedy"

    def __init__(self, networks, params=None):
        super().__init__(networks, params)
        self.unexplored = list(self.networks)
        self.total = [0.0] * self.k
        self.count = [0] * self.k
        self._i = 0

    def means(self) -> List[float]:
        return [t / c if c else 0.0 for t, c in zip(self.total, self.count)]

    def decide(self, clock, rng):
        self.block_index += 1
        if self.unexplored:
            size = len(self.unexplored)
            net = self.unexplored.pop(rng.integers(size))
            self._i = self.networks.index(net)
            return Decision(net, 1.0 / size, DecisionKind.INITIAL_EXPLORATION)
        best = 0
        for i in range(1, self.k):
            if self.count[i] and (not self.count[best] or
                                  self.total[i] / self.count[i] > self.total[best] / self.count[best]):
                best = i
        self._i = best
        return Decision(self.networks[best], 1.0, DecisionKind.GREEDY)

    def observe(self, slot_gain, full_gains=None):
        self.total[self._i] += slot_gain
        self.count[self._i] += 1

    def on_network_set_change(self, added, removed):
        self._rebuild(added, removed, {"total": self.total, "count": self.count},
                      {"total": 0.0, "count": 0})
        removed = set(removed)
        self.unexplored = [n for n in self.unexplored if n not in removed]
        self.unexplored += [n for n in sorted(set(added)) if n not in self.unexplored]


class FullInformation(_WeightPolicy):
    """Hedge-style learner fed the would-be gain of every network after each slot.

    Draws proportionally to the weights; afterwards every weight is multiplied by
    exp(-eta * (1 - gain_i)).
    """

    name = "full_information"
    needs_full_information = True

    def __init__(self, networks, params=None, eta: float = 0.3):
        super().__init__(networks, params)
        if not (eta > 0.0 and math.isfinite(eta)):
            raise InvalidInputError(f"eta must be positive, got {eta}")
        self.eta = eta
        self.probs = [1.0 / self.k] * self.k

    def decide(self, clock, rng):
        self.block_index += 1
        total = math.fsum(self.weights)
        self.probs = [w / total for w in self.weights]
        i = rng.categorical(self.probs)
        return Decision(self.networks[i], self.probs[i], DecisionKind.RANDOM)

    def observe(self, slot_gain, full_gains=None):
        if full_gains is None:
            raise InvalidStateError("full information policy needs the gain of every network")
        eta = self.eta
        w = [wi * math.exp(-eta * (1.0 - full_gains[n])) for wi, n in zip(self.weights, self.networks)]
        top = max(w)
        if top < 1e-150 or top > 1e150:
            w = [max(v / top, _TINY) for v in w]
        self.weights = w
        total = math.fsum(w)
        self.probs = [v / total for v in w]

    def on_network_set_change(self, added, removed):
        w = self._new_weight(removed)
        self._rebuild(added, removed, {"weights": self.weights}, {"weights": w})
        total = math.fsum(self.weights)
        self.probs = [v / total for v in self.weights]

    def probabilities(self):
        return self.probs


class FixedRandom(Policy):
    """Pick a network uniformly at random once and never leave it."""

    name = "fixed_random"

    def __init__(self, networks, params=None):
        super().__init__(networks, params)
        self.choice: Optional[int] = None
        self._p = 1.0

    def decide(self, clock, rng):
        self.block_index = 1
        if self.choice is None:
            self._p = 1.0 / self.k
            self.choice = self.networks[rng.integers(self.k)]
        return Decision(self.choice, self._p, DecisionKind.RANDOM)

    def on_network_set_change(self, added, removed):
        self._rebuild(added, removed, {}, {})
        if self.choice is not None and self.choice not in self.networks:
            self.choice = None


class Coordinator:
    """Central entity placing its devices on a water-filling allocation.

    Devices already sitting on a network that still needs them keep their
    place; only the surplus moves.
    """

    def __init__(self, bandwidth_of):
        self.bandwidth_of = bandwidth_of
        self.members: Dict[int, "Centralized"] = {}
        self.assignment: Dict[int, int] = {}
        self._signature = None

    def register(self, device: int, policy: "Centralized") -> None:
        self.members[device] = policy
        self._signature = None

    def network_for(self, device: int, slot: int) -> int:
        active = tuple(sorted(d for d, p in self.members.items() if p.active))
        nets = tuple(sorted(set().union(*(self.members[d].networks for d in active))))
        signature = (active, nets, tuple(self.bandwidth_of(n, slot) for n in nets))
        if signature != self._signature:
            self._reassign(active, nets, slot)
            self._signature = signature
        return self.assignment[device]

    def _reassign(self, active, nets, slot):
        counts = centralized_allocate([self.bandwidth_of(n, slot) for n in nets], len(active))
        need = dict(zip(nets, counts))
        placed: Dict[int, int] = {}
        for d in active:
            cur = self.assignment.get(d)
            if cur in need and need[cur] > 0 and cur in self.members[d].networks:
                need[cur] -= 1
                placed[d] = cur
        for d in active:
            if d in placed:
                continue
            for n in nets:
                if need[n] > 0 and n in self.members[d].networks:
                    need[n] -= 1
                    placed[d] = n
                    break
            else:
                placed[d] = self.members[d].networks[0]
        self.assignment = placed


class Centralized(Policy):
    name = "centralized"

    def __init__(self, networks, params=None, coordinator: Optional[Coordinator] = None, device: int = 0):
        super().__init__(networks, params)
        if coordinator is None:
            raise InvalidStateError("centralized policy needs a coordinator")
        self.coordinator = coordinator
        self.device = device
        self.active = True
        coordinator.register(device, self)

    def decide(self, clock, rng):
        self.block_index = 1
        return Decision(self.coordinator.network_for(self.device, clock.slot), 1.0, DecisionKind.ASSIGNED)

    def on_network_set_change(self, added, removed):
        self._rebuild(added, removed, {}, {})
        self.coordinator._signature = None
