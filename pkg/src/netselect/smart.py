"""Smart EXP3 and its ablations (block EXP3, hybrid block EXP3, no-reset variant).

The learner runs EXP3 over blocks of growing length and layers four
mechanisms on top, each behind a flag of :class:`SmartConfig`:

* initial exploration of every network in random order,
* a greedy coin once the distribution is still flat,
* switching back after one bad slot on a freshly chosen network,
* a minimal reset that re-probes the networks without discarding weights.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, List, Optional

from .core import Decision, DecisionKind, InvalidStateError, PolicyParameters
from .policies import Policy, block_length, probability_update, weight_update

_EQ_TOL = 1e-9


@dataclass
class SmartConfig:
    explore: bool = True
    greedy: bool = True
    switch_back: bool = True
    reset: bool = True
    greedy_coin: float = 0.5
    switch_back_window: int = 8
    reset_probability: float = 0.75
    reset_block_length: int = 40
    drop_fraction: float = 0.15
    drop_min_slots: int = 4
    drop_baseline_slots: int = 5
    drop_window: int = 12
    removed_probability: float = 0.75


VARIANTS: Dict[str, SmartConfig] = {
    "smart_exp3": SmartConfig(),
    "smart_exp3_no_reset": SmartConfig(reset=False),
    "hybrid_block_exp3": SmartConfig(explore=False, switch_back=False, reset=False),
}


@dataclass
class Block:
    network: int
    length: int
    p_bar: float
    kind: DecisionKind
    gamma: float
    decision: Decision
    elapsed: int = 0
    gain: float = 0.0
    gains: List[float] = field(default_factory=list)
    done: bool = False


class SmartExp3(Policy):
    name = "smart_exp3"

    def __init__(self, networks, params: Optional[PolicyParameters] = None,
                 config: Optional[SmartConfig] = None, name: Optional[str] = None):
        super().__init__(networks, params)
        self.config = config or SmartConfig()
        if name:
            self.name = name
        k = self.k
        self.weights = [1.0] * k
        self.probs = [1.0 / k] * k
        self.x = [0] * k
        self.lengths = [1] * k
        self.gain_total = [0.0] * k
        self.gain_count = [0] * k
        self.slot_counts = [0] * k
        self.explore_set: List[int] = list(self.networks) if self.config.explore else []
        self.slots = 0
        self.y: Optional[int] = None
        self.block: Optional[Block] = None
        self.prev_block: Optional[Block] = None
        self.pending_switch_back = False
        self._clear_preferred()

    # -- public protocol -------------------------------------------------
    def decide(self, clock, rng):
        self.slots += 1
        if self.block is None or self.block.done:
            self.begin_block(rng)
        return self.block.decision

    def observe(self, slot_gain, full_gains=None):
        blk = self.block
        if blk is None or blk.done:
            raise InvalidStateError("observe called without an open block")
        blk.gain += slot_gain
        blk.elapsed += 1
        blk.gains.append(slot_gain)
        i = self.networks.index(blk.network)
        self.gain_total[i] += slot_gain
        self.gain_count[i] += 1
        self.slot_counts[i] += 1
        self._track_run(blk.network, slot_gain)

        if self.config.reset and self.drop_detected():
            self.end_block()
            self.apply_reset()
            return
        if blk.elapsed == 1 and self._switch_back_applies() and self.should_switch_back(slot_gain):
            self.end_block()
            self.pending_switch_back = True
            return
        if blk.elapsed >= blk.length:
            self.end_block()

    def probabilities(self):
        return self.probs

    # -- block lifecycle -------------------------------------------------
    def begin_block(self, rng) -> Decision:
        finished = self.block
        self.block_index += 1
        self.gamma = self._gamma_at(self.block_index, self.slots)
        self.probs = probability_update(self.weights, self.gamma)
        if self.config.reset and self.periodic_reset_due():
            self.apply_reset()
        self._update_gate()

        if self.pending_switch_back and self.prev_block is not None \
                and self.prev_block.network in self.networks:
            net = self.prev_block.network
            kind, p_bar = DecisionKind.SWITCH_BACK, 1.0
        elif self.explore_set:
            size = len(self.explore_set)
            net = self.explore_set.pop(rng.integers(size))
            kind, p_bar = DecisionKind.INITIAL_EXPLORATION, 1.0 / size
        elif self.config.greedy and self.greedy_eligible():
            coin = self.config.greedy_coin
            if rng.random() < coin:
                net = self.networks[self.greedy_choice()]
                kind, p_bar = DecisionKind.GREEDY, coin
            else:
                i = rng.categorical(self.probs)
                net = self.networks[i]
                kind, p_bar = DecisionKind.RANDOM, self.probs[i] * (1.0 - coin)
        else:
            i = rng.categorical(self.probs)
            net = self.networks[i]
            kind, p_bar = DecisionKind.RANDOM, self.probs[i]
        self.pending_switch_back = False

        i = self.networks.index(net)
        length = block_length(self.x[i], self.params.beta)
        self.x[i] += 1
        self.lengths[i] = length
        self.max_block_length = max(self.max_block_length, length)
        if finished is not None:
            self.prev_block = finished
        decision = Decision(net, p_bar, kind)
        self.block = Block(net, length, p_bar, kind, self.gamma, decision)
        return decision

    def end_block(self) -> None:
        blk = self.block
        if blk is None or blk.done:
            return
        i = self.networks.index(blk.network)
        self.weights = weight_update(self.weights, i, blk.gain, blk.p_bar, blk.gamma, self.k)
        blk.done = True

    # -- greedy ------------------------------------------------------------
    def _top(self) -> int:
        best = 0
        for i in range(1, self.k):
            if self.probs[i] > self.probs[best]:
                best = i
        return best

    def _update_gate(self) -> None:
        if self.y is None and self.k > 1 and \
                max(self.probs) - min(self.probs) > 1.0 / (self.k - 1):
            self.y = self.lengths[self._top()]

    def greedy_eligible(self) -> bool:
        k = self.k
        if k < 2 or not all(self.gain_count):
            return False
        if max(self.probs) - min(self.probs) <= 1.0 / (k - 1):
            return True
        return self.y is not None and self.lengths[self._top()] < self.y

    def greedy_choice(self) -> int:
        means = [t / c for t, c in zip(self.gain_total, self.gain_count)]
        best = 0
        for i in range(1, self.k):
            if means[i] > means[best]:
                best = i
        return best

    # -- switch back ---------------------------------------------------------
    def _switch_back_applies(self) -> bool:
        blk, prev = self.block, self.prev_block
        return (self.config.switch_back and prev is not None
                and blk.kind in (DecisionKind.RANDOM, DecisionKind.GREEDY)
                and blk.network != prev.network)

    def should_switch_back(self, first_slot_gain: float) -> bool:
        prev = self.prev_block
        if prev is None or not prev.gains:
            return False
        if self.block is not None and self.block.kind == DecisionKind.SWITCH_BACK:
            return False
        window = prev.gains[-self.config.switch_back_window:]
        mean = math.fsum(window) / len(window)
        g = first_slot_gain
        if g < mean - _EQ_TOL or g < window[-1] - _EQ_TOL:
            return True
        higher = sum(1 for v in window if v > g + _EQ_TOL)
        return 2 * higher > len(window)

    # -- reset ----------------------------------------------------------------
    def periodic_reset_due(self) -> bool:
        top = self._top()
        return (self.probs[top] >= self.config.reset_probability
                and self.lengths[top] >= self.config.reset_block_length)

    def _imax(self) -> Optional[int]:
        top = max(self.slot_counts)
        if top == 0 or self.slot_counts.count(top) > 1:
            return None
        return self.networks[self.slot_counts.index(top)]

    def _clear_preferred(self) -> None:
        self.preferred: Optional[int] = None
        self.preferred_streak = 0
        self.preferred_count = 0
        self.preferred_head: List[float] = []
        self.preferred_tail: deque = deque(maxlen=self.config.drop_window)

    def _track_run(self, network: int, gain: float) -> None:
        """Follow the gains seen on i_max since it became i_max."""
        imax = self._imax()
        if imax is None:
            self._clear_preferred()
            return
        if imax != self.preferred:
            self._clear_preferred()
            self.preferred = imax
        if network != imax:
            self.preferred_streak = 0
            return
        self.preferred_streak += 1
        self.preferred_count += 1
        if len(self.preferred_head) < self.config.drop_baseline_slots:
            self.preferred_head.append(gain)
        self.preferred_tail.append(gain)

    def drop_detected(self) -> bool:
        """Gain on i_max fell at least 15% since it became i_max.

        Compares the mean of the latest ``drop_window`` slots on i_max with
        the mean of the first ``drop_baseline_slots`` slots after it became i_max.
        The device must currently have spent more than ``drop_min_slots``
        consecutive slots on it, so a drop seen in a single slot is only
        one sample of a 12-slot average.
        """
        w = self.config.drop_window
        if self.preferred_streak <= self.config.drop_min_slots or self.preferred_count < w + 1:
            return False
        first = math.fsum(self.preferred_head) / len(self.preferred_head)
        if first <= 0.0:
            return False
        latest = math.fsum(self.preferred_tail) / w
        return latest <= (1.0 - self.config.drop_fraction) * first + _EQ_TOL * first

    def should_reset(self) -> bool:
        return self.config.reset and (self.periodic_reset_due() or self.drop_detected())

    def apply_reset(self) -> None:
        k = self.k
        self.x = [0] * k
        self.lengths = [1] * k
        self.gain_total = [0.0] * k
        self.gain_count = [0] * k
        self.slot_counts = [0] * k
        self.explore_set = list(self.networks)
        self._clear_preferred()
        self.pending_switch_back = False
        self.resets += 1

    # -- availability -----------------------------------------------------------
    def on_network_set_change(self, added, removed):
        added, removed = set(added) - set(self.networks), set(removed) & set(self.networks)
        if not added and not removed:
            return
        old_p = dict(zip(self.networks, self.probs))
        heavy_loss = any(old_p[n] >= self.config.removed_probability for n in removed)
        if self.block is not None and not self.block.done and self.block.network in removed:
            self.end_block()
        kept = [w for n, w in zip(self.networks, self.weights) if n not in removed]
        w_new = max(kept) if kept else 1.0
        self._rebuild(added, removed, {
            "weights": self.weights, "x": self.x, "lengths": self.lengths,
            "gain_total": self.gain_total, "gain_count": self.gain_count,
            "slot_counts": self.slot_counts,
        }, {"weights": w_new, "x": 0, "lengths": 1, "gain_total": 0.0,
            "gain_count": 0, "slot_counts": 0})
        self.explore_set = [n for n in self.explore_set if n in self.networks]
        if self.prev_block is not None and self.prev_block.network in removed:
            self.pending_switch_back = False
        if self.preferred in removed:
            self._clear_preferred()
        self.probs = probability_update(self.weights, self.gamma)
        if (added or heavy_loss) and self.config.reset:
            self.apply_reset()
        elif added and self.config.explore:
            self.explore_set += sorted(added)
