import math

import pytest

from netselect.core import DecisionKind, PolicyParameters
from netselect.policies import BlockExp3, probability_update
from netselect.rng import UniformStream
from netselect.smart import VARIANTS, SmartConfig, SmartExp3

from conftest import clock, drive


class ScriptedRng:
    """Stand-in stream: fixed coin, fixed categorical pick, first element of integer draws."""

    def __init__(self, coin=0.9, pick=0):
        self.coin, self.pick = coin, pick

    def random(self):
        return self.coin

    def integers(self, n):
        return 0

    def categorical(self, probs):
        return self.pick


def explored(k=3, **cfg):
    s = SmartExp3(list(range(k)), config=SmartConfig(**cfg))
    rng = ScriptedRng()
    for _ in range(k):
        s.decide(clock(), rng)
        s.observe(0.5)
    assert not s.explore_set
    return s


def run_block(s, rng, gain):
    d = s.decide(clock(), rng)
    while True:
        s.observe(gain)
        if s.block.done:
            return d
        s.decide(clock(), rng)


# exploration and p-bar bookkeeping
def test_initial_exploration_permutation():
    for seed in range(10):
        s = SmartExp3([0, 1, 2])
        rng = UniformStream.for_device(seed, 0)
        ds = [run_block(s, rng, 0.3) for _ in range(3)]
        assert sorted(d.network for d in ds) == [0, 1, 2]
        assert [d.kind for d in ds] == [DecisionKind.INITIAL_EXPLORATION] * 3
        assert [d.selection_probability for d in ds] == pytest.approx([1 / 3, 1 / 2, 1.0])


def test_greedy_coin_pbar_half():
    s = explored()
    d = s.decide(clock(), ScriptedRng(coin=0.1))
    assert d.kind == DecisionKind.GREEDY
    assert d.selection_probability == 0.5


def test_random_after_coin_pbar():
    s = explored()
    s.weights = [1.0, 1.0, 1.0]
    # force p = (0.4, 0.3, 0.3) by picking weights at gamma = 1/ (block 4) ** (1/3)
    gamma = 4 ** (-1 / 3)
    k = 3
    w0 = (0.4 - gamma / k) / (1 - gamma)
    w1 = (0.3 - gamma / k) / (1 - gamma)
    s.weights = [w0, w1, w1]
    d = s.decide(clock(), ScriptedRng(coin=0.9, pick=0))
    assert s.probs[0] == pytest.approx(0.4, abs=1e-12)
    assert d.kind == DecisionKind.RANDOM
    assert d.selection_probability == pytest.approx(0.2, abs=1e-12)


# greedy gate
def test_gate_uniform_eligible():
    s = explored()
    s.probs = [1 / 3] * 3
    assert s.greedy_eligible()


def test_gate_peaked_not_eligible():
    s = explored()
    s.probs = [0.8, 0.1, 0.1]
    assert s.y is None
    assert not s.greedy_eligible()
    s.y = 3
    s.lengths = [3, 1, 1]
    assert not s.greedy_eligible()


def test_gate_after_reset_uses_y():
    s = explored()
    s.probs = [0.8, 0.1, 0.1]
    s.y = 5
    s.lengths = [9, 1, 1]
    assert not s.greedy_eligible()
    s.apply_reset()
    for n in range(3):
        s.gain_total[n], s.gain_count[n] = 0.5, 1
    s.lengths = [2, 1, 1]
    assert s.y == 5 and s.greedy_eligible()


def test_gate_single_network():
    s = SmartExp3([4])
    assert not s.greedy_eligible()
    rng = UniformStream.for_device(0, 0)
    assert {run_block(s, rng, 0.5).network for _ in range(10)} == {4}


# switch back
def prev_with(gains, network=0):
    s = explored()
    s.prev_block = s.block
    s.prev_block.network = network
    s.prev_block.gains = list(gains)
    return s


def test_switch_back_mean_rule():
    s = prev_with([0.6])
    assert s.should_switch_back(0.4)


def test_switch_back_never_after_switch_back():
    s = prev_with([0.6])
    s.block.kind = DecisionKind.SWITCH_BACK
    assert not s.should_switch_back(0.1)


def test_switch_back_boundary():
    s = prev_with([0.5, 0.5, 0.5, 0.5])
    assert not s.should_switch_back(0.5)
    # exactly half the window above: not strictly more than 50 %
    s = prev_with([0.2, 0.8, 0.2, 0.8, 0.5])
    assert s.should_switch_back(0.45)  # below the mean
    s = prev_with([0.2, 0.2, 0.8, 0.8, 0.2])
    assert not s.should_switch_back(0.5)


def test_switch_back_majority_rule():
    # mean 0.4125 and last 0.1 both below g = 0.45, but 5 of 8 exceed it
    s = prev_with([0.5, 0.5, 0.5, 0.5, 0.5, 0.0, 0.2, 0.1])
    assert s.should_switch_back(0.45)


def test_switch_back_no_previous_block():
    s = SmartExp3([0, 1])
    assert not s.should_switch_back(0.0)


def test_switch_back_execution():
    cfg = SmartConfig(explore=False, greedy=False, reset=False)
    s = SmartExp3([0, 1], config=cfg)
    rng = ScriptedRng(pick=0)
    run_block(s, rng, 0.9)                    # block on network 0
    s.x[0] = 0
    rng.pick = 1
    d = s.decide(clock(), rng)                # new network, bad first slot
    assert d.network == 1 and d.kind == DecisionKind.RANDOM
    w_before = list(s.weights)
    s.observe(0.1)
    assert s.block.done and s.block.elapsed == 1
    assert s.weights[1] == pytest.approx(
        w_before[1] * math.exp(s.block.gamma * (0.1 / d.selection_probability) / 2), rel=1e-12)
    back = s.decide(clock(), rng)
    assert back.network == 0 and back.kind == DecisionKind.SWITCH_BACK
    assert back.selection_probability == 1.0


def test_no_consecutive_switch_backs():
    s = SmartExp3([0, 1, 2], config=SmartConfig(reset=False))
    rng = UniformStream.for_device(42, 0)
    kinds = []
    import itertools
    gains = itertools.cycle([0.9, 0.1, 0.5, 0.3, 0.7])
    for t in range(3000):
        d = s.decide(clock(t), rng)
        if s.block.elapsed == 0:
            kinds.append(d.kind)
        s.observe(next(gains))
    assert kinds.count(DecisionKind.SWITCH_BACK) > 0
    for a, b in zip(kinds, kinds[1:]):
        assert not (a == b == DecisionKind.SWITCH_BACK)


# end of block
def test_end_block_sums_gain():
    cfg = SmartConfig(explore=False, greedy=False, switch_back=False, reset=False)
    s = SmartExp3([0, 1], config=cfg)
    s.x = [8, 0]                              # next block on 0 lasts 3 slots
    rng = ScriptedRng(pick=0)
    d = s.decide(clock(), rng)
    assert s.block.length == 3
    gamma = s.block.gamma
    for _ in range(3):
        s.decide(clock(), rng)
        s.observe(0.5)
    assert s.block.gain == pytest.approx(1.5)
    assert s.weights[0] == pytest.approx(math.exp(gamma * (1.5 / d.selection_probability) / 2), rel=1e-12)


def test_zero_gain_block_keeps_weights():
    s = SmartExp3([0, 1], config=SmartConfig(explore=False, greedy=False, switch_back=False, reset=False))
    run_block(s, ScriptedRng(), 0.0)
    assert s.weights == [1.0, 1.0]


def test_block_gain_bounded_by_length():
    s = SmartExp3([0, 1, 2])
    rng = UniformStream.for_device(1, 0)
    for t in range(2000):
        s.decide(clock(t), rng)
        blk = s.block
        s.observe(1.0)
        assert 0.0 <= blk.gain <= blk.length


# resets
def test_periodic_reset_rule():
    s = explored()
    s.probs = [0.8, 0.1, 0.1]
    s.lengths = [40, 1, 1]
    assert s.should_reset()
    s.lengths = [39, 1, 1]
    assert not s.should_reset()
    s.probs = [0.7, 0.2, 0.1]
    s.lengths = [40, 1, 1]
    assert not s.should_reset()


def _feed_imax(s, gains):
    fired = []
    for g in gains:
        s.slot_counts[0] += 1
        s._track_run(0, g)
        fired.append(s.drop_detected())
    return fired


def test_drop_sustained_twenty_percent():
    s = explored()
    s.slot_counts = [0, 0, 0]
    fired = _feed_imax(s, [0.5] * 5 + [0.4] * 20)
    # baseline 0.5 from the first 5 slots; latest-12 mean reaches 5.1/12 = 0.425 at slot 14
    assert fired.index(True) == 13


def test_drop_needs_a_full_window():
    s = explored()
    s.slot_counts = [0, 0, 0]
    # steep drop, but fewer than drop_window + 1 samples on i_max
    assert not any(_feed_imax(s, [0.5] * 5 + [0.1] * 7))


def test_drop_noise_ignored():
    s = explored()
    s.slot_counts = [0, 0, 0]
    assert not any(_feed_imax(s, [0.5] * 5 + [0.45] * 30))
    s = explored()
    s.slot_counts = [0, 0, 0]
    assert not any(_feed_imax(s, [0.5] * 5 + [0.4] + [0.5] * 30))


def test_apply_reset_state():
    s = SmartExp3([0, 1, 2])
    rng = UniformStream.for_device(5, 0)
    drive(s, {0: 0.2, 1: 0.9, 2: 0.4}, rng, 300)
    while not s.block.done:
        s.decide(clock(), rng)
        s.observe(0.5)
    w = list(s.weights)
    resets = s.resets
    s.apply_reset()
    assert s.weights == w
    assert s.lengths == [1, 1, 1] and s.x == [0, 0, 0]
    assert s.resets == resets + 1
    kinds = []
    nets = []
    for _ in range(3):
        d = run_block(s, rng, 0.5)
        kinds.append(d.kind)
        nets.append(d.network)
        assert s.block.length == 1
    assert kinds == [DecisionKind.INITIAL_EXPLORATION] * 3
    assert sorted(nets) == [0, 1, 2]


# network set changes
def test_added_network_takes_max_weight_then_resets():
    s = SmartExp3([0, 1])
    s.weights = [2.0, 4.0]
    s.on_network_set_change({2}, set())
    assert s.weights == [2.0, 4.0, 4.0]
    assert s.resets == 1 and s.explore_set == [0, 1, 2]


def test_added_network_without_reset_is_explored():
    s = explored(k=2, reset=False)
    s.on_network_set_change({5}, set())
    assert s.resets == 0 and s.explore_set == [5]


def test_all_new_networks_weight_one():
    s = SmartExp3([0, 1])
    s.weights = [3.0, 5.0]
    s.on_network_set_change({7, 8}, {0, 1})
    assert s.networks == [7, 8] and s.weights == [1.0, 1.0]


def test_current_network_vanishes_mid_block():
    s = SmartExp3([0, 1], config=SmartConfig(explore=False, greedy=False, switch_back=False, reset=False))
    s.x = [20, 0]
    rng = ScriptedRng(pick=0)
    d = s.decide(clock(), rng)
    for _ in range(3):
        s.observe(0.5)
        s.decide(clock(), rng)
    blk = s.block
    s.on_network_set_change(set(), {0})
    assert blk.done and blk.elapsed == 3 and blk.gain == pytest.approx(1.5)
    assert s.networks == [1]
    assert s.decide(clock(), rng).network == 1


def test_heavy_removal_resets():
    s = explored()
    s.probs = [0.8, 0.1, 0.1]
    s.on_network_set_change(set(), {0})
    assert s.resets == 1


# ablations
def test_all_flags_off_equals_block_exp3():
    cfg = SmartConfig(explore=False, greedy=False, switch_back=False, reset=False)
    a = SmartExp3([0, 1, 2], config=cfg)
    b = BlockExp3([0, 1, 2])
    gains = {0: 0.2, 1: 0.7, 2: 0.4}
    da = drive(a, gains, UniformStream.for_device(8, 0), 1500)
    db = drive(b, gains, UniformStream.for_device(8, 0), 1500)
    assert da == db
    assert a.weights == b.weights


def test_variants():
    assert VARIANTS["smart_exp3"].reset
    assert not VARIANTS["smart_exp3_no_reset"].reset
    h = VARIANTS["hybrid_block_exp3"]
    assert h.greedy and not (h.explore or h.switch_back or h.reset)


def test_pbar_bookkeeping_invariant():
    s = SmartExp3([0, 1, 2])
    rng = UniformStream.for_device(77, 0)
    gains = [{0: 0.2, 1: 0.9, 2: 0.4}, {0: 0.9, 1: 0.1, 2: 0.4}]
    for t in range(4000):
        explore_size = len(s.explore_set)
        new_block = s.block is None or s.block.done
        d = s.decide(clock(t), rng)
        if new_block:
            i = s.networks.index(d.network)
            p = s.probs[i]
            allowed = {DecisionKind.SWITCH_BACK: [1.0], DecisionKind.GREEDY: [0.5],
                       DecisionKind.RANDOM: [p, p / 2]}
            if d.kind == DecisionKind.INITIAL_EXPLORATION:
                # exploration may have been refilled by a reset inside begin_block
                assert any(d.selection_probability == pytest.approx(1 / m) for m in (explore_size, 3) if m)
            else:
                assert any(d.selection_probability == pytest.approx(v, abs=1e-15) for v in allowed[d.kind])
        s.observe(gains[(t // 500) % 2][d.network])
    assert sum(s.probs) == pytest.approx(1.0, abs=1e-9)
