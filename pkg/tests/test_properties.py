"""Invariants checked over generated inputs."""
import math

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from netselect import bounds as B
from netselect import metrics as M
from netselect.core import scale_gain
from netselect.engine import POLICY_NAMES, DeviceGroup, Scenario, run_simulation
from netselect.environment import DelayModel, DelaySampler, NetworkModel
from netselect.policies import BlockExp3, block_length, centralized_allocate, probability_update, weight_update
from netselect.rng import UniformStream
from netselect.smart import SmartConfig, SmartExp3

from conftest import drive

weights = st.lists(st.floats(1e-100, 1e100), min_size=1, max_size=8)
gammas = st.floats(0.0, 1.0)
bandwidths = st.lists(st.integers(1, 30).map(float), min_size=1, max_size=4)


@given(weights, gammas)
def test_probabilities_sum_to_one(w, g):
    p = probability_update(w, g)
    assert math.fsum(p) == pytest.approx(1.0, abs=1e-9)
    assert all(v >= g / len(w) - 1e-15 for v in p)


@given(weights, gammas, st.floats(1e-50, 1e50))
def test_probabilities_scale_invariant(w, g, c):
    a = probability_update(w, g)
    b = probability_update([c * x for x in w], g)
    assert np.allclose(a, b, atol=1e-12, rtol=0)
    top = sorted(a)
    if len(a) == 1 or top[-1] - top[-2] > 1e-12:
        assert np.argmax(a) == np.argmax(b)


@given(weights, st.data(), st.floats(0.0, 50.0), st.floats(1e-3, 1.0), st.floats(0.01, 1.0))
def test_weight_update_matches_log_space(w, data, gain, p_bar, g):
    k = len(w)
    i = data.draw(st.integers(0, k - 1))
    out = weight_update(w, i, gain, p_bar, g, k)
    assert all(math.isfinite(v) and v > 0 for v in out)
    logs = [math.log(x) for x in w]
    logs[i] += g * (gain / p_bar) / k
    top = max(logs)
    soft = np.exp(np.array(logs) - top)
    expected = (1 - g) * soft / soft.sum() + g / k
    assert np.allclose(probability_update(out, g), expected, atol=1e-9)
    # the untouched weights all move by one common factor (1, or the renormalisation)
    factors = [out[j] / w[j] for j in range(k) if j != i and out[j] > 1e-290]
    assert all(f == pytest.approx(factors[0], rel=1e-9) for f in factors)


@given(st.integers(0, 200), st.floats(0.01, 1.0))
def test_block_length_is_ceiling(x, beta):
    L = block_length(x, beta)
    assert L >= 1
    assert L == min(math.ceil((1 + beta) ** x), 2**31 - 1)
    assert block_length(x + 1, beta) >= L


@given(st.floats(0, 1e3), st.floats(0, 1e3), st.floats(1e-3, 1e3))
def test_scale_gain_monotone(a, b, s):
    lo, hi = sorted((a, b))
    assert scale_gain(lo, s) <= scale_gain(hi, s) <= 1.0


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.lists(st.floats(0.0, 1.0), min_size=3, max_size=3), st.integers(2, 4))
def test_smart_with_flags_off_is_block_exp3(seed, g, k):
    cfg = SmartConfig(explore=False, greedy=False, switch_back=False, reset=False)
    gains = {i: g[i % 3] for i in range(k)}
    a = drive(SmartExp3(range(k), config=cfg), gains, UniformStream.for_device(seed, 0), 300)
    b = drive(BlockExp3(range(k)), gains, UniformStream.for_device(seed, 0), 300)
    assert a == b


@settings(max_examples=60, deadline=None)
@given(bandwidths, st.integers(1, 12))
def test_enumerated_ne_pass_deviation_check(bws, n):
    nes = M.enumerate_nash(bws, n)
    assert nes
    for ne in nes:
        assert sum(ne.counts) == n
        for i, c in enumerate(ne.counts):
            for j in range(len(bws)):
                if c and j != i:
                    assert bws[i] / c >= bws[j] / (ne.counts[j] + 1) - 1e-12
    assert tuple(centralized_allocate(bws, n)) in {ne.counts for ne in nes}


@settings(max_examples=60, deadline=None)
@given(bandwidths, st.integers(1, 10), st.data())
def test_distance_properties(bws, n, data):
    nes = M.enumerate_nash(bws, n)
    counts = data.draw(st.lists(st.integers(0, n), min_size=len(bws), max_size=len(bws)).filter(
        lambda c: sum(c) == n))
    gains = M.allocation_gains(counts, bws)
    d = M.distance_to_ne(gains, nes)
    assert d >= 0
    dominated = any(all(x >= y for x, y in zip(sorted(gains), ne.device_gains())) for ne in nes)
    assert (d == 0) == dominated
    f = M.time_at_ne(np.array([counts]), nes, data.draw(st.floats(0, 100)), bws)
    assert 0 <= f["fraction_at_ne"] <= f["fraction_at_eps"] <= 1


@given(st.lists(st.floats(0, 1e10), min_size=2, max_size=30), st.randoms())
def test_fairness_permutation_invariant(x, rnd):
    y = list(x)
    rnd.shuffle(y)
    assert M.fairness_stddev(x) == pytest.approx(M.fairness_stddev(y), rel=1e-9, abs=1e-6)


inputs = st.builds(
    dict, k=st.integers(1, 6), beta=st.floats(0.01, 1.0), t_d=st.floats(0.5, 20), T=st.floats(100, 1e5),
    gamma=st.floats(0.01, 1.0), l=st.floats(1, 100), mu_d=st.floats(0, 10), mu_g=st.floats(0, 1),
    G_max_tau=st.floats(0, 1e4))


@given(inputs, st.floats(1.01, 3.0))
def test_bounds_monotone(d, grow):
    d["tau"] = d["T"]
    base = B.BoundInputs(**d)
    sb, rb = B.switch_bound(base), B.regret_bound(base)
    longer = B.BoundInputs(**{**d, "T": d["T"] * grow, "tau": d["T"] * grow})
    assert B.switch_bound(longer) >= sb
    assert B.switch_bound(B.BoundInputs(**{**d, "k": d["k"] + 1})) >= sb
    if d["beta"] * grow <= 1.0:
        assert B.switch_bound(B.BoundInputs(**{**d, "beta": d["beta"] * grow})) <= sb
    for key in ("l", "mu_d", "mu_g"):
        assert B.regret_bound(B.BoundInputs(**{**d, key: d[key] * grow + 0.1})) >= rb


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(["johnson-su", "student-t"]), st.floats(-3, 3), st.floats(0.2, 5), st.floats(-5, 20),
       st.floats(0.1, 5), st.integers(0, 2**32 - 1))
def test_delay_always_in_slot(family, a, b, c, d, seed):
    if family == "johnson-su":
        model = DelayModel.make(family, 15.0, gamma=a, delta=b, xi=c, **{"lambda": d})
    else:
        model = DelayModel.make(family, 15.0, df=b, loc=c, scale=d)
    s = DelaySampler(np.random.default_rng(seed))
    try:
        xs = [s(model) for _ in range(50)]
    except Exception:
        return  # no mass on [0, 15] is reported, never clipped
    assert all(0.0 <= x <= 15.0 for x in xs)


@settings(max_examples=20, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(st.sampled_from(POLICY_NAMES), st.lists(st.integers(1, 25).map(float), min_size=1, max_size=4),
       st.integers(1, 8), st.integers(0, 1000))
def test_run_invariants(policy, bws, n, seed):
    nets = [NetworkModel(i + 1, b) for i, b in enumerate(bws)]
    r = run_simulation(Scenario("h", nets, [DeviceGroup("g", n, policy)], horizon_slots=150), seed)
    rows = ~np.isnan(r.probs).any(axis=2)
    assert np.allclose(r.probs[rows].sum(axis=1), 1.0, atol=1e-9)
    assert (r.allocation.sum(axis=1) == n).all()
    # equal share conserves each occupied network's bandwidth
    for t in range(0, 150, 10):
        for j, b in enumerate(bws):
            on = r.network[t] == j
            if on.any():
                assert r.bitrate[t, on].sum() == pytest.approx(b)
    assert ((r.gain >= 0) & (r.gain <= 1)).all()
