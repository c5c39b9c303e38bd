"""Closed-form switch and weak-regret bounds, and the empirical quantities they bound.

Both bounds use natural logarithms.  The regret bound is evaluated in
scaled-gain seconds; :func:`regret_bound_bytes` converts it with the run's
gain scale.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .core import InvalidInputError, MEGABIT_BYTES


@dataclass(frozen=True)
class BoundInputs:
    k: int
    beta: float
    t_d: float
    tau: float
    T: float
    gamma: float = 1.0
    l: float = 1.0
    mu_d: float = 0.0
    mu_g: float = 0.0
    G_max_tau: float = 0.0

    def __post_init__(self):
        if self.k < 1:
            raise InvalidInputError("k must be at least 1")
        if not (0.0 < self.beta <= 1.0):
            raise InvalidInputError(f"beta must be in (0, 1], got {self.beta}")
        if not (0.0 < self.gamma <= 1.0):
            raise InvalidInputError(f"gamma must be in (0, 1], got {self.gamma}")
        for name in ("t_d", "tau", "T"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise InvalidInputError(f"{name} must be positive, got {v}")
        for name in ("l", "mu_d", "mu_g", "G_max_tau"):
            v = getattr(self, name)
            if not (v >= 0 and math.isfinite(v)):
                raise InvalidInputError(f"{name} must be non-negative, got {v}")


def _switch_term(k: int, beta: float, tau: float, t_d: float) -> float:
    return 3.0 * k * math.log(tau / t_d + 1.0) / math.log1p(beta)


def switch_bound(inputs: BoundInputs) -> float:
    """(T / tau) * 3k ln(tau / t_d + 1) / ln(1 + beta)."""
    b = inputs
    return (b.T / b.tau) * _switch_term(b.k, b.beta, b.tau, b.t_d)


def regret_bound(inputs: BoundInputs) -> float:
    """Weak-regret bound in scaled-gain seconds."""
    b = inputs
    first = (b.T * b.t_d / b.tau) * ((1.0 + b.gamma * b.l * (math.e - 2.0)) * b.G_max_tau
                                     + b.k * math.log(b.k) / b.gamma)
    second = (b.T * b.mu_d * b.mu_g / b.tau) * _switch_term(b.k, b.beta, b.tau, b.t_d)
    return first + second


def regret_bound_bytes(inputs: BoundInputs, gain_scale_mbps: float) -> float:
    return regret_bound(inputs) * gain_scale_mbps * MEGABIT_BYTES


def _is_dynamic(scenario) -> bool:
    return bool(scenario is not None and (scenario.events or any(not g.active for g in scenario.device_groups)))


def hindsight_rates(run) -> np.ndarray:
    """[T, n, K] bit rate each device would have had on each network, others unchanged."""
    T, n = run.network.shape
    K = run.bandwidth.shape[1]
    alloc = run.allocation.astype(float)
    out = np.empty((T, n, K))
    for d in range(n):
        on = np.zeros((T, K))
        rows = np.flatnonzero(run.network[:, d] >= 0)
        on[rows, run.network[rows, d]] = 1.0
        out[:, d, :] = run.bandwidth / (alloc + 1.0 - on)
    return out


def best_fixed_network(run, device: int) -> int:
    rates = hindsight_rates(run)[:, device, :]
    active = run.network[:, device] >= 0
    return int(np.argmax(rates[active].sum(axis=0)))


def empirical_weak_regret(run, scenario=None) -> np.ndarray:
    """Per-device weak regret in bytes.

    Best single network in hindsight (no switches, other devices' choices
    unchanged) minus the goodput the device actually received.  Only slots in
    which the device was active count.  For dynamic scenarios the comparison is
    still computed but a warning is issued.
    """
    if _is_dynamic(scenario):
        warnings.warn("weak regret in a dynamic scenario: best fixed network taken over active slots only")
    rates = hindsight_rates(run)
    active = (run.network >= 0)[:, :, None]
    best = (rates * active).sum(axis=0).max(axis=1) * run.slot_seconds * MEGABIT_BYTES
    return best - run.download_bytes


def measured_inputs(run, device: int, beta: float = 0.1) -> BoundInputs:
    """Bound inputs measured from one device's history in a run."""
    T_slots = int((run.network[:, device] >= 0).sum())
    if T_slots == 0:
        raise InvalidInputError(f"device {device} was never active")
    td = run.slot_seconds
    T = T_slots * td
    tau = T / (int(run.resets[device]) + 1)
    active = run.network[:, device] >= 0
    sw_rows = np.flatnonzero(active)
    sw_rows = sw_rows[1:][np.diff(run.network[sw_rows, device]) != 0]
    mu_d = float(run.delay[sw_rows, device].mean()) if sw_rows.size else 0.0
    mu_g = float(run.gain[active, device].mean())
    scaled = np.minimum(hindsight_rates(run)[:, device, :] / run.gain_scale_mbps, 1.0)
    g_max = float(scaled[active].sum(axis=0).max())
    gamma = float(run.final_gamma[device])
    if not (0.0 < gamma <= 1.0):
        gamma = 1.0
    return BoundInputs(k=len(run.network_ids), beta=beta, t_d=td,
                       tau=tau, T=T, gamma=gamma, l=float(max(run.max_block_length[device], 1)),
                       mu_d=mu_d, mu_g=mu_g, G_max_tau=g_max * tau / T)


@dataclass
class DominanceCheck:
    device: int
    switches: int
    switch_bound: float
    regret_bytes: float
    regret_bound_bytes: float

    @property
    def switches_ok(self) -> bool:
        return self.switches <= self.switch_bound

    @property
    def regret_ok(self) -> bool:
        return self.regret_bytes <= self.regret_bound_bytes

    @property
    def ok(self) -> bool:
        return self.switches_ok and self.regret_ok


def check_dominance(run, scenario=None, beta: float = 0.1, no_reset_tau: bool = False) -> List[DominanceCheck]:
    """Compare every device's switches and regret to the bounds with measured inputs.

    With ``no_reset_tau`` the switch bound is taken at tau = T regardless of
    recorded resets.
    """
    regrets = empirical_weak_regret(run, scenario)
    out = []
    for d in range(run.n_devices):
        if not (run.network[:, d] >= 0).any():
            continue
        inp = measured_inputs(run, d, beta)
        sb_inp = BoundInputs(**{**inp.__dict__, "tau": inp.T}) if no_reset_tau else inp
        out.append(DominanceCheck(d, int(run.switches[d]), switch_bound(sb_inp), float(regrets[d]),
                                  regret_bound_bytes(inp, run.gain_scale_mbps)))
    return out
