"""Sixteen of twenty devices leave halfway through.

The four that stay should spread out over the three networks.  Smart EXP3
notices the jump in its gain and resets; without resets a device stays stuck
on a network it had already converged to.  Greedy never re-explores.
"""
import numpy as np

from netselect.metrics import distance_series
from netselect.scenario import load_preset
from netselect.engine import run_batch

base = load_preset("dynamic2")
for policy in ("smart_exp3", "smart_exp3_no_reset", "greedy"):
    runs = run_batch(base.with_policy(policy), range(5))
    d = np.mean([distance_series(r) for r in runs], axis=0)
    print(f"{policy:20s} distance to NE: slots 0-599 {d[:600].mean():6.2f}%   "
          f"slots 600-899 {d[600:900].mean():6.2f}%   slots 900-1199 {d[900:].mean():6.2f}%")
    print(f"{'':20s} resets per device {np.mean([r.resets.mean() for r in runs]):.2f}")
