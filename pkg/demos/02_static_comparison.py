"""Smart EXP3 against its ancestors and Greedy on setting 1.

Ten seeds of each policy; prints median switches per device, how many runs
settle on the equilibrium, and the spread of downloads across devices.
Takes about a minute.
"""
import sys

import numpy as np

from netselect import metrics as M
from netselect.scenario import load_preset
from netselect.engine import run_batch

seeds = range(int(sys.argv[1]) if len(sys.argv) > 1 else 10)
base = load_preset("setting1")
ne = M.enumerate_nash(base.bandwidths(), base.n_devices)

print(f"{'policy':22s} {'switches':>9s} {'stable@NE':>10s} {'time@NE':>8s} {'median GB':>10s} {'std GB':>7s}")
for policy in ("exp3", "block_exp3", "hybrid_block_exp3", "smart_exp3_no_reset", "smart_exp3", "greedy"):
    runs = run_batch(base.with_policy(policy), seeds)
    sw = np.median([np.median(r.switches) for r in runs])
    stable = sum(M.stable_at_ne(r.probs, ne) for r in runs)
    at_ne = np.mean([M.time_at_ne(r.allocation, ne)["fraction_at_ne"] for r in runs])
    med = np.mean([r.median_download() for r in runs]) / 1e9
    std = np.mean([M.fairness_stddev(r.download_bytes) for r in runs]) / 1e9
    print(f"{policy:22s} {sw:9.1f} {stable:>4d}/{len(runs):<5d} {at_ne:8.1%} {med:10.3f} {std:7.3f}")
