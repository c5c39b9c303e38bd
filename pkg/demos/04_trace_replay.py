"""One device choosing between a wifi and a cellular link whose rates change.

The two synthetic traces below stand in for recorded ones: in the first the
better link alternates every 25 slots, in the second wifi is always worse.
Any CSV with the header ``slot,wifi_mbps,cellular_mbps`` works with
``netselect trace``.
"""
import numpy as np

from netselect.core import MB
from netselect.environment import TracePair
from netselect.engine import run_batch, trace_scenario

traces = {
    "alternating": TracePair([10.0 if (t // 25) % 2 == 0 else 2.0 for t in range(100)],
                             [2.0 if (t // 25) % 2 == 0 else 10.0 for t in range(100)]),
    "constant": TracePair([4.0] * 100, [10.0] * 100),
}
for name, trace in traces.items():
    for policy in ("smart_exp3", "greedy", "exp3"):
        runs = run_batch(trace_scenario(trace, policy), range(20))
        dl = np.median([r.download_bytes[0] for r in runs]) / MB
        sw = np.median([r.switches[0] for r in runs])
        print(f"{name:12s} {policy:12s} median download {dl:7.1f} MB, {sw:4.0f} switches")
