"""Which allocations are equilibria, and how far a bad one is from them.

Setting 1 (4, 7 and 22 Mbps, 20 devices) has a single equilibrium.  Setting 2
(three 11 Mbps networks, 20 devices) has three, all permutations of one shape.
"""
from netselect.metrics import allocation_gains, distance_to_ne, enumerate_nash

for bw, n in (((4, 7, 22), 20), ((11, 11, 11), 20)):
    nes = enumerate_nash(bw, n)
    print(f"bandwidths {bw}, {n} devices: {len(nes)} equilibria")
    for ne in nes:
        print("   ", ne.counts, "per-device Mbps", tuple(round(g, 3) for g in ne.per_device_gain))

# one device too many on the 22 Mbps network, one too few on the 7 Mbps one
bw = (4, 7, 22)
nes = enumerate_nash(bw, 20)
for counts in ((2, 4, 14), (2, 3, 15), (3, 5, 12), (0, 0, 20)):
    d = distance_to_ne(allocation_gains(counts, bw), nes)
    print(f"allocation {counts}: distance to equilibrium {d:.2f}%")
