"""Three nodes in a line, started at P=6, watched until the schedule settles.

Run: python3 demos/line3_walkthrough.py [seed]
"""
import sys

from pcptdma.simengine import SimConfig, Simulation, compute_metrics
from pcptdma.topology import generate_line

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
topo = generate_line(3)
sim = Simulation(SimConfig(topo, seed=seed, initial_period=6))
trace = sim.run()

print(f"topology {topo.name}: {len(topo.edges)} directed links")
print("first 30 protocol messages:")
for line in trace.message_log[:30]:
    print("  " + line)

sf = trace.superframe
print(f"\nfinal period {sf.period}")
for slot in range(1, sf.period + 1):
    links = ", ".join(f"{a}->{b}" for a, b in sorted(sf.edge_set(slot)))
    print(f"  slot {slot}: {links}")

m = compute_metrics(trace, topo)
print(f"\nPart-1 done at slot {trace.part1_slot}, network quiet at slot {trace.convergence_slot}")
print(f"RESV sent {m.resv_total}, GRT sent {m.grt_total}")
for ep in trace.episodes:
    print(f"  shrink by node {ep.root}: {ep}")
