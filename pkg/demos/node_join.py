"""A node joins a converged ring and the neighbourhood makes room for it.

Run: python3 demos/node_join.py [seed]
"""
import sys

from pcptdma.schedule import validate_coverage, validate_no_mix_tx_rx
from pcptdma.simengine import SimConfig, Simulation
from pcptdma.topology import MeshNode, Topology

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
n = 6
edges = frozenset(e for i in range(n) for e in ((i, (i + 1) % n), ((i + 1) % n, i)))
ring = Topology(tuple(MeshNode(i, radios=2) for i in range(n)), edges, name=f"ring{n}")

sim = Simulation(SimConfig(ring, seed=seed, initial_period=8, record_messages=False))
before = sim.run()
print(f"ring converged: P={before.final_period} at slot {before.convergence_slot}")

new = sim.join_node([0, 3])
after = sim.run()
sf = after.superframe
print(f"node {new} joined next to 0 and 3: P={sf.period}, quiet at slot {after.convergence_slot}")
print(f"mixed slots: {len(validate_no_mix_tx_rx(sf))}, uncovered links: {len(validate_coverage(sf, sim.topology))}")
