"""PCP against the centralized and random baselines on 50-node regular graphs.

Run: python3 demos/degree_sweep.py [seeds]
"""
import sys
from statistics import mean

from pcptdma.baselines import algo2_schedule, jazzymac_schedule, roma_schedule
from pcptdma.simengine import SimConfig, run_to_convergence
from pcptdma.topology import generate_fixed_degree

seeds = int(sys.argv[1]) if len(sys.argv) > 1 else 3
print(f"{'degree':>6} {'PCP Pi1':>8} {'PCP Pi3':>8} {'ALGO-2':>7} {'Jazzy':>6} {'ROMA':>6}")
for d in (5, 7, 9, 11):
    cols = {k: [] for k in ("pi1", "pi3", "algo2", "jazzy", "roma")}
    for s in range(seeds):
        topo = generate_fixed_degree(50, d, seed=s)
        cols["pi1"].append(run_to_convergence(SimConfig(topo, "Pi1", seed=s, record_messages=False)).final_period)
        cols["pi3"].append(run_to_convergence(
            SimConfig(topo, "Pi3", seed=s, on_empty_feasible="expand", record_messages=False)).final_period)
        cols["algo2"].append(algo2_schedule(topo).period)
        cols["jazzy"].append(jazzymac_schedule(topo).period)
        cols["roma"].append(roma_schedule(topo, seed=s).period)
    print(f"{d:>6} " + " ".join(f"{mean(v):>{w}.1f}" for v, w in zip(cols.values(), (8, 8, 7, 6, 6))))
