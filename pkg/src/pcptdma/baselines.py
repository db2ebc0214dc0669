"""Reference schedulers and an exact minimum-superframe oracle.

ALGO-2 is a centralized max-cut greedy, JazzyMAC passes per-link tokens, ROMA
splits nodes at random each slot.  The oracle searches for the shortest
superframe on graphs of at most ten nodes.
"""

from __future__ import annotations

from dataclasses import dataclass

import networkx as nx
import numpy as np

from .schedule import Superframe
from .topology import Link, Topology

ROMA_SLOT_BUDGET = 100_000


class SchedulingFailed(RuntimeError):
    pass


class OracleUnavailable(ValueError):
    pass


@dataclass
class CutState:
    set1: set[int]
    set2: set[int]
    unscheduled: set[Link]

    def cut_edges(self) -> set[Link]:
        return {(u, v) for u, v in self.unscheduled if u in self.set1 and v in self.set2}


def _move_gain(state: CutState, u: int, in_edges, out_edges) -> int:
    gain = sum(1 for w in in_edges[u] if w in state.set1 and (w, u) in state.unscheduled)
    loss = sum(1 for x in out_edges[u] if x in state.set2 and (u, x) in state.unscheduled)
    return gain - loss


def algo2_schedule(t: Topology) -> Superframe:
    """Repeated greedy max cuts over the still-unscheduled links.

    Each round starts with every node in Set1 and keeps moving the node whose
    move to Set2 adds the most unscheduled Set1 -> Set2 links (lowest id on
    ties) until no move helps.  The cut's links form one slot.
    """
    in_edges = {u: [] for u in t.node_ids}
    out_edges = {u: [] for u in t.node_ids}
    for u, v in t.sorted_edges():
        out_edges[u].append(v)
        in_edges[v].append(u)
    unscheduled = set(t.edges)
    sets: list[frozenset[Link]] = []
    while unscheduled:
        state = CutState(set(t.node_ids), set(), unscheduled)
        while True:
            best, best_gain = None, 0
            for u in sorted(state.set1):
                g = _move_gain(state, u, in_edges, out_edges)
                if g > best_gain:
                    best, best_gain = u, g
            if best is None:
                break
            state.set1.remove(best)
            state.set2.add(best)
        cut = state.cut_edges()
        if not cut:
            raise SchedulingFailed("greedy cut made no progress")
        sets.append(frozenset(cut))
        unscheduled -= cut
    return Superframe.from_sets(sets)


def jazzymac_schedule(t: Topology, slot_budget: int | None = None) -> Superframe:
    """Token passing seeded by a largest-degree-first greedy coloring.

    The superframe lists each link in the slot where it first activates, so
    every link appears exactly once.
    """
    g = t.to_networkx()
    colors = nx.greedy_color(g, strategy="largest_first")
    holder: dict[frozenset[int], int] = {}
    for u, v in g.edges():
        holder[frozenset((u, v))] = u if (colors[u], u) < (colors[v], v) else v
    remaining = set(t.edges)
    sets: list[frozenset[Link]] = []
    budget = slot_budget or 4 * max(1, len(t.edges)) + 4
    while remaining:
        if len(sets) >= budget:
            raise SchedulingFailed("token passing did not cover every link")
        firing = [
            u for u in t.node_ids
            if t.neighbors(u) and all(holder[frozenset((u, v))] == u for v in t.neighbors(u))
        ]
        if not firing:
            raise SchedulingFailed("no node holds all of its tokens")
        fresh = set()
        for u in firing:
            for v in t.neighbors(u):
                if (u, v) in remaining:
                    fresh.add((u, v))
                holder[frozenset((u, v))] = v
        remaining -= fresh
        sets.append(frozenset(fresh))
    return Superframe.from_sets(sets)


def roma_schedule(t: Topology, seed: int, slot_budget: int = ROMA_SLOT_BUDGET) -> Superframe:
    """Random half/half transmitter split per slot; every T -> R link activates.

    Node priorities per slot come from a seeded stream, and the top half by
    priority transmits.  Links activated again in later slots are kept, so the
    activation count can exceed |E|.
    """
    rng = np.random.default_rng(seed)
    ids = np.array(t.node_ids)
    n_tx = -(-len(ids) // 2)
    remaining = set(t.edges)
    sets: list[frozenset[Link]] = []
    while remaining:
        if len(sets) >= slot_budget:
            raise SchedulingFailed(f"coverage not reached within {slot_budget} slots")
        priority = rng.permutation(len(ids))
        tx = set(ids[np.argsort(-priority, kind="stable")][:n_tx].tolist())
        active = frozenset((u, v) for u, v in t.edges if u in tx and v not in tx)
        remaining -= active
        sets.append(active)
    return Superframe.from_sets(sets)


@dataclass(frozen=True)
class OracleResult:
    period: int
    witness: Superframe


def oracle_min_superframe(t: Topology, max_nodes: int = 10) -> OracleResult:
    """Exact shortest interference-free superframe covering every link.

    A period-k schedule is the same as giving each node a k-bit role code (bit
    i set means "transmitter in slot i") such that for every link (u, v) some
    bit is set in u and clear in v.  Codes are assigned by backtracking with
    increasing k until one fits.
    """
    if t.n > max_nodes:
        raise OracleUnavailable(f"{t.n} nodes exceeds the oracle limit of {max_nodes}")
    if not t.edges:
        return OracleResult(1, Superframe.from_sets([()]))
    order = sorted(t.node_ids, key=lambda u: (-t.degree(u), u))
    k = 1
    while True:
        codes = _assign_codes(t, order, k)
        if codes is not None:
            sets = [
                frozenset((u, v) for u, v in t.edges if codes[u] >> i & 1 and not codes[v] >> i & 1)
                for i in range(k)
            ]
            return OracleResult(k, Superframe.from_sets(sets))
        k += 1


def _assign_codes(t: Topology, order: list[int], k: int) -> dict[int, int] | None:
    full = (1 << k) - 1
    codes: dict[int, int] = {}

    def ok(u: int, c: int) -> bool:
        for v in t.neighbors(u):
            d = codes.get(v)
            if d is not None and (c & ~d & full == 0 or d & ~c & full == 0):
                return False
        return True

    def search(pos: int) -> bool:
        if pos == len(order):
            return True
        u = order[pos]
        # bits are interchangeable, so the first node only needs one code per popcount
        cands = [(1 << j) - 1 for j in range(k + 1)] if pos == 0 else range(full + 1)
        for c in cands:
            if ok(u, c):
                codes[u] = c
                if search(pos + 1):
                    return True
                del codes[u]
        return False

    return dict(codes) if search(0) else None
