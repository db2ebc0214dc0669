"""Independent reference computations used to derive and check frozen values.

Nothing here imports the package under test.
"""

from __future__ import annotations

from collections import deque
from itertools import combinations


def bfs_diameter(n: int, undirected: list[tuple[int, int]]) -> int:
    adj = {u: set() for u in range(n)}
    for u, v in undirected:
        adj[u].add(v)
        adj[v].add(u)
    best = 0
    for s in range(n):
        dist = {s: 0}
        q = deque([s])
        while q:
            u = q.popleft()
            for w in adj[u]:
                if w not in dist:
                    dist[w] = dist[u] + 1
                    q.append(w)
        if len(dist) < n:
            raise ValueError("disconnected")
        best = max(best, max(dist.values()))
    return best


def min_period_by_cut_search(n: int, directed: set[tuple[int, int]]) -> int:
    """Fewest transmitter/receiver splits that together activate every directed link.

    Breadth-first over the set of links still uncovered; each step picks any
    transmitter subset and covers the links leaving it.
    """
    if not directed:
        return 1
    splits = []
    for k in range(1, n):
        for tx in combinations(range(n), k):
            tx = set(tx)
            splits.append(frozenset((u, v) for u, v in directed if u in tx and v not in tx))
    splits = [s for s in set(splits) if s]
    start = frozenset(directed)
    frontier = {start}
    depth = 0
    while frontier:
        depth += 1
        nxt = set()
        for left in frontier:
            for s in splits:
                rest = left - s
                if not rest:
                    return depth
                if rest != left:
                    nxt.add(rest)
        frontier = nxt
    raise AssertionError("unreachable")


def mixes_tx_rx(edge_sets) -> bool:
    for es in edge_sets:
        tx = {u for u, _ in es}
        rx = {v for _, v in es}
        if tx & rx:
            return True
    return False
