"""Mesh topologies: graph container, generators and structural statistics.

Every generator returns a :class:`Topology` with both directions of each
adjacency present, dense node ids ``0..n-1`` and synthesized positions, so the
protocol and the baselines can treat all families the same way.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import networkx as nx
import numpy as np

Link = tuple[int, int]

DEFAULT_RETRY_BUDGET = 1000

range_ = range  # generate_geometric shadows the builtin with its parameter


class TopologyError(ValueError):
    """Invalid generator arguments or a topology violating its invariants."""


class GenerationFailed(RuntimeError):
    pass


class DiameterUndefined(TopologyError):
    pass


@dataclass(frozen=True)
class MeshNode:
    id: int
    position: tuple[float, float] | None = None
    radios: int = 1


@dataclass(frozen=True)
class TopologyStats:
    max_degree: int
    diameter: int
    edge_count: int
    node_count: int


@dataclass(frozen=True)
class Topology:
    nodes: tuple[MeshNode, ...]
    edges: frozenset[Link]
    range: float | None = None
    name: str = "custom"
    neighbor_sets: dict[int, frozenset[int]] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        nbrs: dict[int, set[int]] = {n.id: set() for n in self.nodes}
        for u, v in self.edges:
            nbrs[u].add(v)
        object.__setattr__(
            self, "neighbor_sets", {k: frozenset(v) for k, v in nbrs.items()}
        )

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def node_ids(self) -> list[int]:
        return [n.id for n in self.nodes]

    def neighbors(self, u: int) -> frozenset[int]:
        return self.neighbor_sets[u]

    def degree(self, u: int) -> int:
        return len(self.neighbor_sets[u])

    def sorted_edges(self) -> list[Link]:
        return sorted(self.edges)

    def to_networkx(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(self.node_ids)
        g.add_edges_from((u, v) for u, v in self.edges if u < v)
        return g

    def with_node(self, position: tuple[float, float] | None, neighbors: Iterable[int]) -> "Topology":
        """Return a copy with one extra node (id ``n``) linked both ways to ``neighbors``."""
        new_id = self.n
        nbrs = sorted(set(neighbors))
        if not nbrs:
            raise TopologyError("a joining node needs at least one neighbor")
        for v in nbrs:
            if v not in self.neighbor_sets:
                raise TopologyError(f"unknown neighbor {v}")
        edges = set(self.edges)
        for v in nbrs:
            edges.add((new_id, v))
            edges.add((v, new_id))
        degree = {u: len(self.neighbor_sets[u]) for u in self.node_ids}
        for v in nbrs:
            degree[v] += 1
        nodes = [MeshNode(m.id, m.position, max(m.radios, degree[m.id])) for m in self.nodes]
        nodes.append(MeshNode(new_id, position, len(nbrs)))
        return Topology(tuple(nodes), frozenset(edges), self.range, self.name + "+join")

    # --- serialization -------------------------------------------------

    def to_json(self) -> dict:
        nodes = []
        for m in self.nodes:
            x, y = m.position if m.position is not None else (None, None)
            nodes.append({"id": m.id, "x": x, "y": y})
        return {
            "nodes": nodes,
            "edges": [list(e) for e in self.sorted_edges()],
            "range": self.range,
        }

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1))

    @classmethod
    def from_json(cls, doc: dict, name: str = "custom") -> "Topology":
        raw_nodes = doc["nodes"]
        edges = frozenset((int(u), int(v)) for u, v in doc["edges"])
        deg: dict[int, int] = {}
        for u, _ in edges:
            deg[u] = deg.get(u, 0) + 1
        nodes = []
        for rec in raw_nodes:
            x, y = rec.get("x"), rec.get("y")
            pos = None if x is None or y is None else (float(x), float(y))
            nodes.append(MeshNode(int(rec["id"]), pos, max(1, deg.get(int(rec["id"]), 0))))
        nodes.sort(key=lambda m: m.id)
        topo = cls(tuple(nodes), edges, doc.get("range"), name)
        validate(topo)
        return topo

    @classmethod
    def load(cls, path: str | Path) -> "Topology":
        path = Path(path)
        return cls.from_json(json.loads(path.read_text()), name=path.stem)


def validate(t: Topology, require_connected: bool = True) -> None:
    """Raise :class:`TopologyError` unless ``t`` satisfies the topology invariants."""
    ids = t.node_ids
    if ids != list(range(len(ids))):
        raise TopologyError("node ids must be dense 0..|V|-1 in order")
    for u, v in t.edges:
        if u == v:
            raise TopologyError(f"self-loop at {u}")
        if u not in t.neighbor_sets or v not in t.neighbor_sets:
            raise TopologyError(f"edge {(u, v)} references an unknown node")
        if (v, u) not in t.edges:
            raise TopologyError(f"edge {(u, v)} has no reverse")
    for m in t.nodes:
        if m.radios < t.degree(m.id):
            raise TopologyError(f"node {m.id} has fewer radios than neighbors")
    if t.range is not None and all(m.position is not None for m in t.nodes):
        for a in t.nodes:
            for b in t.nodes:
                if a.id >= b.id:
                    continue
                close = math.dist(a.position, b.position) <= t.range + 1e-9
                if close != ((a.id, b.id) in t.edges):
                    raise TopologyError(f"edge/distance mismatch for {(a.id, b.id)}")
    if require_connected and t.n > 1 and not nx.is_connected(t.to_networkx()):
        raise TopologyError("topology is disconnected")


def _build(name: str, positions, undirected: Iterable[Link], rng_range: float | None) -> Topology:
    undirected = list(undirected)
    deg = [0] * len(positions)
    edges = set()
    for u, v in undirected:
        edges.add((u, v))
        edges.add((v, u))
        deg[u] += 1
        deg[v] += 1
    nodes = tuple(
        MeshNode(i, None if p is None else (float(p[0]), float(p[1])), max(1, deg[i]))
        for i, p in enumerate(positions)
    )
    return Topology(nodes, frozenset(edges), rng_range, name)


def generate_line(n: int, spacing: float = 1.0) -> Topology:
    if n < 2:
        raise TopologyError("a line needs at least 2 nodes")
    positions = [(i * spacing, 0.0) for i in range(n)]
    return _build(f"line{n}", positions, [(i, i + 1) for i in range(n - 1)], spacing)


def generate_grid(rows: int, cols: int, spacing: float = 1.0) -> Topology:
    if rows < 2 or cols < 2:
        raise TopologyError("grid dimensions must both be at least 2")
    positions = [(c * spacing, r * spacing) for r in range(rows) for c in range(cols)]
    pairs = []
    for r in range(rows):
        for c in range(cols):
            u = r * cols + c
            if c + 1 < cols:
                pairs.append((u, u + 1))
            if r + 1 < rows:
                pairs.append((u, u + cols))
    return _build(f"grid{rows}x{cols}", positions, pairs, spacing)


def generate_complete(n: int) -> Topology:
    if n < 2:
        raise TopologyError("a complete graph needs at least 2 nodes")
    # points on a unit circle all lie within range 2
    positions = _circle_positions(n)
    pairs = [(u, v) for u in range(n) for v in range(u + 1, n)]
    return _build(f"K{n}", positions, pairs, 2.0)


def generate_geometric(
    n: int,
    area_side: float,
    range: float,
    seed: int,
    retry_budget: int = DEFAULT_RETRY_BUDGET,
) -> Topology:
    """Uniform random placement on a square, links between nodes within ``range``.

    Placements are redrawn until the graph is connected.
    """
    if n < 2:
        raise TopologyError("need at least 2 nodes")
    if range <= 0 or area_side <= 0:
        raise TopologyError("range and area side must be positive")
    rng = np.random.default_rng(seed)
    for _ in range_(retry_budget):
        pos = rng.uniform(0.0, area_side, size=(n, 2))
        diff = pos[:, None, :] - pos[None, :, :]
        dist = np.sqrt((diff**2).sum(axis=-1))
        iu, iv = np.nonzero(np.triu(dist <= range, k=1))
        pairs = list(zip(iu.tolist(), iv.tolist()))
        g = nx.Graph()
        g.add_nodes_from(range_(n))
        g.add_edges_from(pairs)
        if nx.is_connected(g):
            return _build(f"geo{n}-r{range:g}", pos.tolist(), pairs, float(range))
    raise GenerationFailed(f"no connected placement after {retry_budget} draws")


def _circle_positions(n: int) -> list[tuple[float, float]]:
    return [(math.cos(2 * math.pi * i / n), math.sin(2 * math.pi * i / n)) for i in range_(n)]


def generate_fixed_degree(
    n: int, degree: int, seed: int, retry_budget: int = DEFAULT_RETRY_BUDGET
) -> Topology:
    """Connected random ``degree``-regular graph."""
    if degree < 1 or degree >= n:
        raise TopologyError(f"degree must be in [1, n-1], got {degree} for n={n}")
    if (n * degree) % 2:
        raise TopologyError("n * degree must be even")
    rng = np.random.default_rng(seed)
    for _ in range_(retry_budget):
        g = nx.random_regular_graph(degree, n, seed=int(rng.integers(2**31)))
        if nx.is_connected(g):
            pairs = sorted((min(u, v), max(u, v)) for u, v in g.edges())
            topo = _build(f"reg{n}-d{degree}", _circle_positions(n), pairs, None)
            return topo
    raise GenerationFailed(f"no connected {degree}-regular graph after {retry_budget} draws")


def generate_average_degree(
    n: int, degree: float, seed: int, retry_budget: int = DEFAULT_RETRY_BUDGET
) -> Topology:
    """Connected G(n, m) graph whose mean degree is ``degree`` (rounded to whole edges)."""
    m = int(round(n * degree / 2))
    if m < n - 1 or m > n * (n - 1) // 2:
        raise TopologyError("average degree cannot give a connected simple graph")
    rng = np.random.default_rng(seed)
    for _ in range_(retry_budget):
        g = nx.gnm_random_graph(n, m, seed=int(rng.integers(2**31)))
        if nx.is_connected(g):
            pairs = sorted((min(u, v), max(u, v)) for u, v in g.edges())
            return _build(f"gnm{n}-d{degree:g}", _circle_positions(n), pairs, None)
    raise GenerationFailed(f"no connected G(n,m) graph after {retry_budget} draws")


def generate_star_of_stars(branches: int) -> Topology:
    """A hub with ``branches`` arms, each arm a hub of ``branches - 1`` leaves.

    Every non-leaf node has degree ``branches``, which makes the worst case of the
    initial-period bound easy to hit: adjacent nodes both carry D_max links.
    """
    if branches < 2:
        raise TopologyError("need at least 2 branches")
    pairs = []
    nxt = 1
    for _ in range_(branches):
        arm = nxt
        pairs.append((0, arm))
        nxt += 1
        for _ in range_(branches - 1):
            pairs.append((arm, nxt))
            nxt += 1
    return _build(f"starofstars{branches}", _circle_positions(nxt), pairs, None)


def compute_stats(t: Topology) -> TopologyStats:
    if t.n == 0:
        return TopologyStats(0, 0, 0, 0)
    g = t.to_networkx()
    if not nx.is_connected(g):
        raise DiameterUndefined("diameter is undefined on a disconnected topology")
    diameter = nx.diameter(g) if t.n > 1 else 0
    max_degree = max((t.degree(u) for u in t.node_ids), default=0)
    return TopologyStats(max_degree, diameter, len(t.edges), t.n)
