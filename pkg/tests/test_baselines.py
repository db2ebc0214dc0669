from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _oracles import min_period_by_cut_search
from pcptdma.baselines import (
    OracleUnavailable,
    SchedulingFailed,
    algo2_schedule,
    jazzymac_schedule,
    oracle_min_superframe,
    roma_schedule,
)
from pcptdma.schedule import validate_coverage, validate_no_mix_tx_rx
from pcptdma.topology import (
    MeshNode,
    Topology,
    generate_average_degree,
    generate_complete,
    generate_fixed_degree,
    generate_grid,
    generate_line,
)


def from_pairs(n: int, pairs) -> Topology:
    edges = frozenset(e for a, b in pairs for e in ((a, b), (b, a)))
    deg = [sum(u in p for p in pairs) for u in range(n)]
    return Topology(tuple(MeshNode(i, radios=max(1, deg[i])) for i in range(n)), edges)


# oracle periods obtained by breadth-first cut search in tests/_oracles.py
DERIVED_ORACLE = [
    ("diamond", 4, [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3)], 3),
    ("bowtie", 5, [(0, 1), (0, 2), (0, 4), (1, 4), (2, 3), (2, 4)], 3),
    ("k23", 5, [(0, 1), (0, 2), (1, 3), (1, 4), (2, 3), (2, 4)], 2),
    ("six-a", 6, [(0, 1), (0, 2), (0, 3), (1, 4), (2, 4), (2, 5), (3, 4), (3, 5)], 2),
    ("six-b", 6, [(0, 1), (0, 4), (0, 5), (1, 4), (1, 5), (2, 3), (2, 5), (4, 5)], 4),
    ("six-c", 6, [(0, 2), (0, 5), (1, 2), (1, 3), (1, 4), (1, 5), (2, 4), (3, 5)], 3),
    ("triangle", 3, [(0, 1), (1, 2), (0, 2)], 3),
]


@pytest.mark.parametrize("name,n,pairs,period", DERIVED_ORACLE, ids=[d[0] for d in DERIVED_ORACLE])
def test_oracle_frozen_values(name, n, pairs, period):
    t = from_pairs(n, pairs)
    res = oracle_min_superframe(t)
    assert res.period == period
    assert validate_no_mix_tx_rx(res.witness) == []
    assert validate_coverage(res.witness, t) == []


@pytest.mark.parametrize("n,period", [(2, 2), (3, 3), (4, 4), (5, 4), (6, 4), (10, 5)])
def test_oracle_complete_graphs(n, period):
    # smallest k with C(k, k//2) >= n, by Sperner's theorem on role codes
    assert oracle_min_superframe(generate_complete(n)).period == period


def test_oracle_three_node_line():
    assert oracle_min_superframe(generate_line(3)).period == 2


@pytest.mark.parametrize("t", [generate_line(10), generate_grid(3, 3), generate_grid(2, 5)], ids=lambda t: t.name)
def test_oracle_bipartite_is_two(t):
    assert oracle_min_superframe(t).period == 2


def test_oracle_size_limit():
    with pytest.raises(OracleUnavailable):
        oracle_min_superframe(generate_line(11))


def test_oracle_no_edges():
    t = Topology((MeshNode(0),), frozenset())
    assert oracle_min_superframe(t).period == 1


@pytest.mark.parametrize("t", [generate_line(16), generate_grid(4, 4)], ids=lambda t: t.name)
def test_bipartite_baselines_period_two(t):
    assert algo2_schedule(t).period == 2
    assert jazzymac_schedule(t).period == 2


def test_jazzymac_two_nodes():
    assert jazzymac_schedule(generate_line(2)).period == 2


def test_jazzymac_complete_graph_uses_every_color():
    # K_n needs n colors and only one node fires per slot
    assert jazzymac_schedule(generate_complete(10)).period == 10


def test_jazzymac_dense_graph_worse_than_algo2():
    t = generate_average_degree(50, 40.0, seed=0)
    assert jazzymac_schedule(t).period > algo2_schedule(t).period + 5


def test_roma_k2_one_direction_per_slot():
    sf = roma_schedule(generate_line(2), seed=3)
    assert all(len(es) <= 1 for es in sf.edge_sets)
    assert validate_coverage(sf, generate_line(2)) == []


def test_roma_deterministic():
    t = generate_fixed_degree(30, 5, seed=1)
    assert roma_schedule(t, seed=7) == roma_schedule(t, seed=7)


def test_roma_repeats_links():
    t = generate_fixed_degree(50, 5, seed=1)
    sf = roma_schedule(t, seed=0)
    assert sf.activations() > len(t.edges)
    assert sf.avg_concurrent_links() > len(t.edges) / sf.period


def test_roma_budget():
    with pytest.raises(SchedulingFailed):
        roma_schedule(generate_complete(8), seed=0, slot_budget=2)


def test_algo2_frozen_complete_values():
    # regression pins for the deterministic greedy
    assert algo2_schedule(generate_complete(6)).period == 5
    assert algo2_schedule(generate_complete(10)).period == 7


def test_algo2_first_cut_of_a_star():
    t = from_pairs(4, [(0, 1), (0, 2), (0, 3)])
    sf = algo2_schedule(t)
    assert sf.period == 2
    # moving the hub to the receiver side gains three links at once
    assert sf.edge_set(1) == {(1, 0), (2, 0), (3, 0)}
    assert sf.edge_set(2) == {(0, 1), (0, 2), (0, 3)}


def test_superframe_dumps_are_json(tmp_path):
    sf = algo2_schedule(generate_grid(3, 3))
    sf.dump(tmp_path / "a.json")
    assert (tmp_path / "a.json").read_text().startswith("{")


def graphs(lo, hi):
    return st.builds(
        lambda n, frac, seed: generate_average_degree(n, 2.0 + frac * (n - 3), seed),
        st.integers(lo, hi),
        st.floats(0.0, 1.0),
        st.integers(0, 10_000),
    )


@settings(max_examples=40, deadline=None)
@given(t=graphs(4, 5))
def test_oracle_matches_cut_search(t):
    assert oracle_min_superframe(t).period == min_period_by_cut_search(t.n, set(t.edges))


@settings(max_examples=40, deadline=None)
@given(t=graphs(4, 9), seed=st.integers(0, 1000))
def test_schedulers_valid_and_above_oracle(t, seed):
    best = oracle_min_superframe(t).period
    for sf in (algo2_schedule(t), jazzymac_schedule(t), roma_schedule(t, seed)):
        assert validate_no_mix_tx_rx(sf) == []
        assert validate_coverage(sf, t) == []
        assert sf.period >= best


@settings(max_examples=40, deadline=None)
@given(n=st.integers(8, 40), d=st.integers(2, 7), seed=st.integers(0, 10_000))
def test_exact_once_identity(n, d, seed):
    if d >= n or (n * d) % 2:
        return
    t = generate_fixed_degree(n, d, seed)
    for sf in (algo2_schedule(t), jazzymac_schedule(t)):
        assert sf.period * sf.avg_concurrent_links() == len(t.edges)
        assert sf.activations() == len(t.edges)
