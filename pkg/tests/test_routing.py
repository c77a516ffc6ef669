import math
from dataclasses import dataclass

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from detnet.admission import ControllerConfig, NetworkState
from detnet.errors import InvalidParameter, UnknownEndpoint
from detnet.routing import (
    containing_tree,
    hops_of,
    path_edges,
    rank_candidates,
    reroute_candidates,
    shortest_path,
    unit_adjacency,
    yen_k_paths,
)
from detnet.routing import _yen as yen
from detnet.topology import QueueLevelGraph, TreeCatalog, assign_vlan
from oracles import simple_paths
from topos import Builder, line, mesh, triangle


def weighted_graph(topo, weights, class_q=0):
    """Queue-level graph with the i-th directed switch egress weighted by ``weights[i]``."""
    adj = {n: [] for n in topo.nodes}
    i = 0
    for e in topo.edges:
        for u in (e.a, e.b):
            if topo.is_switch(u):
                w = weights[i % len(weights)]
                i += 1
            else:
                w = 0.0
            adj[u].append((e.other(u), e.port_of(u), w))
    for lst in adj.values():
        lst.sort(key=lambda t: (t[1], t[0]))
    return QueueLevelGraph(class_q, adj, frozenset(topo.hosts))


def mesh_with_hosts(n):
    b = Builder().switch(*[f"s{i}" for i in range(n)])
    for i in range(n):
        for j in range(i + 1, n):
            b.link(f"s{i}", f"s{j}")
    b.host("hx", "s0").host("hy", f"s{n - 1}")
    return b.build()


weights_st = st.lists(st.sampled_from([1.0, 2.0, 3.5, 7.0, math.inf]) | st.floats(0.1, 10.0),
                      min_size=1, max_size=30)


@settings(max_examples=80)
@given(st.integers(2, 5), weights_st)
def test_shortest_path_matches_enumeration(n, weights):
    topo = mesh_with_hosts(n)
    g = weighted_graph(topo, weights)
    paths = simple_paths(g.adj, "hx", "hy")
    got = shortest_path(g, "hx", "hy")
    if not paths:
        assert got is None
        return
    best = min(c for _, c in paths)
    assert got.weight_sum_s == pytest.approx(best)
    assert got.nodes[0] == "hx" and got.nodes[-1] == "hy"
    assert all(sw.startswith("s") for sw, _ in got.hops)


@settings(max_examples=80)
@given(st.integers(2, 5), weights_st, st.integers(1, 8))
def test_yen_returns_k_cheapest_simple_paths(n, weights, k):
    topo = mesh_with_hosts(n)
    g = weighted_graph(topo, weights)
    costs = sorted(c for _, c in simple_paths(g.adj, "hx", "hy"))
    got = yen(g.adj, "hx", "hy", k)
    assert len(got) == min(k, len(costs))
    assert [p.cost for p in got] == pytest.approx(costs[: len(got)])
    assert len({p.steps for p in got}) == len(got)
    for p in got:
        assert len(set(p.nodes)) == len(p.nodes)
    assert [p.sort_key() for p in got] == sorted(p.sort_key() for p in got)


def test_yen_on_triangle_finds_both_routes():
    paths = yen_k_paths(triangle(), "hA1", "hC1", 3)
    assert [p.nodes for p in paths] == [("hA1", "A", "C", "hC1"), ("hA1", "A", "B", "C", "hC1")]


def test_yen_on_line_finds_one_route():
    assert len(yen_k_paths(line(5), "h_first", "h_last", 4)) == 1


def test_yen_hop_count_matches_enumeration():
    topo = mesh_with_hosts(5)
    costs = sorted(c for _, c in simple_paths(unit_adjacency(topo), "hx", "hy"))
    assert [p.cost for p in yen_k_paths(topo, "hx", "hy", 20)] == costs[:20]


def test_hops_drop_host_uplink():
    topo = triangle()
    p = yen_k_paths(topo, "hA1", "hC1", 1)[0]
    hops = hops_of(topo, p)
    assert [sw for sw, _ in hops] == ["A", "C"]
    # last hop is the egress toward the destination host
    assert topo.neighbor(*hops[-1]) == "hC1"
    assert [e.b for e in path_edges(topo, hops)][-1] == "hC1"


def test_same_host_is_empty_path():
    g = weighted_graph(triangle(), [1.0])
    c = shortest_path(g, "hA1", "hA1")
    assert c.hops == () and c.weight_sum_s == 0.0


def test_unreachable_through_saturated_queues():
    g = weighted_graph(line(3), [math.inf])
    assert shortest_path(g, "h_first", "h_last") is None
    assert yen(g.adj, "h_first", "h_last", 3) == []


def test_unknown_endpoints():
    topo = triangle()
    g = weighted_graph(topo, [1.0])
    with pytest.raises(UnknownEndpoint):
        shortest_path(g, "hA1", "ghost")
    with pytest.raises(UnknownEndpoint):
        yen_k_paths(topo, "ghost", "hA1", 2)
    with pytest.raises(UnknownEndpoint):
        rank_candidates(topo, [g], [], "ghost", "hA1")


def test_k_must_be_positive():
    topo = triangle()
    with pytest.raises(InvalidParameter):
        yen_k_paths(topo, "hA1", "hC1", 0)
    with pytest.raises(InvalidParameter):
        rank_candidates(topo, [weighted_graph(topo, [1.0])], [], "hA1", "hC1", 0)


def test_ranking_is_sorted_over_all_classes():
    state = NetworkState(triangle(), config=ControllerConfig(management=False))
    cands = rank_candidates(state.topology, state.queue_graphs(), state.catalog.configured(), "hA1", "hC1")
    assert len(cands) == 2 * state.num_classes
    keys = [c.sort_key() for c in cands]
    assert keys == sorted(keys)
    # the lowest class has no blocking term, so it is cheapest on an empty network
    assert cands[0].class_q == state.lowest_class
    assert [sw for sw, _ in cands[0].hops] == ["A", "C"]


def test_ranking_tie_prefers_lower_priority():
    topo = triangle()
    graphs = [weighted_graph(topo, [1.0], q) for q in range(3)]
    cands = rank_candidates(topo, graphs, [], "hA1", "hC1", 1)
    assert [c.class_q for c in cands] == [2, 1, 0]


def test_candidates_carry_containing_tree():
    topo = triangle()
    cat = TreeCatalog(topo)
    t0 = cat.tree(0)
    assign_vlan(cat, t0)
    graphs = [weighted_graph(topo, [1.0])]
    for c in rank_candidates(topo, graphs, cat.configured(), "hA1", "hC1"):
        inside = containing_tree(topo, [t0], c.hops) == 0
        assert (c.tree_index == 0) == inside
    assert {c.tree_index for c in rank_candidates(topo, graphs, [], "hA1", "hC1")} == {None}


@dataclass
class FakeFlow:
    path: tuple
    compensated_rate_bps: float
    pinned: bool = False


def test_reroute_candidates_share_a_link_and_sort_by_rate():
    topo = triangle()
    c = topo.access_switch("hC1")
    a_to_c = next(e.port_of("A") for e in topo.links("A") if e.other("A") == "C")
    b_to_c = next(e.port_of("B") for e in topo.links("B") if e.other("B") == "C")
    a_to_b = next(e.port_of("A") for e in topo.links("A") if e.other("A") == "B")
    selected = (("A", a_to_c), ("C", c[1]))
    flows = {
        "small": FakeFlow((("A", a_to_c), ("C", c[1])), 1e6),
        "big": FakeFlow((("A", a_to_c), ("C", topo.access_switch("hC2")[1])), 5e6),
        "tie": FakeFlow((("A", a_to_c),), 5e6),
        "pinned": FakeFlow((("A", a_to_c),), 9e6, pinned=True),
        "elsewhere": FakeFlow((("A", a_to_b), ("B", b_to_c)), 9e6),
    }
    assert reroute_candidates(topo, flows, selected) == ["big", "tie", "small"]
    assert reroute_candidates(topo, flows, ()) == []


def test_reroute_candidates_ignore_direction():
    topo = triangle()
    a_to_c = next(e.port_of("A") for e in topo.links("A") if e.other("A") == "C")
    c_to_a = next(e.port_of("C") for e in topo.links("C") if e.other("C") == "A")
    flows = {"back": FakeFlow((("C", c_to_a),), 1e6)}
    assert reroute_candidates(topo, flows, (("A", a_to_c),)) == ["back"]


def test_physical_paths_on_mesh():
    topo = mesh(4)
    paths = yen_k_paths(topo, "s0", "s3", 10)
    assert len(paths) == 5  # direct, two of length 2, two of length 3
    assert [len(p.ports) for p in paths] == [1, 2, 2, 3, 3]
