"""Path search over queue-level graphs and the physical topology."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Protocol, Sequence

from .errors import InvalidParameter, UnknownEndpoint
from .topology import Edge, PhysicalTopology, QueueLevelGraph, SpanningTree

DEFAULT_K = 4

Hop = tuple[str, int]  # (switch id, egress port)
Adjacency = Mapping[str, Sequence[tuple[str, int, float]]]


@dataclass(frozen=True)
class Path:
    """Node sequence plus the egress port used at every node but the last."""

    nodes: tuple[str, ...]
    ports: tuple[int, ...]
    cost: float

    @property
    def steps(self) -> tuple[Hop, ...]:
        return tuple(zip(self.nodes, self.ports))

    def sort_key(self) -> tuple:
        return (self.cost, len(self.ports), self.steps)


@dataclass(frozen=True)
class PathCandidate:
    class_q: int
    tree_index: int | None
    hops: tuple[Hop, ...]
    weight_sum_s: float
    nodes: tuple[str, ...] = ()

    def sort_key(self) -> tuple:
        # lower priority (larger class index) first on equal weight and length
        return (self.weight_sum_s, len(self.hops), -self.class_q, self.hops)


def _dijkstra(
    adj: Adjacency,
    src: str,
    dst: str,
    banned_steps: frozenset[Hop] = frozenset(),
    banned_nodes: frozenset[str] = frozenset(),
) -> Path | None:
    """Cheapest path, ties broken by hop count then lexicographic step sequence."""
    heap: list[tuple[float, int, tuple[Hop, ...], str]] = [(0.0, 0, (), src)]
    done: set[str] = set()
    while heap:
        cost, n, steps, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        if u == dst:
            nodes = tuple(s[0] for s in steps) + (dst,)
            return Path(nodes, tuple(s[1] for s in steps), cost)
        for v, port, w in adj[u]:
            if v in done or v in banned_nodes or (u, port) in banned_steps or math.isinf(w):
                continue
            heapq.heappush(heap, (cost + w, n + 1, steps + ((u, port),), v))
    return None


def _path_cost(adj: Adjacency, nodes: Sequence[str], ports: Sequence[int]) -> float:
    total = 0.0
    for u, p in zip(nodes, ports):
        total += next(w for _, q, w in adj[u] if q == p)
    return total


def _yen(adj: Adjacency, src: str, dst: str, k: int) -> list[Path]:
    first = _dijkstra(adj, src, dst)
    if first is None:
        return []
    found = [first]
    pending: list[tuple[tuple, Path]] = []
    seen = {first.steps}
    while len(found) < k:
        prev = found[-1]
        for i in range(len(prev.nodes) - 1):
            spur = prev.nodes[i]
            root_nodes = prev.nodes[: i + 1]
            root_ports = prev.ports[:i]
            banned = frozenset(
                (p.nodes[i], p.ports[i])
                for p in found
                if p.nodes[: i + 1] == root_nodes and p.ports[:i] == root_ports and len(p.ports) > i
            )
            spur_path = _dijkstra(adj, spur, dst, banned, frozenset(root_nodes[:-1]))
            if spur_path is None:
                continue
            nodes = root_nodes[:-1] + spur_path.nodes
            ports = root_ports + spur_path.ports
            cand = Path(nodes, ports, _path_cost(adj, nodes, ports))
            if cand.steps not in seen:
                seen.add(cand.steps)
                heapq.heappush(pending, (cand.sort_key(), cand))
        if not pending:
            break
        found.append(heapq.heappop(pending)[1])
    return found


def _check_endpoints(nodes: Iterable[str], *endpoints: str) -> None:
    known = set(nodes)
    for e in endpoints:
        if e not in known:
            raise UnknownEndpoint(f"unknown endpoint {e!r}")


def _candidate(g: QueueLevelGraph, path: Path, tree_index: int | None = None) -> PathCandidate:
    hops = tuple(s for s in path.steps if s[0] not in g.hosts)
    return PathCandidate(g.class_q, tree_index, hops, path.cost, path.nodes)


def shortest_path(g: QueueLevelGraph, src: str, dst: str) -> PathCandidate | None:
    _check_endpoints(g.adj, src, dst)
    if src == dst:
        return PathCandidate(g.class_q, None, (), 0.0, (src,))
    path = _dijkstra(g.adj, src, dst)
    return None if path is None else _candidate(g, path)


def path_edges(topo: PhysicalTopology, hops: Iterable[Hop]) -> list[Edge]:
    return [topo.edge_at(sw, port) for sw, port in hops]


def switch_path_edges(topo: PhysicalTopology, hops: Iterable[Hop]) -> list[Edge]:
    return [e for e in path_edges(topo, hops) if topo.is_switch(e.a) and topo.is_switch(e.b)]


def containing_tree(topo: PhysicalTopology, trees: Iterable[SpanningTree], hops: Iterable[Hop]) -> int | None:
    edges = switch_path_edges(topo, hops)
    for t in sorted(trees, key=lambda t: t.index):
        if t.contains(edges):
            return t.index
    return None


def rank_candidates(
    topo: PhysicalTopology,
    graphs: Sequence[QueueLevelGraph],
    configured_trees: Iterable[SpanningTree],
    src: str,
    dst: str,
    k_per_class: int = DEFAULT_K,
) -> list[PathCandidate]:
    """Up to ``k_per_class`` loop-free paths per class, pooled and sorted by total weight.

    Each candidate carries the index of the lowest configured tree containing
    it, or ``None`` when a new tree would have to be configured.
    """
    if k_per_class < 1:
        raise InvalidParameter("k_per_class must be >= 1")
    trees = list(configured_trees)
    out = []
    for g in graphs:
        _check_endpoints(g.adj, src, dst)
        for path in _yen(g.adj, src, dst, k_per_class):
            cand = _candidate(g, path)
            out.append(
                PathCandidate(cand.class_q, containing_tree(topo, trees, cand.hops), cand.hops,
                              cand.weight_sum_s, cand.nodes)
            )
    out.sort(key=PathCandidate.sort_key)
    return out


def unit_adjacency(topo: PhysicalTopology) -> dict[str, list[tuple[str, int, float]]]:
    adj: dict[str, list[tuple[str, int, float]]] = {n: [] for n in topo.nodes}
    for e in topo.edges:
        adj[e.a].append((e.b, e.a_port, 1.0))
        adj[e.b].append((e.a, e.b_port, 1.0))
    for lst in adj.values():
        lst.sort(key=lambda t: (t[1], t[0]))
    return adj


def yen_k_paths(topo: PhysicalTopology, src: str, dst: str, k: int) -> list[Path]:
    """``k`` shortest loop-free paths by hop count over the physical topology."""
    if k < 1:
        raise InvalidParameter("k must be >= 1")
    _check_endpoints(topo.nodes, src, dst)
    return _yen(unit_adjacency(topo), src, dst, k)


def hops_of(topo: PhysicalTopology, path: Path) -> tuple[Hop, ...]:
    """Switch egress hops of a physical path (host uplinks dropped)."""
    return tuple(s for s in path.steps if topo.is_switch(s[0]))


class FlowView(Protocol):
    path: tuple[Hop, ...]
    compensated_rate_bps: float
    pinned: bool


def reroute_candidates(
    topo: PhysicalTopology, flows: Mapping[str, FlowView], selected_hops: Iterable[Hop]
) -> list[str]:
    """Movable flows sharing at least one physical link with ``selected_hops``.

    Ordered by descending rate (ties by id) so the largest consumers move first.
    """
    selected = set(path_edges(topo, selected_hops))
    if not selected:
        return []
    hits = [
        (fid, f) for fid, f in flows.items()
        if not f.pinned and selected.intersection(path_edges(topo, f.path))
    ]
    hits.sort(key=lambda item: (-item[1].compensated_rate_bps, item[0]))
    return [fid for fid, _ in hits]
