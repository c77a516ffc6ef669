"""Physical topology, spanning-tree catalog and per-class queue-level graphs."""

from __future__ import annotations

import logging
import math
from collections import defaultdict, deque
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Protocol

from .devicemodel import DEFAULT_PROFILE_NAME
from .errors import (
    ConflictingReports,
    DepthExceeded,
    DisconnectedTopology,
    HostDegreeViolation,
    InvalidParameter,
    SchemaMismatch,
    ServiceOverload,
    TopologyError,
    UnknownEndpoint,
    VlanExhausted,
)
from .netcalc import ArrivalCurve, ServiceCurve, delay_bound, residual_spq

log = logging.getLogger(__name__)

SWITCH = "switch"
HOST = "host"
TOPOLOGY_SCHEMA_VERSION = 1
VLAN_MIN = 1
VLAN_MAX = 4094
PRIORITY_STEP = 4096
INF = math.inf


@dataclass(frozen=True)
class Node:
    id: str
    kind: str
    profile: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in (SWITCH, HOST):
            raise InvalidParameter(f"node kind must be 'switch' or 'host', got {self.kind!r}")


@dataclass(frozen=True, order=True)
class Edge:
    """Undirected link, stored with ``(a, a_port) < (b, b_port)``."""

    a: str
    a_port: int
    b: str
    b_port: int
    rate_bps: float = field(compare=False)

    @classmethod
    def make(cls, a: str, a_port: int, b: str, b_port: int, rate_bps: float) -> Edge:
        if (b, b_port) < (a, a_port):
            a, a_port, b, b_port = b, b_port, a, a_port
        return cls(a, int(a_port), b, int(b_port), float(rate_bps))

    def other(self, node: str) -> str:
        return self.b if node == self.a else self.a

    def port_of(self, node: str) -> int:
        return self.a_port if node == self.a else self.b_port

    def to_dict(self) -> dict:
        return {"a": self.a, "a_port": self.a_port, "b": self.b, "b_port": self.b_port,
                "rate_bps": self.rate_bps}


@dataclass(frozen=True)
class NeighborReport:
    """One LLDP neighbor entry as seen by ``reporter``."""

    reporter: str
    a: str
    a_port: int
    b: str
    b_port: int
    rate_bps: float
    a_kind: str | None = None
    b_kind: str | None = None

    @classmethod
    def from_dict(cls, d: Mapping) -> NeighborReport:
        try:
            return cls(
                reporter=str(d.get("reporter", d["a"])),
                a=str(d["a"]), a_port=int(d["a_port"]),
                b=str(d["b"]), b_port=int(d["b_port"]),
                rate_bps=float(d["rate_bps"]),
                a_kind=d.get("a_kind"), b_kind=d.get("b_kind"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaMismatch(f"bad neighbor report: {exc}") from exc


class PhysicalTopology:
    """Validated, immutable view of switches, hosts and links."""

    def __init__(self, nodes: Iterable[Node], edges: Iterable[Edge]):
        self.nodes: dict[str, Node] = {n.id: n for n in sorted(nodes, key=lambda n: n.id)}
        self.edges: tuple[Edge, ...] = tuple(sorted(edges))
        self._by_port: dict[tuple[str, int], Edge] = {}
        self._adj: dict[str, list[Edge]] = {n: [] for n in self.nodes}
        for e in self.edges:
            for node, port in ((e.a, e.a_port), (e.b, e.b_port)):
                if node not in self.nodes:
                    raise TopologyError(f"link references unknown node {node!r}")
                if (node, port) in self._by_port:
                    raise ConflictingReports(f"port {port} of {node} used by two links")
                self._by_port[(node, port)] = e
                self._adj[node].append(e)
        for node, lst in self._adj.items():
            lst.sort(key=lambda e, node=node: e.port_of(node))
        self._validate()

    def _validate(self) -> None:
        for e in self.edges:
            if e.a == e.b:
                raise TopologyError(f"self-loop on {e.a}")
            if e.rate_bps <= 0:
                raise TopologyError(f"link {e.a}:{e.a_port}-{e.b}:{e.b_port} has non-positive rate")
        for n in self.nodes.values():
            if n.kind == HOST and len(self._adj[n.id]) != 1:
                raise HostDegreeViolation(f"host {n.id} has degree {len(self._adj[n.id])}, expected 1")
            if n.kind == HOST and self.nodes[self._adj[n.id][0].other(n.id)].kind != SWITCH:
                raise HostDegreeViolation(f"host {n.id} must attach to a switch")
        if self.nodes and not _connected(list(self.nodes), self.edges):
            raise DisconnectedTopology("topology is not connected")

    # -- queries ---------------------------------------------------------
    @property
    def switches(self) -> list[str]:
        return [n.id for n in self.nodes.values() if n.kind == SWITCH]

    @property
    def hosts(self) -> list[str]:
        return [n.id for n in self.nodes.values() if n.kind == HOST]

    def is_switch(self, node: str) -> bool:
        return node in self.nodes and self.nodes[node].kind == SWITCH

    def links(self, node: str) -> list[Edge]:
        return self._adj[node]

    def edge_at(self, node: str, port: int) -> Edge:
        try:
            return self._by_port[(node, port)]
        except KeyError:
            raise UnknownEndpoint(f"no link on {node} port {port}") from None

    def neighbor(self, node: str, port: int) -> str:
        return self.edge_at(node, port).other(node)

    def access_switch(self, host: str) -> tuple[str, int]:
        """(switch, switch port) the host is attached to."""
        if host not in self.nodes or self.nodes[host].kind != HOST:
            raise UnknownEndpoint(f"unknown host {host!r}")
        e = self._adj[host][0]
        sw = e.other(host)
        return sw, e.port_of(sw)

    def switch_edges(self) -> list[Edge]:
        return [e for e in self.edges if self.is_switch(e.a) and self.is_switch(e.b)]

    def active_ports(self, switch: str) -> int:
        return len(self._adj[switch])

    def profile_name(self, switch: str) -> str:
        return self.nodes[switch].profile or DEFAULT_PROFILE_NAME

    # -- serialization ---------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "schema_version": TOPOLOGY_SCHEMA_VERSION,
            "nodes": [
                {"id": n.id, "kind": n.kind, "profile": n.profile} for n in self.nodes.values()
            ],
            "links": [e.to_dict() for e in self.edges],
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> PhysicalTopology:
        if doc.get("schema_version", TOPOLOGY_SCHEMA_VERSION) != TOPOLOGY_SCHEMA_VERSION:
            raise SchemaMismatch(f"unsupported topology schema_version {doc.get('schema_version')!r}")
        try:
            nodes = [
                Node(str(n["id"]), str(n["kind"]),
                     n.get("profile") if n["kind"] == SWITCH else None)
                for n in doc["nodes"]
            ]
            edges = [
                Edge.make(str(l["a"]), int(l["a_port"]), str(l["b"]), int(l["b_port"]),
                          float(l["rate_bps"]))
                for l in doc["links"]
            ]
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaMismatch(f"bad topology document: {exc}") from exc
        return cls(nodes, edges)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PhysicalTopology):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def __repr__(self) -> str:
        return f"<PhysicalTopology {len(self.switches)} switches, {len(self.hosts)} hosts, {len(self.edges)} links>"


def _connected(nodes: list[str], edges: Iterable[Edge]) -> bool:
    if not nodes:
        return True
    adj: dict[str, list[str]] = {n: [] for n in nodes}
    for e in edges:
        adj[e.a].append(e.b)
        adj[e.b].append(e.a)
    seen = {nodes[0]}
    stack = [nodes[0]]
    while stack:
        for v in adj[stack.pop()]:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return len(seen) == len(nodes)


def ingest_lldp(
    reports: Iterable[NeighborReport | Mapping],
    default_profile: str = DEFAULT_PROFILE_NAME,
    profiles: Mapping[str, str] | None = None,
) -> PhysicalTopology:
    """Build a topology from LLDP neighbor reports.

    Node kinds come from the reports' capability fields (``a_kind``/``b_kind``)
    and default to switch. A link reported by only one of its ends is accepted
    with a warning.
    """
    kinds: dict[str, str] = {}
    links: dict[tuple[tuple[str, int], tuple[str, int]], Edge] = {}
    reporters: dict[tuple, set[str]] = defaultdict(set)

    def note_kind(node: str, kind: str | None) -> None:
        if kind is None:
            kinds.setdefault(node, "")
            return
        if kinds.get(node) and kinds[node] != kind:
            raise ConflictingReports(f"node {node} reported as both {kinds[node]} and {kind}")
        kinds[node] = kind

    for raw in reports:
        r = raw if isinstance(raw, NeighborReport) else NeighborReport.from_dict(raw)
        note_kind(r.a, r.a_kind)
        note_kind(r.b, r.b_kind)
        e = Edge.make(r.a, r.a_port, r.b, r.b_port, r.rate_bps)
        key = ((e.a, e.a_port), (e.b, e.b_port))
        prev = links.get(key)
        if prev is not None and prev.rate_bps != e.rate_bps:
            raise ConflictingReports(
                f"link {e.a}:{e.a_port}-{e.b}:{e.b_port} reported at {prev.rate_bps:g} and {e.rate_bps:g} bps"
            )
        links[key] = e
        reporters[key].add(r.reporter)

    for key, who in reporters.items():
        if not {key[0][0], key[1][0]} <= who:
            log.warning("link %s:%d-%s:%d seen from one side only", key[0][0], key[0][1],
                        key[1][0], key[1][1])

    profiles = profiles or {}
    nodes = []
    for nid in sorted(kinds):
        kind = kinds[nid] or SWITCH
        nodes.append(Node(nid, kind, profiles.get(nid, default_profile) if kind == SWITCH else None))
    return PhysicalTopology(nodes, links.values())


# ---------------------------------------------------------------------------
# spanning trees


@dataclass(frozen=True)
class SpanningTree:
    index: int
    edges: frozenset[Edge]
    nodes: tuple[str, ...]
    root: str
    vlan_id: int | None = None
    configured: bool = False

    def __post_init__(self) -> None:
        if len(self.edges) != len(self.nodes) - 1:
            raise TopologyError("spanning tree edge count must be |switches| - 1")
        if not _connected(list(self.nodes), self.edges):
            raise TopologyError("spanning tree edges do not span the switches")
        if self.vlan_id is not None and not VLAN_MIN <= self.vlan_id <= VLAN_MAX:
            raise InvalidParameter(f"VLAN id {self.vlan_id} outside [1, 4094]")

    def contains(self, edges: Iterable[Edge]) -> bool:
        return all(e in self.edges for e in edges)

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "root": self.root,
            "vlan_id": self.vlan_id,
            "configured": self.configured,
            "edges": [e.to_dict() for e in sorted(self.edges)],
        }


def _tree_adjacency(nodes: Iterable[str], edges: Iterable[Edge]) -> dict[str, list[str]]:
    adj: dict[str, list[str]] = {n: [] for n in nodes}
    for e in edges:
        adj[e.a].append(e.b)
        adj[e.b].append(e.a)
    for v in adj.values():
        v.sort()
    return adj


def _bfs_depths(adj: Mapping[str, list[str]], root: str) -> dict[str, int]:
    depth = {root: 0}
    q = deque([root])
    while q:
        u = q.popleft()
        for v in adj[u]:
            if v not in depth:
                depth[v] = depth[u] + 1
                q.append(v)
    return depth


def choose_root(nodes: Iterable[str], edges: Iterable[Edge]) -> str:
    """Switch of minimum eccentricity in the tree; lowest id wins ties."""
    nodes = sorted(nodes)
    adj = _tree_adjacency(nodes, edges)
    return min(nodes, key=lambda n: (max(_bfs_depths(adj, n).values()), n))


def make_tree(index: int, nodes: Iterable[str], edges: Iterable[Edge], root: str | None = None) -> SpanningTree:
    nodes = tuple(sorted(nodes))
    edges = frozenset(edges)
    return SpanningTree(index, edges, nodes, root if root is not None else choose_root(nodes, edges))


def iter_spanning_trees(topo: PhysicalTopology) -> Iterator[frozenset[Edge]]:
    """Lazily yield every spanning tree of the switch subgraph.

    Grow-and-exclude enumeration: the partial tree is grown from the lowest
    switch by always taking the lowest frontier edge first; after that branch,
    the edge is excluded and the next frontier edge is tried, until the
    excluded edge turns out to be a bridge of what is left. Output order is a
    function of the lexicographic edge order only.
    """
    switches = sorted(topo.switches)
    if not switches:
        return
    edges = topo.switch_edges()
    n = len(switches)
    if n == 1:
        yield frozenset()
        return
    incident: dict[str, list[int]] = {s: [] for s in switches}
    for i, e in enumerate(edges):
        incident[e.a].append(i)
        incident[e.b].append(i)

    in_tree = {switches[0]}
    chosen: list[int] = []
    excluded: set[int] = set()

    def still_connected() -> bool:
        return _connected(switches, (edges[i] for i in range(len(edges)) if i not in excluded))

    def outside_end(i: int) -> str:
        e = edges[i]
        return e.b if e.a in in_tree else e.a

    def grow(frontier: list[int]) -> Iterator[frozenset[Edge]]:
        if len(chosen) == n - 1:
            yield frozenset(edges[i] for i in chosen)
            return
        frontier = list(frontier)
        newly_excluded: list[int] = []
        try:
            while frontier:
                i = frontier.pop(0)
                w = outside_end(i)
                chosen.append(i)
                in_tree.add(w)
                nxt = [f for f in frontier if w not in (edges[f].a, edges[f].b)]
                nxt.extend(
                    f for f in incident[w]
                    if f not in excluded and edges[f].other(w) not in in_tree
                )
                nxt.sort()
                yield from grow(nxt)
                in_tree.discard(w)
                chosen.pop()
                excluded.add(i)
                newly_excluded.append(i)
                if not still_connected():
                    break
        finally:
            excluded.difference_update(newly_excluded)

    start = sorted(incident[switches[0]])
    yield from grow(start)


def enumerate_spanning_trees(topo: PhysicalTopology, limit: int) -> list[SpanningTree]:
    if limit < 1:
        raise InvalidParameter("limit must be >= 1")
    out = []
    switches = topo.switches
    for i, edges in enumerate(iter_spanning_trees(topo)):
        if i >= limit:
            break
        out.append(make_tree(i, switches, edges))
    return out


def bridge_priorities(tree: SpanningTree, max_priorities: int = 16) -> dict[str, int]:
    """STP bridge priority per switch: BFS depth from the root times 4096."""
    depth = _bfs_depths(_tree_adjacency(tree.nodes, tree.edges), tree.root)
    deepest = max(depth.values())
    if deepest >= max_priorities:
        raise DepthExceeded(f"tree depth {deepest} needs more than {max_priorities} bridge priorities")
    return {n: d * PRIORITY_STEP for n, d in sorted(depth.items())}


def tree_containing(topo: PhysicalTopology, path_edges: Iterable[Edge]) -> frozenset[Edge]:
    """Some spanning tree that contains ``path_edges`` (Kruskal, path edges first)."""
    parent = {s: s for s in topo.switches}

    def find(x: str) -> str:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    out = []
    for e in list(path_edges) + topo.switch_edges():
        ra, rb = find(e.a), find(e.b)
        if ra != rb:
            parent[ra] = rb
            out.append(e)
    return frozenset(out)


class TreeCatalog:
    """Known spanning trees (lazily enumerated) and their VLAN assignments.

    Single writer: the controller owns the catalog and mutates it only on commit.
    """

    def __init__(self, topo: PhysicalTopology, search_limit: int = 20000):
        self.topo = topo
        self.search_limit = search_limit
        self._gen = iter_spanning_trees(topo)
        self._exhausted = False
        self._by_index: dict[int, SpanningTree] = {}
        self._by_edges: dict[frozenset[Edge], int] = {}
        self._next_index = 0
        self._vlans: dict[int, int] = {}  # vlan id -> tree index

    # -- discovery -------------------------------------------------------
    def _register(self, edges: frozenset[Edge]) -> SpanningTree:
        idx = self._by_edges.get(edges)
        if idx is not None:
            return self._by_index[idx]
        tree = make_tree(self._next_index, self.topo.switches, edges)
        self._by_index[tree.index] = tree
        self._by_edges[edges] = tree.index
        self._next_index += 1
        return tree

    def _pull(self) -> SpanningTree | None:
        while not self._exhausted:
            try:
                edges = next(self._gen)
            except StopIteration:
                self._exhausted = True
                return None
            if edges not in self._by_edges:
                return self._register(edges)
        return None

    def tree(self, index: int) -> SpanningTree:
        while index not in self._by_index:
            if self._pull() is None:
                raise IndexError(index)
        return self._by_index[index]

    def find_containing(self, path_edges: Iterable[Edge]) -> SpanningTree:
        """Configured tree first, then any known tree, then keep enumerating."""
        path_edges = list(path_edges)
        for t in self.configured():
            if t.contains(path_edges):
                return t
        for idx in sorted(self._by_index):
            if self._by_index[idx].contains(path_edges):
                return self._by_index[idx]
        pulled = 0
        while pulled < self.search_limit:
            t = self._pull()
            if t is None:
                break
            pulled += 1
            if t.contains(path_edges):
                return t
        return self._register(tree_containing(self.topo, path_edges))

    # -- VLANs -----------------------------------------------------------
    def configured(self) -> list[SpanningTree]:
        return [self._by_index[i] for _, i in sorted(self._vlans.items())]

    def vlan_of(self, tree_index: int) -> int | None:
        return self._by_index[tree_index].vlan_id if tree_index in self._by_index else None

    def tree_for_vlan(self, vlan_id: int) -> SpanningTree:
        return self._by_index[self._vlans[vlan_id]]

    def assign_vlan(self, tree: SpanningTree) -> int:
        return assign_vlan(self, tree)

    def to_dict(self) -> list[dict]:
        return [t.to_dict() for t in self.configured()]

    @classmethod
    def from_dict(cls, topo: PhysicalTopology, records: list[Mapping], search_limit: int = 20000) -> TreeCatalog:
        cat = cls(topo, search_limit)
        for r in records:
            edges = frozenset(
                Edge.make(e["a"], e["a_port"], e["b"], e["b_port"], e["rate_bps"]) for e in r["edges"]
            )
            for e in edges:
                if e not in topo.edges:
                    raise SchemaMismatch("configured tree references a link not in the topology")
            tree = SpanningTree(int(r["index"]), edges, tuple(sorted(topo.switches)), r["root"],
                                int(r["vlan_id"]), True)
            cat._by_index[tree.index] = tree
            cat._by_edges[edges] = tree.index
            cat._vlans[tree.vlan_id] = tree.index
            cat._next_index = max(cat._next_index, tree.index + 1)
        return cat


def assign_vlan(catalog: TreeCatalog, tree: SpanningTree) -> int:
    """Give ``tree`` the lowest free VLAN id in [1, 4094] and mark it configured."""
    current = catalog._by_index.get(tree.index)
    if current is not None and current.vlan_id is not None:
        raise InvalidParameter(f"tree {tree.index} already has VLAN {current.vlan_id}")
    if tree.edges not in catalog._by_edges:
        tree = catalog._register(tree.edges)
    vid = next((v for v in range(VLAN_MIN, VLAN_MAX + 1) if v not in catalog._vlans), None)
    if vid is None:
        raise VlanExhausted("all 4094 usable VLAN ids are assigned")
    configured = SpanningTree(tree.index, tree.edges, tree.nodes, tree.root, vid, True)
    catalog._by_index[tree.index] = configured
    catalog._vlans[vid] = tree.index
    return vid


# ---------------------------------------------------------------------------
# queue-level graphs


class QueueState(Protocol):
    """What the queue-level graph needs to know about the embedded load."""

    num_classes: int

    def port_service(self, switch: str, port: int) -> ServiceCurve: ...

    def queue_aggregate(self, switch: str, port: int, class_q: int) -> ArrivalCurve: ...

    def blocking_bits(self, switch: str, class_q: int) -> float: ...


@dataclass
class QueueLevelGraph:
    """Directed copy of the topology for one priority class.

    ``adj[u]`` lists ``(v, egress_port, weight_s)``; host uplinks carry weight 0
    since the host shaper is not a switch queue.
    """

    class_q: int
    adj: dict[str, list[tuple[str, int, float]]]
    hosts: frozenset[str] = frozenset()

    def weight(self, node: str, port: int) -> float:
        for _, p, w in self.adj[node]:
            if p == port:
                return w
        raise UnknownEndpoint(f"no edge out of {node} port {port}")

    def edges(self) -> Iterator[tuple[str, str, int, float]]:
        for u, lst in self.adj.items():
            for v, p, w in lst:
                yield u, v, p, w


def queue_weight(state: QueueState, switch: str, port: int, class_q: int) -> float:
    """Worst-case delay of class ``class_q`` at one egress port, ``inf`` when overloaded."""
    higher = ArrivalCurve.zero()
    for q in range(class_q):
        a = state.queue_aggregate(switch, port, q)
        higher = ArrivalCurve(higher.rate_bps + a.rate_bps, higher.burst_bits + a.burst_bits)
    try:
        res = residual_spq(state.port_service(switch, port), higher, state.blocking_bits(switch, class_q))
        return delay_bound(state.queue_aggregate(switch, port, class_q), res)
    except ServiceOverload:
        return INF


def build_queue_level_graph(topo: PhysicalTopology, class_q: int, network_state: QueueState) -> QueueLevelGraph:
    if not 0 <= class_q < network_state.num_classes:
        raise InvalidParameter(f"class {class_q} outside [0, {network_state.num_classes - 1}]")
    adj: dict[str, list[tuple[str, int, float]]] = {n: [] for n in topo.nodes}
    for e in topo.edges:
        for u in (e.a, e.b):
            port = e.port_of(u)
            w = queue_weight(network_state, u, port, class_q) if topo.is_switch(u) else 0.0
            adj[u].append((e.other(u), port, w))
    for lst in adj.values():
        lst.sort(key=lambda t: (t[1], t[0]))
    return QueueLevelGraph(class_q, adj, frozenset(topo.hosts))
