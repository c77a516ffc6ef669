"""Admission pipeline: check a path, embed with optional rerouting, remove.

All mutations go through :func:`embed`, :func:`remove` and
:func:`init_management`. Each builds a complete tentative flow set, evaluates
it from scratch and only then swaps it into the state, so a rejection never
touches the state.
"""

from __future__ import annotations

import dataclasses
import enum
import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Mapping

from ..errors import (
    DepthExceeded,
    DuplicateFlowId,
    InvalidParameter,
    UnknownEndpoint,
    UnknownFlow,
    VlanExhausted,
)
from ..iface.records import HostConfigRecord, SwitchConfigRecord, host_records, switch_records
from ..netcalc import ArrivalCurve
from ..routing import (
    PathCandidate,
    hops_of,
    rank_candidates,
    reroute_candidates,
    switch_path_edges,
    yen_k_paths,
)
from ..topology import VLAN_MAX, SpanningTree, assign_vlan, bridge_priorities
from .analysis import Analysis, Load
from .state import EmbeddedFlow, FlowRequest, NetworkState, queue_graphs

log = logging.getLogger(__name__)

MANAGEMENT_PREFIX = "mgmt:"


class Reason(str, enum.Enum):
    DEADLINE_INFEASIBLE = "DeadlineInfeasible"
    BUFFER_OVERFLOW = "BufferOverflow"
    UNROUTABLE = "Unroutable"
    VLAN_EXHAUSTED = "VlanExhausted"
    WOULD_VIOLATE_EXISTING = "WouldViolateExisting"


@dataclass(frozen=True)
class Decision:
    accepted: bool
    reason: Reason | None
    delay_bound_s: float
    per_hop_backlogs: tuple[float, ...]
    analysis: Analysis = field(repr=False, compare=False)
    detail: str = ""


@dataclass
class EmbedResult:
    accepted: bool
    flow_id: str
    reason: Reason | None = None
    vlan_id: int | None = None
    class_q: int | None = None
    path: tuple[tuple[str, int], ...] | None = None
    delay_bound_s: float | None = None
    rerouted_flows: list[tuple[str, tuple[tuple[str, int], ...]]] = field(default_factory=list)
    host_records: list[HostConfigRecord] = field(default_factory=list)
    switch_records: list[SwitchConfigRecord] = field(default_factory=list)
    detail: str = ""

    def __post_init__(self) -> None:
        if self.accepted == (self.reason is not None):
            raise ValueError("reason must be present exactly when the flow is rejected")

    def to_dict(self) -> dict:
        d = {"accepted": self.accepted, "flow_id": self.flow_id}
        if self.accepted:
            d.update(
                vlan_id=self.vlan_id,
                class_q=self.class_q,
                pcp=None if self.class_q is None else 7 - self.class_q,
                path=[[sw, p] for sw, p in (self.path or ())],
                delay_bound_us=None if self.delay_bound_s is None else self.delay_bound_s * 1e6,
                rerouted_flows=[{"flow_id": f, "path": [[sw, p] for sw, p in hops]}
                                for f, hops in self.rerouted_flows],
                host_records=[r.to_dict() for r in self.host_records],
                switch_records=[r.to_dict() for r in self.switch_records],
            )
        else:
            d.update(reason=self.reason.value, detail=self.detail)
        return d


def _reject(flow_id: str, reason: Reason, detail: str = "") -> EmbedResult:
    return EmbedResult(False, flow_id, reason, detail=detail)


def _judge(state: NetworkState, loads: Mapping[str, Load], new_ids: set[str],
           deadlines: Mapping[str, float]) -> tuple[Reason | None, Analysis, str]:
    """Evaluate a complete tentative flow set; return the first failing rule."""
    analysis = state.evaluate(loads)
    for fid in sorted(new_ids):
        d = analysis.flow_delay[fid]
        if math.isinf(d) or d > deadlines[fid]:
            return Reason.DEADLINE_INFEASIBLE, analysis, f"{fid}: bound {d:.9g} s > deadline {deadlines[fid]:.9g} s"
    for key, rep in sorted(analysis.queues.items()):
        if not rep.overloaded and rep.overflows:
            return (Reason.BUFFER_OVERFLOW, analysis,
                    f"queue {key}: backlog {rep.backlog_bits:.9g} b > buffer {rep.buffer_bits:.9g} b")
    for fid in sorted(set(loads) - new_ids):
        d = analysis.flow_delay[fid]
        if math.isinf(d) or d > deadlines[fid]:
            return (Reason.WOULD_VIOLATE_EXISTING, analysis,
                    f"existing flow {fid}: bound {d:.9g} s > deadline {deadlines[fid]:.9g} s")
    return None, analysis, ""


def _deadlines(state: NetworkState) -> dict[str, float]:
    return {fid: f.request.deadline_s for fid, f in state.flows.items()}


def _new_load(state: NetworkState, req: FlowRequest, class_q: int, hops) -> Load:
    return Load(req.id, ArrivalCurve(state.compensated_rate(req), req.burst_bits), class_q, tuple(hops),
                8.0 * req.packet_bytes)


def check_path(state: NetworkState, flow: FlowRequest, candidate: PathCandidate) -> Decision:
    """Would ``flow`` on ``candidate`` keep every guarantee? Never mutates ``state``."""
    _validate_hops(state, flow, candidate.hops)
    loads = state.loads()
    loads[flow.id] = _new_load(state, flow, candidate.class_q, candidate.hops)
    deadlines = _deadlines(state)
    deadlines[flow.id] = flow.deadline_s
    reason, analysis, detail = _judge(state, loads, {flow.id}, deadlines)
    backlogs = analysis.per_hop_backlogs(flow.id, loads[flow.id])
    return Decision(reason is None, reason, analysis.flow_delay[flow.id], backlogs, analysis, detail)


def _validate_hops(state: NetworkState, req: FlowRequest, hops) -> None:
    topo = state.topology
    if not hops:
        raise InvalidParameter("a host-to-host path has at least one switch egress")
    src_sw, _ = topo.access_switch(req.src)
    if hops[0][0] != src_sw:
        raise InvalidParameter("path must start at the source's access switch")
    node = src_sw
    for sw, port in hops:
        if sw != node:
            raise InvalidParameter(f"path is not contiguous at {sw}")
        node = topo.neighbor(sw, port)
    if node != req.dst:
        raise InvalidParameter("path does not end at the destination host")


# ---------------------------------------------------------------------------
# tree planning


@dataclass
class _TreePlan:
    """Trees a tentative commit would need to configure, in order."""

    state: NetworkState
    new_trees: list[SpanningTree] = field(default_factory=list)

    def resolve(self, hops) -> SpanningTree:
        edges = switch_path_edges(self.state.topology, hops)
        for t in self.state.catalog.configured() + self.new_trees:
            if t.contains(edges):
                return t
        tree = self.state.catalog.find_containing(edges)
        bridge_priorities(tree)
        if len(self.state.catalog.configured()) + len(self.new_trees) >= VLAN_MAX:
            raise VlanExhausted("no VLAN id left for a new spanning tree")
        self.new_trees.append(tree)
        return tree

    def fork(self) -> _TreePlan:
        return _TreePlan(self.state, list(self.new_trees))

    def commit(self) -> dict[int, int]:
        """Configure the planned trees; tree index -> VLAN id for every configured tree."""
        for t in self.new_trees:
            assign_vlan(self.state.catalog, t)
        return {t.index: t.vlan_id for t in self.state.catalog.configured()}


def _commit(state: NetworkState, flows: dict[str, EmbeddedFlow], tree_of: Mapping[str, int],
            plan: _TreePlan, analysis: Analysis) -> None:
    vlan_by_tree = plan.commit()
    for fid, tree_index in tree_of.items():
        flows[fid] = dataclasses.replace(flows[fid], vlan_id=vlan_by_tree[tree_index])
    state.set_flows(flows, analysis)


def _embedded(state: NetworkState, req: FlowRequest, class_q: int, hops, pinned: bool = False) -> EmbeddedFlow:
    return EmbeddedFlow(req, state.compensated_rate(req), class_q, 0, tuple(hops), (), 0.0, pinned)


# ---------------------------------------------------------------------------
# embed


@dataclass
class _Trial:
    """Outcome of trying a ranked candidate list on top of a fixed flow set."""

    candidate: PathCandidate | None = None
    tree: SpanningTree | None = None
    analysis: Analysis | None = None
    plan: _TreePlan | None = None
    reason: Reason | None = None
    detail: str = ""

    def note(self, reason: Reason, detail: str) -> None:
        if self.reason is None:
            self.reason, self.detail = reason, detail


def _try_candidates(state: NetworkState, req: FlowRequest, cands, base_flows: Mapping[str, EmbeddedFlow],
                    plan: _TreePlan) -> _Trial:
    """Admit ``req`` on the first feasible candidate; otherwise keep the first failure reason."""
    out = _Trial()
    deadlines = {fid: f.request.deadline_s for fid, f in base_flows.items()}
    deadlines[req.id] = req.deadline_s
    for cand in cands:
        trial = plan.fork()
        try:
            tree = trial.resolve(cand.hops)
        except VlanExhausted as exc:
            out.note(Reason.VLAN_EXHAUSTED, str(exc))
            continue
        except DepthExceeded as exc:
            out.note(Reason.UNROUTABLE, str(exc))
            continue
        loads = {fid: f.load() for fid, f in base_flows.items()}
        loads[req.id] = _new_load(state, req, cand.class_q, cand.hops)
        reason, analysis, detail = _judge(state, loads, {req.id}, deadlines)
        if reason is None:
            out.candidate, out.tree, out.analysis, out.plan = cand, tree, analysis, trial
            return out
        out.note(reason, detail)
    return out


def _check_new_request(state: NetworkState, req: FlowRequest) -> None:
    if req.id in state.flows:
        raise DuplicateFlowId(f"flow id {req.id!r} already embedded")
    state.host_of(req.src)
    state.host_of(req.dst)
    if req.max_packet_bytes > state.config.max_packet_bytes:
        raise InvalidParameter(
            f"max_packet_bytes {req.max_packet_bytes} exceeds the configured limit {state.config.max_packet_bytes}"
        )


def embed(state: NetworkState, flow: FlowRequest) -> EmbedResult:
    """Admit ``flow`` on the best feasible candidate, rerouting one flow if needed."""
    _check_new_request(state, flow)
    topo = state.topology
    cands = rank_candidates(topo, state.queue_graphs(), state.catalog.configured(),
                            flow.src, flow.dst, state.config.k_per_class)
    rate = state.compensated_rate(flow)
    cands = [c for c in cands if _rate_fits(state, state.analysis, c, rate)]
    if not cands:
        return _reject(flow.id, Reason.UNROUTABLE, "no path with spare capacity for this rate")

    trial = _try_candidates(state, flow, cands, state.flows, _TreePlan(state))
    if trial.candidate is not None:
        return _accept(state, flow, trial, {})

    if state.config.rerouting and state.config.max_moves > 0:
        moved = _reroute(state, flow)
        if moved is not None:
            return moved
    return _reject(flow.id, trial.reason, trial.detail)


def _accept(state: NetworkState, flow: FlowRequest, trial: _Trial, moves: Mapping[str, tuple]) -> EmbedResult:
    cand = trial.candidate
    flows = dict(state.flows)
    flows[flow.id] = _embedded(state, flow, cand.class_q, cand.hops)
    tree_of = {flow.id: trial.tree.index}
    for fid, (hops, mtree) in moves.items():
        flows[fid] = dataclasses.replace(flows[fid], path=tuple(hops))
        tree_of[fid] = mtree.index
    _commit(state, flows, tree_of, trial.plan, trial.analysis)
    f = state.flows[flow.id]
    touched = [flow.id, *sorted(moves)]
    log.info("admitted %s on class %d VLAN %d, bound %.3f us", flow.id, f.class_q, f.vlan_id,
             f.delay_bound_s * 1e6)
    return EmbedResult(
        True, flow.id, None, f.vlan_id, f.class_q, f.path, f.delay_bound_s,
        [(fid, state.flows[fid].path) for fid in sorted(moves)],
        host_records(state, touched), switch_records(state),
    )


def _rate_fits(state: NetworkState, analysis: Analysis, cand: PathCandidate, rate: float) -> bool:
    """Every hop keeps enough capacity for ``rate`` after the classes at or above ``cand.class_q``."""
    for sw, port in cand.hops:
        used = sum(analysis.aggregate(sw, port, q).rate_bps for q in range(cand.class_q + 1))
        if used + rate > state.port_service(sw, port).rate_bps:
            return False
    return True


def _selected_hops(state: NetworkState, flow: FlowRequest):
    paths = yen_k_paths(state.topology, flow.src, flow.dst, 1)
    return hops_of(state.topology, paths[0]) if paths else ()


def _reroute(state: NetworkState, flow: FlowRequest) -> EmbedResult | None:
    """Move one existing flow to a Yen alternative so that ``flow`` fits."""
    topo = state.topology
    selected = _selected_hops(state, flow)
    for fid in reroute_candidates(topo, state.flows, selected):
        mover = state.flows[fid]
        for alt in yen_k_paths(topo, mover.request.src, mover.request.dst, state.config.reroute_k):
            hops = hops_of(topo, alt)
            if hops == mover.path:
                continue
            plan = _TreePlan(state)
            try:
                mtree = plan.resolve(hops)
            except (VlanExhausted, DepthExceeded):
                continue
            base = dict(state.flows)
            base[fid] = dataclasses.replace(mover, path=hops)
            loads = {k: f.load() for k, f in base.items()}
            reason, moved_analysis, _ = _judge(state, loads, set(), {k: f.request.deadline_s for k, f in base.items()})
            if reason is not None:
                continue
            graphs = queue_graphs(state, moved_analysis)
            trees = state.catalog.configured() + plan.new_trees
            cands = rank_candidates(topo, graphs, trees, flow.src, flow.dst, state.config.k_per_class)
            rate = state.compensated_rate(flow)
            cands = [c for c in cands if _rate_fits(state, moved_analysis, c, rate)]
            trial = _try_candidates(state, flow, cands, base, plan)
            if trial.candidate is not None:
                log.info("rerouting %s to admit %s", fid, flow.id)
                return _accept(state, flow, trial, {fid: (hops, mtree)})
    return None


# ---------------------------------------------------------------------------
# removal and management


def remove(state: NetworkState, flow_id: str) -> None:
    if flow_id not in state.flows:
        raise UnknownFlow(f"unknown flow {flow_id!r}")
    flows = {k: f for k, f in state.flows.items() if k != flow_id}
    analysis = state.evaluate({k: f.load() for k, f in flows.items()})
    state.set_flows(flows, analysis)


def _tree_hops(state: NetworkState, tree: SpanningTree, start: str, goal: str):
    """Egress hops along the unique tree path between two switches."""
    parent: dict[str, tuple[str, int] | None] = {start: None}
    q = deque([start])
    adj: dict[str, list] = {n: [] for n in tree.nodes}
    for e in sorted(tree.edges):
        adj[e.a].append((e.b, e.a_port))
        adj[e.b].append((e.a, e.b_port))
    while q:
        u = q.popleft()
        for v, port in adj[u]:
            if v not in parent:
                parent[v] = (u, port)
                q.append(v)
    hops = []
    node = goal
    while parent[node] is not None:
        u, port = parent[node]
        hops.append((u, port))
        node = u
    return tuple(reversed(hops))


def init_management(state: NetworkState) -> EmbedResult:
    """Embed in-band management: one lowest-priority flow per switch along tree 0 (VLAN 1)."""
    cfg = state.config
    if not cfg.management:
        return EmbedResult(True, "management", detail="management traffic disabled")
    if state.management_initialized:
        raise InvalidParameter("management traffic is already embedded")
    ctrl = state.controller_host()
    access, _ = state.topology.access_switch(ctrl)
    plan = _TreePlan(state)
    tree0 = state.catalog.tree(0)
    configured = {t.index for t in state.catalog.configured()}
    if tree0.index not in configured:
        bridge_priorities(tree0)
        plan.new_trees.append(tree0)
    flows = dict(state.flows)
    new_ids = set()
    tree_of = {}
    for sw in state.topology.switches:
        hops = _tree_hops(state, tree0, access, sw)
        if not hops:
            continue
        fid = MANAGEMENT_PREFIX + sw
        if fid in flows:
            raise DuplicateFlowId(fid)
        req = FlowRequest(fid, ctrl, sw, cfg.management_rate_bps, cfg.management_burst_bytes,
                          cfg.management_deadline_s, cfg.management_packet_bytes)
        flows[fid] = _embedded(state, req, state.lowest_class, hops, pinned=True)
        new_ids.add(fid)
        tree_of[fid] = tree0.index
    loads = {k: f.load() for k, f in flows.items()}
    reason, analysis, detail = _judge(state, loads, new_ids, {k: f.request.deadline_s for k, f in flows.items()})
    if reason is not None:
        return _reject("management", reason, detail)
    _commit(state, flows, tree_of, plan, analysis)
    state.management_initialized = True
    return EmbedResult(True, "management", None, state.catalog.vlan_of(tree0.index), state.lowest_class,
                       host_records=host_records(state, sorted(new_ids)), switch_records=switch_records(state))


def is_management(flow_id: str) -> bool:
    return flow_id.startswith(MANAGEMENT_PREFIX)
