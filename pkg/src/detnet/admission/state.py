"""Controller state: topology, tree catalog, embedded flows and cached bounds."""

from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

from ..devicemodel import (
    DEFAULT_TBF_TABLE,
    SwitchProfile,
    TbfDeviationTable,
    builtin_profiles,
    compensate_rate,
    per_queue_buffer,
)
from ..errors import DetnetError, InvalidParameter, SchemaMismatch, UnknownEndpoint
from ..netcalc import ArrivalCurve, ServiceCurve, port_service
from ..topology import (
    PhysicalTopology,
    QueueLevelGraph,
    TreeCatalog,
    assign_vlan,
    bridge_priorities,
    build_queue_level_graph,
)
from .analysis import Analysis, Load, PortModel, analyze

log = logging.getLogger(__name__)

STATE_SCHEMA_VERSION = 1
DEFAULT_MAX_PACKET_BYTES = 1542


@dataclass(frozen=True)
class ControllerConfig:
    k_per_class: int = 4
    reroute_k: int = 4
    rerouting: bool = True
    max_moves: int = 1
    preconfigure_trees: int = 1
    tbf_compensation: bool = True
    # largest frame any flow may send; also the non-preemptive blocking term
    max_packet_bytes: int = DEFAULT_MAX_PACKET_BYTES
    management: bool = True
    management_rate_bps: float = 1e6
    management_burst_bytes: int = 3000
    management_packet_bytes: int = 1500
    management_deadline_s: float = 1.0
    controller_host: str | None = None
    num_classes: int | None = None
    tree_search_limit: int = 20000
    fixpoint_max_rounds: int = 200
    fixpoint_rtol: float = 1e-12

    def __post_init__(self) -> None:
        if self.k_per_class < 1 or self.reroute_k < 1:
            raise InvalidParameter("k values must be >= 1")
        if self.max_moves < 0 or self.preconfigure_trees < 0:
            raise InvalidParameter("max_moves and preconfigure_trees must be >= 0")
        if self.max_packet_bytes < 1:
            raise InvalidParameter("max_packet_bytes must be >= 1")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> ControllerConfig:
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise SchemaMismatch(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class FlowRequest:
    """A host's request: rate in bit/s, burst and packet size in bytes, deadline in seconds."""

    id: str
    src: str
    dst: str
    rate_bps: float
    burst_bytes: int
    deadline_s: float
    max_packet_bytes: int = DEFAULT_MAX_PACKET_BYTES

    def __post_init__(self) -> None:
        if not self.id:
            raise InvalidParameter("flow id must be non-empty")
        if self.src == self.dst:
            raise InvalidParameter("src and dst must differ")
        if not self.rate_bps > 0:
            raise InvalidParameter("rate_bps must be > 0")
        if self.burst_bytes < 1 or self.max_packet_bytes < 1:
            raise InvalidParameter("burst_bytes and max_packet_bytes must be >= 1")
        if not self.deadline_s > 0:
            raise InvalidParameter("deadline_s must be > 0")
        if self.burst_bytes < self.max_packet_bytes:
            log.warning("flow %s: burst %d B is below max packet %d B", self.id,
                        self.burst_bytes, self.max_packet_bytes)

    @property
    def burst_bits(self) -> float:
        return self.burst_bytes * 8.0

    @property
    def packet_bytes(self) -> int:
        """Largest packet the shaper can actually release."""
        return min(self.max_packet_bytes, self.burst_bytes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> FlowRequest:
        try:
            return cls(
                id=str(d["id"]), src=str(d["src"]), dst=str(d["dst"]),
                rate_bps=float(d["rate_bps"]), burst_bytes=int(d["burst_bytes"]),
                deadline_s=float(d["deadline_s"]),
                max_packet_bytes=int(d.get("max_packet_bytes", DEFAULT_MAX_PACKET_BYTES)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaMismatch(f"bad flow request: {exc}") from exc


@dataclass(frozen=True)
class EmbeddedFlow:
    request: FlowRequest
    compensated_rate_bps: float
    class_q: int
    vlan_id: int
    path: tuple[tuple[str, int], ...]
    per_hop_arrival: tuple[ArrivalCurve, ...]
    delay_bound_s: float
    pinned: bool = False

    @property
    def id(self) -> str:
        return self.request.id

    @property
    def source_curve(self) -> ArrivalCurve:
        return ArrivalCurve(self.compensated_rate_bps, self.request.burst_bits)

    def load(self) -> Load:
        return Load(self.id, self.source_curve, self.class_q, self.path, 8.0 * self.request.packet_bytes)

    def to_dict(self) -> dict:
        return {
            "request": self.request.to_dict(),
            "compensated_rate_bps": self.compensated_rate_bps,
            "class_q": self.class_q,
            "vlan_id": self.vlan_id,
            "path": [[sw, p] for sw, p in self.path],
            "per_hop_arrival": [[a.rate_bps, a.burst_bits] for a in self.per_hop_arrival],
            "delay_bound_s": self.delay_bound_s,
            "pinned": self.pinned,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> EmbeddedFlow:
        try:
            return cls(
                request=FlowRequest.from_dict(d["request"]),
                compensated_rate_bps=float(d["compensated_rate_bps"]),
                class_q=int(d["class_q"]),
                vlan_id=int(d["vlan_id"]),
                path=tuple((str(sw), int(p)) for sw, p in d["path"]),
                per_hop_arrival=tuple(ArrivalCurve(float(r), float(b)) for r, b in d["per_hop_arrival"]),
                delay_bound_s=float(d["delay_bound_s"]),
                pinned=bool(d.get("pinned", False)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaMismatch(f"bad embedded flow record: {exc}") from exc


class NetworkState:
    """Everything the controller knows. One writer at a time (see ``pipeline``)."""

    def __init__(
        self,
        topology: PhysicalTopology,
        profiles: Mapping[str, SwitchProfile] | None = None,
        config: ControllerConfig | None = None,
        tbf_table: TbfDeviationTable = DEFAULT_TBF_TABLE,
        *,
        _catalog: TreeCatalog | None = None,
    ):
        self.topology = topology
        self.profiles = dict(profiles) if profiles is not None else builtin_profiles()
        self.config = config or ControllerConfig()
        self.tbf_table = tbf_table
        self.flows: dict[str, EmbeddedFlow] = {}
        self.management_initialized = False
        for sw in topology.switches:
            name = topology.profile_name(sw)
            if name not in self.profiles:
                raise SchemaMismatch(f"switch {sw} references unknown profile {name!r}")
            if topology.active_ports(sw) > self.profiles[name].port_count:
                raise InvalidParameter(f"switch {sw} has more links than its profile's ports")
        q = min((self.profile(sw).num_queues for sw in topology.switches), default=8)
        if self.config.num_classes is not None:
            if not 1 <= self.config.num_classes <= q:
                raise InvalidParameter(f"num_classes must be in [1, {q}]")
            q = self.config.num_classes
        self.num_classes = q
        self.model = PortModel(self._port_service, self.blocking_bits, self.buffer_bits)
        if _catalog is not None:
            self.catalog = _catalog
        else:
            self.catalog = TreeCatalog(topology, self.config.tree_search_limit)
            for i in range(self.config.preconfigure_trees):
                try:
                    tree = self.catalog.tree(i)
                except IndexError:
                    break
                bridge_priorities(tree)
                assign_vlan(self.catalog, tree)
        self.analysis: Analysis = self.evaluate({})

    # -- static parameters ----------------------------------------------
    def profile(self, switch: str) -> SwitchProfile:
        return self.profiles[self.topology.profile_name(switch)]

    def _port_service(self, switch: str, port: int) -> ServiceCurve:
        prof = self.profile(switch)
        return port_service(self.topology.edge_at(switch, port).rate_bps, prof.t_proc_s, prof.t_spq_s)

    def port_service(self, switch: str, port: int) -> ServiceCurve:
        return self._port_service(switch, port)

    @property
    def lowest_class(self) -> int:
        return self.num_classes - 1

    def blocking_bits(self, switch: str, class_q: int) -> float:
        """Largest lower-priority frame that can hold the wire; the lowest class has none."""
        if class_q >= self.lowest_class:
            return 0.0
        return 8.0 * max(self.profile(switch).max_frame_bytes, self.config.max_packet_bytes)

    def buffer_bits(self, switch: str) -> float:
        return 8.0 * per_queue_buffer(self.profile(switch), self.topology.active_ports(switch))

    def compensated_rate(self, req: FlowRequest) -> float:
        if not self.config.tbf_compensation:
            return req.rate_bps
        return compensate_rate(self.tbf_table, req.rate_bps, req.burst_bytes)

    # -- bounds -----------------------------------------------------------
    def evaluate(self, loads: Mapping[str, Load]) -> Analysis:
        return analyze(self.model, loads, self.config.fixpoint_max_rounds, self.config.fixpoint_rtol)

    def loads(self) -> dict[str, Load]:
        return {fid: f.load() for fid, f in self.flows.items()}

    def recompute(self) -> Analysis:
        """From-scratch recomputation, independent of the cached analysis."""
        return self.evaluate(self.loads())

    def queue_aggregate(self, switch: str, port: int, class_q: int) -> ArrivalCurve:
        return self.analysis.aggregate(switch, port, class_q)

    def queue_graphs(self) -> list[QueueLevelGraph]:
        return queue_graphs(self, self.analysis)

    def host_of(self, node: str) -> str:
        if node not in self.topology.nodes or self.topology.is_switch(node):
            raise UnknownEndpoint(f"unknown host {node!r}")
        return node

    def controller_host(self) -> str:
        hosts = self.topology.hosts
        if self.config.controller_host is not None:
            return self.host_of(self.config.controller_host)
        if not hosts:
            raise UnknownEndpoint("topology has no hosts to run the controller on")
        return hosts[0]

    def set_flows(self, flows: Mapping[str, EmbeddedFlow], analysis: Analysis) -> None:
        """Install ``flows`` with curves and bounds refreshed from ``analysis``."""
        fresh = {}
        for fid in sorted(flows):
            f = flows[fid]
            fresh[fid] = dataclasses.replace(
                f, per_hop_arrival=analysis.arrivals[fid], delay_bound_s=analysis.flow_delay[fid]
            )
        self.flows = fresh
        self.analysis = analysis

    # -- serialization ----------------------------------------------------
    def to_dict(self) -> dict[str, Any]:
        queues = []
        for (sw, p, q), rep in sorted(self.analysis.queues.items()):
            queues.append({
                "switch": sw, "port": p, "class_q": q,
                "aggregate": [rep.aggregate.rate_bps, rep.aggregate.burst_bits],
                "delay_s": rep.delay_s, "backlog_bits": rep.backlog_bits,
                "buffer_bits": rep.buffer_bits, "flows": list(rep.flows),
            })
        return {
            "schema_version": STATE_SCHEMA_VERSION,
            "topology": self.topology.to_dict(),
            "profiles": [self.profiles[k].to_dict() for k in sorted(self.profiles)],
            "config": self.config.to_dict(),
            "tbf_table": [list(p) for p in self.tbf_table.points],
            "trees": self.catalog.to_dict(),
            "management_initialized": self.management_initialized,
            "flows": [self.flows[k].to_dict() for k in sorted(self.flows)],
            "queues": queues,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, allow_nan=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, doc: Mapping) -> NetworkState:
        if not isinstance(doc, Mapping) or doc.get("schema_version") != STATE_SCHEMA_VERSION:
            raise SchemaMismatch("state document has missing or unsupported schema_version")
        try:
            topo = PhysicalTopology.from_dict(doc["topology"])
            profiles = {p["name"]: SwitchProfile.from_dict(p) for p in doc["profiles"]}
            config = ControllerConfig.from_dict(doc["config"])
            table = TbfDeviationTable(tuple((int(b), float(d)) for b, d in doc["tbf_table"]))
            catalog = TreeCatalog.from_dict(topo, doc["trees"], config.tree_search_limit)
            state = cls(topo, profiles, config, table, _catalog=catalog)
            flows = {}
            for rec in doc["flows"]:
                f = EmbeddedFlow.from_dict(rec)
                flows[f.id] = f
        except SchemaMismatch:
            raise
        except (KeyError, TypeError, ValueError, AttributeError, DetnetError) as exc:
            raise SchemaMismatch(f"bad state document: {exc}") from exc
        state.management_initialized = bool(doc.get("management_initialized", False))
        analysis = state.evaluate({fid: f.load() for fid, f in flows.items()})
        state.set_flows(flows, analysis)
        if state.to_dict()["queues"] != doc.get("queues"):
            raise SchemaMismatch("stored queue caches disagree with recomputed bounds")
        return state

    @classmethod
    def loads_json(cls, text: str) -> NetworkState:
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SchemaMismatch(f"not a JSON document: {exc}") from exc
        return cls.from_dict(doc)


class AnalysisView:
    """Queue-state adapter over a tentative analysis (for ranking before commit)."""

    def __init__(self, state: NetworkState, analysis: Analysis):
        self.num_classes = state.num_classes
        self._state = state
        self._analysis = analysis

    def port_service(self, switch: str, port: int) -> ServiceCurve:
        return self._state.port_service(switch, port)

    def queue_aggregate(self, switch: str, port: int, class_q: int) -> ArrivalCurve:
        return self._analysis.aggregate(switch, port, class_q)

    def blocking_bits(self, switch: str, class_q: int) -> float:
        return self._state.blocking_bits(switch, class_q)


def queue_graphs(state: NetworkState, analysis: Analysis) -> list[QueueLevelGraph]:
    view = AnalysisView(state, analysis)
    return [build_queue_level_graph(state.topology, q, view) for q in range(state.num_classes)]


def flows_from_records(records: Iterable[Mapping]) -> dict[str, EmbeddedFlow]:
    return {f.id: f for f in (EmbeddedFlow.from_dict(r) for r in records)}
