"""Vendor-neutral configuration records emitted on every commit.

A hardware driver would translate these into switch CLI/SNMP calls and host
``tc``/VLAN setup; none ships here.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

from ..topology import bridge_priorities

MAX_PCP = 7


@dataclass(frozen=True)
class SwitchConfigRecord:
    switch_id: str
    mstp_instances: tuple[tuple[int, int], ...]  # (vlan id, bridge priority)
    port_vlan_memberships: tuple[tuple[int, tuple[int, ...]], ...]  # (port, vlans)
    spq_enabled: bool
    queue_count: int

    def to_dict(self) -> dict:
        return {
            "switch_id": self.switch_id,
            "mstp_instances": [list(x) for x in self.mstp_instances],
            "port_vlan_memberships": {str(p): list(v) for p, v in self.port_vlan_memberships},
            "spq_enabled": self.spq_enabled,
            "queue_count": self.queue_count,
        }


@dataclass(frozen=True)
class HostConfigRecord:
    host_id: str
    flow_id: str
    tbf: tuple[float, int]  # configured (rate_bps, burst_bytes), not the compensated rate
    vlan_id: int
    pcp: int

    def to_dict(self) -> dict:
        d = asdict(self)
        d["tbf"] = {"rate_bps": self.tbf[0], "burst_bytes": self.tbf[1]}
        return d


def pcp_for_class(class_q: int) -> int:
    """Class 0 is the highest priority and maps to PCP 7."""
    return MAX_PCP - class_q


def switch_records(state) -> list[SwitchConfigRecord]:
    topo = state.topology
    trees = state.catalog.configured()
    prios = {t.vlan_id: bridge_priorities(t) for t in trees}
    out = []
    for sw in topo.switches:
        members: dict[int, set[int]] = {}
        for e in topo.links(sw):
            port = e.port_of(sw)
            vlans = members.setdefault(port, set())
            if not topo.is_switch(e.other(sw)):
                vlans.update(t.vlan_id for t in trees)
            else:
                vlans.update(t.vlan_id for t in trees if e in t.edges)
        out.append(SwitchConfigRecord(
            switch_id=sw,
            mstp_instances=tuple((t.vlan_id, prios[t.vlan_id][sw]) for t in trees),
            port_vlan_memberships=tuple((p, tuple(sorted(v))) for p, v in sorted(members.items())),
            spq_enabled=True,
            queue_count=state.num_classes,
        ))
    return out


def host_record(flow) -> HostConfigRecord:
    req = flow.request
    return HostConfigRecord(req.src, req.id, (req.rate_bps, req.burst_bytes), flow.vlan_id,
                            pcp_for_class(flow.class_q))


def host_records(state, flow_ids=None) -> list[HostConfigRecord]:
    ids = sorted(state.flows) if flow_ids is None else list(flow_ids)
    return [host_record(state.flows[f]) for f in ids if f in state.flows]
