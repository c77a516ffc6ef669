"""Random admitted scenarios replayed through the simulator."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..admission import ControllerConfig, FlowRequest, NetworkState, embed, init_management
from ..topology import HOST, SWITCH, Edge, Node, PhysicalTopology
from .engine import GREEDY, PERIODIC, Scenario, SimReport, TProcModel, Violation, run

LINK_RATES = (100e6, 1e9)


@dataclass(frozen=True)
class SizeLimits:
    max_switches: int = 5
    max_hosts_per_switch: int = 3
    max_flows: int = 20
    min_rate_bps: float = 0.5e6
    max_rate_bps: float = 20e6
    min_packet_bytes: int = 64
    max_packet_bytes: int = 1542
    max_burst_packets: int = 4
    min_deadline_s: float = 50e-6
    max_deadline_s: float = 2e-3


@dataclass(frozen=True)
class ScenarioSummary:
    index: int
    seed: int
    switches: int
    hosts: int
    requested: int
    admitted: int
    packets: int
    violations: tuple[Violation, ...]
    # smallest (bound - observed) over flows / queues; inf when nothing was measured
    min_latency_margin_s: float
    min_backlog_margin_bits: float
    max_latency_ratio: float


@dataclass
class SuiteReport:
    seed: int
    scenarios: list[ScenarioSummary] = field(default_factory=list)

    @property
    def violations(self) -> list[Violation]:
        return [v for s in self.scenarios for v in s.violations]

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "violations": len(self.violations),
            "scenarios": [
                {
                    "index": s.index, "seed": s.seed, "switches": s.switches, "hosts": s.hosts,
                    "requested": s.requested, "admitted": s.admitted, "packets": s.packets,
                    "violations": [v.__dict__ for v in s.violations],
                    "min_latency_margin_us": s.min_latency_margin_s * 1e6,
                    "min_backlog_margin_bits": s.min_backlog_margin_bits,
                    "max_latency_ratio": s.max_latency_ratio,
                }
                for s in self.scenarios
            ],
        }


def random_topology(rng: np.random.Generator, limits: SizeLimits) -> PhysicalTopology:
    n = int(rng.integers(1, limits.max_switches + 1))
    switches = [f"s{i}" for i in range(n)]
    next_port = dict.fromkeys(switches, 1)
    edges = []

    def link(a: str, b: str, rate: float) -> None:
        edges.append(Edge.make(a, next_port[a], b, next_port[b], rate))
        next_port[a] += 1
        next_port[b] += 1

    pairs = set()
    for i in range(1, n):
        j = int(rng.integers(0, i))
        pairs.add((j, i))
    for i in range(n):
        for j in range(i + 1, n):
            if (i, j) not in pairs and rng.random() < 0.4:
                pairs.add((i, j))
    for i, j in sorted(pairs):
        link(switches[i], switches[j], float(rng.choice(LINK_RATES)))
    nodes = [Node(s, SWITCH, "FS-S2805S") for s in switches]
    for s in switches:
        for k in range(int(rng.integers(1, limits.max_hosts_per_switch + 1))):
            h = f"h{s[1:]}_{k}"
            nodes.append(Node(h, HOST, None))
            next_port[h] = 0
            link(h, s, 1e9)
    return PhysicalTopology(nodes, edges)


def random_request(rng: np.random.Generator, hosts: list[str], index: int, limits: SizeLimits) -> FlowRequest:
    src, dst = rng.choice(len(hosts), size=2, replace=False)
    packet = int(rng.integers(limits.min_packet_bytes, limits.max_packet_bytes + 1))
    burst = packet * int(rng.integers(1, limits.max_burst_packets + 1))
    deadline = math.exp(rng.uniform(math.log(limits.min_deadline_s), math.log(limits.max_deadline_s)))
    return FlowRequest(
        id=f"f{index}", src=hosts[src], dst=hosts[dst],
        rate_bps=float(rng.uniform(limits.min_rate_bps, limits.max_rate_bps)),
        burst_bytes=burst, deadline_s=deadline, max_packet_bytes=packet,
    )


def build_scenario(seed: int, limits: SizeLimits = SizeLimits(), duration_s: float = 1.0,
                   config: ControllerConfig | None = None) -> tuple[Scenario, int]:
    """An admitted random scenario and the number of flows requested for it."""
    rng = np.random.default_rng(seed)
    topo = random_topology(rng, limits)
    state = NetworkState(topo, config=config or ControllerConfig())
    if len(topo.switches) > 1 or len(topo.hosts) > 1:
        init_management(state)
    hosts = topo.hosts
    requested = 0
    if len(hosts) >= 2:
        for i in range(limits.max_flows):
            requested += 1
            embed(state, random_request(rng, hosts, i, limits))
    sources = {fid: (GREEDY if rng.random() < 0.7 else PERIODIC) for fid in sorted(state.flows)}
    scn = Scenario(state, duration_s, int(rng.integers(0, 2**31)), sources, GREEDY, TProcModel())
    return scn, requested


def _summarize(index: int, seed: int, scn: Scenario, requested: int, rep: SimReport) -> ScenarioSummary:
    lat_margin = min((s.delay_bound_s - s.max_latency_s for s in rep.flows.values()), default=math.inf)
    ratio = max((s.max_latency_s / s.delay_bound_s for s in rep.flows.values() if s.delay_bound_s > 0),
                default=0.0)
    bl_margin = min((q.backlog_bound_bits - q.max_backlog_bits for q in rep.queues.values()), default=math.inf)
    topo = scn.state.topology
    return ScenarioSummary(
        index, seed, len(topo.switches), len(topo.hosts), requested,
        sum(1 for f in scn.state.flows if not f.startswith("mgmt:")),
        sum(s.packets_sent for s in rep.flows.values()), tuple(rep.violations), lat_margin, bl_margin, ratio,
    )


def stress_suite(seed: int, n_scenarios: int, size_limits: SizeLimits = SizeLimits(),
                 duration_s: float = 1.0) -> SuiteReport:
    suite = SuiteReport(seed)
    children = np.random.SeedSequence(seed).generate_state(max(n_scenarios, 1))
    for i in range(n_scenarios):
        child = int(children[i])
        scn, requested = build_scenario(child, size_limits, duration_s)
        suite.scenarios.append(_summarize(i, child, scn, requested, run(scn)))
    return suite
