"""Packet-level replay of an admitted network state.

Sources inject at the ingress of their access switch. Every switch runs a
FIFO processing stage, then each packet waits the scheduler arbitration time
before joining its egress class queue; egress ports serve strict priority,
non-preemptively, at link rate. Latency is measured from access-switch
ingress to the end of the last transmission.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from ..admission.state import NetworkState
from ..devicemodel import compensate_rate
from ..errors import InvalidScenario, SchemaMismatch
from . import core

GREEDY = "greedy_token_bucket"
PERIODIC = "periodic"
SOURCE_MODELS = (GREEDY, PERIODIC)
UNIFORM_JITTER = "uniform_jitter"
CONSTANT_UPPER = "constant_upper"
SCENARIO_SCHEMA_VERSION = 1
REPORT_SCHEMA_VERSION = 1
# float slack when comparing observations against closed-form bounds
REL_TOL = 1e-9


@dataclass(frozen=True)
class TProcModel:
    kind: str = UNIFORM_JITTER
    lo_s: float = 1e-6
    hi_s: float = 4.15e-6

    def __post_init__(self) -> None:
        if self.kind not in (UNIFORM_JITTER, CONSTANT_UPPER):
            raise InvalidScenario(f"unknown t_proc model {self.kind!r}")
        if self.kind == UNIFORM_JITTER and not 0 <= self.lo_s <= self.hi_s:
            raise InvalidScenario("uniform_jitter needs 0 <= lo <= hi")

    @classmethod
    def constant_upper(cls) -> TProcModel:
        return cls(CONSTANT_UPPER)

    def to_dict(self) -> dict:
        if self.kind == CONSTANT_UPPER:
            return {"kind": CONSTANT_UPPER}
        return {"kind": self.kind, "lo_us": self.lo_s * 1e6, "hi_us": self.hi_s * 1e6}

    @classmethod
    def from_dict(cls, d: Mapping) -> TProcModel:
        if d.get("kind") == CONSTANT_UPPER:
            return cls.constant_upper()
        return cls(str(d.get("kind", UNIFORM_JITTER)), float(d.get("lo_us", 1.0)) * 1e-6,
                   float(d.get("hi_us", 4.15)) * 1e-6)


@dataclass
class Scenario:
    state: NetworkState
    duration_s: float = 1.0
    seed: int = 0
    sources: dict[str, str] = field(default_factory=dict)
    default_source: str = GREEDY
    t_proc_model: TProcModel = field(default_factory=TProcModel)
    # per egress (switch, port); unlisted links have zero propagation delay
    propagation_s: dict[tuple[str, int], float] = field(default_factory=dict)
    # send at the rate the host shaper really achieves rather than the configured one
    tbf_leak: bool = True

    def validate(self) -> None:
        if not (self.duration_s >= 0 and math.isfinite(self.duration_s)):
            raise InvalidScenario("duration_s must be finite and >= 0")
        for fid, model in self.sources.items():
            if fid not in self.state.flows:
                raise InvalidScenario(f"flow {fid!r} is not admitted in the state")
            if model not in SOURCE_MODELS:
                raise InvalidScenario(f"unknown source model {model!r}")
        if self.default_source not in SOURCE_MODELS:
            raise InvalidScenario(f"unknown source model {self.default_source!r}")
        for (sw, port), d in self.propagation_s.items():
            try:
                self.state.topology.edge_at(sw, port)
            except Exception as exc:
                raise InvalidScenario(f"no link at {sw} port {port}") from exc
            if not d >= 0:
                raise InvalidScenario("propagation delays must be >= 0")

    def source_of(self, flow_id: str) -> str:
        return self.sources.get(flow_id, self.default_source)

    def to_dict(self, include_state: bool = False) -> dict:
        d = {
            "schema_version": SCENARIO_SCHEMA_VERSION,
            "duration_s": self.duration_s,
            "seed": self.seed,
            "sources": dict(sorted(self.sources.items())),
            "default_source": self.default_source,
            "t_proc_model": self.t_proc_model.to_dict(),
            "propagation_us": [[sw, p, s * 1e6] for (sw, p), s in sorted(self.propagation_s.items())],
            "tbf_leak": self.tbf_leak,
        }
        if include_state:
            d["state"] = self.state.to_dict()
        return d

    @classmethod
    def from_dict(cls, doc: Mapping, state: NetworkState | None = None) -> Scenario:
        if doc.get("schema_version") != SCENARIO_SCHEMA_VERSION:
            raise SchemaMismatch("scenario has missing or unsupported schema_version")
        if "state" in doc:
            state = NetworkState.from_dict(doc["state"])
        if state is None:
            raise InvalidScenario("scenario needs a network state")
        try:
            scn = cls(
                state=state,
                duration_s=float(doc.get("duration_s", 1.0)),
                seed=int(doc.get("seed", 0)),
                sources={str(k): str(v) for k, v in doc.get("sources", {}).items()},
                default_source=str(doc.get("default_source", GREEDY)),
                t_proc_model=TProcModel.from_dict(doc.get("t_proc_model", {})),
                propagation_s={(str(sw), int(p)): float(us) * 1e-6 for sw, p, us in doc.get("propagation_us", [])},
                tbf_leak=bool(doc.get("tbf_leak", True)),
            )
        except (TypeError, ValueError) as exc:
            raise SchemaMismatch(f"bad scenario document: {exc}") from exc
        scn.validate()
        return scn


@dataclass(frozen=True)
class FlowStats:
    max_latency_s: float
    p99_latency_s: float
    packets_sent: int
    packets_received: int
    delay_bound_s: float

    @property
    def dropped(self) -> int:
        return self.packets_sent - self.packets_received


@dataclass(frozen=True)
class QueueStats:
    max_backlog_bits: float
    backlog_bound_bits: float
    buffer_bits: float


@dataclass(frozen=True)
class Violation:
    kind: str  # "latency" | "backlog" | "drop"
    subject: str
    observed: float
    bound: float


@dataclass
class SimReport:
    flows: dict[str, FlowStats] = field(default_factory=dict)
    queues: dict[tuple[str, int, int], QueueStats] = field(default_factory=dict)
    violations: list[Violation] = field(default_factory=list)
    backend: str = core.BACKEND

    def to_dict(self) -> dict:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "backend": self.backend,
            "flows": {
                fid: {
                    "max_latency_us": s.max_latency_s * 1e6,
                    "p99_latency_us": s.p99_latency_s * 1e6,
                    "delay_bound_us": s.delay_bound_s * 1e6,
                    "packets_sent": s.packets_sent,
                    "packets_received": s.packets_received,
                }
                for fid, s in sorted(self.flows.items())
            },
            "queues": [
                {"switch": sw, "port": p, "class_q": q, "max_backlog_bits": s.max_backlog_bits,
                 "backlog_bound_bits": s.backlog_bound_bits, "buffer_bits": s.buffer_bits}
                for (sw, p, q), s in sorted(self.queues.items())
            ],
            "violations": [dataclasses.asdict(v) for v in self.violations],
        }


def _exceeds(observed: float, bound: float) -> bool:
    return observed > bound + REL_TOL * abs(bound) + 1e-15


def _emission_times(model: str, rate_bps: float, burst_bits: float, size_bits: float, duration_s: float,
                    rng: np.random.Generator) -> np.ndarray:
    if model == GREEDY:
        # packet k leaves as soon as the bucket holds its bits
        n = int((rate_bps * duration_s + burst_bits) / size_bits) + 1
        t = np.maximum(0.0, (size_bits * np.arange(1, n + 1) - burst_bits) / rate_bps)
    else:
        period = size_bits / rate_bps
        phase = rng.uniform(0.0, period)
        n = int(duration_s / period) + 1
        t = phase + period * np.arange(n)
    return t[t < duration_s]


def run(scenario: Scenario) -> SimReport:
    scenario.validate()
    if scenario.duration_s == 0:
        return SimReport()
    state = scenario.state
    topo = state.topology
    rng = np.random.default_rng(scenario.seed)

    switches = topo.switches
    sw_index = {sw: i for i, sw in enumerate(switches)}
    ports = sorted((sw, e.port_of(sw)) for sw in switches for e in topo.links(sw))
    port_index = {p: i for i, p in enumerate(ports)}
    nq = state.num_classes
    port_rate = np.array([topo.edge_at(sw, p).rate_bps for sw, p in ports], dtype=np.float64)
    port_switch = np.array([sw_index[sw] for sw, _ in ports], dtype=np.int64)
    port_prop = np.array([scenario.propagation_s.get(p, 0.0) for p in ports], dtype=np.float64)
    switch_spq = np.array([state.profile(sw).t_spq_s for sw in switches], dtype=np.float64)
    queue_buffer = np.repeat([state.buffer_bits(sw) for sw, _ in ports], nq).astype(np.float64)

    flow_ids = sorted(state.flows)
    inject, size, cls, owner, starts, lens, route = [], [], [], [], [], [], []
    offset = 0
    for n, fid in enumerate(flow_ids):
        f = state.flows[fid]
        req = f.request
        # the leak applies whether or not admission compensated for it
        rate = compensate_rate(state.tbf_table, req.rate_bps, req.burst_bytes) if scenario.tbf_leak else req.rate_bps
        size_bits = 8.0 * req.packet_bytes
        t = _emission_times(scenario.source_of(fid), rate, req.burst_bits, size_bits, scenario.duration_s, rng)
        hops = [port_index[h] for h in f.path]
        k = len(t)
        inject.append(t)
        size.append(np.full(k, size_bits))
        cls.append(np.full(k, f.class_q, dtype=np.int64))
        owner.append(np.full(k, n, dtype=np.int64))
        lens.append(np.full(k, len(hops), dtype=np.int64))
        starts.append(offset + len(hops) * np.arange(k, dtype=np.int64))
        route.append(np.tile(np.asarray(hops, dtype=np.int64), k))
        offset += len(hops) * k

    def cat(parts, dtype):
        return np.concatenate(parts).astype(dtype) if parts else np.zeros(0, dtype=dtype)

    inject_a = cat(inject, np.float64)
    route_a = cat(route, np.int64)
    sw_of_hop = port_switch[route_a]
    if scenario.t_proc_model.kind == CONSTANT_UPPER:
        proc = np.array([state.profile(sw).t_proc_s for sw in switches])[sw_of_hop]
    else:
        proc = rng.uniform(scenario.t_proc_model.lo_s, scenario.t_proc_model.hi_s, size=len(route_a))
    deliver, peak = core.simulate(
        inject_a, cat(size, np.float64), cat(cls, np.int64), cat(starts, np.int64), cat(lens, np.int64),
        route_a, np.ascontiguousarray(proc, dtype=np.float64), port_rate, port_switch, port_prop,
        switch_spq, queue_buffer, nq, len(switches),
    )
    return _report(scenario, flow_ids, cat(owner, np.int64), inject_a, deliver, peak, ports, nq)


def _report(scenario: Scenario, flow_ids, owner, inject, deliver, peak, ports, nq) -> SimReport:
    state = scenario.state
    report = SimReport()
    for n, fid in enumerate(flow_ids):
        f = state.flows[fid]
        mine = owner == n
        sent = int(mine.sum())
        got = deliver[mine]
        ok = got >= 0
        lat = got[ok] - inject[mine][ok]
        prop = sum(scenario.propagation_s.get(h, 0.0) for h in f.path)
        bound = f.delay_bound_s + prop
        mx = float(lat.max()) if lat.size else 0.0
        p99 = float(np.quantile(lat, 0.99, method="higher")) if lat.size else 0.0
        report.flows[fid] = FlowStats(mx, p99, sent, int(ok.sum()), bound)
        if _exceeds(mx, bound):
            report.violations.append(Violation("latency", fid, mx, bound))
        if sent > ok.sum():
            report.violations.append(Violation("drop", fid, float(sent - ok.sum()), 0.0))
    for i, (sw, p) in enumerate(ports):
        for q in range(nq):
            observed = float(peak[i * nq + q])
            rep = state.analysis.queues.get((sw, p, q))
            if rep is None and observed == 0:
                continue
            bound = rep.backlog_bits if rep is not None else 0.0
            report.queues[(sw, p, q)] = QueueStats(observed, bound, state.buffer_bits(sw))
            if _exceeds(observed, bound):
                report.violations.append(Violation("backlog", f"{sw}:{p}:q{q}", observed, bound))
    return report
