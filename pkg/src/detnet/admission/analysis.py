"""Whole-network bound computation for a set of flows with fixed paths and classes.

Every egress port is a strict-priority server; each class sees the residual
service left by the classes above it. Per-hop arrival curves depend on the
upstream residuals, which can depend on each other when paths of different
trees cross in opposite directions, so the per-hop bursts are computed as the
least fixed point of the propagation map (starting from the source curves and
iterating until nothing moves). Feed-forward cases settle after at most
``longest path + 1`` rounds.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

from ..errors import ServiceOverload
from ..netcalc import (
    ArrivalCurve,
    ServiceCurve,
    backlog_bound,
    delay_bound,
    output_curve,
    residual_spq,
)

INF = math.inf
QueueKey = tuple[str, int, int]  # (switch, egress port, class)


@dataclass(frozen=True)
class Load:
    """What the analysis needs to know about one flow."""

    flow_id: str
    source: ArrivalCurve
    class_q: int
    path: tuple[tuple[str, int], ...]
    # store-and-forward: the next hop sees whole frames, up to one packet early
    packet_bits: float = 0.0


@dataclass(frozen=True)
class QueueReport:
    switch: str
    port: int
    class_q: int
    aggregate: ArrivalCurve
    residual: ServiceCurve | None
    delay_s: float
    backlog_bits: float
    buffer_bits: float
    flows: tuple[str, ...]

    @property
    def overloaded(self) -> bool:
        return math.isinf(self.delay_s)

    @property
    def overflows(self) -> bool:
        return self.backlog_bits > self.buffer_bits


@dataclass
class Analysis:
    queues: dict[QueueKey, QueueReport] = field(default_factory=dict)
    arrivals: dict[str, tuple[ArrivalCurve, ...]] = field(default_factory=dict)
    flow_delay: dict[str, float] = field(default_factory=dict)
    converged: bool = True
    rounds: int = 0

    def aggregate(self, switch: str, port: int, class_q: int) -> ArrivalCurve:
        rep = self.queues.get((switch, port, class_q))
        return rep.aggregate if rep is not None else ArrivalCurve.zero()

    def per_hop_backlogs(self, flow_id: str, load: Load) -> tuple[float, ...]:
        return tuple(self.queues[(sw, p, load.class_q)].backlog_bits for sw, p in load.path)


@dataclass(frozen=True)
class PortModel:
    """Static per-port parameters supplied by the controller state."""

    service: Callable[[str, int], ServiceCurve]
    blocking_bits: Callable[[str, int], float]
    buffer_bits: Callable[[str], float]


def _sum(curves: Sequence[ArrivalCurve]) -> ArrivalCurve:
    r = 0.0
    b = 0.0
    for c in curves:
        r += c.rate_bps
        b += c.burst_bits
    return ArrivalCurve(r, b)


def _residuals(
    model: PortModel, aggs: Mapping[QueueKey, ArrivalCurve]
) -> dict[QueueKey, ServiceCurve | None]:
    by_port: dict[tuple[str, int], dict[int, ArrivalCurve]] = defaultdict(dict)
    for (sw, p, q), a in aggs.items():
        by_port[(sw, p)][q] = a
    out: dict[QueueKey, ServiceCurve | None] = {}
    for (sw, p), classes in by_port.items():
        port = model.service(sw, p)
        higher_r = 0.0
        higher_b = 0.0
        for q in sorted(classes):
            try:
                res = residual_spq(port, ArrivalCurve(higher_r, higher_b), model.blocking_bits(sw, q))
                if classes[q].rate_bps > res.rate_bps:
                    res = None
            except ServiceOverload:
                res = None
            out[(sw, p, q)] = res
            higher_r += classes[q].rate_bps
            higher_b += classes[q].burst_bits
    return out


def _close(a: ArrivalCurve, b: ArrivalCurve, rtol: float) -> bool:
    return abs(a.burst_bits - b.burst_bits) <= rtol * max(1.0, abs(b.burst_bits))


def analyze(model: PortModel, loads: Mapping[str, Load], max_rounds: int = 200, rtol: float = 0.0) -> Analysis:
    """Per-queue aggregates and bounds plus per-flow end-to-end delay bounds.

    Each hop's delay for a flow is the FIFO bound of its whole class aggregate
    at that queue. A flow's output burst after a hop uses its FIFO share of the
    residual: latency grows by the other members' burst over the residual rate.
    The next hop receives whole frames, which adds one packet to that burst.
    """
    order = sorted(loads)
    arrivals = {fid: [loads[fid].source] * len(loads[fid].path) for fid in order}
    converged = False
    rounds = 0
    aggs: dict[QueueKey, ArrivalCurve] = {}
    res: dict[QueueKey, ServiceCurve | None] = {}
    while rounds < max_rounds:
        rounds += 1
        members: dict[QueueKey, list[ArrivalCurve]] = defaultdict(list)
        for fid in order:
            ld = loads[fid]
            for (sw, p), a in zip(ld.path, arrivals[fid]):
                members[(sw, p, ld.class_q)].append(a)
        aggs = {k: _sum(v) for k, v in members.items()}
        res = _residuals(model, aggs)
        changed = False
        for fid in order:
            ld = loads[fid]
            cur = ld.source
            new = []
            for i, (sw, p) in enumerate(ld.path):
                new.append(cur)
                key = (sw, p, ld.class_q)
                r = res[key]
                if r is None:
                    # overloaded queue; downstream curves stay at their input value
                    new.extend([cur] * (len(ld.path) - i - 1))
                    break
                mine = arrivals[fid][i]
                agg = aggs[key]
                others_rate = max(0.0, agg.rate_bps - mine.rate_bps)
                others_burst = max(0.0, agg.burst_bits - mine.burst_bits)
                share = ServiceCurve(r.rate_bps - others_rate, r.latency_s + others_burst / r.rate_bps)
                out = output_curve(cur, share)
                cur = ArrivalCurve(out.rate_bps, out.burst_bits + ld.packet_bits)
            old = arrivals[fid]
            if any(not _close(a, b, rtol) for a, b in zip(new, old)):
                changed = True
            arrivals[fid] = new
        if not changed:
            converged = True
            break

    queues: dict[QueueKey, QueueReport] = {}
    flows_at: dict[QueueKey, list[str]] = defaultdict(list)
    for fid in order:
        ld = loads[fid]
        for sw, p in ld.path:
            flows_at[(sw, p, ld.class_q)].append(fid)
    for key, agg in aggs.items():
        sw, p, q = key
        r = res[key]
        if r is None or not converged:
            d = b = INF
        else:
            d = delay_bound(agg, r)
            b = backlog_bound(agg, r)
        queues[key] = QueueReport(sw, p, q, agg, r, d, b, model.buffer_bits(sw), tuple(flows_at[key]))

    flow_delay = {}
    for fid in order:
        ld = loads[fid]
        total = 0.0
        for sw, p in ld.path:
            total += queues[(sw, p, ld.class_q)].delay_s
        flow_delay[fid] = total
    return Analysis(queues, {f: tuple(a) for f, a in arrivals.items()}, flow_delay, converged, rounds)
