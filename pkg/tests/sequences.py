"""Random embed/remove sequences with atomicity and inversion checks."""

import copy
import random

from detnet.admission import ControllerConfig, FlowRequest, NetworkState, embed, remove
from topos import Builder


def random_network(rng):
    n = rng.randint(2, 4)
    names = [f"s{i}" for i in range(n)]
    b = Builder().switch(*names)
    for i in range(1, n):
        b.link(names[rng.randrange(i)], names[i], rng.choice([1e8, 1e9]))
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < 0.3:
                b.link(names[i], names[j], rng.choice([1e8, 1e9]))
    hosts = []
    for i, sw in enumerate(names):
        for k in range(2):
            h = f"h{i}{k}"
            b.host(h, sw)
            hosts.append(h)
    return b.build(), hosts


def queue_cache(state):
    return state.to_dict()["queues"]


def recomputed_cache(state):
    """Queue caches a from-scratch analysis of the same flows would store."""
    probe = copy.copy(state)
    probe.analysis = state.recompute()
    return queue_cache(probe)


def run_sequence(seed, steps=12):
    """Apply random embeds/removes; return (failure descriptions, embed outcomes)."""
    rng = random.Random(seed)
    topo, hosts = random_network(rng)
    state = NetworkState(topo, config=ControllerConfig(management=False))
    problems = []
    outcomes = []
    counter = 0
    for _ in range(steps):
        if state.flows and rng.random() < 0.35:
            fid = rng.choice(sorted(state.flows))
            remove(state, fid)
            if queue_cache(state) != recomputed_cache(state):
                problems.append(f"seed {seed}: cache after removing {fid} differs from recompute")
            continue
        counter += 1
        src, dst = rng.sample(hosts, 2)
        burst = rng.randint(64, 12000)
        req = FlowRequest(
            f"f{counter}", src, dst,
            rate_bps=rng.uniform(1e6, 6e7),
            burst_bytes=burst,
            deadline_s=rng.uniform(5e-5, 3e-3),
            max_packet_bytes=min(burst, rng.randint(64, 1542)),
        )
        snap = state.dumps()
        before = queue_cache(state)
        result = embed(state, req)
        outcomes.append(result.reason.value if result.reason else "accepted")
        if not result.accepted:
            if state.dumps() != snap:
                problems.append(f"seed {seed}: rejection of {req.id} changed the snapshot")
            continue
        if queue_cache(state) != recomputed_cache(state):
            problems.append(f"seed {seed}: cache after embedding {req.id} differs from recompute")
        for fid, f in state.flows.items():
            if f.delay_bound_s > f.request.deadline_s:
                problems.append(f"seed {seed}: {fid} bound exceeds deadline after commit")
        if not result.rerouted_flows:
            remove(state, req.id)
            if queue_cache(state) != before:
                problems.append(f"seed {seed}: embed+remove of {req.id} did not restore the caches")
            embed(state, req)
    return problems, outcomes
