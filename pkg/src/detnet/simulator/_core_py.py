"""Pure-Python event kernel; bit-for-bit twin of ``_core.pyx``."""

from __future__ import annotations

import heapq
from collections import deque

import numpy as np

ARRIVE = 0
ENQUEUE = 1
TX_DONE = 2


def simulate(inject, size_bits, cls, route_start, route_len, route, proc,
             port_rate, port_switch, port_prop, switch_spq, queue_buffer,
             n_classes, n_switches):
    """Replay packets through FIFO processing stages and non-preemptive SPQ ports.

    ``route[route_start[i] : route_start[i] + route_len[i]]`` are the egress
    ports of packet ``i``; ``proc`` has the same layout and holds the
    processing time drawn for each hop. Returns per-packet delivery time
    (``-1.0`` when dropped) and per-queue peak backlog in bits, where a frame
    being transmitted counts only its untransmitted bits. Drops use whole
    frames: a frame occupies buffer until its last bit leaves.
    """
    n = len(inject)
    n_ports = len(port_rate)
    deliver = np.full(n, -1.0)
    occ = [0.0] * (n_ports * n_classes)
    peak = [0.0] * (n_ports * n_classes)
    last_exit = [0.0] * n_switches
    hop = [0] * n
    queues = [deque() for _ in range(n_ports * n_classes)]
    busy = [-1] * n_ports  # packet on the wire, -1 when idle
    tx_start = [0.0] * n_ports

    inject = inject.tolist()
    size_bits = size_bits.tolist()
    cls = cls.tolist()
    route_start = route_start.tolist()
    route_len = route_len.tolist()
    route = route.tolist()
    proc = proc.tolist()
    port_rate = port_rate.tolist()
    port_switch = port_switch.tolist()
    port_prop = port_prop.tolist()
    switch_spq = switch_spq.tolist()
    queue_buffer = queue_buffer.tolist()

    heap = []
    seq = 0
    for i in range(n):
        heap.append((inject[i], seq, ARRIVE, i))
        seq += 1
    heapq.heapify(heap)

    def start(port, now):
        nonlocal seq
        base = port * n_classes
        for q in range(n_classes):
            if queues[base + q]:
                i = queues[base + q].popleft()
                busy[port] = i
                tx_start[port] = now
                heapq.heappush(heap, (now + size_bits[i] / port_rate[port], seq, TX_DONE, port))
                seq += 1
                return

    while heap:
        t, _, kind, x = heapq.heappop(heap)
        if kind == ARRIVE:
            k = route_start[x] + hop[x]
            sw = port_switch[route[k]]
            done = t + proc[k]
            if done < last_exit[sw]:
                done = last_exit[sw]
            last_exit[sw] = done
            heapq.heappush(heap, (done + switch_spq[sw], seq, ENQUEUE, x))
            seq += 1
        elif kind == ENQUEUE:
            port = route[route_start[x] + hop[x]]
            qi = port * n_classes + cls[x]
            if occ[qi] + size_bits[x] > queue_buffer[qi]:
                continue
            occ[qi] += size_bits[x]
            # bits already on the wire have left the queue
            level = occ[qi]
            j = busy[port]
            if j >= 0 and cls[j] == cls[x]:
                level -= (t - tx_start[port]) * port_rate[port]
            if level > peak[qi]:
                peak[qi] = level
            queues[qi].append(x)
            if busy[port] < 0:
                start(port, t)
        else:
            port = x
            i = busy[port]
            busy[port] = -1
            occ[port * n_classes + cls[i]] -= size_bits[i]
            arrive = t + port_prop[port]
            hop[i] += 1
            if hop[i] == route_len[i]:
                deliver[i] = arrive
            else:
                heapq.heappush(heap, (arrive, seq, ARRIVE, i))
                seq += 1
            start(port, t)
    return deliver, np.asarray(peak)
