# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled event kernel; same contract and results as ``_core_py.simulate``."""

import numpy as np
cimport numpy as cnp
from libc.stdlib cimport malloc, free

cnp.import_array()

cdef enum:
    ARRIVE = 0
    ENQUEUE = 1
    TX_DONE = 2


cdef struct Event:
    double t
    long long seq
    int kind
    long long x


cdef inline bint _less(Event* a, Event* b) nogil:
    return a.t < b.t or (a.t == b.t and a.seq < b.seq)


cdef struct Heap:
    Event* data
    long long size


cdef inline void _push(Heap* h, double t, long long seq, int kind, long long x) nogil:
    cdef long long i = h.size
    cdef long long parent
    cdef Event e
    e.t = t
    e.seq = seq
    e.kind = kind
    e.x = x
    h.size += 1
    while i > 0:
        parent = (i - 1) >> 1
        if _less(&e, &h.data[parent]):
            h.data[i] = h.data[parent]
            i = parent
        else:
            break
    h.data[i] = e


cdef inline Event _pop(Heap* h) nogil:
    cdef Event top = h.data[0]
    cdef Event last
    cdef long long i = 0, child, n
    h.size -= 1
    n = h.size
    if n > 0:
        last = h.data[n]
        while True:
            child = 2 * i + 1
            if child >= n:
                break
            if child + 1 < n and _less(&h.data[child + 1], &h.data[child]):
                child += 1
            if _less(&h.data[child], &last):
                h.data[i] = h.data[child]
                i = child
            else:
                break
        h.data[i] = last
    return top


def simulate(double[::1] inject, double[::1] size_bits, long long[::1] cls,
             long long[::1] route_start, long long[::1] route_len, long long[::1] route,
             double[::1] proc, double[::1] port_rate, long long[::1] port_switch,
             double[::1] port_prop, double[::1] switch_spq, double[::1] queue_buffer,
             long long n_classes, long long n_switches):
    cdef long long n = inject.shape[0]
    cdef long long n_ports = port_rate.shape[0]
    cdef long long nq = n_ports * n_classes
    deliver_arr = np.full(n, -1.0)
    peak_arr = np.zeros(nq)
    cdef double[::1] deliver = deliver_arr
    cdef double[::1] peak = peak_arr
    cdef double[::1] occ = np.zeros(nq)
    cdef double[::1] last_exit = np.zeros(max(n_switches, 1))
    cdef long long[::1] hop = np.zeros(n, dtype=np.int64)
    cdef long long[::1] nxt = np.full(n, -1, dtype=np.int64)
    cdef long long[::1] qhead = np.full(max(nq, 1), -1, dtype=np.int64)
    cdef long long[::1] qtail = np.full(max(nq, 1), -1, dtype=np.int64)
    cdef long long[::1] busy = np.full(max(n_ports, 1), -1, dtype=np.int64)
    cdef double[::1] tx_start = np.zeros(max(n_ports, 1))

    cdef Heap h
    h.size = 0
    h.data = <Event*> malloc((n + n_ports + 1) * sizeof(Event))
    if h.data == NULL:
        raise MemoryError()

    cdef long long seq = 0, i, k, sw, port, qi, q, base, j
    cdef double t, done, arrive, level
    cdef Event ev
    try:
        with nogil:
            for i in range(n):
                _push(&h, inject[i], seq, ARRIVE, i)
                seq += 1
            while h.size > 0:
                ev = _pop(&h)
                t = ev.t
                if ev.kind == ARRIVE:
                    i = ev.x
                    k = route_start[i] + hop[i]
                    sw = port_switch[route[k]]
                    done = t + proc[k]
                    if done < last_exit[sw]:
                        done = last_exit[sw]
                    last_exit[sw] = done
                    _push(&h, done + switch_spq[sw], seq, ENQUEUE, i)
                    seq += 1
                    continue
                if ev.kind == ENQUEUE:
                    i = ev.x
                    port = route[route_start[i] + hop[i]]
                    qi = port * n_classes + cls[i]
                    if occ[qi] + size_bits[i] > queue_buffer[qi]:
                        continue
                    occ[qi] += size_bits[i]
                    level = occ[qi]
                    j = busy[port]
                    if j >= 0 and cls[j] == cls[i]:
                        level -= (t - tx_start[port]) * port_rate[port]
                    if level > peak[qi]:
                        peak[qi] = level
                    if qtail[qi] < 0:
                        qhead[qi] = i
                    else:
                        nxt[qtail[qi]] = i
                    qtail[qi] = i
                    if busy[port] >= 0:
                        continue
                else:
                    port = ev.x
                    i = busy[port]
                    busy[port] = -1
                    occ[port * n_classes + cls[i]] -= size_bits[i]
                    arrive = t + port_prop[port]
                    hop[i] += 1
                    if hop[i] == route_len[i]:
                        deliver[i] = arrive
                    else:
                        _push(&h, arrive, seq, ARRIVE, i)
                        seq += 1
                # port is idle: serve the highest non-empty class
                base = port * n_classes
                for q in range(n_classes):
                    j = qhead[base + q]
                    if j >= 0:
                        qhead[base + q] = nxt[j]
                        if nxt[j] < 0:
                            qtail[base + q] = -1
                        nxt[j] = -1
                        busy[port] = j
                        tx_start[port] = t
                        _push(&h, t + size_bits[j] / port_rate[port], seq, TX_DONE, port)
                        seq += 1
                        break
    finally:
        free(h.data)
    return deliver_arr, peak_arr
