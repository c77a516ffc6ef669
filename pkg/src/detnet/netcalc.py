"""Token-bucket / rate-latency network calculus.

Only the single-segment curve families are supported: arrival curves of the
form ``b + r*t`` and service curves of the form ``R * max(0, t - T)``.  For
those pairs every min-plus bound has a closed form, so nothing here samples
or approximates.

Units are bits and seconds throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

from .errors import InvalidParameter, ServiceOverload

__all__ = [
    "ArrivalCurve",
    "ServiceCurve",
    "BoundSet",
    "aggregate",
    "delay_bound",
    "backlog_bound",
    "bounds",
    "output_curve",
    "port_service",
    "residual_spq",
]


def _check_finite_nonneg(name: str, value: float) -> None:
    if not (value >= 0.0 and math.isfinite(value)):
        raise InvalidParameter(f"{name} must be finite and >= 0, got {value!r}")


@dataclass(frozen=True)
class ArrivalCurve:
    """Token bucket envelope ``alpha(t) = burst_bits + rate_bps * t`` for t > 0."""

    rate_bps: float
    burst_bits: float

    def __post_init__(self) -> None:
        _check_finite_nonneg("rate_bps", self.rate_bps)
        _check_finite_nonneg("burst_bits", self.burst_bits)

    def __call__(self, t: float) -> float:
        if t <= 0.0:
            return 0.0
        return self.burst_bits + self.rate_bps * t

    @classmethod
    def zero(cls) -> ArrivalCurve:
        return cls(0.0, 0.0)


@dataclass(frozen=True)
class ServiceCurve:
    """Rate-latency curve ``beta(t) = rate_bps * max(0, t - latency_s)``."""

    rate_bps: float
    latency_s: float

    def __post_init__(self) -> None:
        if not (self.rate_bps > 0.0 and math.isfinite(self.rate_bps)):
            raise InvalidParameter(f"rate_bps must be finite and > 0, got {self.rate_bps!r}")
        _check_finite_nonneg("latency_s", self.latency_s)

    def __call__(self, t: float) -> float:
        return self.rate_bps * max(0.0, t - self.latency_s)


@dataclass(frozen=True)
class BoundSet:
    delay_s: float
    backlog_bits: float


def aggregate(curves: Iterable[ArrivalCurve]) -> ArrivalCurve:
    """Componentwise sum; the empty aggregate is the zero curve."""
    rate = 0.0
    burst = 0.0
    for c in curves:
        rate += c.rate_bps
        burst += c.burst_bits
    return ArrivalCurve(rate, burst)


def _require_stable(a: ArrivalCurve, s: ServiceCurve) -> None:
    if a.rate_bps > s.rate_bps:
        raise ServiceOverload(a.rate_bps, s.rate_bps)


def delay_bound(a: ArrivalCurve, s: ServiceCurve) -> float:
    """Horizontal deviation between ``a`` and ``s``: ``T + b/R``."""
    _require_stable(a, s)
    return s.latency_s + a.burst_bits / s.rate_bps


def backlog_bound(a: ArrivalCurve, s: ServiceCurve) -> float:
    """Vertical deviation between ``a`` and ``s``: ``b + r*T``."""
    _require_stable(a, s)
    return a.burst_bits + a.rate_bps * s.latency_s


def bounds(a: ArrivalCurve, s: ServiceCurve) -> BoundSet:
    return BoundSet(delay_bound(a, s), backlog_bound(a, s))


def output_curve(a: ArrivalCurve, s: ServiceCurve) -> ArrivalCurve:
    """Min-plus deconvolution ``a ⊘ s``; the rate is kept and the burst grows by ``r*T``."""
    _require_stable(a, s)
    if s.latency_s == 0.0:
        return a
    return ArrivalCurve(a.rate_bps, a.burst_bits + a.rate_bps * s.latency_s)


def port_service(link_rate_bps: float, t_proc_s: float, t_spq_s: float) -> ServiceCurve:
    """Service of one egress port: link rate, latency = processing + scheduler overhead."""
    if not link_rate_bps > 0.0:
        raise InvalidParameter(f"link rate must be > 0, got {link_rate_bps!r}")
    _check_finite_nonneg("t_proc_s", t_proc_s)
    _check_finite_nonneg("t_spq_s", t_spq_s)
    return ServiceCurve(link_rate_bps, t_proc_s + t_spq_s)


def residual_spq(port: ServiceCurve, higher_agg: ArrivalCurve, blocking_bits: float) -> ServiceCurve:
    """Leftover service for one strict-priority class.

    ``higher_agg`` is the aggregate of every strictly higher class at the port and
    ``blocking_bits`` the largest lower-priority frame that may already be on the
    wire (non-preemptive). The result is the rate-latency curve equal to the
    non-decreasing closure of ``[beta(t) - alpha_H(t) - blocking]+``.
    """
    _check_finite_nonneg("blocking_bits", blocking_bits)
    if higher_agg.rate_bps >= port.rate_bps:
        raise ServiceOverload(higher_agg.rate_bps, port.rate_bps)
    if higher_agg.rate_bps == 0.0 and higher_agg.burst_bits == 0.0 and blocking_bits == 0.0:
        return port
    rate = port.rate_bps - higher_agg.rate_bps
    latency = (port.rate_bps * port.latency_s + higher_agg.burst_bits + blocking_bits) / rate
    return ServiceCurve(rate, latency)
