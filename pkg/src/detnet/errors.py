"""Exception hierarchy shared across the controller."""

from __future__ import annotations


class DetnetError(Exception):
    """Base class for every error raised by this package."""


class InvalidParameter(DetnetError, ValueError):
    pass


class ServiceOverload(DetnetError):
    """Arrival rate exceeds the rate a server can guarantee."""

    def __init__(self, arrival_rate: float, service_rate: float):
        super().__init__(
            f"arrival rate {arrival_rate:g} bps exceeds service rate {service_rate:g} bps"
        )
        self.arrival_rate = arrival_rate
        self.service_rate = service_rate


class TopologyError(DetnetError):
    pass


class DisconnectedTopology(TopologyError):
    pass


class ConflictingReports(TopologyError):
    pass


class HostDegreeViolation(TopologyError):
    pass


class VlanExhausted(DetnetError):
    pass


class DepthExceeded(DetnetError):
    pass


class UnknownEndpoint(DetnetError, KeyError):
    def __str__(self) -> str:  # KeyError quotes its message otherwise
        return Exception.__str__(self)


class UnknownFlow(DetnetError, KeyError):
    def __str__(self) -> str:
        return Exception.__str__(self)


class DuplicateFlowId(DetnetError):
    pass


class SchemaMismatch(DetnetError):
    pass


class InvalidScenario(DetnetError):
    pass


class IoError(DetnetError, OSError):
    """A snapshot or input file could not be read or written."""
