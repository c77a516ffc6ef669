"""Packet-level data-plane simulator used to check analytical bounds empirically."""

from .core import BACKEND
from .engine import (
    CONSTANT_UPPER,
    GREEDY,
    PERIODIC,
    REL_TOL,
    UNIFORM_JITTER,
    FlowStats,
    QueueStats,
    Scenario,
    SimReport,
    TProcModel,
    Violation,
    run,
)
from .stress import ScenarioSummary, SizeLimits, SuiteReport, build_scenario, stress_suite

__all__ = [
    "BACKEND", "CONSTANT_UPPER", "FlowStats", "GREEDY", "PERIODIC", "QueueStats", "REL_TOL", "Scenario",
    "ScenarioSummary", "SimReport", "SizeLimits", "SuiteReport", "TProcModel", "UNIFORM_JITTER",
    "Violation", "build_scenario", "run", "stress_suite",
]
