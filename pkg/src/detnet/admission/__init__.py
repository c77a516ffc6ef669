"""Admission control: bound analysis, controller state and the embed/remove pipeline."""

from .analysis import Analysis, Load, PortModel, QueueReport, analyze
from .pipeline import (
    Decision,
    EmbedResult,
    Reason,
    check_path,
    embed,
    init_management,
    is_management,
    remove,
)
from .state import ControllerConfig, EmbeddedFlow, FlowRequest, NetworkState

__all__ = [
    "Analysis", "ControllerConfig", "Decision", "EmbedResult", "EmbeddedFlow", "FlowRequest",
    "Load", "NetworkState", "PortModel", "QueueReport", "Reason", "analyze", "check_path",
    "embed", "init_management", "is_management", "remove",
]
