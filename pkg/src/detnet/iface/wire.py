"""JSON schemas and wire-format conversion (bps, bytes, microseconds)."""

from __future__ import annotations

import functools
import json
from importlib import resources
from typing import Any, Mapping

import jsonschema

from ..admission import EmbeddedFlow, FlowRequest
from ..errors import SchemaMismatch
from .records import pcp_for_class

SCHEMA_NAMES = ("flow_request", "embed_result", "topology", "lldp_batch", "scenario", "sim_report", "error")


@functools.cache
def schema(name: str) -> dict:
    if name not in SCHEMA_NAMES:
        raise KeyError(name)
    text = resources.files("detnet.iface").joinpath("schemas", f"{name}.json").read_text(encoding="utf-8")
    return json.loads(text)


@functools.cache
def _validator(name: str) -> jsonschema.protocols.Validator:
    s = schema(name)
    cls = jsonschema.validators.validator_for(s)
    return cls(s)


def validate(name: str, doc: Any) -> None:
    """Raise :class:`SchemaMismatch` naming the first violation."""
    err = jsonschema.exceptions.best_match(_validator(name).iter_errors(doc))
    if err is not None:
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise SchemaMismatch(f"{name}: {where}: {err.message}")


def flow_request_from_wire(doc: Mapping) -> FlowRequest:
    validate("flow_request", doc)
    kw = {}
    if "max_packet_bytes" in doc:
        kw["max_packet_bytes"] = doc["max_packet_bytes"]
    return FlowRequest(doc["id"], doc["src"], doc["dst"], float(doc["rate_bps"]), doc["burst_bytes"],
                       doc["deadline_us"] * 1e-6, **kw)


def flow_request_to_wire(req: FlowRequest) -> dict:
    return {
        "id": req.id, "src": req.src, "dst": req.dst, "rate_bps": req.rate_bps,
        "burst_bytes": req.burst_bytes, "deadline_us": req.deadline_s * 1e6,
        "max_packet_bytes": req.max_packet_bytes,
    }


def flow_to_wire(flow: EmbeddedFlow) -> dict:
    d = flow_request_to_wire(flow.request)
    d.update(
        compensated_rate_bps=flow.compensated_rate_bps,
        class_q=flow.class_q,
        pcp=pcp_for_class(flow.class_q),
        vlan_id=flow.vlan_id,
        path=[[sw, p] for sw, p in flow.path],
        delay_bound_us=flow.delay_bound_s * 1e6,
        pinned=flow.pinned,
    )
    return d
