"""HTTP/1.1 JSON endpoint for flow requests, topology updates and simulation."""

from __future__ import annotations

import json
import logging
import threading
from http import HTTPStatus
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Any, Callable
from urllib.parse import unquote, urlsplit

from ..admission import ControllerConfig, NetworkState, embed, init_management, is_management, remove
from ..errors import (
    DetnetError,
    DuplicateFlowId,
    InvalidParameter,
    InvalidScenario,
    SchemaMismatch,
    TopologyError,
    UnknownEndpoint,
    UnknownFlow,
)
from ..simulator import Scenario, run
from ..topology import ingest_lldp
from . import wire
from .persistence import snapshot

log = logging.getLogger(__name__)

Response = tuple[int, Any]
MAX_BODY = 16 * 1024 * 1024


class NotReady(DetnetError):
    """The controller has no topology, or management traffic is not embedded yet."""


class Conflict(DetnetError):
    pass


class Controller:
    """Owns the network state; every mutation runs under one lock, in arrival order."""

    def __init__(self, state: NetworkState | None = None, snapshot_path: str | Path | None = None,
                 config: ControllerConfig | None = None):
        self.state = state
        self.config = config or (state.config if state is not None else ControllerConfig())
        self.snapshot_path = Path(snapshot_path) if snapshot_path else None
        self.lock = threading.Lock()

    @property
    def ready(self) -> bool:
        s = self.state
        return s is not None and (not s.config.management or s.management_initialized)

    def _require(self) -> NetworkState:
        if not self.ready:
            raise NotReady("controller is not initialized: load a topology first")
        return self.state

    def _persist(self) -> None:
        if self.snapshot_path is not None:
            snapshot(self.state, self.snapshot_path)

    # -- operations ---------------------------------------------------------
    def add_flow(self, doc: Any) -> Response:
        req = wire.flow_request_from_wire(doc)
        with self.lock:
            state = self._require()
            try:
                result = embed(state, req)
            except DuplicateFlowId as exc:
                return HTTPStatus.CONFLICT, {"accepted": False, "flow_id": req.id,
                                             "reason": "DuplicateFlowId", "detail": str(exc)}
            if result.accepted:
                self._persist()
                return HTTPStatus.CREATED, result.to_dict()
            return HTTPStatus.CONFLICT, result.to_dict()

    def remove_flow(self, flow_id: str) -> Response:
        with self.lock:
            state = self._require()
            if is_management(flow_id) and flow_id in state.flows:
                raise Conflict("management flows cannot be removed")
            remove(state, flow_id)
            self._persist()
        return HTTPStatus.OK, {"removed": flow_id}

    def list_flows(self) -> Response:
        with self.lock:
            state = self._require()
            return HTTPStatus.OK, [wire.flow_to_wire(state.flows[f]) for f in sorted(state.flows)]

    def get_flow(self, flow_id: str) -> Response:
        with self.lock:
            state = self._require()
            if flow_id not in state.flows:
                raise UnknownFlow(f"unknown flow {flow_id!r}")
            return HTTPStatus.OK, wire.flow_to_wire(state.flows[flow_id])

    def topology(self) -> Response:
        with self.lock:
            if self.state is None:
                raise NotReady("no topology loaded")
            return HTTPStatus.OK, self.state.topology.to_dict()

    def dump_state(self) -> Response:
        with self.lock:
            return HTTPStatus.OK, self._require().to_dict()

    def ingest(self, doc: Any) -> Response:
        wire.validate("lldp_batch", doc)
        topo = ingest_lldp(doc["reports"])
        with self.lock:
            if self.state is not None and any(not is_management(f) for f in self.state.flows):
                raise Conflict("topology changes are refused while data flows are embedded")
            fresh = NetworkState(topo, self.state.profiles if self.state else None, self.config)
            result = init_management(fresh)
            if not result.accepted:
                raise Conflict(f"management traffic rejected: {result.reason.value}: {result.detail}")
            self.state = fresh
            self._persist()
            return HTTPStatus.OK, {"topology": topo.to_dict(), "management": result.to_dict()}

    def simulate(self, doc: Any) -> Response:
        wire.validate("scenario", doc)
        doc = {"schema_version": 1, **doc}
        with self.lock:
            scn = Scenario.from_dict(doc, self._require())
            report = run(scn)
        return HTTPStatus.OK, report.to_dict()


_ERRORS: tuple[tuple[type[BaseException], int], ...] = (
    (NotReady, HTTPStatus.SERVICE_UNAVAILABLE),
    (UnknownFlow, HTTPStatus.NOT_FOUND),
    (Conflict, HTTPStatus.CONFLICT),
    (TopologyError, HTTPStatus.CONFLICT),
    (SchemaMismatch, HTTPStatus.BAD_REQUEST),
    (InvalidParameter, HTTPStatus.BAD_REQUEST),
    (InvalidScenario, HTTPStatus.BAD_REQUEST),
    (UnknownEndpoint, HTTPStatus.BAD_REQUEST),
)


def _error_status(exc: BaseException) -> int:
    for cls, status in _ERRORS:
        if isinstance(exc, cls):
            return status
    return HTTPStatus.INTERNAL_SERVER_ERROR


def make_handler(ctl: Controller) -> type[BaseHTTPRequestHandler]:
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"
        server_version = "detnet"

        def log_message(self, fmt: str, *args: Any) -> None:
            log.info("%s %s", self.address_string(), fmt % args)

        def _send(self, status: int, body: Any) -> None:
            data = json.dumps(body, sort_keys=True).encode()
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def _body(self) -> Any:
            length = int(self.headers.get("Content-Length") or 0)
            if length > MAX_BODY:
                self.close_connection = True
                raise SchemaMismatch("request body too large")
            raw = self.rfile.read(length) if length else b""
            try:
                return json.loads(raw or b"null")
            except (json.JSONDecodeError, UnicodeDecodeError) as exc:
                raise SchemaMismatch(f"body is not JSON: {exc}") from exc

        def _dispatch(self, fn: Callable[[], Response]) -> None:
            try:
                status, body = fn()
            except Exception as exc:  # every failure becomes a JSON error body
                status = _error_status(exc)
                if status == HTTPStatus.INTERNAL_SERVER_ERROR:
                    log.exception("request failed")
                body = {"error": type(exc).__name__, "message": str(exc)}
            self._send(status, body)

        def _route(self) -> tuple[str, ...]:
            return tuple(unquote(p) for p in urlsplit(self.path).path.split("/") if p)

        def do_GET(self) -> None:
            parts = self._route()
            routes = {
                ("flows",): ctl.list_flows,
                ("topology",): ctl.topology,
                ("state",): ctl.dump_state,
            }
            if parts in routes:
                self._dispatch(routes[parts])
            elif len(parts) == 2 and parts[0] == "flows":
                self._dispatch(lambda: ctl.get_flow(parts[1]))
            else:
                self._send(HTTPStatus.NOT_FOUND, {"error": "NotFound", "message": self.path})

        def do_POST(self) -> None:
            parts = self._route()
            routes = {("flows",): ctl.add_flow, ("lldp",): ctl.ingest, ("simulate",): ctl.simulate}
            if parts not in routes:
                self._send(HTTPStatus.NOT_FOUND, {"error": "NotFound", "message": self.path})
                return
            self._dispatch(lambda: routes[parts](self._body()))

        def do_DELETE(self) -> None:
            parts = self._route()
            if len(parts) == 2 and parts[0] == "flows":
                self._dispatch(lambda: ctl.remove_flow(parts[1]))
            else:
                self._send(HTTPStatus.NOT_FOUND, {"error": "NotFound", "message": self.path})

    return Handler


def parse_bind(bind: str) -> tuple[str, int]:
    host, _, port = bind.rpartition(":")
    try:
        return host or "127.0.0.1", int(port)
    except ValueError as exc:
        raise InvalidParameter(f"bind address must be host:port, got {bind!r}") from exc


def make_server(bind_address: tuple[str, int], ctl: Controller) -> ThreadingHTTPServer:
    return ThreadingHTTPServer(bind_address, make_handler(ctl))


def serve(bind_address: tuple[str, int], state: NetworkState | None,
          snapshot_path: str | Path | None = None) -> None:
    ctl = Controller(state, snapshot_path)
    with make_server(bind_address, ctl) as httpd:
        log.info("serving on %s:%d", *httpd.server_address[:2])
        try:
            httpd.serve_forever()
        except KeyboardInterrupt:
            pass
