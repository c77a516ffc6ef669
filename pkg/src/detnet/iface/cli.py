"""Command-line front end. Exit codes: 0 success, 1 rejected, 2 usage or I/O error."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any

from ..admission import ControllerConfig, FlowRequest, NetworkState, embed, init_management, remove
from ..errors import DetnetError, DuplicateFlowId, IoError, SchemaMismatch, UnknownFlow
from ..simulator import Scenario, TProcModel, run
from ..topology import PhysicalTopology, bridge_priorities, enumerate_spanning_trees, ingest_lldp
from . import wire
from .persistence import restore, snapshot

EXIT_OK = 0
EXIT_REJECTED = 1
EXIT_USAGE = 2
DEFAULT_STATE = "detnet-state.json"


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _read_json(path: str) -> Any:
    try:
        text = sys.stdin.read() if path == "-" else Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaMismatch(f"{path} is not JSON: {exc}") from exc


def _emit(args: argparse.Namespace, doc: Any, text: str) -> None:
    print(json.dumps(doc, sort_keys=True, indent=2) if args.json else text)


def _load_state(args: argparse.Namespace) -> NetworkState:
    return restore(args.state)


def cmd_topo_load(args: argparse.Namespace) -> int:
    doc = _read_json(args.file)
    if isinstance(doc, dict) and "reports" in doc:
        wire.validate("lldp_batch", doc)
        topo = ingest_lldp(doc["reports"])
    else:
        wire.validate("topology", doc)
        topo = PhysicalTopology.from_dict(doc)
    config = ControllerConfig(management=not args.no_management, controller_host=args.controller)
    state = NetworkState(topo, config=config)
    result = init_management(state)
    if not result.accepted:
        _emit(args, result.to_dict(), f"rejected: management traffic {result.reason.value}: {result.detail}")
        return EXIT_REJECTED
    snapshot(state, args.state)
    trees = state.catalog.configured()
    _emit(
        args,
        {"switches": len(topo.switches), "hosts": len(topo.hosts), "links": len(topo.edges),
         "vlans": [t.vlan_id for t in trees], "management_flows": sorted(state.flows)},
        f"loaded {len(topo.switches)} switches, {len(topo.hosts)} hosts, {len(topo.edges)} links; "
        f"VLANs {[t.vlan_id for t in trees]}; {len(state.flows)} management flows",
    )
    return EXIT_OK


def cmd_topo_trees(args: argparse.Namespace) -> int:
    state = _load_state(args)
    configured = {t.edges: t.vlan_id for t in state.catalog.configured()}
    rows = []
    for t in enumerate_spanning_trees(state.topology, args.limit):
        try:
            depth = max(bridge_priorities(t).values()) // 4096
        except DetnetError:
            depth = None
        rows.append({
            "index": t.index, "root": t.root, "depth": depth, "vlan_id": configured.get(t.edges),
            "edges": [[e.a, e.a_port, e.b, e.b_port] for e in sorted(t.edges)],
        })
    lines = [
        f"tree {r['index']}: root {r['root']}, depth {r['depth']}, "
        f"vlan {r['vlan_id'] if r['vlan_id'] is not None else '-'}, "
        + " ".join(f"{a}:{ap}-{b}:{bp}" for a, ap, b, bp in r["edges"])
        for r in rows
    ]
    _emit(args, rows, "\n".join(lines) if lines else "no spanning trees")
    return EXIT_OK


def _next_flow_id(state: NetworkState) -> str:
    n = 1
    while f"flow-{n}" in state.flows:
        n += 1
    return f"flow-{n}"


def cmd_flow_add(args: argparse.Namespace) -> int:
    state = _load_state(args)
    doc = {
        "id": args.id or _next_flow_id(state), "src": args.src, "dst": args.dst, "rate_bps": args.rate,
        "burst_bytes": args.burst, "deadline_us": args.deadline,
    }
    if args.max_packet is not None:
        doc["max_packet_bytes"] = args.max_packet
    req: FlowRequest = wire.flow_request_from_wire(doc)
    try:
        result = embed(state, req)
    except DuplicateFlowId as exc:
        _emit(args, {"accepted": False, "flow_id": req.id, "reason": "DuplicateFlowId", "detail": str(exc)},
              f"rejected: DuplicateFlowId ({exc})")
        return EXIT_REJECTED
    if not result.accepted:
        _emit(args, result.to_dict(), f"rejected: {result.reason.value} ({result.detail})")
        return EXIT_REJECTED
    snapshot(state, args.state)
    moved = "".join(f"\n  rerouted {fid}: {' '.join(f'{sw}:{p}' for sw, p in hops)}"
                    for fid, hops in result.rerouted_flows)
    _emit(
        args, result.to_dict(),
        f"accepted {result.flow_id}: VLAN {result.vlan_id}, class {result.class_q} (PCP {7 - result.class_q}), "
        f"bound {result.delay_bound_s * 1e6:.3f} us, path {' '.join(f'{sw}:{p}' for sw, p in result.path)}{moved}",
    )
    return EXIT_OK


def cmd_flow_rm(args: argparse.Namespace) -> int:
    state = _load_state(args)
    try:
        remove(state, args.flow_id)
    except UnknownFlow as exc:
        _emit(args, {"error": "UnknownFlow", "message": str(exc)}, f"rejected: {exc}")
        return EXIT_REJECTED
    snapshot(state, args.state)
    _emit(args, {"removed": args.flow_id}, f"removed {args.flow_id}")
    return EXIT_OK


def cmd_flow_ls(args: argparse.Namespace) -> int:
    state = _load_state(args)
    rows = [wire.flow_to_wire(state.flows[f]) for f in sorted(state.flows)]
    lines = [
        f"{r['id']}: {r['src']} -> {r['dst']} class {r['class_q']} VLAN {r['vlan_id']} "
        f"bound {r['delay_bound_us']:.3f} us / deadline {r['deadline_us']:.3f} us"
        for r in rows
    ]
    _emit(args, rows, "\n".join(lines) if lines else "no flows")
    return EXIT_OK


def cmd_state_dump(args: argparse.Namespace) -> int:
    state = _load_state(args)
    if args.file == "-":
        print(state.dumps())
    else:
        snapshot(state, args.file)
        if args.json:
            print(json.dumps({"written": args.file}))
    return EXIT_OK


def cmd_sim_run(args: argparse.Namespace) -> int:
    state = _load_state(args)
    if args.scenario:
        doc = _read_json(args.scenario)
        wire.validate("scenario", doc)
        scn = Scenario.from_dict({"schema_version": 1, **doc}, state)
    else:
        model = TProcModel.constant_upper() if args.t_proc == "constant_upper" else TProcModel()
        scn = Scenario(state, args.duration, args.seed, t_proc_model=model,
                       default_source=args.source, tbf_leak=not args.no_leak)
    report = run(scn)
    lines = [
        f"{fid}: sent {s.packets_sent} received {s.packets_received} "
        f"max {s.max_latency_s * 1e6:.3f} us p99 {s.p99_latency_s * 1e6:.3f} us bound {s.delay_bound_s * 1e6:.3f} us"
        for fid, s in sorted(report.flows.items())
    ]
    lines += [f"VIOLATION {v.kind} {v.subject}: observed {v.observed:.6g} > bound {v.bound:.6g}"
              for v in report.violations]
    lines.append(f"{len(report.violations)} violations")
    _emit(args, report.to_dict(), "\n".join(lines))
    return EXIT_REJECTED if report.violations else EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    from .server import parse_bind, serve

    state = restore(args.state) if Path(args.state).exists() else None
    serve(parse_bind(args.bind), state, args.state)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="detnet", description="Admission controller for strict-priority Ethernet networks.")
    p.add_argument("--state", default=DEFAULT_STATE, help=f"state snapshot file (default {DEFAULT_STATE})")
    p.add_argument("--json", action="store_true", help="machine-readable output")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="group", required=True, parser_class=_Parser)

    topo = sub.add_parser("topo", help="topology commands").add_subparsers(dest="cmd", required=True)
    t = topo.add_parser("load", help="load a topology or LLDP report batch and start fresh")
    t.add_argument("file")
    t.add_argument("--controller", help="host running the controller (default: lowest host id)")
    t.add_argument("--no-management", action="store_true", help="do not embed management traffic")
    t.set_defaults(func=cmd_topo_load)
    t = topo.add_parser("trees", help="list spanning trees")
    t.add_argument("--limit", type=int, default=16)
    t.set_defaults(func=cmd_topo_trees)

    flow = sub.add_parser("flow", help="flow commands").add_subparsers(dest="cmd", required=True)
    f = flow.add_parser("add", help="request admission of a flow")
    f.add_argument("--id")
    f.add_argument("--src", required=True)
    f.add_argument("--dst", required=True)
    f.add_argument("--rate", type=float, required=True, help="bit/s")
    f.add_argument("--burst", type=int, required=True, help="bytes")
    f.add_argument("--deadline", type=float, required=True, help="microseconds")
    f.add_argument("--max-packet", type=int, help="bytes")
    f.set_defaults(func=cmd_flow_add)
    f = flow.add_parser("rm", help="remove a flow")
    f.add_argument("flow_id")
    f.set_defaults(func=cmd_flow_rm)
    f = flow.add_parser("ls", help="list embedded flows")
    f.set_defaults(func=cmd_flow_ls)

    st = sub.add_parser("state", help="state commands").add_subparsers(dest="cmd", required=True)
    s = st.add_parser("dump", help="write the state snapshot to a file ('-' for stdout)")
    s.add_argument("file")
    s.set_defaults(func=cmd_state_dump)

    sim = sub.add_parser("sim", help="simulation commands").add_subparsers(dest="cmd", required=True)
    s = sim.add_parser("run", help="replay the admitted state in the packet simulator")
    s.add_argument("--duration", type=float, default=1.0, help="seconds")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--scenario", help="scenario JSON file (overrides the other options)")
    s.add_argument("--t-proc", choices=("uniform_jitter", "constant_upper"), default="uniform_jitter")
    s.add_argument("--source", choices=("greedy_token_bucket", "periodic"), default="greedy_token_bucket")
    s.add_argument("--no-leak", action="store_true", help="send at the configured rate exactly")
    s.set_defaults(func=cmd_sim_run)

    s = sub.add_parser("serve", help="run the HTTP endpoint")
    s.add_argument("--bind", default="127.0.0.1:8080")
    s.set_defaults(func=cmd_serve)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (IoError, SchemaMismatch) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DetnetError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
