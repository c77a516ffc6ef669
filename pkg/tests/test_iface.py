import http.client
import json
import threading
from pathlib import Path

import pytest

from detnet.admission import ControllerConfig, FlowRequest, NetworkState, embed, init_management
from detnet.errors import InvalidParameter, IoError, SchemaMismatch
from detnet.iface import wire
from detnet.iface.cli import main
from detnet.iface.persistence import restore, snapshot
from detnet.iface.records import host_records, pcp_for_class, switch_records
from detnet.iface.server import Controller, make_server, parse_bind
from topos import triangle

SAMPLES = Path(__file__).resolve().parent.parent / "samples"


def loaded_state(n_flows=0):
    state = NetworkState(triangle())
    init_management(state)
    hosts = ["hA1", "hA2", "hC1", "hC2"]
    for i in range(n_flows):
        src, dst = hosts[i % 4], hosts[(i + 2) % 4]
        r = embed(state, FlowRequest(f"f{i}", src, dst, 1e6 * (i + 1), 1542 * (1 + i % 3), 2e-3))
        assert r.accepted
    return state


# -- persistence ----------------------------------------------------------------------


def test_round_trip_empty(tmp_path):
    state = NetworkState(triangle(), config=ControllerConfig(management=False))
    snapshot(state, tmp_path / "s.json")
    assert restore(tmp_path / "s.json").dumps() == state.dumps()


def test_round_trip_after_ten_embeds(tmp_path):
    state = loaded_state(10)
    snapshot(state, tmp_path / "s.json")
    again = restore(tmp_path / "s.json")
    assert again.dumps() == state.dumps()
    for fid, f in state.flows.items():
        assert again.flows[fid].path == f.path
        assert again.flows[fid].delay_bound_s == f.delay_bound_s
    # the restored controller keeps admitting on top of the same caches
    r1 = embed(state, FlowRequest("x", "hA1", "hC1", 1e6, 1542, 2e-3))
    r2 = embed(again, FlowRequest("x", "hA1", "hC1", 1e6, 1542, 2e-3))
    assert r1.to_dict() == r2.to_dict()


def test_snapshot_is_deterministic(tmp_path):
    state = loaded_state(3)
    snapshot(state, tmp_path / "a.json")
    snapshot(state, tmp_path / "b.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    assert [p.name for p in tmp_path.iterdir() if p.suffix == ".tmp"] == []


@pytest.mark.parametrize("content", [b"{", b"[]", b'{"schema_version": 1}', b"\xff\xfe", b'{"schema_version": 2}'])
def test_corrupted_snapshot(tmp_path, content):
    p = tmp_path / "s.json"
    p.write_bytes(content)
    with pytest.raises(SchemaMismatch):
        restore(p)


def test_truncated_snapshot(tmp_path):
    p = tmp_path / "s.json"
    snapshot(loaded_state(2), p)
    text = p.read_text()
    p.write_text(text[: len(text) // 2])
    with pytest.raises(SchemaMismatch):
        restore(p)


def test_missing_snapshot_and_bad_directory(tmp_path):
    with pytest.raises(IoError):
        restore(tmp_path / "nope.json")
    with pytest.raises(IoError):
        snapshot(loaded_state(), tmp_path / "missing-dir" / "s.json")


# -- records --------------------------------------------------------------------------------


def test_records_are_idempotent():
    state = loaded_state(4)
    assert switch_records(state) == switch_records(state)
    assert host_records(state, sorted(state.flows)) == host_records(state, sorted(state.flows))


def test_switch_records_describe_trees():
    state = loaded_state(2)
    recs = {r.switch_id: r for r in switch_records(state)}
    vlans = [t.vlan_id for t in state.catalog.configured()]
    for sw, rec in recs.items():
        assert [v for v, _ in rec.mstp_instances] == vlans
        assert rec.spq_enabled and rec.queue_count == 8
        ports = dict(rec.port_vlan_memberships)
        for e in state.topology.links(sw):
            if not state.topology.is_switch(e.other(sw)):
                assert ports[e.port_of(sw)] == tuple(vlans)
    # root of every tree gets priority 0
    for t in state.catalog.configured():
        assert recs[t.root].mstp_instances[vlans.index(t.vlan_id)][1] == 0


def test_pcp_mapping():
    assert [pcp_for_class(q) for q in range(8)] == [7, 6, 5, 4, 3, 2, 1, 0]


# -- wire format ---------------------------------------------------------------------------


def test_flow_request_wire_conversion():
    doc = {"id": "f", "src": "hA1", "dst": "hC1", "rate_bps": 3e6, "burst_bytes": 1542, "deadline_us": 50}
    req = wire.flow_request_from_wire(doc)
    assert req.deadline_s == pytest.approx(50e-6)
    back = wire.flow_request_to_wire(req)
    assert back["deadline_us"] == pytest.approx(50)
    for bad in ({**doc, "rate_bps": -1}, {**doc, "extra": 1}, {k: v for k, v in doc.items() if k != "src"},
                {**doc, "burst_bytes": 1.5}):
        with pytest.raises(SchemaMismatch):
            wire.flow_request_from_wire(bad)


def test_samples_match_schemas():
    wire.validate("topology", json.loads((SAMPLES / "triangle.json").read_text()))
    wire.validate("lldp_batch", json.loads((SAMPLES / "triangle_lldp.json").read_text()))


def test_every_schema_is_versioned():
    for name in wire.SCHEMA_NAMES:
        assert wire.schema(name)["schema_version"] == 1


# -- CLI ------------------------------------------------------------------------------------


def cli(tmp_path, *args):
    return main(["--state", str(tmp_path / "state.json"), *args])


def test_cli_session(tmp_path, capsys):
    assert cli(tmp_path, "topo", "load", str(SAMPLES / "triangle.json")) == 0
    assert "3 switches" in capsys.readouterr().out
    assert cli(tmp_path, "flow", "add", "--id", "f1", "--src", "hA1", "--dst", "hC1",
               "--rate", "3e6", "--burst", "1542", "--deadline", "500") == 0
    out = capsys.readouterr().out
    assert "accepted f1" in out and "VLAN" in out and "bound" in out
    assert cli(tmp_path, "flow", "add", "--id", "f2", "--src", "hA1", "--dst", "hC1",
               "--rate", "3e6", "--burst", "1542", "--deadline", "10") == 1
    assert "DeadlineInfeasible" in capsys.readouterr().out
    assert cli(tmp_path, "flow", "add", "--id", "f1", "--src", "hA1", "--dst", "hC1",
               "--rate", "3e6", "--burst", "1542", "--deadline", "500") == 1
    assert "DuplicateFlowId" in capsys.readouterr().out
    assert cli(tmp_path, "--json", "flow", "ls") == 0
    rows = json.loads(capsys.readouterr().out)
    assert "f1" in {r["id"] for r in rows}
    assert cli(tmp_path, "topo", "trees", "--limit", "5") == 0
    assert capsys.readouterr().out.count("tree ") == 3
    assert cli(tmp_path, "sim", "run", "--duration", "0.05", "--seed", "1") == 0
    assert "0 violations" in capsys.readouterr().out
    assert cli(tmp_path, "state", "dump", str(tmp_path / "copy.json")) == 0
    assert restore(tmp_path / "copy.json").dumps() == restore(tmp_path / "state.json").dumps()
    assert cli(tmp_path, "flow", "rm", "f1") == 0
    assert cli(tmp_path, "flow", "rm", "f1") == 1


def test_cli_json_output_validates(tmp_path, capsys):
    cli(tmp_path, "topo", "load", "--no-management", str(SAMPLES / "triangle_lldp.json"))
    capsys.readouterr()
    cli(tmp_path, "--json", "flow", "add", "--src", "hA1", "--dst", "hC2", "--rate", "1e6",
        "--burst", "1542", "--deadline", "800")
    doc = json.loads(capsys.readouterr().out)
    wire.validate("embed_result", doc)
    assert doc["flow_id"] == "flow-1"
    cli(tmp_path, "--json", "sim", "run", "--duration", "0.02")
    wire.validate("sim_report", json.loads(capsys.readouterr().out))


def test_cli_errors_exit_two(tmp_path, capsys):
    assert cli(tmp_path, "topo", "load", str(tmp_path / "missing.json")) == 2
    assert cli(tmp_path, "flow", "ls") == 2  # no state yet
    bad = tmp_path / "bad.json"
    bad.write_text("{nope")
    assert cli(tmp_path, "topo", "load", str(bad)) == 2
    bad.write_text(json.dumps({"nodes": [], "links": [], "extra": 1}))
    assert cli(tmp_path, "topo", "load", str(bad)) == 2
    with pytest.raises(SystemExit) as exc:
        cli(tmp_path, "flow", "add", "--src", "a")
    assert exc.value.code == 2
    capsys.readouterr()


def test_cli_unknown_endpoint_exits_two(tmp_path, capsys):
    cli(tmp_path, "topo", "load", str(SAMPLES / "triangle.json"))
    assert cli(tmp_path, "flow", "add", "--src", "hA1", "--dst", "ghost", "--rate", "1e6",
               "--burst", "1542", "--deadline", "800") == 2
    assert "UnknownEndpoint" in capsys.readouterr().err


# -- HTTP -----------------------------------------------------------------------------------


@pytest.fixture
def server(tmp_path):
    ctl = Controller(None, tmp_path / "state.json", ControllerConfig())
    httpd = make_server(("127.0.0.1", 0), ctl)
    t = threading.Thread(target=httpd.serve_forever, daemon=True)
    t.start()
    yield httpd.server_address[1], ctl, tmp_path
    httpd.shutdown()
    httpd.server_close()


def call(port, method, path, body=None, raw=None):
    conn = http.client.HTTPConnection("127.0.0.1", port, timeout=30)
    data = raw if raw is not None else (json.dumps(body).encode() if body is not None else None)
    headers = {"Content-Type": "application/json"} if data is not None else {}
    conn.request(method, path, body=data, headers=headers)
    resp = conn.getresponse()
    out = json.loads(resp.read())
    conn.close()
    return resp.status, out


def flow_doc(fid, deadline_us=800.0, **kw):
    return {"id": fid, "src": "hA1", "dst": "hC1", "rate_bps": 3e6, "burst_bytes": 1542,
            "deadline_us": deadline_us, **kw}


def test_http_requires_topology(server):
    port, _, _ = server
    status, body = call(port, "POST", "/flows", flow_doc("f"))
    assert status == 503
    wire.validate("error", body)
    assert call(port, "GET", "/topology")[0] == 503


def test_http_session(server):
    port, ctl, tmp = server
    lldp = json.loads((SAMPLES / "triangle_lldp.json").read_text())
    status, body = call(port, "POST", "/lldp", lldp)
    assert status == 200 and body["management"]["accepted"]
    assert ctl.ready

    status, body = call(port, "POST", "/flows", flow_doc("f1"))
    assert status == 201
    wire.validate("embed_result", body)
    assert body["accepted"] and body["vlan_id"] >= 1 and body["path"]
    assert body["delay_bound_us"] <= 800.0

    status, body = call(port, "POST", "/flows", flow_doc("f1"))
    assert status == 409 and body["reason"] == "DuplicateFlowId"
    wire.validate("embed_result", body)

    status, body = call(port, "POST", "/flows", flow_doc("f2", deadline_us=1.0))
    assert status == 409 and body["reason"] == "DeadlineInfeasible"

    assert call(port, "POST", "/flows", {"id": "bad"})[0] == 400
    assert call(port, "POST", "/flows", raw=b"{oops")[0] == 400
    assert call(port, "POST", "/flows", {**flow_doc("f3"), "dst": "ghost"})[0] == 400

    status, rows = call(port, "GET", "/flows")
    assert status == 200 and "f1" in {r["id"] for r in rows}
    assert call(port, "GET", "/flows/f1")[1]["id"] == "f1"
    assert call(port, "GET", "/flows/zzz")[0] == 404
    status, topo = call(port, "GET", "/topology")
    wire.validate("topology", topo)
    assert call(port, "GET", "/state")[0] == 200
    assert call(port, "GET", "/nothing")[0] == 404

    status, rep = call(port, "POST", "/simulate", {"duration_s": 0.02, "seed": 3})
    assert status == 200 and rep["violations"] == []
    wire.validate("sim_report", rep)
    assert call(port, "POST", "/simulate", {"duration_s": -1})[0] == 400

    # topology changes wait until data flows are gone
    assert call(port, "POST", "/lldp", lldp)[0] == 409
    mgmt = next(r["id"] for r in rows if r["id"].startswith("mgmt:"))
    assert call(port, "DELETE", f"/flows/{mgmt}")[0] == 409
    assert call(port, "DELETE", "/flows/f1") == (200, {"removed": "f1"})
    assert call(port, "DELETE", "/flows/f1")[0] == 404
    assert call(port, "POST", "/lldp", lldp)[0] == 200

    # every mutation was persisted
    assert restore(tmp / "state.json").dumps() == ctl.state.dumps()


def test_http_concurrent_requests_serialize(server):
    port, ctl, _ = server
    call(port, "POST", "/lldp", json.loads((SAMPLES / "triangle_lldp.json").read_text()))
    results = []

    def worker(i):
        results.append(call(port, "POST", "/flows", flow_doc(f"c{i}", deadline_us=5000.0, rate_bps=1e6))[0])

    threads = [threading.Thread(target=worker, args=(i,)) for i in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert sorted(results) == [201] * 8
    fresh = ctl.state.recompute()
    for f in ctl.state.flows.values():
        assert fresh.flow_delay[f.id] == f.delay_bound_s


def test_parse_bind():
    assert parse_bind("0.0.0.0:9000") == ("0.0.0.0", 9000)
    assert parse_bind(":81") == ("127.0.0.1", 81)
    with pytest.raises(InvalidParameter):
        parse_bind("localhost")
