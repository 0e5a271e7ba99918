"""The REST service over real loopback HTTP: auth wall, routes, node proxying."""

import http.client
import json
import time

import pytest

from itenet.gateway import GatewayConfig, GatewayCore, IteRepository
from itenet.httpd import (
    GatewayHttpServer,
    NodeHttpServer,
    http_json_request,
    loopback_node_client,
)
from itenet.ite import NodeIdentifier, fresh_nvm
from itenet.node import NodeRuntime
from itenet.transducers import fixture_ite_dir, load_fixture_ite

from conftest import advance_to_listen

AUTH = ("admin", "secret")


def wall_clock_ms() -> float:
    return time.monotonic() * 1000.0


def make_server(tmp_path, mode=None, ui_root=None):
    core = GatewayCore(
        GatewayConfig(mode=mode),
        IteRepository(local_dir=fixture_ite_dir()),
        clock=wall_clock_ms,
        store_path=tmp_path / "store.json",
        sample_log_path=tmp_path / "samples.jsonl",
        node_client=loopback_node_client,
    )
    core.add_user(*AUTH)
    return GatewayHttpServer(core, port=0, ui_root=ui_root, poll_tick_s=10.0).start()


@pytest.fixture
def gw(tmp_path):
    server = make_server(tmp_path)
    yield server
    server.stop()


@pytest.fixture
def node():
    runtime = NodeRuntime(
        fresh_nvm(NodeIdentifier(6, 1, 1)),
        load_fixture_ite(6, 1),
        clock=wall_clock_ms,
    )
    advance_to_listen(runtime)
    server = NodeHttpServer(runtime, port=0).start()
    yield server
    server.stop()


def call(server, method, path, body=None, auth=AUTH):
    return http_json_request(server.host, server.port, method, path, body, auth=auth)


def raw_call(server, method, path, body=b"", headers=None):
    """http.client keeps the path verbatim — needed for traversal probes."""
    conn = http.client.HTTPConnection(server.host, server.port, timeout=5)
    try:
        conn.request(method, path, body=body, headers=headers or {})
        resp = conn.getresponse()
        return resp.status, resp.read(), dict(resp.getheaders())
    finally:
        conn.close()


# -- authentication -------------------------------------------------------------


def test_api_requires_basic_auth(gw):
    for path in ("/transducers", "/transducers/1", "/pending"):
        status, payload = call(gw, "GET", path, auth=None)
        assert (status, payload) == (401, {"Error": "Unauthorized"})
    status, _, headers = raw_call(gw, "GET", "/transducers")
    assert status == 401
    assert headers.get("WWW-Authenticate") == 'Basic realm="itenet"'


def test_bad_credentials_and_malformed_auth_headers(gw):
    assert call(gw, "GET", "/transducers", auth=("admin", "nope"))[0] == 401
    assert call(gw, "GET", "/transducers", auth=("ghost", "secret"))[0] == 401
    for header in ("Bearer abc", "Basic !!!not-base64!!!", "Basic " + "YWJj"):  # abc: no colon
        status, _, _ = raw_call(gw, "GET", "/transducers", headers={"Authorization": header})
        assert status == 401


def test_node_facing_endpoints_skip_the_auth_wall(gw):
    status, payload = call(
        gw, "POST", "/configure", {"NodeID": "6.1.1", "Request": "Configure"}, auth=None
    )
    assert status == 200
    assert set(payload) == {"SSID", "Password", "GatewayIP"}


# -- route and method matrix ------------------------------------------------------


def test_unknown_routes_return_json_404(gw):
    assert call(gw, "GET", "/nope") == (404, {"Error": "NotFound"})
    assert call(gw, "GET", "/transducers/1/thrusters/0") == (404, {"Error": "NotFound"})
    assert call(gw, "GET", "/transducers/abc") == (404, {"Error": "UnknownTransducer"})
    assert call(gw, "GET", "/transducers/-1") == (404, {"Error": "UnknownTransducer"})
    assert call(gw, "GET", "/transducers/1/sensors/abc") == (404, {"Error": "UnknownChannel"})


def test_wrong_methods_return_json_405(gw):
    cases = [
        ("DELETE", "/transducers"),
        ("PUT", "/transducers"),
        ("POST", "/transducers"),
        ("DELETE", "/transducers/1"),
        ("GET", "/configure"),
        ("PUT", "/register"),
        ("DELETE", "/pending"),
        ("GET", "/pending/1/approve"),
    ]
    for method, path in cases:
        status, payload = call(gw, method, path)
        assert (status, payload) == (405, {"Error": "MethodNotAllowed"}), (method, path)


def test_malformed_json_body_is_a_bad_request(gw):
    status, body, _ = raw_call(
        gw, "POST", "/configure", b"{not json", {"Content-Type": "application/json"}
    )
    assert status == 400
    assert json.loads(body) == {"Error": "BadRequest"}


# -- onboarding + proxy flow over real sockets -------------------------------------


def test_full_onboarding_and_actuator_exchange(gw, node):
    status, payload = call(
        gw, "POST", "/configure", {"NodeID": "6.1.1", "Request": "Configure"}, auth=None
    )
    assert status == 200
    status, payload = call(
        gw,
        "POST",
        "/register",
        {"NodeID": "6.1.1", "Request": "Register", "Port": node.port},
        auth=None,
    )
    assert (status, payload) == (200, {"Registered": 1})

    listing = call(gw, "GET", "/transducers")[1]
    assert [e["id"] for e in listing] == [1]
    assert listing[0]["ite"]["type"] == 6

    status, detail = call(gw, "GET", "/transducers/1")
    assert status == 200
    assert detail["ip"] == "127.0.0.1"
    uri = detail["ite"]["actuators"][0]["uri"]
    assert uri == "/actuators/0"

    base = f"/transducers/1{uri}"
    assert call(gw, "PUT", base, {"ActuatorValue": 50}) == (200, {"ActuatorSet": 1})
    assert call(gw, "GET", base) == (200, {"ActuatorValue": 50})
    assert call(gw, "PUT", base, {"ActuatorValue": 20}) == (200, {"ActuatorSet": 1})
    assert call(gw, "PUT", base, {"ActuatorValue": 150}) == (200, {"ActuatorSet": 0})
    assert call(gw, "GET", base) == (200, {"ActuatorValue": 20})


def test_dead_node_maps_to_bad_gateway(gw):
    call(gw, "POST", "/configure", {"NodeID": "6.1.1", "Request": "Configure"}, auth=None)
    # register a port nobody listens on
    call(gw, "POST", "/register", {"NodeID": "6.1.1", "Request": "Register", "Port": 1}, auth=None)
    assert call(gw, "GET", "/transducers/1/actuators/0") == (502, {"Error": "NodeUnreachable"})


def test_samples_endpoint_empty_for_fresh_sensor_node(gw, tmp_path):
    node = NodeRuntime(
        fresh_nvm(NodeIdentifier(2, 1, 1)), load_fixture_ite(2, 1), clock=wall_clock_ms
    )
    advance_to_listen(node)
    server = NodeHttpServer(node, port=0).start()
    try:
        call(gw, "POST", "/register",
             {"NodeID": "2.1.1", "Request": "Register", "Port": server.port}, auth=None)
        assert call(gw, "GET", "/transducers/1/sensors/0/samples") == (200, [])
        assert call(gw, "PUT", "/transducers/1/sensors/0/samples")[0] == 405
        status, payload = call(gw, "GET", "/transducers/1/sensors/0")
        assert status == 200 and "Temperature" in payload
    finally:
        server.stop()


# -- dynamic admission over HTTP ------------------------------------------------------


def test_pending_approval_flow_over_http(tmp_path):
    gw = make_server(tmp_path, mode="dynamic_request")
    try:
        body = {"NodeID": "6.1.1", "Request": "Configure"}
        assert call(gw, "POST", "/configure", body, auth=None) == (202, {"Pending": 1})
        queue = call(gw, "GET", "/pending")[1]
        assert [p["node_id"] for p in queue] == ["6.1.1"]
        rid = queue[0]["rid"]
        status, payload = call(gw, "POST", f"/pending/{rid}/approve")
        assert (status, payload) == (200, {"Result": "approved", "NodeID": "6.1.1"})
        assert call(gw, "POST", f"/pending/{rid}/approve")[0] == 404
        assert call(gw, "POST", "/configure", body, auth=None)[0] == 200
        assert call(gw, "GET", "/pending")[1] == []
    finally:
        gw.stop()


def test_pending_rejection_flow_over_http(tmp_path):
    gw = make_server(tmp_path, mode="dynamic_request")
    try:
        body = {"NodeID": "6.1.1", "Request": "Configure"}
        call(gw, "POST", "/configure", body, auth=None)
        rid = call(gw, "GET", "/pending")[1][0]["rid"]
        assert call(gw, "POST", f"/pending/{rid}/reject")[1]["Result"] == "rejected"
        assert call(gw, "POST", "/configure", body, auth=None) == (
            403,
            {"Error": "AdmissionRejected"},
        )
    finally:
        gw.stop()


# -- static assets ---------------------------------------------------------------------


def test_ui_static_serving_and_traversal_guard(tmp_path):
    ui = tmp_path / "ui"
    ui.mkdir()
    (ui / "index.html").write_text("<html>panel</html>")
    (ui / "app.js").write_text("console.log(1)")
    (tmp_path / "secret.txt").write_text("keep out")
    gw = make_server(tmp_path, ui_root=ui)
    try:
        status, data, headers = raw_call(gw, "GET", "/ui")
        assert (status, data) == (200, b"<html>panel</html>")
        assert headers["Content-Type"].startswith("text/html")
        status, data, headers = raw_call(gw, "GET", "/ui/app.js")
        assert status == 200
        assert "javascript" in headers["Content-Type"]
        assert raw_call(gw, "GET", "/ui/../secret.txt")[0] == 404
        assert raw_call(gw, "GET", "/ui/%2e%2e/secret.txt")[0] == 404
        assert raw_call(gw, "GET", "/ui/missing.css")[0] == 404
        assert raw_call(gw, "POST", "/ui")[0] == 405
    finally:
        gw.stop()


def test_ui_404s_when_no_root_configured(gw):
    assert call(gw, "GET", "/ui", auth=None) == (404, {"Error": "NotFound"})


# -- the node's own HTTP server ----------------------------------------------------------


def test_node_http_surface(node):
    def ncall(method, path, body=None):
        return http_json_request(node.host, node.port, method, path, body)

    assert ncall("GET", "/id") == (200, {"NodeID": "6.1.1"})
    assert ncall("PUT", "/actuators/0", {"ActuatorValue": 30}) == (200, {"ActuatorSet": 1})
    assert ncall("GET", "/actuators/0") == (200, {"ActuatorValue": 30})
    assert ncall("GET", "/sensors/0")[0] == 404
    assert ncall("POST", "/actuators/0")[0] == 405
    assert ncall("GET", "/nope")[0] == 404
    # malformed JSON bodies are treated as unusable, not a server error
    status, body, _ = raw_call(node, "PUT", "/actuators/0", b"]]]")
    assert status == 200
    assert json.loads(body) == {"ActuatorSet": 0}
    assert ncall("GET", "/actuators/0") == (200, {"ActuatorValue": 30})
