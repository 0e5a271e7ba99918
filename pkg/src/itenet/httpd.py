"""HTTP front ends: the gateway REST service and the node's tiny server.

Both wrap the transport-free cores (`GatewayCore`, `NodeRuntime.serve_request`)
behind stdlib ``http.server`` so real nodes and the real gateway can talk over
loopback exactly as the virtual fabric does in simulation.

Gateway routes:
  unauthenticated, node-facing:   POST /configure   POST /register
  unauthenticated, static assets: GET /ui[/...]
  HTTP Basic on everything else:  GET /transducers
                                  GET /transducers/{id}
                                  GET|PUT /transducers/{id}/actuators/{n}
                                  GET /transducers/{id}/sensors/{n}
                                  GET /transducers/{id}/sensors/{n}/samples
                                  GET /pending
                                  POST /pending/{rid}/approve|reject
"""

from __future__ import annotations

import base64
import binascii
import json
import mimetypes
import threading
import urllib.error
import urllib.request
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Any, Optional

from .gateway import GatewayCore
from .node import NodeRuntime

_MALFORMED = object()


class _JsonHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server_version = "itenet/0.1"

    def log_message(self, fmt: str, *args: Any) -> None:  # quiet by default
        pass

    def _read_json(self) -> Any:
        length = int(self.headers.get("Content-Length") or 0)
        if length <= 0:
            return None
        raw = self.rfile.read(length)
        try:
            return json.loads(raw.decode("utf-8"))
        except (ValueError, UnicodeDecodeError):
            return _MALFORMED

    def _send_json(self, status: int, payload: Any) -> None:
        body = (json.dumps(payload) + "\n").encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        if status == 401:
            self.send_header("WWW-Authenticate", 'Basic realm="itenet"')
        self.end_headers()
        self.wfile.write(body)

    def _send_bytes(self, status: int, data: bytes, content_type: str) -> None:
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)


class GatewayHandler(_JsonHandler):
    server: "GatewayHttpServer.Server"

    def do_GET(self) -> None:
        self._route("GET")

    def do_PUT(self) -> None:
        self._route("PUT")

    def do_POST(self) -> None:
        self._route("POST")

    def do_DELETE(self) -> None:
        self._route("DELETE")

    def _route(self, method: str) -> None:
        core = self.server.core
        path = self.path.split("?", 1)[0]
        parts = [p for p in path.split("/") if p]

        if parts and parts[0] == "ui":
            if method != "GET":
                self._send_json(405, {"Error": "MethodNotAllowed"})
                return
            self._serve_static(parts[1:])
            return

        if parts == ["configure"] or parts == ["register"]:
            if method != "POST":
                self._send_json(405, {"Error": "MethodNotAllowed"})
                return
            body = self._read_json()
            if body is _MALFORMED:
                self._send_json(400, {"Error": "BadRequest"})
                return
            source_ip = self.client_address[0]
            if parts == ["configure"]:
                status, payload = core.handle_configure(body, source_ip)
            else:
                status, payload = core.handle_register(body, source_ip)
            self._send_json(status, payload)
            return

        if not self._authenticated():
            self._send_json(401, {"Error": "Unauthorized"})
            return

        if parts == ["transducers"]:
            if method != "GET":
                self._send_json(405, {"Error": "MethodNotAllowed"})
                return
            self._send_json(200, core.api_list())
            return

        if len(parts) >= 2 and parts[0] == "transducers":
            internal_id = _parse_int(parts[1])
            if internal_id is None:
                self._send_json(404, {"Error": "UnknownTransducer"})
                return
            if len(parts) == 2:
                if method != "GET":
                    self._send_json(405, {"Error": "MethodNotAllowed"})
                    return
                status, payload = core.api_detail(internal_id)
                self._send_json(status, payload)
                return
            if len(parts) == 4 and parts[2] in ("sensors", "actuators"):
                index = _parse_int(parts[3])
                if index is None:
                    self._send_json(404, {"Error": "UnknownChannel"})
                    return
                body = self._read_json()
                if body is _MALFORMED:
                    self._send_json(400, {"Error": "BadRequest"})
                    return
                status, payload = core.api_channel(internal_id, parts[2], index, method, body)
                self._send_json(status, payload)
                return
            if (
                len(parts) == 5
                and parts[2] == "sensors"
                and parts[4] == "samples"
            ):
                index = _parse_int(parts[3])
                if index is None:
                    self._send_json(404, {"Error": "UnknownChannel"})
                    return
                if method != "GET":
                    self._send_json(405, {"Error": "MethodNotAllowed"})
                    return
                status, payload = core.api_samples(internal_id, index)
                self._send_json(status, payload)
                return
            self._send_json(404, {"Error": "NotFound"})
            return

        if parts == ["pending"]:
            if method != "GET":
                self._send_json(405, {"Error": "MethodNotAllowed"})
                return
            self._send_json(200, core.list_pending())
            return

        if len(parts) == 3 and parts[0] == "pending" and parts[2] in ("approve", "reject"):
            if method != "POST":
                self._send_json(405, {"Error": "MethodNotAllowed"})
                return
            rid = _parse_int(parts[1])
            if rid is None:
                self._send_json(404, {"Error": "UnknownRequest"})
                return
            status, payload = core.confirm_pending(rid, parts[2])
            self._send_json(status, payload)
            return

        self._send_json(404, {"Error": "NotFound"})

    def _authenticated(self) -> bool:
        header = self.headers.get("Authorization", "")
        if not header.startswith("Basic "):
            return False
        try:
            decoded = base64.b64decode(header[6:], validate=True).decode("utf-8")
        except (binascii.Error, UnicodeDecodeError):
            return False
        name, sep, password = decoded.partition(":")
        if not sep:
            return False
        return self.server.core.check_credentials(name, password)

    def _serve_static(self, rel_parts: list[str]) -> None:
        root = self.server.ui_root
        if root is None:
            self._send_json(404, {"Error": "NotFound"})
            return
        if not rel_parts:
            rel_parts = ["index.html"]
        target = root.joinpath(*rel_parts).resolve()
        try:
            target.relative_to(root.resolve())
        except ValueError:
            self._send_json(404, {"Error": "NotFound"})
            return
        if target.is_dir():
            target = target / "index.html"
        if not target.is_file():
            self._send_json(404, {"Error": "NotFound"})
            return
        content_type = mimetypes.guess_type(str(target))[0] or "application/octet-stream"
        self._send_bytes(200, target.read_bytes(), content_type)


def _parse_int(text: str) -> Optional[int]:
    try:
        value = int(text, 10)
    except ValueError:
        return None
    return value if value >= 0 else None


class GatewayHttpServer:
    """Threaded HTTP service around a GatewayCore, plus the sample-poll loop."""

    class Server(ThreadingHTTPServer):
        daemon_threads = True
        core: GatewayCore
        ui_root: Optional[Path]

    def __init__(
        self,
        core: GatewayCore,
        host: str = "127.0.0.1",
        port: int = 5050,
        ui_root: Optional[Path] = None,
        poll_tick_s: float = 0.5,
    ):
        self.core = core
        self._server = self.Server((host, port), GatewayHandler)
        self._server.core = core
        self._server.ui_root = Path(ui_root) if ui_root is not None else None
        self.host, self.port = self._server.server_address[:2]
        self._poll_tick_s = poll_tick_s
        self._threads: list[threading.Thread] = []
        self._stopping = threading.Event()

    def start(self) -> "GatewayHttpServer":
        serve = threading.Thread(target=self._server.serve_forever, daemon=True)
        serve.start()
        poll = threading.Thread(target=self._poll_loop, daemon=True)
        poll.start()
        self._threads = [serve, poll]
        return self

    def _poll_loop(self) -> None:
        while not self._stopping.wait(self._poll_tick_s):
            try:
                self.core.run_poll_cycle()
            except Exception:
                pass  # a dead node must not kill the poller

    def stop(self) -> None:
        self._stopping.set()
        self._server.shutdown()
        self._server.server_close()
        for t in self._threads:
            t.join(timeout=2.0)


class NodeHandler(_JsonHandler):
    server: "NodeHttpServer.Server"

    def do_GET(self) -> None:
        self._route("GET")

    def do_PUT(self) -> None:
        self._route("PUT")

    def do_POST(self) -> None:
        self._route("POST")

    def do_DELETE(self) -> None:
        self._route("DELETE")

    def _route(self, method: str) -> None:
        body = self._read_json()
        if body is _MALFORMED:
            body = None  # the runtime treats an unusable body as malformed
        path = self.path.split("?", 1)[0]
        with self.server.lock:
            status, payload = self.server.runtime.serve_request(method, path, body)
        self._send_json(status, payload)


class NodeHttpServer:
    """The emulated microcontroller's server: one runtime, serialized requests."""

    class Server(ThreadingHTTPServer):
        daemon_threads = True
        runtime: NodeRuntime
        lock: threading.RLock

    def __init__(
        self,
        runtime: NodeRuntime,
        host: str = "127.0.0.1",
        port: int = 0,
        lock: Optional[threading.RLock] = None,
    ):
        self.runtime = runtime
        self.lock = lock if lock is not None else threading.RLock()
        self._server = self.Server((host, port), NodeHandler)
        self._server.runtime = runtime
        self._server.lock = self.lock
        self.host, self.port = self._server.server_address[:2]
        self._thread: Optional[threading.Thread] = None

    def start(self) -> "NodeHttpServer":
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        if self._thread is not None:
            self._thread.join(timeout=2.0)


def http_json_request(
    host: str,
    port: int,
    method: str,
    path: str,
    body: Any = None,
    auth: Optional[tuple[str, str]] = None,
    timeout_s: float = 5.0,
) -> tuple[int, Any]:
    """One JSON-over-HTTP exchange; returns (status, parsed payload or None)."""
    url = f"http://{host}:{port}{path}"
    data = None
    headers = {"Accept": "application/json"}
    if body is not None:
        data = json.dumps(body).encode("utf-8")
        headers["Content-Type"] = "application/json"
    if auth is not None:
        token = base64.b64encode(f"{auth[0]}:{auth[1]}".encode("utf-8")).decode("ascii")
        headers["Authorization"] = f"Basic {token}"
    request = urllib.request.Request(url, data=data, headers=headers, method=method)
    try:
        with urllib.request.urlopen(request, timeout=timeout_s) as resp:
            return resp.status, _decode_payload(resp.read())
    except urllib.error.HTTPError as err:
        return err.code, _decode_payload(err.read())


def _decode_payload(raw: bytes) -> Any:
    if not raw:
        return None
    try:
        return json.loads(raw.decode("utf-8"))
    except (ValueError, UnicodeDecodeError):
        return None


def loopback_node_client(
    ip: str, port: int, method: str, path: str, body: Any = None
) -> tuple[int, Any]:
    """GatewayCore.node_client adapter for real loopback nodes."""
    return http_json_request(ip, port, method, path, body, timeout_s=2.0)
