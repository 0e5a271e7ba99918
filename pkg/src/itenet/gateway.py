"""Home-automation gateway core.

`GatewayCore` answers node configuration/registration requests, matches node
identifiers against an ITE repository, keeps timestamped registration records,
enforces an admission policy (automatic / dynamic_request / whitelist), proxies
transducer access to the owning node, and logs periodic sensor samples.

The core is transport-free: an HTTP front end (httpd), the discrete-event
simulator, and unit tests all drive the same methods.  Outbound calls to nodes
go through an injected ``node_client(ip, port, method, path, body)`` callable,
so the core never opens sockets itself.

Persistence is a single JSON document (records, users, policy, pending queue)
rewritten atomically, plus an append-only line-delimited JSON sample log.
"""

from __future__ import annotations

import hashlib
import hmac
import json
import os
import secrets
import tempfile
import threading
import urllib.request
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional

from .ite import (
    IteDescriptor,
    IteError,
    NodeIdentifier,
    detail_obj,
    listing_entry_obj,
    parse_ite,
    parse_node_id,
    render_node_id,
)

STORE_VERSION = 1
ADMISSION_MODES = ("automatic", "dynamic_request", "whitelist")
DEFAULT_PORT = 5050

NodeClient = Callable[[str, int, str, str, Any], tuple[int, Any]]


class GatewayError(Exception):
    pass


@dataclass
class GatewayConfig:
    """Operational settings handed to nodes and governing admission."""

    ssid: str = "home-net"
    password: str = "home-pass"
    gateway_ip: str = "192.168.1.1"
    mode: Optional[str] = None  # None adopts the stored policy, default automatic
    liveness_interval_s: float = 60.0

    def __post_init__(self) -> None:
        if self.mode is not None and self.mode not in ADMISSION_MODES:
            raise GatewayError(f"unknown admission mode {self.mode!r}")


@dataclass
class RegistrationRecord:
    internal_id: int
    identifier: NodeIdentifier
    ip: str
    port: int
    registered_at_ms: float
    last_seen_ms: float

    def to_obj(self) -> dict:
        return {
            "internal_id": self.internal_id,
            "node_id": render_node_id(self.identifier),
            "ip": self.ip,
            "port": self.port,
            "registered_at_ms": self.registered_at_ms,
            "last_seen_ms": self.last_seen_ms,
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "RegistrationRecord":
        return cls(
            internal_id=int(obj["internal_id"]),
            identifier=parse_node_id(obj["node_id"]),
            ip=str(obj["ip"]),
            port=int(obj["port"]),
            registered_at_ms=float(obj["registered_at_ms"]),
            last_seen_ms=float(obj["last_seen_ms"]),
        )


@dataclass
class PendingRequest:
    rid: int
    kind: str  # "configure" | "register"
    node_id: str  # dotted identifier
    ip: str
    port: Optional[int]
    requested_at_ms: float

    def to_obj(self) -> dict:
        return {
            "rid": self.rid,
            "kind": self.kind,
            "node_id": self.node_id,
            "ip": self.ip,
            "port": self.port,
            "requested_at_ms": self.requested_at_ms,
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "PendingRequest":
        return cls(
            rid=int(obj["rid"]),
            kind=str(obj["kind"]),
            node_id=str(obj["node_id"]),
            ip=str(obj["ip"]),
            port=None if obj.get("port") is None else int(obj["port"]),
            requested_at_ms=float(obj["requested_at_ms"]),
        )


def _default_fetch(url: str, timeout_s: float = 5.0) -> bytes:
    with urllib.request.urlopen(url, timeout=timeout_s) as resp:
        return resp.read()


class IteRepository:
    """ITE lookup: a local directory (layout ``<type>/<version>.json``)
    shadowing an optional remote base queried as GET {base}/ites/{type}/{version}."""

    def __init__(
        self,
        local_dir: Optional[Path] = None,
        remote_base: Optional[str] = None,
        fetch: Callable[[str], bytes] = _default_fetch,
    ):
        self.local_dir = Path(local_dir) if local_dir is not None else None
        self.remote_base = remote_base.rstrip("/") if remote_base else None
        self._fetch = fetch
        self._cache: dict[tuple[int, int], Optional[IteDescriptor]] = {}

    def lookup(self, node_type: int, version: int) -> Optional[IteDescriptor]:
        key = (node_type, version)
        if key in self._cache:
            return self._cache[key]
        ite = self._lookup_local(node_type, version)
        if ite is None and self.remote_base is not None:
            ite = self._lookup_remote(node_type, version)
        self._cache[key] = ite
        return ite

    def _lookup_local(self, node_type: int, version: int) -> Optional[IteDescriptor]:
        if self.local_dir is None:
            return None
        path = self.local_dir / str(node_type) / f"{version}.json"
        if not path.is_file():
            return None
        return parse_ite(path.read_bytes())

    def _lookup_remote(self, node_type: int, version: int) -> Optional[IteDescriptor]:
        url = f"{self.remote_base}/ites/{node_type}/{version}"
        try:
            payload = self._fetch(url)
            return parse_ite(payload)
        except Exception:
            return None


def _hash_password(password: str, salt: bytes, iterations: int = 100_000) -> bytes:
    return hashlib.pbkdf2_hmac("sha256", password.encode("utf-8"), salt, iterations)


class GatewayCore:
    def __init__(
        self,
        config: GatewayConfig,
        repository: IteRepository,
        clock: Callable[[], float],
        store_path: Optional[Path] = None,
        sample_log_path: Optional[Path] = None,
        node_client: Optional[NodeClient] = None,
    ):
        self.config = config
        self.repository = repository
        self.clock = clock
        self.store_path = Path(store_path) if store_path is not None else None
        self.sample_log_path = Path(sample_log_path) if sample_log_path is not None else None
        self.node_client = node_client
        self._lock = threading.RLock()

        self.mode = config.mode or "automatic"
        self.records: dict[tuple[int, int], RegistrationRecord] = {}
        self.pending: list[PendingRequest] = []
        self.approved_ids: set[str] = set()
        self.rejected_ids: set[str] = set()
        self.users: dict[str, dict] = {}
        self.next_internal_id = 1
        self.next_rid = 1
        self.poll_gap_count = 0
        self._samples: list[dict] = []
        self._next_poll_due: dict[tuple[int, str], float] = {}

        if self.store_path is not None and self.store_path.exists():
            self._load()
            if config.mode is not None:
                self.mode = config.mode  # explicit setting wins over the store
        if self.sample_log_path is not None and self.sample_log_path.exists():
            self._load_samples()

    # -- persistence -----------------------------------------------------

    def _load(self) -> None:
        obj = json.loads(self.store_path.read_text("utf-8"))
        if obj.get("version") != STORE_VERSION:
            raise GatewayError(f"unsupported store version {obj.get('version')!r}")
        self.mode = obj.get("mode", "automatic")
        self.next_internal_id = int(obj.get("next_internal_id", 1))
        self.next_rid = int(obj.get("next_rid", 1))
        self.approved_ids = set(obj.get("approved_ids", []))
        self.rejected_ids = set(obj.get("rejected_ids", []))
        self.users = dict(obj.get("users", {}))
        self.records = {}
        for rec_obj in obj.get("records", []):
            record = RegistrationRecord.from_obj(rec_obj)
            key = (record.identifier.node_type, record.identifier.serial)
            self.records[key] = record
        self.pending = [PendingRequest.from_obj(p) for p in obj.get("pending", [])]

    def _save(self) -> None:
        if self.store_path is None:
            return
        obj = {
            "version": STORE_VERSION,
            "mode": self.mode,
            "next_internal_id": self.next_internal_id,
            "next_rid": self.next_rid,
            "approved_ids": sorted(self.approved_ids),
            "rejected_ids": sorted(self.rejected_ids),
            "users": self.users,
            "records": [r.to_obj() for r in self._records_sorted()],
            "pending": [p.to_obj() for p in self.pending],
        }
        payload = json.dumps(obj, indent=2) + "\n"
        self.store_path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp_name = tempfile.mkstemp(
            dir=str(self.store_path.parent), prefix=self.store_path.name, suffix=".tmp"
        )
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                fh.write(payload)
            os.replace(tmp_name, self.store_path)
        except BaseException:
            try:
                os.unlink(tmp_name)
            except OSError:
                pass
            raise

    def _load_samples(self) -> None:
        for line in self.sample_log_path.read_text("utf-8").splitlines():
            line = line.strip()
            if line:
                self._samples.append(json.loads(line))

    def _append_samples(self, entries: list[dict]) -> None:
        self._samples.extend(entries)
        if self.sample_log_path is None or not entries:
            return
        self.sample_log_path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.sample_log_path, "a", encoding="utf-8") as fh:
            for entry in entries:
                fh.write(json.dumps(entry) + "\n")

    # -- users / auth ------------------------------------------------------

    def add_user(self, name: str, password: str) -> None:
        if not name:
            raise GatewayError("user name must be non-empty")
        with self._lock:
            salt = secrets.token_bytes(16)
            digest = _hash_password(password, salt)
            self.users[name] = {
                "salt": salt.hex(),
                "hash": digest.hex(),
                "iterations": 100_000,
            }
            self._save()

    def check_credentials(self, name: str, password: str) -> bool:
        entry = self.users.get(name)
        if entry is None:
            return False
        expected = bytes.fromhex(entry["hash"])
        actual = _hash_password(password, bytes.fromhex(entry["salt"]), int(entry["iterations"]))
        return hmac.compare_digest(expected, actual)

    # -- admission ---------------------------------------------------------

    def add_to_whitelist(self, dotted: str) -> None:
        parse_node_id(dotted)  # validate
        with self._lock:
            self.approved_ids.add(dotted)
            self.rejected_ids.discard(dotted)
            self._save()

    def _admission(self, dotted: str) -> str:
        if dotted in self.rejected_ids:
            return "rejected"
        if self.mode == "automatic" or dotted in self.approved_ids:
            return "granted"
        return "pending"

    def _enqueue(self, kind: str, dotted: str, ip: str, port: Optional[int]) -> None:
        for entry in self.pending:
            if entry.node_id == dotted:
                entry.kind = kind
                entry.ip = ip
                entry.port = port
                entry.requested_at_ms = self.clock()
                return
        self.pending.append(
            PendingRequest(
                rid=self.next_rid,
                kind=kind,
                node_id=dotted,
                ip=ip,
                port=port,
                requested_at_ms=self.clock(),
            )
        )
        self.next_rid += 1

    # -- node-facing operations ---------------------------------------------

    def handle_configure(self, body: Any, source_ip: str) -> tuple[int, dict]:
        identifier = _parse_request_identifier(body, "Configure")
        if identifier is None:
            return 400, {"Error": "BadRequest"}
        with self._lock:
            if self.repository.lookup(identifier.node_type, identifier.version) is None:
                return 404, {"Error": "UnknownType"}
            dotted = render_node_id(identifier)
            outcome = self._admission(dotted)
            if outcome == "rejected":
                return 403, {"Error": "AdmissionRejected"}
            if outcome == "pending":
                self._enqueue("configure", dotted, source_ip, None)
                self._save()
                return 202, {"Pending": 1}
            return 200, {
                "SSID": self.config.ssid,
                "Password": self.config.password,
                "GatewayIP": self.config.gateway_ip,
            }

    def handle_register(self, body: Any, source_ip: str) -> tuple[int, dict]:
        identifier = _parse_request_identifier(body, "Register")
        port = body.get("Port") if isinstance(body, dict) else None
        if identifier is None or not isinstance(port, int) or isinstance(port, bool) or not (
            0 < port < 65536
        ):
            return 400, {"Error": "BadRequest"}
        with self._lock:
            if self.repository.lookup(identifier.node_type, identifier.version) is None:
                return 404, {"Registered": 0}
            dotted = render_node_id(identifier)
            outcome = self._admission(dotted)
            if outcome == "rejected":
                return 403, {"Registered": 0}
            if outcome == "pending":
                self._enqueue("register", dotted, source_ip, port)
                self._save()
                return 202, {"Pending": 1}
            now = self.clock()
            key = (identifier.node_type, identifier.serial)
            record = self.records.get(key)
            if record is None:
                record = RegistrationRecord(
                    internal_id=self.next_internal_id,
                    identifier=identifier,
                    ip=source_ip,
                    port=port,
                    registered_at_ms=now,
                    last_seen_ms=now,
                )
                self.next_internal_id += 1
                self.records[key] = record
            else:
                record.identifier = identifier
                record.ip = source_ip
                record.port = port
                record.registered_at_ms = now
                record.last_seen_ms = now
            self._save()
            return 200, {"Registered": 1}

    # -- admission API --------------------------------------------------------

    def list_pending(self) -> list[dict]:
        with self._lock:
            return [p.to_obj() for p in self.pending]

    def confirm_pending(self, rid: int, decision: str) -> tuple[int, dict]:
        if decision not in ("approve", "reject"):
            return 400, {"Error": "BadRequest"}
        with self._lock:
            entry = next((p for p in self.pending if p.rid == rid), None)
            if entry is None:
                return 404, {"Error": "UnknownRequest"}
            self.pending.remove(entry)
            if decision == "approve":
                self.approved_ids.add(entry.node_id)
                self.rejected_ids.discard(entry.node_id)
                result = {"Result": "approved", "NodeID": entry.node_id}
            else:
                self.rejected_ids.add(entry.node_id)
                self.approved_ids.discard(entry.node_id)
                result = {"Result": "rejected", "NodeID": entry.node_id}
            self._save()
            return 200, result

    # -- user-facing API -----------------------------------------------------

    def _records_sorted(self) -> list[RegistrationRecord]:
        return sorted(self.records.values(), key=lambda r: r.internal_id)

    def _record_by_internal_id(self, internal_id: int) -> Optional[RegistrationRecord]:
        for record in self.records.values():
            if record.internal_id == internal_id:
                return record
        return None

    def _record_ite(self, record: RegistrationRecord) -> IteDescriptor:
        ite = self.repository.lookup(record.identifier.node_type, record.identifier.version)
        if ite is None:
            raise GatewayError(
                f"registered node {render_node_id(record.identifier)} has no ITE in the repository"
            )
        return ite

    def api_list(self) -> list[dict]:
        with self._lock:
            return [
                listing_entry_obj(r.internal_id, r.identifier.serial, self._record_ite(r))
                for r in self._records_sorted()
            ]

    def api_detail(self, internal_id: int) -> tuple[int, dict]:
        with self._lock:
            record = self._record_by_internal_id(internal_id)
            if record is None:
                return 404, {"Error": "UnknownTransducer"}
            ite = self._record_ite(record)
            return 200, detail_obj(record.internal_id, record.identifier.serial, record.ip, ite)

    def api_channel(
        self, internal_id: int, kind: str, index: int, method: str, body: Any = None
    ) -> tuple[int, Any]:
        with self._lock:
            record = self._record_by_internal_id(internal_id)
            if record is None:
                return 404, {"Error": "UnknownTransducer"}
            ite = self._record_ite(record)
            channels = ite.sensors if kind == "sensors" else ite.actuators
            if not (0 <= index < len(channels)):
                return 404, {"Error": "UnknownChannel"}
            if kind == "sensors" and method != "GET":
                return 405, {"Error": "MethodNotAllowed"}
            if kind == "actuators" and method not in ("GET", "PUT"):
                return 405, {"Error": "MethodNotAllowed"}
            ip, port = record.ip, record.port
        status, payload = self._call_node(ip, port, method, f"/{kind}/{index}", body)
        if status is None:
            return 502, {"Error": "NodeUnreachable"}
        if 200 <= status < 300:
            with self._lock:
                record = self._record_by_internal_id(internal_id)
                if record is not None:
                    record.last_seen_ms = self.clock()
        return status, payload

    def api_samples(self, internal_id: int, index: int) -> tuple[int, Any]:
        with self._lock:
            record = self._record_by_internal_id(internal_id)
            if record is None:
                return 404, {"Error": "UnknownTransducer"}
            ite = self._record_ite(record)
            if not (0 <= index < len(ite.sensors)):
                return 404, {"Error": "UnknownChannel"}
            uri = f"/sensors/{index}"
            out = [
                {"value": s["value"], "t_ms": s["t_ms"]}
                for s in self._samples
                if s["internal_id"] == internal_id and s["uri"] == uri
            ]
            return 200, out

    def _call_node(
        self, ip: str, port: int, method: str, path: str, body: Any
    ) -> tuple[Optional[int], Any]:
        if self.node_client is None:
            return None, None
        try:
            return self.node_client(ip, port, method, path, body)
        except Exception:
            return None, None

    def is_reachable(self, record: RegistrationRecord) -> bool:
        return (self.clock() - record.last_seen_ms) <= self.config.liveness_interval_s * 1000.0

    # -- sample polling --------------------------------------------------------

    def _poll_channels(self) -> list[tuple[RegistrationRecord, int, str, float]]:
        """Every (record, sensor index, uri, period_ms) that has a refresh rate."""
        out = []
        for record in self._records_sorted():
            ite = self._record_ite(record)
            for i, channel in enumerate(ite.sensors):
                if channel.refresh_rate:
                    period_ms = 3_600_000.0 / channel.refresh_rate  # refreshes per hour
                    out.append((record, i, f"/sensors/{i}", period_ms))
        return out

    def next_poll_at(self) -> Optional[float]:
        """Earliest due time over all polled channels, priming new ones."""
        with self._lock:
            channels = self._poll_channels()
            if not channels:
                return None
            now = self.clock()
            for record, _, uri, period_ms in channels:
                key = (record.internal_id, uri)
                self._next_poll_due.setdefault(key, now + period_ms)
            live = {(r.internal_id, uri) for r, _, uri, _ in channels}
            for key in list(self._next_poll_due):
                if key not in live:
                    del self._next_poll_due[key]
            return min(self._next_poll_due.values())

    def run_poll_cycle(self) -> int:
        """Sample every due channel once; returns the number of entries logged.

        Unreachable or out-of-bounds reads leave a gap (counted, never
        fabricated); the schedule still advances so a dead node cannot stall
        the poller.
        """
        with self._lock:
            channels = self._poll_channels()
            now = self.clock()
            due = []
            for record, index, uri, period_ms in channels:
                key = (record.internal_id, uri)
                due_at = self._next_poll_due.setdefault(key, now + period_ms)
                if due_at <= now:
                    due.append((record, index, uri, period_ms, key))
        entries = []
        for record, index, uri, period_ms, key in due:
            ite = self._record_ite(record)
            fd = ite.sensors[index].response_format
            status, payload = self._call_node(record.ip, record.port, "GET", uri, None)
            value = None
            if status is not None and 200 <= status < 300 and isinstance(payload, dict):
                value = payload.get(fd.name)
            ok = isinstance(value, (int, float)) and not isinstance(value, bool) and (
                fd.min_value <= float(value) <= fd.max_value
            )
            if isinstance(value, bool):
                ok = fd.min_value <= int(value) <= fd.max_value
            with self._lock:
                if ok:
                    entries.append(
                        {
                            "internal_id": record.internal_id,
                            "uri": uri,
                            "value": value,
                            "t_ms": self.clock(),
                        }
                    )
                    record.last_seen_ms = self.clock()
                else:
                    self.poll_gap_count += 1
                while self._next_poll_due[key] <= self.clock():
                    self._next_poll_due[key] += period_ms
        with self._lock:
            self._append_samples(entries)
        return len(entries)


def _parse_request_identifier(body: Any, expected_request: str) -> Optional[NodeIdentifier]:
    if not isinstance(body, dict):
        return None
    if body.get("Request") != expected_request:
        return None
    node_id = body.get("NodeID")
    if not isinstance(node_id, str):
        return None
    try:
        return parse_node_id(node_id)
    except IteError:
        return None
