"""Transducer-node runtime: the self-configuration / self-registration FSM.

The node walks a fixed state machine: an unconfigured node (status flag 0)
runs phase A — connect to the configuration access point, start its server,
request network configuration, persist it and restart — and a configured node
(status flag 1) runs phase B — connect to the operational access point,
start its server, register with the gateway, then serve requests in Listen.

The runtime is transport-agnostic: ``step`` consumes events (powered_on,
ap_connected, server_started, response_received, timeout) and returns effects
(connect, start server, send message, write NVM, restart, arm timer) that a
driver executes, whether that driver is the discrete-event simulator or a
real thread talking HTTP over loopback.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Optional

from .ite import (
    IteDescriptor,
    NetworkConfig,
    NodeIdentifier,
    NvmError,
    NvmImage,
    STATUS_CONFIGURED,
    STATUS_UNCONFIGURED,
    decode_nvm,
    encode_nvm,
    render_node_id,
)
from .transducers import ActuatorChannel, SensorChannel, bind_channels


class NodeState(str, Enum):
    INIT_A = "init_a"
    CONNECT_AP_A = "connect_ap_a"
    SERVE_A = "serve_a"
    REQUEST_CONFIG = "request_config"
    WAIT_RESPONSE_A = "wait_response_a"
    INIT_B = "init_b"
    CONNECT_AP_B = "connect_ap_b"
    SERVE_B = "serve_b"
    REQUEST_REGISTER = "request_register"
    WAIT_RESPONSE_B = "wait_response_b"
    LISTEN = "listen"


PROTOCOL_STATES = (
    NodeState.REQUEST_CONFIG,
    NodeState.WAIT_RESPONSE_A,
    NodeState.REQUEST_REGISTER,
    NodeState.WAIT_RESPONSE_B,
)

CONFIG_AP = "config"
HOME_AP = "home"


# Events ---------------------------------------------------------------------

EVENT_KINDS = ("powered_on", "ap_connected", "server_started", "response_received", "timeout")


@dataclass(frozen=True)
class Event:
    kind: str
    payload: Any = None  # response body for response_received; timer generation for timeout

    def __post_init__(self) -> None:
        if self.kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {self.kind!r}")


def powered_on() -> Event:
    return Event("powered_on")


def ap_connected() -> Event:
    return Event("ap_connected")


def server_started() -> Event:
    return Event("server_started")


def response_received(body: Any) -> Event:
    return Event("response_received", body)


def timeout(generation: int) -> Event:
    return Event("timeout", generation)


# Effects --------------------------------------------------------------------


@dataclass(frozen=True)
class ConnectAp:
    ap: str  # CONFIG_AP or HOME_AP


@dataclass(frozen=True)
class StartServer:
    pass


@dataclass(frozen=True)
class SendMessage:
    body: dict


@dataclass(frozen=True)
class WriteNvm:
    image: NvmImage


@dataclass(frozen=True)
class Restart:
    pass


@dataclass(frozen=True)
class ArmTimer:
    delay_ms: float
    generation: int


Effect = Any


@dataclass
class NodeTiming:
    """Node-side pacing knobs, shared by the FSM and its drivers."""

    init_ms: float = 120.0  # boot + default-value configuration
    serve_ms: float = 60.0  # driver: time to bring the server up
    restart_ms: float = 350.0  # driver: reboot after NVM write
    response_timeout_ms: float = 5000.0  # per-state watchdog
    retry_delay_ms: float = 1000.0  # pause before re-sending after a bad response
    max_retries: int = 3  # per objective; exhausted -> restart phase from Init


REALTIME_TIMING = NodeTiming(init_ms=1.0, serve_ms=0.0, restart_ms=5.0)


@dataclass
class StateVisit:
    state: NodeState
    entry_ms: float
    exit_ms: Optional[float] = None


class NodeRuntime:
    """One emulated node: identity, NVM, live channels and the FSM."""

    def __init__(
        self,
        nvm: NvmImage,
        ite: IteDescriptor,
        clock: Callable[[], float],
        timing: Optional[NodeTiming] = None,
        listen_port: int = 0,
        run_id: str = "run0",
        channel_seed: int = 0,
    ):
        identifier, status, net = decode_nvm(nvm)
        if identifier.node_type != ite.node_type or identifier.version != ite.version:
            raise ValueError(
                f"NVM identity {identifier.dotted()} does not match descriptor "
                f"({ite.node_type}, version {ite.version})"
            )
        self.identifier = identifier
        self.ite = ite
        self.nvm = nvm
        self.net_config = net
        self.clock = clock
        self.timing = timing or NodeTiming()
        self.listen_port = listen_port
        self.run_id = run_id
        self.sensors: list[SensorChannel]
        self.actuators: list[ActuatorChannel]
        self.sensors, self.actuators = bind_channels(ite, seed=channel_seed)
        self.state: Optional[NodeState] = None
        self.visits: list[StateVisit] = []
        self.retry_count = 0
        self.restart_count = 0
        self._retries_left = self.timing.max_retries
        self._timer_generation = 0
        self._rebooting = False
        self._retry_pause_armed = False

    # -- bookkeeping

    def _enter(self, state: NodeState) -> None:
        now = self.clock()
        if self.visits:
            self.visits[-1].exit_ms = now
        self.visits.append(StateVisit(state, now))
        self.state = state

    def _arm(self, delay_ms: float) -> ArmTimer:
        self._timer_generation += 1
        return ArmTimer(delay_ms, self._timer_generation)

    def _timer_is_current(self, generation: Any) -> bool:
        return generation == self._timer_generation

    @property
    def status(self) -> int:
        return self.nvm.identity_region[8]

    def close_run(self) -> None:
        if self.visits and self.visits[-1].exit_ms is None:
            self.visits[-1].exit_ms = self.clock()

    def state_durations(self) -> list[tuple[NodeState, float]]:
        """Contiguous per-visit durations; the open tail is measured to now."""
        out = []
        for i, visit in enumerate(self.visits):
            exit_ms = visit.exit_ms
            if exit_ms is None:
                exit_ms = self.visits[i + 1].entry_ms if i + 1 < len(self.visits) else self.clock()
            out.append((visit.state, exit_ms - visit.entry_ms))
        return out

    def dump_timers_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["run_id", "state", "entry_ms", "exit_ms"])
        for i, visit in enumerate(self.visits):
            exit_ms = visit.exit_ms
            if exit_ms is None:
                exit_ms = self.visits[i + 1].entry_ms if i + 1 < len(self.visits) else self.clock()
            writer.writerow([self.run_id, visit.state.value, f"{visit.entry_ms:.3f}", f"{exit_ms:.3f}"])
        return buf.getvalue()

    # -- protocol messages

    def build_config_request(self) -> dict:
        return {"NodeID": render_node_id(self.identifier), "Request": "Configure"}

    def build_register_request(self) -> dict:
        return {
            "NodeID": render_node_id(self.identifier),
            "Request": "Register",
            "Port": self.listen_port,
        }

    # -- FSM

    def step(self, event: Event) -> list[Effect]:
        if event.kind == "powered_on":
            return self._boot()
        if self._rebooting or self.state is None:
            return []  # quiescent until the reboot's powered_on arrives
        if event.kind == "timeout" and not self._timer_is_current(event.payload):
            return []  # stale timer from a superseded state
        handler = {
            NodeState.INIT_A: self._in_init,
            NodeState.INIT_B: self._in_init,
            NodeState.CONNECT_AP_A: self._in_connect,
            NodeState.CONNECT_AP_B: self._in_connect,
            NodeState.SERVE_A: self._in_serve,
            NodeState.SERVE_B: self._in_serve,
            NodeState.WAIT_RESPONSE_A: self._in_wait_a,
            NodeState.WAIT_RESPONSE_B: self._in_wait_b,
            NodeState.LISTEN: self._in_listen,
        }.get(self.state)
        return handler(event) if handler else []

    def _boot(self) -> list[Effect]:
        self._rebooting = False
        self._retries_left = self.timing.max_retries
        self._retry_pause_armed = False
        identifier, status, net = decode_nvm(self.nvm)
        self.net_config = net
        self._enter(NodeState.INIT_A if status == STATUS_UNCONFIGURED else NodeState.INIT_B)
        return [self._arm(self.timing.init_ms)]

    def _phase(self) -> str:
        return "A" if self.state in (
            NodeState.INIT_A,
            NodeState.CONNECT_AP_A,
            NodeState.SERVE_A,
            NodeState.REQUEST_CONFIG,
            NodeState.WAIT_RESPONSE_A,
        ) else "B"

    def _restart_phase(self) -> list[Effect]:
        """Retry budget exhausted: re-run the current phase from its Init."""
        self.restart_count += 1
        self._retries_left = self.timing.max_retries
        self._retry_pause_armed = False
        self._enter(NodeState.INIT_A if self._phase() == "A" else NodeState.INIT_B)
        return [self._arm(self.timing.init_ms)]

    def _in_init(self, event: Event) -> list[Effect]:
        if event.kind != "timeout":
            return []
        if self.state is NodeState.INIT_A:
            self._enter(NodeState.CONNECT_AP_A)
            ap = CONFIG_AP
        else:
            self._enter(NodeState.CONNECT_AP_B)
            ap = HOME_AP
        return [ConnectAp(ap), self._arm(self.timing.response_timeout_ms)]

    def _in_connect(self, event: Event) -> list[Effect]:
        if event.kind == "ap_connected":
            self._retries_left = self.timing.max_retries
            self._enter(NodeState.SERVE_A if self.state is NodeState.CONNECT_AP_A else NodeState.SERVE_B)
            return [StartServer()]
        if event.kind == "timeout":
            if self._retries_left == 0:
                return self._restart_phase()
            self._retries_left -= 1
            self.retry_count += 1
            ap = CONFIG_AP if self.state is NodeState.CONNECT_AP_A else HOME_AP
            return [ConnectAp(ap), self._arm(self.timing.response_timeout_ms)]
        return []

    def _in_serve(self, event: Event) -> list[Effect]:
        if event.kind != "server_started":
            return []
        self._retries_left = self.timing.max_retries
        return self._send_request()

    def _send_request(self) -> list[Effect]:
        self._retry_pause_armed = False
        if self._phase() == "A":
            self._enter(NodeState.REQUEST_CONFIG)
            body = self.build_config_request()
            self._enter(NodeState.WAIT_RESPONSE_A)
        else:
            self._enter(NodeState.REQUEST_REGISTER)
            body = self.build_register_request()
            self._enter(NodeState.WAIT_RESPONSE_B)
        return [SendMessage(body), self._arm(self.timing.response_timeout_ms)]

    def _attempt_failed(self, immediate: bool) -> list[Effect]:
        """A request went unanswered or came back unusable."""
        if self._retries_left == 0:
            return self._restart_phase()
        self._retries_left -= 1
        self.retry_count += 1
        if immediate:
            return self._send_request()
        self._retry_pause_armed = True
        return [self._arm(self.timing.retry_delay_ms)]

    def _in_wait_a(self, event: Event) -> list[Effect]:
        if event.kind == "timeout":
            # either the response watchdog or a pending retry pause elapsed
            return self._send_request() if self._retry_pending() else self._attempt_failed(immediate=True)
        if event.kind == "response_received":
            net = _parse_config_response(event.payload)
            if net is None:
                return self._attempt_failed(immediate=False)
            image = encode_nvm(self.identifier, STATUS_CONFIGURED, net)
            self.nvm = image
            self.net_config = net
            self._rebooting = True
            self._timer_generation += 1  # invalidate the watchdog
            return [WriteNvm(image), Restart()]
        return []

    def _in_wait_b(self, event: Event) -> list[Effect]:
        if event.kind == "timeout":
            return self._send_request() if self._retry_pending() else self._attempt_failed(immediate=True)
        if event.kind == "response_received":
            body = event.payload
            if isinstance(body, dict) and body.get("Registered") == 1:
                self._enter(NodeState.LISTEN)
                return []
            return self._attempt_failed(immediate=False)
        return []

    def _retry_pending(self) -> bool:
        # both the watchdog and the retry pause share the generation counter,
        # so a flag records which one the current timer means
        return self._retry_pause_armed

    def _in_listen(self, event: Event) -> list[Effect]:
        return []

    # -- request serving (the node's TCP server)

    def serve_request(self, method: str, path: str, body: Any = None) -> tuple[int, dict]:
        """Answer one HTTP-style request.

        Before registration completes only /id is served; transducer paths
        come alive in Listen.
        """
        if self.state not in (NodeState.SERVE_A, NodeState.SERVE_B, NodeState.LISTEN):
            return 503, {"Error": "NotReady"}
        if path == "/id":
            if method != "GET":
                return 405, {"Error": "MethodNotAllowed"}
            return 200, {"NodeID": render_node_id(self.identifier)}
        if self.state is not NodeState.LISTEN:
            return 404, {"Error": "NotFound"}
        kind, index = _split_channel_path(path)
        if kind == "sensors":
            if index is None or index >= len(self.sensors):
                return 404, {"Error": "NotFound"}
            if method != "GET":
                return 405, {"Error": "MethodNotAllowed"}
            channel = self.sensors[index]
            return 200, {channel.descriptor.response_format.name: channel.read()}
        if kind == "actuators":
            if index is None or index >= len(self.actuators):
                return 404, {"Error": "NotFound"}
            channel = self.actuators[index]
            request_fd = channel.descriptor.request_format
            assert request_fd is not None
            response_name = channel.descriptor.response_format.name
            if method == "GET":
                return 200, {request_fd.name: channel.state.current}
            if method == "PUT":
                if not isinstance(body, dict) or set(body.keys()) != {request_fd.name}:
                    return 200, {response_name: 0}
                accepted = channel.state.apply(body[request_fd.name])
                return 200, {response_name: 1 if accepted else 0}
            return 405, {"Error": "MethodNotAllowed"}
        return 404, {"Error": "NotFound"}


def _split_channel_path(path: str) -> tuple[Optional[str], Optional[int]]:
    parts = path.strip("/").split("/")
    if len(parts) != 2 or parts[0] not in ("sensors", "actuators"):
        return None, None
    try:
        index = int(parts[1], 10)
    except ValueError:
        return parts[0], None
    return parts[0], index if index >= 0 else None


def _parse_config_response(body: Any) -> Optional[NetworkConfig]:
    if not isinstance(body, dict):
        return None
    ssid = body.get("SSID")
    password = body.get("Password")
    gateway_ip = body.get("GatewayIP")
    if not isinstance(ssid, str) or not isinstance(password, str) or not isinstance(gateway_ip, str):
        return None
    try:
        return NetworkConfig(ssid=ssid, password=password, gateway_ip=gateway_ip)
    except NvmError:
        return None
