"""Virtual network fabric: access points, links, clocks, and scenario runs.

Everything a node or gateway does on the network is replayed over one of two
time sources:

* ``VirtualClock`` — a deterministic discrete-event loop.  Given a scenario
  and a seed the full trace is reproducible bit-for-bit: every random draw
  comes from a substream keyed ``"{seed}:{label}"`` so that changing one knob
  (say, AP load) never perturbs the draws of unrelated events.
* real time — nodes run as threads speaking actual HTTP over loopback
  (`RealtimeNodeDriver`), for end-to-end smoke tests.

Access points are characterized by three delay distributions (authentication+
association, DHCP, per-packet latency), a load factor, and a loss probability
on the scenario.  Load beyond 1.0 multiplies latency via
``overload_multiplier``.  Loss is drawn once per request/response exchange:
the transport below our abstraction retransmits within an exchange, so a
"lost" exchange models the whole conversation failing.
"""

from __future__ import annotations

import heapq
import itertools
import json
import queue
import random
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional

from .gateway import GatewayConfig, GatewayCore, IteRepository
from .httpd import NodeHttpServer, http_json_request
from .ite import (
    NetworkConfig,
    NodeIdentifier,
    STATUS_CONFIGURED,
    encode_nvm,
    fresh_nvm,
    render_node_id,
)
from .node import (
    ArmTimer,
    ConnectAp,
    NodeRuntime,
    NodeState,
    NodeTiming,
    Restart,
    SendMessage,
    StartServer,
    WriteNvm,
    ap_connected,
    powered_on,
    response_received,
    server_started,
    timeout,
)
from .transducers import fixture_ite_dir, fixture_root, load_fixture_ite


class SimError(Exception):
    pass


# -- delay distributions and AP/scenario models --------------------------------

DIST_KINDS = ("uniform", "normal")


@dataclass(frozen=True)
class DelayDist:
    """Nonnegative delay distribution: uniform on mean±spread, or a normal
    with the given mean and standard deviation, truncated at zero."""

    kind: str
    mean_ms: float
    spread_ms: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in DIST_KINDS:
            raise SimError(f"unknown delay distribution kind {self.kind!r}")
        if self.mean_ms < 0 or self.spread_ms < 0:
            raise SimError("delay distribution mean and spread must be nonnegative")

    def sample(self, rng: random.Random) -> float:
        if self.kind == "uniform":
            value = rng.uniform(self.mean_ms - self.spread_ms, self.mean_ms + self.spread_ms)
        else:
            value = rng.gauss(self.mean_ms, self.spread_ms)
        return max(0.0, value)

    def to_obj(self) -> dict:
        return {"kind": self.kind, "mean_ms": self.mean_ms, "spread_ms": self.spread_ms}

    @classmethod
    def from_obj(cls, obj: dict) -> "DelayDist":
        return cls(
            kind=str(obj["kind"]),
            mean_ms=float(obj["mean_ms"]),
            spread_ms=float(obj.get("spread_ms", 0.0)),
        )


ZERO_DELAY = DelayDist("uniform", 0.0, 0.0)


def overload_multiplier(load: float, k: float = 10.0) -> float:
    """Latency multiplier: 1 below saturation, then 1 + k·(load − 1)."""
    return 1.0 if load <= 1.0 else 1.0 + k * (load - 1.0)


@dataclass(frozen=True)
class ApModel:
    name: str
    auth_assoc_delay: DelayDist = ZERO_DELAY
    dhcp_delay: DelayDist = ZERO_DELAY
    per_packet_latency: DelayDist = ZERO_DELAY
    load: float = 0.0

    def __post_init__(self) -> None:
        if self.load < 0:
            raise SimError("AP load must be nonnegative")

    def to_obj(self) -> dict:
        return {
            "name": self.name,
            "auth_assoc_delay": self.auth_assoc_delay.to_obj(),
            "dhcp_delay": self.dhcp_delay.to_obj(),
            "per_packet_latency": self.per_packet_latency.to_obj(),
            "load": self.load,
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "ApModel":
        return cls(
            name=str(obj["name"]),
            auth_assoc_delay=DelayDist.from_obj(obj["auth_assoc_delay"]),
            dhcp_delay=DelayDist.from_obj(obj["dhcp_delay"]),
            per_packet_latency=DelayDist.from_obj(obj["per_packet_latency"]),
            load=float(obj.get("load", 0.0)),
        )


ZERO_DELAY_AP = ApModel(name="zero-delay")


@dataclass(frozen=True)
class ScenarioConfig:
    label: str
    ap: ApModel
    loss_probability: float = 0.0
    description: str = ""

    def __post_init__(self) -> None:
        if not (0.0 <= self.loss_probability <= 1.0):
            raise SimError("loss_probability must lie in [0, 1]")

    def with_overrides(
        self, loss_probability: Optional[float] = None, load: Optional[float] = None
    ) -> "ScenarioConfig":
        ap = self.ap
        if load is not None:
            ap = ApModel(
                name=ap.name,
                auth_assoc_delay=ap.auth_assoc_delay,
                dhcp_delay=ap.dhcp_delay,
                per_packet_latency=ap.per_packet_latency,
                load=load,
            )
        return ScenarioConfig(
            label=self.label,
            ap=ap,
            loss_probability=self.loss_probability
            if loss_probability is None
            else loss_probability,
            description=self.description,
        )

    def to_obj(self) -> dict:
        return {
            "label": self.label,
            "description": self.description,
            "loss_probability": self.loss_probability,
            "ap": self.ap.to_obj(),
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "ScenarioConfig":
        return cls(
            label=str(obj["label"]),
            ap=ApModel.from_obj(obj["ap"]),
            loss_probability=float(obj.get("loss_probability", 0.0)),
            description=str(obj.get("description", "")),
        )


ZERO_DELAY_SCENARIO = ScenarioConfig(label="zero", ap=ZERO_DELAY_AP, description="no network delay")


def load_scenario(path: Path) -> ScenarioConfig:
    return ScenarioConfig.from_obj(json.loads(Path(path).read_text("utf-8")))


def load_scenario_preset(label: str) -> ScenarioConfig:
    path = fixture_root() / "scenarios" / f"{label}.json"
    if not path.is_file():
        raise SimError(f"no bundled scenario {label!r}")
    return load_scenario(path)


def load_ap_preset(name: str) -> ApModel:
    path = fixture_root() / "aps" / f"{name}.json"
    if not path.is_file():
        raise SimError(f"no bundled access-point preset {name!r}")
    return ApModel.from_obj(json.loads(path.read_text("utf-8")))


def scenario_for_ap(name: str, loss_probability: float = 0.0) -> ScenarioConfig:
    ap = load_ap_preset(name)
    return ScenarioConfig(label=name, ap=ap, loss_probability=loss_probability, description=f"{name} preset")


# -- clocks --------------------------------------------------------------------


class _Scheduled:
    __slots__ = ("at_ms", "seq", "fn", "cancelled")

    def __init__(self, at_ms: float, seq: int, fn: Callable[[], None]):
        self.at_ms = at_ms
        self.seq = seq
        self.fn = fn
        self.cancelled = False

    def cancel(self) -> None:
        self.cancelled = True

    def __lt__(self, other: "_Scheduled") -> bool:
        return (self.at_ms, self.seq) < (other.at_ms, other.seq)


class VirtualClock:
    """Deterministic discrete-event clock; ties broken by schedule order."""

    mode = "virtual_time"

    def __init__(self, start_ms: float = 0.0):
        self._now = start_ms
        self._heap: list[_Scheduled] = []
        self._seq = itertools.count()

    def now(self) -> float:
        return self._now

    def schedule(self, delay_ms: float, fn: Callable[[], None]) -> _Scheduled:
        entry = _Scheduled(self._now + max(0.0, delay_ms), next(self._seq), fn)
        heapq.heappush(self._heap, entry)
        return entry

    def _pop(self) -> Optional[_Scheduled]:
        while self._heap:
            entry = heapq.heappop(self._heap)
            if not entry.cancelled:
                return entry
        return None

    def peek_ms(self) -> Optional[float]:
        while self._heap and self._heap[0].cancelled:
            heapq.heappop(self._heap)
        return self._heap[0].at_ms if self._heap else None

    def step(self) -> bool:
        entry = self._pop()
        if entry is None:
            return False
        if entry.at_ms < self._now:
            raise SimError("event scheduled in the past")
        self._now = entry.at_ms
        entry.fn()
        return True

    def run_until_idle(self, cap_ms: Optional[float] = None) -> None:
        while True:
            nxt = self.peek_ms()
            if nxt is None or (cap_ms is not None and nxt > cap_ms):
                break
            self.step()
        if cap_ms is not None and cap_ms > self._now:
            self._now = cap_ms

    def run_for(self, duration_ms: float) -> None:
        self.run_until_idle(self._now + duration_ms)

    def run_until(self, predicate: Callable[[], bool], cap_ms: float) -> bool:
        """Advance until predicate() holds; False if the cap hits first."""
        while not predicate():
            nxt = self.peek_ms()
            if nxt is None or nxt > cap_ms:
                self._now = max(self._now, cap_ms)
                return predicate()
            self.step()
        return True


class RealTimeClock:
    mode = "real_time"

    def __init__(self):
        self._t0 = time.monotonic()

    def now(self) -> float:
        return (time.monotonic() - self._t0) * 1000.0


# -- tracing --------------------------------------------------------------------


@dataclass
class TraceEvent:
    t_ms: float
    actor: str
    event: str
    detail: dict = field(default_factory=dict)

    def to_obj(self) -> dict:
        return {"t_ms": self.t_ms, "actor": self.actor, "event": self.event, "detail": self.detail}


class Trace:
    def __init__(self, enabled: bool = True):
        self.enabled = enabled
        self.events: list[TraceEvent] = []

    def emit(self, t_ms: float, actor: str, event: str, **detail: Any) -> None:
        if self.enabled:
            self.events.append(TraceEvent(t_ms, actor, event, detail))

    def to_jsonl(self) -> str:
        return "".join(json.dumps(e.to_obj()) + "\n" for e in self.events)


# -- the virtual fabric ----------------------------------------------------------

FRAME_OVERHEAD_BYTES = 54  # Ethernet+IP+TCP headers per frame
EXCHANGE_CONTROL_FRAMES = 7  # connection setup/acks/teardown around one exchange

DEFAULT_NODE_TIMING = NodeTiming(init_ms=150.0, serve_ms=60.0, restart_ms=350.0)


class VirtualNode:
    """Driver binding one NodeRuntime to the fabric: executes FSM effects as
    scheduled events, tracks its endpoint, and exposes kill-switch fault
    injection."""

    def __init__(self, harness: "SimHarness", runtime: NodeRuntime, name: str, ip: str):
        self.harness = harness
        self.runtime = runtime
        self.name = name
        self.ip = ip
        self.down = False
        self.server_up = False
        self.boot_epoch = 0  # reboot tears down radio + sockets: stales in-flight events
        self._connect_count = 0
        self._exchange_count = 0

    @property
    def state(self) -> Optional[NodeState]:
        return self.runtime.state

    def kill(self) -> None:
        self.down = True
        self.server_up = False

    def revive(self) -> None:
        self.down = False
        # a rebooting node would restart its FSM; for fault windows we simply
        # bring the server back so polling can resume
        self.server_up = self.runtime.state in (
            NodeState.SERVE_A,
            NodeState.SERVE_B,
            NodeState.LISTEN,
        ) or self.runtime.state in (
            NodeState.REQUEST_CONFIG,
            NodeState.WAIT_RESPONSE_A,
            NodeState.REQUEST_REGISTER,
            NodeState.WAIT_RESPONSE_B,
        )

    def dispatch(self, event) -> None:
        if self.down:
            return
        if event.kind == "powered_on":
            self.boot_epoch += 1
            self.server_up = False
        before = self.runtime.state
        effects = self.runtime.step(event)
        after = self.runtime.state
        if after is not before:
            self.harness.trace.emit(
                self.harness.clock.now(), self.name, "state", state=after.value
            )
        for effect in effects:
            self._execute(effect)

    def _execute(self, effect) -> None:
        harness = self.harness
        clock = harness.clock
        if isinstance(effect, ArmTimer):
            generation = effect.generation
            clock.schedule(effect.delay_ms, lambda: self.dispatch(timeout(generation)))
        elif isinstance(effect, ConnectAp):
            harness.connect(self, effect.ap)
        elif isinstance(effect, StartServer):
            epoch = self.boot_epoch

            def up() -> None:
                if self.boot_epoch != epoch:
                    return
                self.server_up = True
                self.dispatch(server_started())

            clock.schedule(self.runtime.timing.serve_ms, up)
        elif isinstance(effect, SendMessage):
            harness.exchange_with_gateway(self, effect.body)
        elif isinstance(effect, WriteNvm):
            pass  # runtime.nvm is authoritative in the virtual fabric
        elif isinstance(effect, Restart):
            self.server_up = False
            harness.trace.emit(clock.now(), self.name, "restart")
            clock.schedule(self.runtime.timing.restart_ms, lambda: self.dispatch(powered_on()))
        else:
            raise SimError(f"unknown effect {effect!r}")


class SimHarness:
    """One virtual network: a gateway core, N nodes, two APs sharing the
    scenario's delay model, and a deterministic event loop."""

    def __init__(
        self,
        scenario: ScenarioConfig,
        seed: Any = 0,
        node_timing: Optional[NodeTiming] = None,
        gateway_config: Optional[GatewayConfig] = None,
        repository: Optional[IteRepository] = None,
        store_path: Optional[Path] = None,
        sample_log_path: Optional[Path] = None,
        trace_enabled: bool = True,
        overload_k: float = 10.0,
        enable_polling: bool = False,
    ):
        self.scenario = scenario
        self.seed = seed
        self.clock = VirtualClock()
        self.trace = Trace(trace_enabled)
        self.node_timing = node_timing or DEFAULT_NODE_TIMING
        self.overload_k = overload_k
        self.nodes: list[VirtualNode] = []
        self._by_endpoint: dict[tuple[str, int], VirtualNode] = {}
        self.bytes_sent = 0
        self.sends = 0
        self.delivers = 0
        self.drops = 0
        self.samples_collected = 0

        config = gateway_config or GatewayConfig(gateway_ip="10.0.0.1")
        self.core = GatewayCore(
            config,
            repository or IteRepository(local_dir=fixture_ite_dir()),
            clock=self.clock.now,
            store_path=store_path,
            sample_log_path=sample_log_path,
            node_client=self._node_client,
        )
        if enable_polling:
            self._schedule_poll()

    # -- RNG discipline

    def _rng(self, label: str) -> random.Random:
        return random.Random(f"{self.seed}:{label}")

    def _multiplier(self) -> float:
        return overload_multiplier(self.scenario.ap.load, self.overload_k)

    # -- node management

    def add_node(
        self,
        node_type: int = 6,
        version: int = 1,
        serial: int = 1,
        fresh: bool = True,
        name: Optional[str] = None,
        timing: Optional[NodeTiming] = None,
    ) -> VirtualNode:
        ite = load_fixture_ite(node_type, version)
        identifier = NodeIdentifier(node_type, serial, version)
        if fresh:
            nvm = fresh_nvm(identifier)
        else:
            net = NetworkConfig(
                ssid=self.core.config.ssid,
                password=self.core.config.password,
                gateway_ip=self.core.config.gateway_ip,
            )
            nvm = encode_nvm(identifier, STATUS_CONFIGURED, net)
        name = name or f"node{len(self.nodes)}"
        ip = f"10.0.0.{len(self.nodes) + 2}"
        runtime = NodeRuntime(
            nvm,
            ite,
            clock=self.clock.now,
            timing=timing or self.node_timing,
            listen_port=8266,
            run_id=name,
            channel_seed=len(self.nodes),
        )
        node = VirtualNode(self, runtime, name, ip)
        self.nodes.append(node)
        self._by_endpoint[(ip, runtime.listen_port)] = node
        return node

    def start_node(self, node: VirtualNode, at_ms: float = 0.0) -> None:
        self.clock.schedule(at_ms, lambda: node.dispatch(powered_on()))

    # -- fabric primitives

    def connect(self, node: VirtualNode, ap_name: str) -> None:
        attempt = node._connect_count
        node._connect_count += 1
        epoch = node.boot_epoch
        rng = self._rng(f"{node.name}:connect{attempt}")
        lost = rng.random() < self.scenario.loss_probability
        auth = self.scenario.ap.auth_assoc_delay.sample(rng)
        dhcp = self.scenario.ap.dhcp_delay.sample(rng)
        self.trace.emit(self.clock.now(), node.name, "connect_start", ap=ap_name, attempt=attempt)
        if lost:
            self.trace.emit(self.clock.now(), node.name, "connect_lost", ap=ap_name, attempt=attempt)
            return  # the node's watchdog will retry

        def done() -> None:
            if node.boot_epoch != epoch:
                return  # the node rebooted while associating
            self.trace.emit(self.clock.now(), node.name, "connected", ap=ap_name, attempt=attempt)
            node.dispatch(ap_connected())

        self.clock.schedule(auth + dhcp, done)

    def _account_exchange(self, request_bytes: int, response_bytes: int) -> int:
        total = (
            EXCHANGE_CONTROL_FRAMES * FRAME_OVERHEAD_BYTES
            + FRAME_OVERHEAD_BYTES + request_bytes
            + FRAME_OVERHEAD_BYTES + response_bytes
        )
        self.bytes_sent += total
        return total

    def exchange_with_gateway(self, node: VirtualNode, body: dict) -> None:
        """One request/response exchange with the gateway over the current AP."""
        n = node._exchange_count
        node._exchange_count += 1
        epoch = node.boot_epoch
        rng = self._rng(f"{node.name}:xch{n}")
        lost = rng.random() < self.scenario.loss_probability
        mult = self._multiplier()
        leg1 = self.scenario.ap.per_packet_latency.sample(rng) * mult
        leg2 = self.scenario.ap.per_packet_latency.sample(rng) * mult
        self.sends += 1
        request_label = body.get("Request") if isinstance(body, dict) else None
        self.trace.emit(self.clock.now(), node.name, "send", request=request_label, exchange=n)
        if lost:
            self.drops += 1
            self.trace.emit(self.clock.now(), node.name, "drop", request=request_label, exchange=n)
            return

        def arrive() -> None:
            self.delivers += 1
            if request_label == "Configure":
                status, payload = self.core.handle_configure(body, node.ip)
            else:
                status, payload = self.core.handle_register(body, node.ip)
            self.trace.emit(
                self.clock.now(), "gateway", "deliver",
                request=request_label, status=status, node=node.name,
            )
            self._account_exchange(
                len(json.dumps(body).encode("utf-8")),
                len(json.dumps(payload).encode("utf-8")),
            )
            self.sends += 1

            def respond() -> None:
                self.delivers += 1
                if node.boot_epoch == epoch:
                    node.dispatch(response_received(payload))

            self.clock.schedule(leg2, respond)

        self.clock.schedule(leg1, arrive)

    def request_node(
        self,
        node: VirtualNode,
        method: str,
        path: str,
        body: Any,
        timeout_ms: float,
        label: str,
        on_done: Callable[[float, Optional[int], Any], None],
    ) -> None:
        """Client-side exchange with a node; on_done(rtt_ms, status, payload)
        gets status None when the exchange was dropped or timed out."""
        rng = self._rng(label)
        lost = rng.random() < self.scenario.loss_probability
        mult = self._multiplier()
        leg1 = self.scenario.ap.per_packet_latency.sample(rng) * mult
        leg2 = self.scenario.ap.per_packet_latency.sample(rng) * mult
        start = self.clock.now()
        self.sends += 1
        if lost:
            self.drops += 1
            self.clock.schedule(timeout_ms, lambda: on_done(timeout_ms, None, None))
            return

        def arrive() -> None:
            self.delivers += 1
            if node.down or not node.server_up:
                remaining = max(0.0, (start + timeout_ms) - self.clock.now())
                self.clock.schedule(remaining, lambda: on_done(timeout_ms, None, None))
                return
            status, payload = node.runtime.serve_request(method, path, body)
            request_bytes = (
                len(json.dumps(body).encode("utf-8"))
                if body is not None
                else len(f"{method} {path}".encode("utf-8"))
            )
            self._account_exchange(request_bytes, len(json.dumps(payload).encode("utf-8")))
            self.sends += 1
            rtt = leg1 + leg2
            if rtt <= timeout_ms:
                def respond() -> None:
                    self.delivers += 1
                    on_done(rtt, status, payload)

                self.clock.schedule(leg2, respond)
            else:
                self.delivers += 1  # the late response still arrives, unused
                remaining = (start + timeout_ms) - self.clock.now()
                self.clock.schedule(remaining, lambda: on_done(timeout_ms, None, None))

        self.clock.schedule(leg1, arrive)

    # -- gateway's path to the nodes (proxy + poller); zero virtual latency

    def _node_client(self, ip: str, port: int, method: str, path: str, body: Any):
        node = self._by_endpoint.get((ip, port))
        if node is None or node.down or not node.server_up:
            raise SimError(f"node at {ip}:{port} unreachable")
        return node.runtime.serve_request(method, path, body)

    def _schedule_poll(self) -> None:
        def pump() -> None:
            logged = self.core.run_poll_cycle()
            if logged:
                self.samples_collected += logged
                self.trace.emit(self.clock.now(), "gateway", "poll", samples=logged)
            self._schedule_poll()

        next_at = self.core.next_poll_at()
        delay = 1000.0 if next_at is None else max(0.0, next_at - self.clock.now())
        self.clock.schedule(delay, pump)

    # -- run helpers

    def run_until_listen(self, nodes: Optional[list[VirtualNode]] = None, cap_ms: float = 60_000.0) -> bool:
        targets = self.nodes if nodes is None else nodes
        return self.clock.run_until(
            lambda: all(n.state is NodeState.LISTEN for n in targets), cap_ms
        )

    def run_for(self, duration_ms: float) -> None:
        self.clock.run_for(duration_ms)


# -- canned drivers ---------------------------------------------------------------


@dataclass
class OnboardResult:
    reached_listen: bool
    total_ms: float
    durations: list[tuple[NodeState, float]]
    retry_count: int
    restart_count: int
    bytes_sent: int


def onboard_run(
    scenario: ScenarioConfig,
    seed: Any = 0,
    node_timing: Optional[NodeTiming] = None,
    node_type: int = 6,
    version: int = 1,
    serial: int = 1,
    cap_ms: float = 60_000.0,
    trace_enabled: bool = False,
) -> OnboardResult:
    """Boot one fresh node through both phases; measure time to Listen."""
    harness = SimHarness(scenario, seed=seed, node_timing=node_timing, trace_enabled=trace_enabled)
    node = harness.add_node(node_type=node_type, version=version, serial=serial, fresh=True)
    harness.start_node(node, at_ms=0.0)
    reached = harness.run_until_listen([node], cap_ms=cap_ms)
    total_ms = node.runtime.visits[-1].entry_ms if reached else cap_ms
    return OnboardResult(
        reached_listen=reached,
        total_ms=total_ms,
        durations=node.runtime.state_durations(),
        retry_count=node.runtime.retry_count,
        restart_count=node.runtime.restart_count,
        bytes_sent=harness.bytes_sent,
    )


@dataclass
class ScenarioResult:
    all_listening: bool
    node_totals_ms: list[float]
    registered_count: int
    bytes_sent: int
    sends: int
    delivers: int
    drops: int
    samples_collected: int
    trace: Trace


def run_scenario(
    scenario: ScenarioConfig,
    node_count: int = 1,
    seed: Any = 0,
    node_timing: Optional[NodeTiming] = None,
    node_types: Optional[list[int]] = None,
    cap_ms: float = 120_000.0,
    trace_enabled: bool = True,
    enable_polling: bool = False,
    extra_run_ms: float = 0.0,
) -> ScenarioResult:
    """Boot node_count fresh nodes simultaneously and run to steady state."""
    harness = SimHarness(
        scenario, seed=seed, node_timing=node_timing,
        trace_enabled=trace_enabled, enable_polling=enable_polling,
    )
    types = node_types or [6]
    for i in range(node_count):
        node = harness.add_node(
            node_type=types[i % len(types)], version=1, serial=i + 1, fresh=True
        )
        harness.start_node(node, at_ms=0.0)
    all_listening = harness.run_until_listen(cap_ms=cap_ms)
    if extra_run_ms > 0:
        harness.run_for(extra_run_ms)
    totals = [
        n.runtime.visits[-1].entry_ms if n.state is NodeState.LISTEN else cap_ms
        for n in harness.nodes
    ]
    return ScenarioResult(
        all_listening=all_listening,
        node_totals_ms=totals,
        registered_count=len(harness.core.records),
        bytes_sent=harness.bytes_sent,
        sends=harness.sends,
        delivers=harness.delivers,
        drops=harness.drops,
        samples_collected=harness.samples_collected,
        trace=harness.trace,
    )


@dataclass
class RttSample:
    start_ms: float
    rtt_ms: float
    ok: bool


@dataclass
class ProbeResult:
    samples: list[RttSample]
    onboard_ms: float
    exchange_bytes: int  # fabric bytes for the probe's first exchange


def response_probe(
    scenario: ScenarioConfig,
    requests: int,
    gap_ms: float = 25.0,
    seed: Any = 0,
    timeout_ms: float = 2000.0,
    node_timing: Optional[NodeTiming] = None,
) -> ProbeResult:
    """Pace `requests` GET /id exchanges against one node in Listen.

    Requests are sequential: each next request starts gap_ms after the
    previous one completed (response or timeout), so consecutive start times
    differ by at least gap_ms exactly in virtual time.
    """
    harness = SimHarness(scenario, seed=seed, node_timing=node_timing, trace_enabled=False)
    node = harness.add_node(node_type=6, version=1, serial=1, fresh=True)
    harness.start_node(node, at_ms=0.0)
    if not harness.run_until_listen([node], cap_ms=120_000.0):
        raise SimError("probe node never reached Listen")
    onboard_ms = harness.clock.now()
    expected = {"NodeID": render_node_id(node.runtime.identifier)}
    samples: list[RttSample] = []
    bytes_before = harness.bytes_sent

    def issue(i: int) -> None:
        if i >= requests:
            return
        start = harness.clock.now()

        def done(rtt_ms: float, status: Optional[int], payload: Any) -> None:
            ok = status is not None and 200 <= status < 300 and payload == expected
            samples.append(RttSample(start, rtt_ms, ok))
            harness.clock.schedule(gap_ms, lambda: issue(i + 1))

        harness.request_node(node, "GET", "/id", None, timeout_ms, f"req{i}", done)

    issue(0)
    harness.clock.run_until_idle()
    ok_count = sum(1 for s in samples if s.ok)
    exchange_bytes = (harness.bytes_sent - bytes_before) // ok_count if ok_count else 0
    return ProbeResult(samples=samples, onboard_ms=onboard_ms, exchange_bytes=exchange_bytes)


# -- real-time loopback driver ------------------------------------------------------


class RealtimeNodeDriver:
    """Runs one NodeRuntime as a real thread: real timers, a real HTTP server,
    and real POSTs to a gateway over loopback.  AP association is instantaneous
    (the zero-delay AP of the loopback environment)."""

    def __init__(
        self,
        runtime: NodeRuntime,
        gateway_host: str,
        gateway_port: int,
        nvm_path: Optional[Path] = None,
        http_timeout_s: float = 2.0,
    ):
        self.runtime = runtime
        self.gateway_host = gateway_host
        self.gateway_port = gateway_port
        self.nvm_path = Path(nvm_path) if nvm_path is not None else None
        self.http_timeout_s = http_timeout_s
        self.lock = threading.RLock()
        self._events: "queue.Queue" = queue.Queue()
        self._timers: list[threading.Timer] = []
        self._server: Optional[NodeHttpServer] = None
        self._thread: Optional[threading.Thread] = None
        self._stopping = threading.Event()

    def start(self) -> "RealtimeNodeDriver":
        self._thread = threading.Thread(target=self._run, daemon=True)
        self._thread.start()
        self._events.put(powered_on())
        return self

    def stop(self) -> None:
        self._stopping.set()
        for timer in self._timers:
            timer.cancel()
        if self._server is not None:
            self._server.stop()
            self._server = None
        if self._thread is not None:
            self._thread.join(timeout=5.0)

    def wait_for_state(self, state: NodeState, timeout_s: float) -> bool:
        deadline = time.monotonic() + timeout_s
        while time.monotonic() < deadline:
            if self.runtime.state is state:
                return True
            time.sleep(0.005)
        return self.runtime.state is state

    def _run(self) -> None:
        while not self._stopping.is_set():
            try:
                event = self._events.get(timeout=0.05)
            except queue.Empty:
                continue
            with self.lock:
                effects = self.runtime.step(event)
            for effect in effects:
                self._execute(effect)

    def _set_timer(self, delay_ms: float, fn: Callable[[], None]) -> None:
        timer = threading.Timer(max(0.0, delay_ms) / 1000.0, fn)
        timer.daemon = True
        self._timers.append(timer)
        self._timers = [t for t in self._timers if t.is_alive() or t is timer]
        timer.start()

    def _execute(self, effect) -> None:
        if isinstance(effect, ArmTimer):
            generation = effect.generation
            self._set_timer(effect.delay_ms, lambda: self._events.put(timeout(generation)))
        elif isinstance(effect, ConnectAp):
            self._events.put(ap_connected())
        elif isinstance(effect, StartServer):
            if self._server is not None:
                self._server.stop()
            self._server = NodeHttpServer(self.runtime, port=0, lock=self.lock).start()
            self.runtime.listen_port = self._server.port
            self._events.put(server_started())
        elif isinstance(effect, SendMessage):
            self._send(effect.body)
        elif isinstance(effect, WriteNvm):
            if self.nvm_path is not None:
                self.nvm_path.write_bytes(effect.image.to_bytes())
        elif isinstance(effect, Restart):
            if self._server is not None:
                self._server.stop()
                self._server = None
            self._set_timer(
                self.runtime.timing.restart_ms, lambda: self._events.put(powered_on())
            )

    def _send(self, body: dict) -> None:
        path = "/configure" if body.get("Request") == "Configure" else "/register"
        try:
            _, payload = http_json_request(
                self.gateway_host,
                self.gateway_port,
                "POST",
                path,
                body,
                timeout_s=self.http_timeout_s,
            )
        except Exception:
            return  # no response; the watchdog drives the retry
        self._events.put(response_received(payload))
