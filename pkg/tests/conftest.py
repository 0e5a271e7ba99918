"""Shared helpers: drive a node runtime to Listen without a network."""

from itenet.node import (
    ArmTimer,
    ConnectAp,
    NodeRuntime,
    NodeState,
    Restart,
    SendMessage,
    StartServer,
    ap_connected,
    powered_on,
    response_received,
    server_started,
    timeout,
)

DUMMY_NET = {"SSID": "home-net", "Password": "home-pass", "GatewayIP": "192.168.1.1"}


def advance_to_listen(node: NodeRuntime) -> None:
    """Deliver every effect's completion immediately until the node listens."""
    effects = node.step(powered_on())
    for _ in range(40):
        if node.state is NodeState.LISTEN:
            return
        if any(isinstance(e, Restart) for e in effects):
            effects = node.step(powered_on())
        elif any(isinstance(e, ConnectAp) for e in effects):
            effects = node.step(ap_connected())
        elif any(isinstance(e, StartServer) for e in effects):
            effects = node.step(server_started())
        elif any(isinstance(e, SendMessage) for e in effects):
            if node.state is NodeState.WAIT_RESPONSE_A:
                effects = node.step(response_received(DUMMY_NET))
            else:
                effects = node.step(response_received({"Registered": 1}))
        else:
            timers = [e for e in effects if isinstance(e, ArmTimer)]
            effects = node.step(timeout(timers[-1].generation))
    raise AssertionError(f"node stuck in {node.state}")
