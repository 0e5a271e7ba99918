"""Plug-and-play transducer network: self-describing nodes, a gateway with a
REST API, and a simulated-network benchmark harness."""

__version__ = "0.1.0"
