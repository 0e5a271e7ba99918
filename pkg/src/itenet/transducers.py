"""Emulated sensor and actuator channels bindable to ITE descriptors.

Sensors are deterministic value generators (constant, random walk or sinusoid)
that always emit in-bounds, resolution-aligned samples; actuators hold a
current value and reject out-of-range or misaligned writes.  Profiles stand in
for the hardware the bundled fixtures describe (temperature/humidity, ambient
light, motion, power metering, relay, dimmer).
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterator, Optional, Union

from .ite import ChannelDescriptor, ChannelKind, DataType, FieldDescriptor, IteDescriptor, parse_ite

Number = Union[int, float]

_ALIGN_EPS = 1e-9


def is_aligned(value: float, lo: float, resolution: float) -> bool:
    """True when value sits on the lo + n*resolution grid (resolution 0 = continuous)."""
    if resolution <= 0:
        return True
    steps = (value - lo) / resolution
    return abs(steps - round(steps)) <= _ALIGN_EPS * max(1.0, abs(steps))


def quantize(value: float, fd: FieldDescriptor) -> Number:
    """Clamp to the field's bounds and snap onto its resolution grid."""
    value = min(max(value, fd.min_value), fd.max_value)
    if fd.resolution > 0:
        steps = round((value - fd.min_value) / fd.resolution)
        value = fd.min_value + steps * fd.resolution
        value = min(max(value, fd.min_value), fd.max_value)
    if fd.data_type in (DataType.UNSIGNED_INT, DataType.INT, DataType.BOOLEAN):
        return int(round(value))
    # snapping multiplies by the resolution, which reintroduces float noise
    # (e.g. 202 * 0.1 -> 20.200000000000003); scrub it before it hits the wire
    return round(value, 10)


def _coerce(value: object, fd: FieldDescriptor) -> Optional[float]:
    """Interpret a wire value against the field's data type; None if ill-typed."""
    if fd.data_type is DataType.BOOLEAN:
        if isinstance(value, bool):
            return float(value)
        if isinstance(value, int) and value in (0, 1):
            return float(value)
        return None
    if fd.data_type in (DataType.UNSIGNED_INT, DataType.INT):
        if isinstance(value, bool) or not isinstance(value, int):
            return None
        return float(value)
    if fd.data_type is DataType.FLOAT:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            return None
        return float(value)
    return None  # String channels are not actuatable


# ---------------------------------------------------------------------------
# Sensors


@dataclass
class SensorProfile:
    """Deterministic sample generator for one sensor channel."""

    generator: str  # constant | random-walk | sinusoid
    fd: FieldDescriptor
    value: float = 0.0  # constant level / walk start
    step: float = 0.0  # walk increment per tick
    period: int = 60  # sinusoid period in ticks
    seed: int = 0

    def __post_init__(self) -> None:
        if self.generator not in ("constant", "random-walk", "sinusoid"):
            raise ValueError(f"unknown generator {self.generator!r}")
        if self.generator == "sinusoid" and self.period <= 0:
            raise ValueError("sinusoid period must be positive")
        self._rng = random.Random(self.seed)
        self._current = float(quantize(self.value, self.fd))

    def sample(self, tick: int) -> Number:
        """Value at the given tick; identical seeds yield identical sequences."""
        fd = self.fd
        if self.generator == "constant":
            return quantize(self.value, fd)
        if self.generator == "sinusoid":
            mid = (fd.min_value + fd.max_value) / 2.0
            amp = (fd.max_value - fd.min_value) / 2.0
            phase = 2.0 * math.pi * (tick % self.period) / self.period
            return quantize(mid + amp * math.sin(phase), fd)
        # random walk advances one step per call
        delta = self._rng.choice((-1.0, 1.0)) * self.step
        self._current = min(max(self._current + delta, fd.min_value), fd.max_value)
        return quantize(self._current, fd)


def sample(sensor: SensorProfile, tick: int) -> Number:
    return sensor.sample(tick)


class SensorChannel:
    """A live sensor: profile plus a read counter used as the tick."""

    def __init__(self, descriptor: ChannelDescriptor, profile: SensorProfile):
        self.descriptor = descriptor
        self.profile = profile
        self._tick = 0

    def read(self) -> Number:
        value = self.profile.sample(self._tick)
        self._tick += 1
        return value


# ---------------------------------------------------------------------------
# Actuators


@dataclass
class ActuatorState:
    """Current value of one actuator; writes are validated before applying."""

    fd: FieldDescriptor
    current: Number = field(init=False)

    def __post_init__(self) -> None:
        # default to the lower bound: safe-off for relays and dimmers
        self.current = quantize(self.fd.min_value, self.fd)

    def apply(self, value: object) -> bool:
        """Accept iff value is well-typed, in bounds and resolution-aligned."""
        coerced = _coerce(value, self.fd)
        if coerced is None:
            return False
        if not self.fd.min_value <= coerced <= self.fd.max_value:
            return False
        if not is_aligned(coerced, self.fd.min_value, self.fd.resolution):
            return False
        self.current = quantize(coerced, self.fd)
        return True


def apply(actuator: ActuatorState, value: object) -> bool:
    return actuator.apply(value)


class ActuatorChannel:
    def __init__(self, descriptor: ChannelDescriptor, state: ActuatorState):
        assert descriptor.request_format is not None
        self.descriptor = descriptor
        self.state = state


def default_profile(descriptor: ChannelDescriptor, seed: int) -> SensorProfile:
    """Reasonable stand-in behavior for a sensor channel's hardware."""
    fd = descriptor.response_format
    if fd.data_type is DataType.BOOLEAN:
        return SensorProfile("random-walk", fd, value=fd.min_value, step=1.0, seed=seed)
    span = fd.max_value - fd.min_value
    step = fd.resolution if fd.resolution > 0 else span / 100.0
    start = fd.min_value + span / 2.0
    return SensorProfile("random-walk", fd, value=start, step=step, seed=seed)


def bind_channels(
    ite: IteDescriptor, seed: int = 0
) -> tuple[list[SensorChannel], list[ActuatorChannel]]:
    """Instantiate live channels for a descriptor, in declaration order."""
    sensors = [
        SensorChannel(ch, default_profile(ch, seed=seed * 1009 + i))
        for i, ch in enumerate(ite.sensors)
    ]
    actuators = [ActuatorChannel(ch, ActuatorState(ch.request_format)) for ch in ite.actuators]
    return sensors, actuators


# ---------------------------------------------------------------------------
# Bundled fixture descriptors, laid out as <type>/<version>.json


def fixture_root() -> Path:
    return Path(str(resources.files("itenet").joinpath("fixtures")))


def fixture_ite_dir() -> Path:
    return fixture_root() / "ites"


def load_fixture_ite(node_type: int, version: int) -> IteDescriptor:
    path = fixture_ite_dir() / str(node_type) / f"{version}.json"
    return parse_ite(path.read_bytes())


def iter_fixture_ites() -> Iterator[IteDescriptor]:
    for type_dir in sorted(fixture_ite_dir().iterdir(), key=lambda p: int(p.name)):
        for doc in sorted(type_dir.glob("*.json"), key=lambda p: int(p.stem)):
            yield parse_ite(doc.read_bytes())
