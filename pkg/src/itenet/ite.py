"""ITE data model and codecs.

An ITE (Intelligent Transducer Enabler) is a node-level datasheet: it names a
node type and lists every sensor and actuator channel the node exposes,
including message formats, units, ranges and URIs.  This module defines the
descriptor types, the node identifier scheme, the canonical JSON wire format
(descriptor, listing and detail documents), and the non-volatile-memory binary
layout persisted on each node.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Optional

NODE_TYPE_SPACE = 2**24
SERIAL_SPACE = 2**32
VERSION_SPACE = 2**8


class IteError(ValueError):
    """Malformed or invariant-violating ITE material."""


class NvmError(ValueError):
    """Malformed non-volatile-memory image or oversized field."""


# ---------------------------------------------------------------------------
# Node identifier


@dataclass(frozen=True, order=True)
class NodeIdentifier:
    """The (type, serial, version) triple that univocally names a node."""

    node_type: int
    serial: int
    version: int

    def __post_init__(self) -> None:
        if not 0 <= self.node_type < NODE_TYPE_SPACE:
            raise IteError(f"node_type {self.node_type} outside 0..{NODE_TYPE_SPACE - 1}")
        if not 0 <= self.serial < SERIAL_SPACE:
            raise IteError(f"serial {self.serial} outside 0..{SERIAL_SPACE - 1}")
        if not 0 <= self.version < VERSION_SPACE:
            raise IteError(f"version {self.version} outside 0..{VERSION_SPACE - 1}")

    def dotted(self) -> str:
        return f"{self.node_type}.{self.serial}.{self.version}"


def render_node_id(identifier: NodeIdentifier) -> str:
    """Render an identifier as the dotted "type.serial.version" string."""
    return identifier.dotted()


def parse_node_id(text: str) -> NodeIdentifier:
    """Parse a dotted "type.serial.version" string."""
    parts = text.split(".")
    if len(parts) != 3:
        raise IteError(f"node id {text!r} must have three dot-separated components")
    try:
        numbers = [int(p, 10) for p in parts]
    except ValueError:
        raise IteError(f"node id {text!r} has a non-numeric component") from None
    for part, number in zip(parts, numbers):
        if part != str(number):  # rejects signs, padding, whitespace
            raise IteError(f"node id component {part!r} is not a plain base-10 integer")
    return NodeIdentifier(numbers[0], numbers[1], numbers[2])


# ---------------------------------------------------------------------------
# Descriptors


class DataType(str, Enum):
    UNSIGNED_INT = "Unsigned Int"
    INT = "Int"
    FLOAT = "Float"
    BOOLEAN = "Boolean"
    STRING = "String"


class ChannelKind(str, Enum):
    SENSOR = "sensor"
    ACTUATOR = "actuator"


def format_decimal(value: float) -> str:
    """Wire rendering of a decimal: exactly three fraction digits."""
    return f"{float(value):.3f}"


@dataclass(frozen=True)
class FieldDescriptor:
    """One message field: name, units, type, bounds and resolution."""

    name: str
    units: str
    data_type: DataType
    min_value: float
    max_value: float
    resolution: float

    def __post_init__(self) -> None:
        if self.min_value > self.max_value:
            raise IteError(
                f"field {self.name!r}: min_value {format_decimal(self.min_value)} "
                f"exceeds max_value {format_decimal(self.max_value)}"
            )
        if self.resolution < 0:
            raise IteError(f"field {self.name!r}: resolution must be >= 0")
        if self.data_type is DataType.BOOLEAN and (self.min_value, self.max_value) != (0.0, 1.0):
            raise IteError(f"field {self.name!r}: Boolean fields must span 0..1")


@dataclass(frozen=True)
class ChannelDescriptor:
    """One transducer channel with its request/response formats and URI."""

    name: str
    kind: ChannelKind
    response_format: FieldDescriptor
    request_format: Optional[FieldDescriptor] = None
    uri: str = ""
    refresh_rate: Optional[float] = None  # samples per hour; None = no polling

    def __post_init__(self) -> None:
        if self.kind is ChannelKind.ACTUATOR and self.request_format is None:
            raise IteError(f"actuator channel {self.name!r} requires a request format")
        if self.kind is ChannelKind.SENSOR and self.request_format is not None:
            raise IteError(f"sensor channel {self.name!r} must not carry a request format")
        if self.refresh_rate is not None and self.refresh_rate <= 0:
            raise IteError(f"channel {self.name!r}: refresh_rate must be positive")


def channel_uri(kind: ChannelKind, index: int) -> str:
    return f"/{kind.value}s/{index}"


@dataclass(frozen=True)
class IteDescriptor:
    """Node-level datasheet: name, identifier scheme slots and channel lists."""

    name: str
    node_type: int
    version: int
    sensors: tuple[ChannelDescriptor, ...] = ()
    actuators: tuple[ChannelDescriptor, ...] = ()

    def __post_init__(self) -> None:
        if not 0 <= self.node_type < NODE_TYPE_SPACE:
            raise IteError(f"type {self.node_type} outside 0..{NODE_TYPE_SPACE - 1}")
        if not 0 <= self.version < VERSION_SPACE:
            raise IteError(f"version {self.version} outside 0..{VERSION_SPACE - 1}")
        for kind, channels in ((ChannelKind.SENSOR, self.sensors), (ChannelKind.ACTUATOR, self.actuators)):
            for index, channel in enumerate(channels):
                if channel.kind is not kind:
                    raise IteError(f"channel {channel.name!r} listed under {kind.value}s but is a {channel.kind.value}")
                expected = channel_uri(kind, index)
                if channel.uri != expected:
                    raise IteError(
                        f"channel {channel.name!r}: uri {channel.uri!r} inconsistent with position ({expected!r})"
                    )

    def channel_for_uri(self, uri: str) -> Optional[ChannelDescriptor]:
        for channel in (*self.sensors, *self.actuators):
            if channel.uri == uri:
                return channel
        return None


# ---------------------------------------------------------------------------
# JSON codec (canonical wire format)

_FIELD_KEYS = ("name", "units", "data_type", "min_value", "max_value", "resolution")
_CHANNEL_KEYS = ("name", "json_req", "json_res", "uri", "refresh_rate")
_ITE_KEYS = ("name", "type", "version", "sensors", "actuators")


def _require_keys(obj: dict, allowed: tuple[str, ...], required: tuple[str, ...], where: str) -> None:
    unknown = [k for k in obj if k not in allowed]
    if unknown:
        raise IteError(f"{where}: unknown key {unknown[0]!r}")
    for key in required:
        if key not in obj:
            raise IteError(f"{where}: missing key {key!r}")


def _parse_decimal(value: Any, where: str) -> float:
    if isinstance(value, bool):
        raise IteError(f"{where}: expected a decimal, got a boolean")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        try:
            return float(value)
        except ValueError:
            raise IteError(f"{where}: {value!r} is not a decimal") from None
    raise IteError(f"{where}: expected a decimal, got {type(value).__name__}")


def _parse_text(value: Any, where: str) -> str:
    if not isinstance(value, str):
        raise IteError(f"{where}: expected text, got {type(value).__name__}")
    return value


def _parse_uint(value: Any, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise IteError(f"{where}: expected an unsigned integer")
    if value < 0:
        raise IteError(f"{where}: must be non-negative")
    return value


def _parse_field(obj: Any, where: str) -> FieldDescriptor:
    if not isinstance(obj, dict):
        raise IteError(f"{where}: expected an object")
    _require_keys(obj, _FIELD_KEYS, _FIELD_KEYS, where)
    raw_type = _parse_text(obj["data_type"], f"{where}.data_type")
    try:
        data_type = DataType(raw_type)
    except ValueError:
        raise IteError(f"{where}.data_type: {raw_type!r} is not a known data type") from None
    return FieldDescriptor(
        name=_parse_text(obj["name"], f"{where}.name"),
        units=_parse_text(obj["units"], f"{where}.units"),
        data_type=data_type,
        min_value=_parse_decimal(obj["min_value"], f"{where}.min_value"),
        max_value=_parse_decimal(obj["max_value"], f"{where}.max_value"),
        resolution=_parse_decimal(obj["resolution"], f"{where}.resolution"),
    )


def _parse_channel(obj: Any, kind: ChannelKind, index: int, where: str) -> ChannelDescriptor:
    if not isinstance(obj, dict):
        raise IteError(f"{where}: expected an object")
    required = ("name", "json_res", "uri") if kind is ChannelKind.SENSOR else ("name", "json_req", "json_res", "uri")
    _require_keys(obj, _CHANNEL_KEYS, required, where)
    if kind is ChannelKind.SENSOR and "json_req" in obj:
        raise IteError(f"{where}: sensor channels must not carry json_req")
    refresh = None
    if "refresh_rate" in obj:
        refresh = _parse_decimal(obj["refresh_rate"], f"{where}.refresh_rate")
    return ChannelDescriptor(
        name=_parse_text(obj["name"], f"{where}.name"),
        kind=kind,
        request_format=_parse_field(obj["json_req"], f"{where}.json_req") if kind is ChannelKind.ACTUATOR else None,
        response_format=_parse_field(obj["json_res"], f"{where}.json_res"),
        uri=_parse_text(obj["uri"], f"{where}.uri"),
        refresh_rate=refresh,
    )


def ite_from_obj(obj: Any, where: str = "ite") -> IteDescriptor:
    """Build a descriptor from an already-decoded JSON object."""
    if not isinstance(obj, dict):
        raise IteError(f"{where}: expected a JSON object")
    _require_keys(obj, _ITE_KEYS, _ITE_KEYS, where)
    for list_key in ("sensors", "actuators"):
        if not isinstance(obj[list_key], list):
            raise IteError(f"{where}.{list_key}: expected an array")
    sensors = tuple(
        _parse_channel(channel, ChannelKind.SENSOR, i, f"{where}.sensors[{i}]")
        for i, channel in enumerate(obj["sensors"])
    )
    actuators = tuple(
        _parse_channel(channel, ChannelKind.ACTUATOR, i, f"{where}.actuators[{i}]")
        for i, channel in enumerate(obj["actuators"])
    )
    return IteDescriptor(
        name=_parse_text(obj["name"], f"{where}.name"),
        node_type=_parse_uint(obj["type"], f"{where}.type"),
        version=_parse_uint(obj["version"], f"{where}.version"),
        sensors=sensors,
        actuators=actuators,
    )


def parse_ite(document: bytes | str) -> IteDescriptor:
    """Parse a descriptor document; unknown keys and invariant violations are errors."""
    if isinstance(document, bytes):
        try:
            document = document.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise IteError(f"document is not UTF-8: {exc}") from None
    try:
        obj = json.loads(document)
    except json.JSONDecodeError as exc:
        raise IteError(f"malformed JSON: {exc}") from None
    return ite_from_obj(obj)


def _field_to_obj(fd: FieldDescriptor) -> dict:
    return {
        "name": fd.name,
        "units": fd.units,
        "data_type": fd.data_type.value,
        "min_value": format_decimal(fd.min_value),
        "max_value": format_decimal(fd.max_value),
        "resolution": format_decimal(fd.resolution),
    }


def _channel_to_obj(ch: ChannelDescriptor) -> dict:
    obj: dict[str, Any] = {"name": ch.name}
    if ch.request_format is not None:
        obj["json_req"] = _field_to_obj(ch.request_format)
    obj["json_res"] = _field_to_obj(ch.response_format)
    obj["uri"] = ch.uri
    if ch.refresh_rate is not None:
        obj["refresh_rate"] = ch.refresh_rate
    return obj


def ite_to_obj(ite: IteDescriptor) -> dict:
    """Canonical JSON object form: key order as printed on the wire."""
    return {
        "name": ite.name,
        "type": ite.node_type,
        "version": ite.version,
        "sensors": [_channel_to_obj(c) for c in ite.sensors],
        "actuators": [_channel_to_obj(c) for c in ite.actuators],
    }


def serialize_ite(ite: IteDescriptor) -> bytes:
    """Canonical serialization; deterministic and round-trip safe."""
    return (json.dumps(ite_to_obj(ite), indent=2) + "\n").encode("utf-8")


# Listing and detail documents (the registry's two API response forms).


def listing_entry_obj(internal_id: int, serial: int, ite: IteDescriptor) -> dict:
    return {"id": internal_id, "sn": serial, "ite": {"name": ite.name, "type": ite.node_type}}


def detail_obj(internal_id: int, serial: int, ip: str, ite: IteDescriptor) -> dict:
    return {"id": internal_id, "sn": serial, "ip": ip, "ite": ite_to_obj(ite)}


def parse_detail(document: bytes | str) -> tuple[int, int, str, IteDescriptor]:
    """Parse a detail document into (internal id, serial, ip, descriptor)."""
    if isinstance(document, bytes):
        document = document.decode("utf-8")
    try:
        obj = json.loads(document)
    except json.JSONDecodeError as exc:
        raise IteError(f"malformed JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise IteError("detail: expected a JSON object")
    _require_keys(obj, ("id", "sn", "ip", "ite"), ("id", "sn", "ip", "ite"), "detail")
    return (
        _parse_uint(obj["id"], "detail.id"),
        _parse_uint(obj["sn"], "detail.sn"),
        _parse_text(obj["ip"], "detail.ip"),
        ite_from_obj(obj["ite"], "detail.ite"),
    )


# ---------------------------------------------------------------------------
# Non-volatile-memory codec
#
# Two EEPROM regions: a 9-byte identity page and a 125-byte network-config
# page.  Identity: bytes 0-2 node type (big-endian), 3-6 serial (big-endian),
# 7 version, 8 status flag (0 unconfigured / 1 configured).  Config: bytes
# 0-40 SSID, 41-104 password (both zero-padded), 105-108 gateway IPv4 in
# network byte order, 109-124 reserved for IPv6 and zero-filled.

IDENTITY_SIZE = 9
CONFIG_SIZE = 125
SSID_SIZE = 41
PASSWORD_SIZE = 64

STATUS_UNCONFIGURED = 0
STATUS_CONFIGURED = 1


@dataclass(frozen=True)
class NetworkConfig:
    """Operational network parameters handed out during self-configuration."""

    ssid: str
    password: str
    gateway_ip: str

    def __post_init__(self) -> None:
        if not self.ssid:
            raise NvmError("SSID must be non-empty")
        if "\x00" in self.ssid or "\x00" in self.password:
            raise NvmError("SSID and password must not contain NUL bytes")
        if len(self.ssid.encode("utf-8")) > SSID_SIZE:
            raise NvmError(f"SSID exceeds {SSID_SIZE} bytes")
        if len(self.password.encode("utf-8")) > PASSWORD_SIZE:
            raise NvmError(f"password exceeds {PASSWORD_SIZE} bytes")
        _pack_ipv4(self.gateway_ip)  # validates


@dataclass(frozen=True)
class NvmImage:
    identity_region: bytes
    config_region: bytes

    def __post_init__(self) -> None:
        if len(self.identity_region) != IDENTITY_SIZE:
            raise NvmError(f"identity region must be {IDENTITY_SIZE} bytes")
        if len(self.config_region) != CONFIG_SIZE:
            raise NvmError(f"config region must be {CONFIG_SIZE} bytes")

    def to_bytes(self) -> bytes:
        return self.identity_region + self.config_region

    @classmethod
    def from_bytes(cls, raw: bytes) -> "NvmImage":
        if len(raw) != IDENTITY_SIZE + CONFIG_SIZE:
            raise NvmError(f"image must be {IDENTITY_SIZE + CONFIG_SIZE} bytes, got {len(raw)}")
        return cls(raw[:IDENTITY_SIZE], raw[IDENTITY_SIZE:])


def _pack_ipv4(ip: str) -> bytes:
    parts = ip.split(".")
    if len(parts) != 4:
        raise NvmError(f"{ip!r} is not a dotted IPv4 address")
    try:
        octets = [int(p, 10) for p in parts]
    except ValueError:
        raise NvmError(f"{ip!r} is not a dotted IPv4 address") from None
    if any(not 0 <= o <= 255 for o in octets):
        raise NvmError(f"{ip!r} has an octet outside 0..255")
    return bytes(octets)


def _zero_pad(raw: bytes, size: int, what: str) -> bytes:
    if len(raw) > size:
        raise NvmError(f"{what} exceeds {size} bytes")
    return raw + b"\x00" * (size - len(raw))


def encode_nvm(identifier: NodeIdentifier, status: int, net: Optional[NetworkConfig] = None) -> NvmImage:
    """Pack the identity and config regions bit-exactly."""
    if status not in (STATUS_UNCONFIGURED, STATUS_CONFIGURED):
        raise NvmError(f"status byte {status} outside {{0, 1}}")
    identity = struct.pack(">I", identifier.node_type)[1:]  # 24-bit big-endian
    identity += struct.pack(">I", identifier.serial)
    identity += bytes([identifier.version, status])
    if net is None:
        config = b"\x00" * CONFIG_SIZE
    else:
        config = _zero_pad(net.ssid.encode("utf-8"), SSID_SIZE, "SSID")
        config += _zero_pad(net.password.encode("utf-8"), PASSWORD_SIZE, "password")
        config += _pack_ipv4(net.gateway_ip)
        config += b"\x00" * 16  # IPv6 reserved
    return NvmImage(identity, config)


def decode_nvm(image: NvmImage) -> tuple[NodeIdentifier, int, Optional[NetworkConfig]]:
    """Inverse of encode_nvm; trailing zero padding is stripped."""
    identity = image.identity_region
    node_type = struct.unpack(">I", b"\x00" + identity[0:3])[0]
    serial = struct.unpack(">I", identity[3:7])[0]
    version = identity[7]
    status = identity[8]
    if status not in (STATUS_UNCONFIGURED, STATUS_CONFIGURED):
        raise NvmError(f"status byte {status} outside {{0, 1}}")
    config = image.config_region
    if config == b"\x00" * CONFIG_SIZE:
        net = None
    else:
        ssid = config[0:SSID_SIZE].rstrip(b"\x00").decode("utf-8")
        password = config[SSID_SIZE : SSID_SIZE + PASSWORD_SIZE].rstrip(b"\x00").decode("utf-8")
        ip = ".".join(str(b) for b in config[105:109])
        net = NetworkConfig(ssid=ssid, password=password, gateway_ip=ip)
    return NodeIdentifier(node_type, serial, version), status, net


def fresh_nvm(identifier: NodeIdentifier) -> NvmImage:
    """Factory image: identity written, unconfigured, config region blank."""
    return encode_nvm(identifier, STATUS_UNCONFIGURED, None)


def factory_reset(image: NvmImage) -> NvmImage:
    """Zero the status flag and the whole config region, keeping the identity."""
    identity = image.identity_region[:8] + bytes([STATUS_UNCONFIGURED])
    return NvmImage(identity, b"\x00" * CONFIG_SIZE)
