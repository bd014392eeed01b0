"""Wire formats: fixed-layout state packets and one-line control datagrams."""

from __future__ import annotations

import struct
from dataclasses import dataclass

__all__ = [
    "StatePacket",
    "PACKET_SIZE",
    "MAX_AGENT_ID",
    "encode",
    "decode",
    "READY",
    "ACK",
    "go_message",
    "parse_control",
    "is_state_packet",
]

_LAYOUT = struct.Struct("<HIQdd")
PACKET_SIZE = _LAYOUT.size
MAX_AGENT_ID = 0xFEFF
CONTROL_PREFIX = b"\xff"
READY = b"\xffREADY?\n"
ACK = b"\xffACK\n"


@dataclass(frozen=True)
class StatePacket:
    """Little-endian ``u16 id, u32 seq, u64 timestamp_us, f64 x, f64 v``."""

    agent_id: int
    sequence: int
    timestamp_us: int
    x: float
    v: float


def encode(p: StatePacket) -> bytes:
    if not 0 <= p.agent_id <= MAX_AGENT_ID:
        raise ValueError(f"agent id {p.agent_id} outside 0..{MAX_AGENT_ID}")
    return _LAYOUT.pack(p.agent_id, p.sequence, p.timestamp_us, p.x, p.v)


def decode(data: bytes) -> StatePacket:
    if len(data) != PACKET_SIZE:
        raise ValueError(f"state packet must be {PACKET_SIZE} bytes, got {len(data)}")
    return StatePacket(*_LAYOUT.unpack(data))


def is_state_packet(data: bytes) -> bool:
    # control lines are never PACKET_SIZE long, so length alone decides
    return len(data) == PACKET_SIZE


def go_message(start_us: int) -> bytes:
    return b"\xffGO %d\n" % start_us


def parse_control(data: bytes) -> tuple[str, int | None]:
    """Return ``("READY?", None)``, ``("ACK", None)`` or ``("GO", start_us)``."""
    if not data.startswith(CONTROL_PREFIX) or not data.endswith(b"\n"):
        raise ValueError(f"not a control datagram: {data!r}")
    words = data[1:-1].decode("ascii").split()
    if words == ["READY?"]:
        return "READY?", None
    if words == ["ACK"]:
        return "ACK", None
    if len(words) == 2 and words[0] == "GO":
        return "GO", int(words[1])
    raise ValueError(f"unknown control datagram: {data!r}")
