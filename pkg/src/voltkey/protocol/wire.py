"""Byte layout of session messages.

Every frame is ``length (u32 BE) | type (u8) | payload`` where ``length``
counts the type byte plus the payload. Scalar fields are big-endian; sample and
index arrays are little-endian u16.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

__all__ = [
    "MessageType",
    "ProtocolError",
    "FramingError",
    "Init",
    "Rate",
    "Preamble",
    "Indices",
    "Helper",
    "Confirm",
    "Result",
    "encode_message",
    "decode_message",
    "read_frame_length",
    "HEADER_SIZE",
    "MAX_FRAME",
]

HEADER_SIZE = 4
MAX_FRAME = 1 << 20


class ProtocolError(Exception):
    """Malformed, unknown or out-of-order message."""


class FramingError(ProtocolError):
    """Frame bytes do not add up (truncated or oversized)."""


class MessageType(IntEnum):
    INIT = 0x01
    RATE = 0x02
    PREAMBLE = 0x03
    INDICES = 0x04
    HELPER = 0x05
    CONFIRM = 0x06
    RESULT = 0x07


_INIT = struct.Struct(">IHHHBBHBB")


@dataclass(frozen=True)
class Init:
    nominal_rate: int
    n_p: int
    n_b: int
    key_len: int
    code_n: int
    code_k: int
    sweep_radius: int
    max_attempts: int
    attempt: int

    type = MessageType.INIT

    def payload(self) -> bytes:
        return _INIT.pack(
            self.nominal_rate,
            self.n_p,
            self.n_b,
            self.key_len,
            self.code_n,
            self.code_k,
            self.sweep_radius,
            self.max_attempts,
            self.attempt,
        )

    @classmethod
    def parse(cls, payload: bytes):
        _expect_len(payload, _INIT.size, "INIT")
        return cls(*_INIT.unpack(payload))


@dataclass(frozen=True)
class Rate:
    spp: int

    type = MessageType.RATE

    def payload(self) -> bytes:
        return struct.pack(">I", self.spp)

    @classmethod
    def parse(cls, payload: bytes):
        _expect_len(payload, 4, "RATE")
        return cls(struct.unpack(">I", payload)[0])


def _u16_le(values) -> bytes:
    arr = np.asarray(values)
    if arr.size and (arr.min() < 0 or arr.max() > 0xFFFF):
        raise ProtocolError("value does not fit an unsigned 16-bit field")
    return arr.astype("<u2").tobytes()


def _parse_u16_le(payload: bytes, name: str) -> tuple[int, ...]:
    if len(payload) % 2:
        raise ProtocolError(f"{name} payload length {len(payload)} is not a multiple of 2")
    return tuple(np.frombuffer(payload, dtype="<u2").tolist())


@dataclass(frozen=True)
class Preamble:
    samples: tuple[int, ...]

    type = MessageType.PREAMBLE

    def payload(self) -> bytes:
        return _u16_le(self.samples)

    @classmethod
    def parse(cls, payload: bytes):
        return cls(_parse_u16_le(payload, "PREAMBLE"))


@dataclass(frozen=True)
class Indices:
    """Index schedule flattened in (period, bin) order."""

    entries: tuple[int, ...]

    type = MessageType.INDICES

    def payload(self) -> bytes:
        return _u16_le(self.entries)

    @classmethod
    def parse(cls, payload: bytes):
        return cls(_parse_u16_le(payload, "INDICES"))


@dataclass(frozen=True)
class Helper:
    """Helper bits, packed MSB-first behind a u16 BE bit count."""

    bits: tuple[int, ...]

    type = MessageType.HELPER

    def payload(self) -> bytes:
        bits = np.asarray(self.bits, dtype=np.uint8)
        if bits.size and bits.max() > 1:
            raise ProtocolError("helper bits must be 0/1")
        return struct.pack(">H", len(bits)) + np.packbits(bits).tobytes()

    @classmethod
    def parse(cls, payload: bytes):
        if len(payload) < 2:
            raise ProtocolError("HELPER payload lacks its bit count")
        (count,) = struct.unpack_from(">H", payload)
        _expect_len(payload, 2 + (count + 7) // 8, "HELPER")
        bits = np.unpackbits(np.frombuffer(payload, dtype=np.uint8, offset=2))[:count]
        return cls(tuple(bits.tolist()))


@dataclass(frozen=True)
class Confirm:
    digest: bytes

    type = MessageType.CONFIRM

    def payload(self) -> bytes:
        _expect_len(self.digest, 32, "CONFIRM")
        return bytes(self.digest)

    @classmethod
    def parse(cls, payload: bytes):
        _expect_len(payload, 32, "CONFIRM")
        return cls(bytes(payload))


@dataclass(frozen=True)
class Result:
    success: bool

    type = MessageType.RESULT

    def payload(self) -> bytes:
        return bytes([1 if self.success else 0])

    @classmethod
    def parse(cls, payload: bytes):
        _expect_len(payload, 1, "RESULT")
        if payload[0] > 1:
            raise ProtocolError(f"RESULT flag must be 0 or 1, got {payload[0]}")
        return cls(bool(payload[0]))


_CLASSES = {cls.type: cls for cls in (Init, Rate, Preamble, Indices, Helper, Confirm, Result)}


def _expect_len(payload: bytes, size: int, name: str):
    if len(payload) != size:
        raise ProtocolError(f"{name} payload is {len(payload)} bytes, expected {size}")


def encode_message(msg) -> bytes:
    body = bytes([int(msg.type)]) + msg.payload()
    if len(body) > MAX_FRAME:
        raise FramingError(f"frame of {len(body)} bytes exceeds {MAX_FRAME}")
    return struct.pack(">I", len(body)) + body


def read_frame_length(header: bytes) -> int:
    if len(header) != HEADER_SIZE:
        raise FramingError(f"frame header needs {HEADER_SIZE} bytes, got {len(header)}")
    (length,) = struct.unpack(">I", header)
    if length < 1 or length > MAX_FRAME:
        raise FramingError(f"bad frame length {length}")
    return length


def decode_message(data: bytes):
    """Parse exactly one frame."""
    data = bytes(data)
    if len(data) < HEADER_SIZE + 1:
        raise FramingError(f"frame truncated: {len(data)} bytes")
    length = read_frame_length(data[:HEADER_SIZE])
    if len(data) < HEADER_SIZE + length:
        raise FramingError(
            f"frame truncated: header announces {length} bytes, {len(data) - HEADER_SIZE} present"
        )
    if len(data) > HEADER_SIZE + length:
        raise FramingError(f"{len(data) - HEADER_SIZE - length} trailing bytes after frame")
    tag = data[HEADER_SIZE]
    try:
        cls = _CLASSES[MessageType(tag)]
    except ValueError:
        raise ProtocolError(f"unknown message type 0x{tag:02x}") from None
    return cls.parse(data[HEADER_SIZE + 1 :])
