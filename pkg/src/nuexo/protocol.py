"""Framed binary node protocol.

Message layout (all multi-byte integers little-endian):

    offset  size  field
    0       4     magic "NUEX"
    4       1     version (= 1)
    5       1     msg_type (MasterState=1, FollowerState=2, TorqueCmd=3,
                            Heartbeat=4, LogMeta=5)
    6       2     stream_id (u16, sender stream)
    8       8     timestamp_us (u64, monotonic per sender stream and type)
    16      2     payload_len (u16, bytes; 8 * float count)
    18      n     payload: packed little-endian IEEE-754 binary64
    18+n    4     crc32 (u32) over bytes [0, 18+n)

The byte layout is frozen; golden vectors live in the test suite and in
docs/protocol.md.
"""

from __future__ import annotations

import enum
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"NUEX"
VERSION = 1
HEADER = struct.Struct("<4sBBHQH")
CRC = struct.Struct("<I")
HEADER_SIZE = HEADER.size            # 18
MAX_PAYLOAD_BYTES = 65535
MAX_FLOATS = MAX_PAYLOAD_BYTES // 8


class MsgType(enum.IntEnum):
    MASTER_STATE = 1
    FOLLOWER_STATE = 2
    TORQUE_CMD = 3
    HEARTBEAT = 4
    LOG_META = 5


class ProtocolError(Exception):
    """Malformed or inconsistent wire data."""


class BadMagicError(ProtocolError):
    pass


class UnsupportedVersionError(ProtocolError):
    pass


class CrcMismatchError(ProtocolError):
    pass


class TimestampRegressionError(ProtocolError):
    pass


@dataclass(frozen=True)
class WireMessage:
    msg_type: MsgType
    stream_id: int
    timestamp_us: int
    payload: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        object.__setattr__(self, "msg_type", MsgType(self.msg_type))
        payload = np.asarray(self.payload, dtype="<f8").reshape(-1)
        object.__setattr__(self, "payload", payload)
        if not 0 <= self.stream_id <= 0xFFFF:
            raise ProtocolError(f"stream_id {self.stream_id} out of u16 range")
        if not 0 <= self.timestamp_us <= 0xFFFFFFFFFFFFFFFF:
            raise ProtocolError("timestamp_us out of u64 range")

    def __eq__(self, other):
        return (isinstance(other, WireMessage)
                and self.msg_type == other.msg_type
                and self.stream_id == other.stream_id
                and self.timestamp_us == other.timestamp_us
                and self.payload.tobytes() == other.payload.tobytes())


def encode_message(msg: WireMessage) -> bytes:
    """Bit-exact encoding of a message per the frozen field layout."""
    body = msg.payload.tobytes()
    if len(body) > MAX_PAYLOAD_BYTES:
        raise ProtocolError(f"payload of {len(body)} bytes exceeds {MAX_PAYLOAD_BYTES}")
    head = HEADER.pack(MAGIC, VERSION, int(msg.msg_type), msg.stream_id,
                       msg.timestamp_us, len(body))
    frame = head + body
    return frame + CRC.pack(zlib.crc32(frame))


def decode_message(data: bytes, offset: int = 0) -> tuple[WireMessage | None, int]:
    """Decode one message starting at offset.

    Returns (message, bytes_consumed); (None, 0) signals that more bytes are
    needed. Structural problems raise ProtocolError subclasses.
    """
    view = memoryview(data)[offset:]
    if len(view) < HEADER_SIZE:
        return None, 0
    magic, version, msg_type, stream_id, timestamp_us, payload_len = HEADER.unpack_from(view)
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {bytes(magic)!r}")
    if version != VERSION:
        raise UnsupportedVersionError(f"unsupported protocol version {version}")
    if payload_len % 8 != 0:
        raise ProtocolError(f"payload length {payload_len} is not a multiple of 8")
    total = HEADER_SIZE + payload_len + CRC.size
    if len(view) < total:
        return None, 0
    frame = view[:HEADER_SIZE + payload_len]
    (crc,) = CRC.unpack_from(view, HEADER_SIZE + payload_len)
    if crc != zlib.crc32(frame):
        raise CrcMismatchError("crc32 mismatch")
    try:
        mtype = MsgType(msg_type)
    except ValueError:
        raise ProtocolError(f"unknown message type {msg_type}") from None
    payload = np.frombuffer(frame[HEADER_SIZE:], dtype="<f8").copy()
    return WireMessage(mtype, stream_id, timestamp_us, payload), total


class MessageDecoder:
    """Streaming decoder for one connection.

    Buffers partial frames and enforces strictly increasing timestamps per
    (stream_id, msg_type); a regression raises TimestampRegressionError.
    """

    def __init__(self, check_monotonic: bool = True):
        self._buf = bytearray()
        self._check = check_monotonic
        self._last: dict[tuple[int, int], int] = {}

    def feed(self, data: bytes) -> list[WireMessage]:
        self._buf.extend(data)
        out = []
        while True:
            msg, used = decode_message(bytes(self._buf))
            if msg is None:
                break
            del self._buf[:used]
            if self._check:
                key = (msg.stream_id, int(msg.msg_type))
                last = self._last.get(key)
                if last is not None and msg.timestamp_us <= last:
                    raise TimestampRegressionError(
                        f"timestamp {msg.timestamp_us} <= {last} on stream "
                        f"{msg.stream_id} type {msg.msg_type.name}")
                self._last[key] = msg.timestamp_us
            out.append(msg)
        return out

    @property
    def pending_bytes(self) -> int:
        return len(self._buf)
