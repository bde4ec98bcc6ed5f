"""Length-prefixed JSON wire protocol.

Every message is a 4-byte big-endian unsigned length prefix followed by a
UTF-8 JSON body with fields ``type`` (HELLO | SOLVE | RESULT | PING | PONG |
ERROR | SHUTDOWN), ``msg_id`` (strictly increasing per direction per
connection) and ``payload``.  Bodies are capped at 64 MiB.  Decoding is
incremental: a partial buffer yields nothing until the full frame arrives.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from ..errors import FramingError, ProtocolError

MAX_BODY_BYTES = 64 * 1024 * 1024
_PREFIX = struct.Struct("!I")

MESSAGE_TYPES = ("HELLO", "SOLVE", "RESULT", "PING", "PONG", "ERROR", "SHUTDOWN")


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    raise TypeError(f"not JSON serializable: {type(obj)!r}")


@dataclass(frozen=True)
class WireMessage:
    type: str
    msg_id: int
    payload: dict = field(default_factory=dict)


def encode_message(msg: WireMessage) -> bytes:
    if msg.type not in MESSAGE_TYPES:
        raise ProtocolError(f"unknown message type {msg.type!r}")
    body = json.dumps(
        {"type": msg.type, "msg_id": msg.msg_id, "payload": msg.payload},
        default=_jsonable, separators=(",", ":"), sort_keys=True,
    ).encode("utf-8")
    if len(body) > MAX_BODY_BYTES:
        raise FramingError(f"body of {len(body)} bytes exceeds the 64 MiB cap")
    return _PREFIX.pack(len(body)) + body


def _parse_body(body: bytes) -> WireMessage:
    try:
        doc = json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError(f"invalid JSON body: {exc}") from exc
    if not isinstance(doc, dict):
        raise ProtocolError("body must be a JSON object")
    try:
        mtype = doc["type"]
        msg_id = doc["msg_id"]
    except KeyError as exc:
        raise ProtocolError(f"missing field {exc}") from exc
    if mtype not in MESSAGE_TYPES:
        raise ProtocolError(f"unknown message type {mtype!r}")
    if not isinstance(msg_id, int) or msg_id < 1:
        raise ProtocolError("msg_id must be a positive integer")
    payload = doc.get("payload", {})
    if not isinstance(payload, dict):
        raise ProtocolError("payload must be a JSON object")
    return WireMessage(type=mtype, msg_id=msg_id, payload=payload)


def decode_message(data: bytes) -> WireMessage:
    """Decode exactly one complete frame (raises on trailing bytes)."""
    msg, consumed = try_decode(data)
    if msg is None:
        raise FramingError("incomplete frame")
    if consumed != len(data):
        raise FramingError(f"{len(data) - consumed} trailing bytes after frame")
    return msg


def try_decode(data: bytes) -> Tuple[Optional[WireMessage], int]:
    """(message, bytes consumed) or (None, 0) if more data is needed."""
    if len(data) < _PREFIX.size:
        return None, 0
    (length,) = _PREFIX.unpack_from(data)
    if length > MAX_BODY_BYTES:
        raise FramingError(f"length prefix {length} exceeds the 64 MiB cap")
    end = _PREFIX.size + length
    if len(data) < end:
        return None, 0
    return _parse_body(data[_PREFIX.size:end]), end


class Framer:
    """Incremental decoder; never yields a partial message."""

    def __init__(self):
        self._buffer = bytearray()

    def feed(self, data: bytes) -> List[WireMessage]:
        self._buffer.extend(data)
        out = []
        while True:
            msg, consumed = try_decode(bytes(self._buffer))
            if msg is None:
                break
            del self._buffer[:consumed]
            out.append(msg)
        return out

    @property
    def pending_bytes(self) -> int:
        return len(self._buffer)


class DirectionGuard:
    """Enforces strictly increasing msg_ids for one direction of a connection."""

    def __init__(self):
        self.last = 0

    def check(self, msg: WireMessage) -> WireMessage:
        if msg.msg_id <= self.last:
            raise ProtocolError(
                f"msg_id {msg.msg_id} not greater than previous {self.last}"
            )
        self.last = msg.msg_id
        return msg


class MessageCounter:
    """Allocates outbound msg_ids (strictly increasing per connection)."""

    def __init__(self):
        self._next = 1

    def allocate(self) -> int:
        value = self._next
        self._next += 1
        return value


def recv_exactly(sock, n: int) -> bytes:
    """Read exactly n bytes or return b'' on a cleanly closed socket."""
    chunks = []
    remaining = n
    while remaining > 0:
        chunk = sock.recv(remaining)
        if not chunk:
            return b""
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def recv_message(sock) -> Optional[WireMessage]:
    """Blocking read of one frame; None when the peer closed the stream."""
    prefix = recv_exactly(sock, _PREFIX.size)
    if not prefix:
        return None
    (length,) = _PREFIX.unpack(prefix)
    if length > MAX_BODY_BYTES:
        raise FramingError(f"length prefix {length} exceeds the 64 MiB cap")
    body = recv_exactly(sock, length)
    if len(body) != length:
        raise FramingError("stream closed mid-frame")
    return _parse_body(body)


def send_message(sock, msg: WireMessage) -> None:
    sock.sendall(encode_message(msg))
