"""Wire format: 4-byte big-endian length prefix followed by a UTF-8 JSON body.

The prefix counts body bytes only. Body keys are exactly ``msg_type``,
``txn_id``, ``ue_id``, ``hops`` and ``payload_hex``.
"""
from __future__ import annotations

import json
import socket
import struct
from dataclasses import dataclass, field

HEADER = struct.Struct(">I")
HEADER_SIZE = HEADER.size
MAX_FRAME = 1 << 20
MASK64 = (1 << 64) - 1

# Error replies carry the error code as their msg_type.
UPSTREAM_UNAVAILABLE = "UPSTREAM_UNAVAILABLE"
UPSTREAM_TIMEOUT = "UPSTREAM_TIMEOUT"
MALFORMED_FRAME = "MALFORMED_FRAME"
UNKNOWN_MSG_TYPE = "UNKNOWN_MSG_TYPE"
ERROR_TYPES = frozenset({UPSTREAM_UNAVAILABLE, UPSTREAM_TIMEOUT, MALFORMED_FRAME, UNKNOWN_MSG_TYPE})

_KEYS = ("msg_type", "txn_id", "ue_id", "hops", "payload_hex")


class FrameError(ValueError):
    """Body could not be decoded into a frame."""


class FrameTooLarge(FrameError):
    pass


@dataclass(frozen=True)
class Frame:
    msg_type: str
    txn_id: int
    ue_id: str = ""
    hops: tuple[str, ...] = ()
    payload: bytes = b""

    def __post_init__(self) -> None:
        if not isinstance(self.txn_id, int) or not 0 <= self.txn_id <= MASK64:
            raise FrameError(f"txn_id must be an unsigned 64-bit int, got {self.txn_id!r}")
        object.__setattr__(self, "hops", tuple(str(h) for h in self.hops))

    @property
    def is_error(self) -> bool:
        return self.msg_type in ERROR_TYPES

    def reply(self, msg_type: str, payload: bytes = b"", hops=None) -> "Frame":
        return Frame(msg_type, self.txn_id, self.ue_id,
                     self.hops if hops is None else tuple(hops), payload)

    def to_json(self) -> dict:
        return {
            "msg_type": self.msg_type,
            "txn_id": self.txn_id,
            "ue_id": self.ue_id,
            "hops": list(self.hops),
            "payload_hex": self.payload.hex(),
        }

    def body(self) -> bytes:
        return json.dumps(self.to_json(), separators=(",", ":")).encode("utf-8")

    def encode(self) -> bytes:
        body = self.body()
        return HEADER.pack(len(body)) + body

    @classmethod
    def from_json(cls, obj) -> "Frame":
        if not isinstance(obj, dict) or set(obj) != set(_KEYS):
            raise FrameError("frame body must be an object with keys " + ", ".join(_KEYS))
        msg_type, txn_id, ue, hops, payload_hex = (obj[k] for k in _KEYS)
        if not isinstance(msg_type, str) or not msg_type:
            raise FrameError("msg_type must be a non-empty string")
        if not isinstance(txn_id, int) or isinstance(txn_id, bool):
            raise FrameError("txn_id must be an integer")
        if not isinstance(ue, str):
            raise FrameError("ue_id must be a string")
        if not isinstance(hops, list) or not all(isinstance(h, str) for h in hops):
            raise FrameError("hops must be a list of strings")
        if not isinstance(payload_hex, str):
            raise FrameError("payload_hex must be a string")
        try:
            payload = bytes.fromhex(payload_hex)
        except ValueError:
            raise FrameError("payload_hex is not valid hex") from None
        return cls(msg_type, txn_id, ue, tuple(hops), payload)


def decode(body: bytes) -> Frame:
    try:
        obj = json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FrameError(f"undecodable body: {exc}") from None
    return Frame.from_json(obj)


def decode_wire(data: bytes) -> Frame:
    """Decode one complete length-prefixed frame."""
    if len(data) < HEADER_SIZE:
        raise FrameError("truncated length prefix")
    (n,) = HEADER.unpack_from(data)
    if len(data) - HEADER_SIZE != n:
        raise FrameError(f"length prefix says {n} bytes, got {len(data) - HEADER_SIZE}")
    return decode(data[HEADER_SIZE:])


def recv_exact(sock: socket.socket, n: int) -> bytes | None:
    """Read exactly ``n`` bytes; None on clean EOF before the first byte."""
    chunks = []
    remaining = n
    while remaining:
        chunk = sock.recv(remaining)
        if not chunk:
            if remaining == n:
                return None
            raise ConnectionError("connection closed mid-frame")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def read_body(sock: socket.socket, max_frame: int = MAX_FRAME) -> bytes | None:
    head = recv_exact(sock, HEADER_SIZE)
    if head is None:
        return None
    (n,) = HEADER.unpack(head)
    if n > max_frame:
        raise FrameTooLarge(f"frame of {n} bytes exceeds limit {max_frame}")
    body = recv_exact(sock, n) if n else b""
    if body is None:
        raise ConnectionError("connection closed mid-frame")
    return body


def send_frame(sock: socket.socket, frame: Frame) -> int:
    data = frame.encode()
    sock.sendall(data)
    return len(data)


def recv_frame(sock: socket.socket) -> Frame:
    body = read_body(sock)
    if body is None:
        raise ConnectionError("peer closed the connection")
    return decode(body)
