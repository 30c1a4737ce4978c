"""Shared-memory single-producer ring used by the inline capture tap.

Layout: a 64-byte header (head, tail, dropped as little-endian u64) followed by
``capacity`` data bytes. ``head`` and ``tail`` are free-running byte offsets.
Each record is ``u32 length | u64 ts_ns | u8 src | u8 dst | frame bytes`` where
``length`` counts everything after itself.
"""
from __future__ import annotations

import struct
import threading
from multiprocessing import resource_tracker, shared_memory

from ..corenet.config import NfKind

HEADER_BYTES = 64
_U64 = struct.Struct("<Q")
_REC = struct.Struct("<IQBB")
REC_OVERHEAD = _REC.size
_META = struct.Struct("<QBB")

ENDPOINTS: tuple[str, ...] = tuple(k.value for k in NfKind) + ("UE", "EXT")
_CODES = {name: i for i, name in enumerate(ENDPOINTS)}


def endpoint_code(name: str) -> int:
    return _CODES.get(name, _CODES["EXT"])


def pack_meta(ts_ns: int, src: str, dst: str) -> bytes:
    return _META.pack(ts_ns, endpoint_code(src), endpoint_code(dst))


def unpack_datagram(data: bytes) -> tuple[int, str, str, bytes]:
    ts, s, d = _META.unpack_from(data)
    return ts, ENDPOINTS[s], ENDPOINTS[d], data[_META.size:]


class RingWriter:
    """Producer side, opened inside an NF. Never blocks: full ring means drop."""

    def __init__(self, name: str):
        self.shm = shared_memory.SharedMemory(name=name)
        # Attaching registers the segment with this process's tracker, which
        # would unlink it at exit; the collector owns its lifetime.
        resource_tracker.unregister(self.shm._name, "shared_memory")
        self.buf = self.shm.buf
        self.capacity = self.shm.size - HEADER_BYTES
        self.lock = threading.Lock()
        self.written = 0
        self.dropped = 0

    def put(self, ts_ns: int, src: str, dst: str, data: bytes) -> bool:
        need = REC_OVERHEAD + len(data)
        record = _REC.pack(need - 4, ts_ns, endpoint_code(src), endpoint_code(dst)) + data
        buf = self.buf
        cap = self.capacity
        with self.lock:
            (head,) = _U64.unpack_from(buf, 0)
            (tail,) = _U64.unpack_from(buf, 8)
            if need > cap - (head - tail):
                self.dropped += 1
                _U64.pack_into(buf, 16, self.dropped)
                return False
            pos = head % cap
            first = min(need, cap - pos)
            buf[HEADER_BYTES + pos:HEADER_BYTES + pos + first] = record[:first]
            if first < need:
                buf[HEADER_BYTES:HEADER_BYTES + need - first] = record[first:]
            _U64.pack_into(buf, 0, head + need)
            self.written += 1
        return True

    def close(self) -> None:
        self.buf = None
        try:
            self.shm.close()
        except BufferError:
            pass


class RingReader:
    """Consumer side, owned by the collector; creates and unlinks the segment."""

    def __init__(self, capacity: int = 4 << 20, name: str | None = None):
        self.shm = shared_memory.SharedMemory(name=name, create=True, size=HEADER_BYTES + capacity)
        self.capacity = capacity
        self.shm.buf[:HEADER_BYTES] = bytes(HEADER_BYTES)

    @property
    def name(self) -> str:
        return self.shm.name

    def occupancy(self) -> int:
        (head,) = _U64.unpack_from(self.shm.buf, 0)
        (tail,) = _U64.unpack_from(self.shm.buf, 8)
        return head - tail

    @property
    def dropped(self) -> int:
        return _U64.unpack_from(self.shm.buf, 16)[0]

    def drain(self) -> list[tuple[int, str, str, bytes]]:
        buf = self.shm.buf
        cap = self.capacity
        (head,) = _U64.unpack_from(buf, 0)
        (tail,) = _U64.unpack_from(buf, 8)
        if head == tail:
            return []
        start = tail % cap
        n = head - tail
        if start + n <= cap:
            chunk = bytes(buf[HEADER_BYTES + start:HEADER_BYTES + start + n])
        else:
            first = cap - start
            chunk = bytes(buf[HEADER_BYTES + start:HEADER_BYTES + cap]) + \
                bytes(buf[HEADER_BYTES:HEADER_BYTES + n - first])
        out = []
        off = 0
        while off < n:
            length, ts, s, d = _REC.unpack_from(chunk, off)
            body_start = off + REC_OVERHEAD
            body_end = off + 4 + length
            out.append((ts, ENDPOINTS[s], ENDPOINTS[d], chunk[body_start:body_end]))
            off = body_end
        _U64.pack_into(buf, 8, head)
        return out

    def close(self) -> None:
        try:
            self.shm.close()
        finally:
            try:
                self.shm.unlink()
            except FileNotFoundError:
                pass
