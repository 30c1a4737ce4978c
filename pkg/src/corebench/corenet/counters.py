"""Byte counters published through a small shared-memory file.

A flooded NF may be too busy to answer a STATS control frame in time, so
the monitor reads the counters from here instead. Layout is three native
uint64s: a sequence number (odd while a write is in progress), rx, tx.
"""
from __future__ import annotations

import mmap
import os
import struct
import tempfile
from pathlib import Path

_FMT = "=QQQ"
SIZE = struct.calcsize(_FMT)


def counter_path(pid: int) -> Path:
    base = Path("/dev/shm")
    if not base.is_dir():
        base = Path(tempfile.gettempdir())
    return base / f"corebench-nf-{pid}.cnt"


class CounterFile:
    """Writer side. Callers serialize updates themselves."""

    def __init__(self, pid: int | None = None):
        self.path = counter_path(os.getpid() if pid is None else pid)
        fd = os.open(self.path, os.O_RDWR | os.O_CREAT | os.O_TRUNC, 0o600)
        try:
            os.ftruncate(fd, SIZE)
            self._map = mmap.mmap(fd, SIZE)
        finally:
            os.close(fd)
        self._seq = 0

    def publish(self, rx: int, tx: int) -> None:
        self._seq += 1
        struct.pack_into("=Q", self._map, 0, self._seq)
        struct.pack_into("=QQ", self._map, 8, rx, tx)
        self._seq += 1
        struct.pack_into("=Q", self._map, 0, self._seq)

    def close(self) -> None:
        self._map.close()
        try:
            self.path.unlink()
        except FileNotFoundError:
            pass


def read_counters(pid: int, tries: int = 100) -> tuple[int, int] | None:
    """(rx, tx) for the NF with this pid, or None if it publishes none."""
    try:
        with open(counter_path(pid), "rb") as fh:
            m = mmap.mmap(fh.fileno(), SIZE, access=mmap.ACCESS_READ)
    except (OSError, ValueError):
        return None
    try:
        for _ in range(tries):
            s0, rx, tx = struct.unpack_from(_FMT, m)
            if s0 % 2 == 0 and struct.unpack_from("=Q", m)[0] == s0:
                return rx, tx
        return None
    finally:
        m.close()
