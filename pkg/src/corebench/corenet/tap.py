"""NF-side frame mirroring for the two capture backends.

``inline``: one copy into a shared-memory ring read by a collector.
``observer``: a datagram copy to a separate observer process over a local socket.

Both paths are non-blocking (drop when full) and clock their own CPU time with
the per-thread clock so capture cost is separable from NF work.
"""
from __future__ import annotations

import socket
import threading
import time

from ..telemetry.ring import RingWriter, pack_meta

BACKENDS = ("inline", "observer")


class CaptureTap:
    def __init__(self):
        self._lock = threading.Lock()
        self.ring: RingWriter | None = None
        self.observer: socket.socket | None = None
        self.observer_path: str | None = None
        self._count_lock = threading.Lock()
        self.counters = {b: {"frames": 0, "dropped": 0, "bytes": 0, "cpu_ns": 0} for b in BACKENDS}

    @property
    def enabled(self) -> bool:
        return self.ring is not None or self.observer is not None

    def start(self, backend: str, params: dict) -> None:
        with self._lock:
            if backend == "inline":
                if self.ring is not None:
                    self.ring.close()
                self.ring = RingWriter(params["shm"])
            elif backend == "observer":
                if self.observer is not None:
                    self.observer.close()
                sock = socket.socket(socket.AF_UNIX, socket.SOCK_DGRAM)
                sock.setblocking(False)
                self.observer_path = params["path"]
                self.observer = sock
            else:
                raise ValueError(f"unknown capture backend {backend!r}")
            with self._count_lock:
                self.counters[backend] = {"frames": 0, "dropped": 0, "bytes": 0, "cpu_ns": 0}

    def stop(self, backend: str | None = None) -> dict:
        with self._lock:
            if backend in (None, "inline") and self.ring is not None:
                ring, self.ring = self.ring, None
                ring.close()
            if backend in (None, "observer") and self.observer is not None:
                sock, self.observer = self.observer, None
                sock.close()
            return self.snapshot()

    def snapshot(self) -> dict:
        with self._count_lock:
            return {b: dict(c) for b, c in self.counters.items()}

    def _account(self, backend: str, ok: bool, nbytes: int, t0: int) -> None:
        with self._count_lock:
            c = self.counters[backend]
            if ok:
                c["frames"] += 1
                c["bytes"] += nbytes
            else:
                c["dropped"] += 1
            c["cpu_ns"] += time.thread_time_ns() - t0

    def mirror(self, src: str, dst: str, data: bytes) -> None:
        ring = self.ring
        if ring is not None:
            t0 = time.thread_time_ns()
            ok = ring.put(time.monotonic_ns(), src, dst, data)
            self._account("inline", ok, len(data), t0)
        sock = self.observer
        if sock is not None:
            t0 = time.thread_time_ns()
            try:
                sock.sendto(pack_meta(time.monotonic_ns(), src, dst) + data, self.observer_path)
                ok = True
            except OSError:
                ok = False
            self._account("observer", ok, len(data), t0)
