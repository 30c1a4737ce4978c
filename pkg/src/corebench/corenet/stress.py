"""In-process stressors driven by STRESS_START / STRESS_STOP control frames."""
from __future__ import annotations

import logging
import mmap
import random
import threading
import time

log = logging.getLogger(__name__)

QUANTUM_S = 0.100
PAGE = 4096
MIB = 1 << 20
CHUNK_S = 0.025
# Pages are rewritten in blocks; each block copy is one uninterrupted memcpy.
BLOCK = 16 * MIB
PATTERN = 64 << 10


def _calibrate_chunk(target_s: float = CHUNK_S) -> int:
    n = 20_000
    while True:
        t = time.perf_counter()
        sum(range(n))
        dt = time.perf_counter() - t
        if dt > 2e-3:
            return max(1000, int(n * target_s / dt))
        n *= 4


_CHUNK_N: int | None = None


def _spin(cpu_s: float, deadline: float) -> float:
    """Burn ``cpu_s`` of this thread's CPU time, giving up at wall-clock ``deadline``.

    Each ``sum(range(n))`` runs in C without yielding the interpreter lock, so
    other threads of this process are frozen for up to one chunk at a time,
    much like a CPU-quota-throttled container. Metering on the thread clock
    means time lost to other threads or processes is made up inside the quantum.
    Returns the CPU time actually burned.
    """
    global _CHUNK_N
    if _CHUNK_N is None:
        _CHUNK_N = _calibrate_chunk()
    n = _CHUNK_N
    c0 = time.thread_time()
    while True:
        left = min(cpu_s - (time.thread_time() - c0), deadline - time.perf_counter())
        if left <= 0:
            return time.thread_time() - c0
        sum(range(n if left >= CHUNK_S else max(1, int(n * left / CHUNK_S))))


class StressEngine:
    """Runs CPU and/or memory stress inside the current process.

    CPU: each worker burns ``cpu_load_pct`` percent of every 100 ms quantum.
    The busy slice starts at a random offset inside the quantum so that a
    constant-rate probe does not alias with the duty cycle.

    Memory: maps ``memory_mib`` MiB and rewrites every page once per second.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []
        self._buffer: mmap.mmap | None = None
        self.active: dict | None = None
        self.busy_s = 0.0
        self.passes = 0

    def start(self, kind: str, cpu_load_pct: float | None = None, memory_mib: int | None = None,
              workers: int = 1, seed: int | None = None, max_s: float | None = None) -> None:
        with self._lock:
            if self.active is not None:
                self._halt()
            self._stop = threading.Event()
            self.busy_s = 0.0
            self.passes = 0
            want_cpu = kind in ("CPU", "CpuMemory")
            want_mem = kind in ("Memory", "CpuMemory")
            if not (want_cpu or want_mem):
                raise ValueError(f"unknown stress kind {kind!r}")
            rng = random.Random(seed)
            if want_cpu:
                if cpu_load_pct is None or not 0 < cpu_load_pct <= 100:
                    raise ValueError("cpu_load_pct must lie in (0, 100]")
                for i in range(max(1, int(workers))):
                    t = threading.Thread(target=self._cpu_worker,
                                         args=(cpu_load_pct / 100.0, random.Random(rng.random()), self._stop),
                                         name=f"stress-cpu-{i}", daemon=True)
                    self._threads.append(t)
            if want_mem:
                if memory_mib is None or memory_mib <= 0:
                    raise ValueError("memory_mib must be > 0")
                t = threading.Thread(target=self._mem_worker, args=(int(memory_mib) * MIB, self._stop),
                                     name="stress-mem", daemon=True)
                self._threads.append(t)
            self.active = {"kind": kind, "cpu_load_pct": cpu_load_pct, "memory_mib": memory_mib,
                           "workers": workers, "started": time.monotonic()}
            for t in self._threads:
                t.start()
            if max_s:
                stop = self._stop
                threading.Thread(target=self._expire, args=(stop, max_s), daemon=True).start()

    def stop(self) -> dict:
        with self._lock:
            return self._halt()

    def _halt(self) -> dict:
        info = dict(self.active or {})
        self._stop.set()
        for t in self._threads:
            t.join(timeout=5.0)
        self._threads = []
        self._buffer = None
        if self.active is not None:
            info["elapsed_s"] = time.monotonic() - self.active["started"]
            info["busy_s"] = self.busy_s
            info["memory_passes"] = self.passes
        self.active = None
        return info

    def _expire(self, stop: threading.Event, max_s: float) -> None:
        if not stop.wait(max_s):
            log.warning("stress exceeded its %.1f s safety limit; releasing", max_s)
            with self._lock:
                if self._stop is stop:
                    self._halt()

    def _cpu_worker(self, duty: float, rng: random.Random, stop: threading.Event) -> None:
        busy = duty * QUANTUM_S
        slack = QUANTUM_S - busy
        q0 = time.perf_counter()
        while not stop.is_set():
            offset = rng.uniform(0.0, slack) if slack > 0 else 0.0
            pause = q0 + offset - time.perf_counter()
            if pause > 0 and stop.wait(pause):
                break
            self.busy_s += _spin(busy, q0 + QUANTUM_S)
            q0 += QUANTUM_S
            pause = q0 - time.perf_counter()
            if pause > 0 and stop.wait(pause):
                break
            if pause < -QUANTUM_S:
                q0 = time.perf_counter()

    def _mem_worker(self, nbytes: int, stop: threading.Event) -> None:
        # An anonymous mapping is zero-filled lazily, so pages become resident on
        # the first pass rather than in one long allocation. The pattern block is
        # mapped too: a heap bytes object this large would stay in the malloc
        # arena after release and inflate RSS.
        buf = mmap.mmap(-1, nbytes)
        blk = min(BLOCK, nbytes)
        pat = mmap.mmap(-1, blk)
        view = memoryview(pat)
        self._buffer = buf
        try:
            tick = 0
            while not stop.is_set():
                t0 = time.monotonic()
                stamp = bytes([tick & 0xFF]) * min(PATTERN, blk)
                for off in range(0, blk, len(stamp)):
                    n = min(len(stamp), blk - off)
                    view[off:off + n] = stamp[:n]
                for off in range(0, nbytes, BLOCK):
                    end = min(off + BLOCK, nbytes)
                    buf[off:end] = view[:end - off]
                    if stop.is_set():
                        break
                self.passes += 1
                tick += 1
                remaining = 1.0 - (time.monotonic() - t0)
                if remaining > 0 and stop.wait(remaining):
                    break
        finally:
            self._buffer = None
            view.release()
            pat.close()
            buf.close()
