"""Capture sessions over the running core, with capture-path overhead accounting.

Two backends mirror every service frame an NF receives or answers:

* ``inline`` (InlineTap): the NF copies the frame once into a shared-memory
  ring; a collector thread in this process drains it.
* ``observer`` (ExternalObserver): the NF sends a datagram copy to a separate
  observer process, which re-parses it.

CPU overhead is the capture-path time each side clocks for itself: the NFs
report per-backend thread CPU spent in the mirror call; the consumer side is
the collector thread's CPU (inline) or the observer process's CPU (observer).
"""
from __future__ import annotations

import json
import logging
import os
import statistics
import subprocess
import sys
import tempfile
import threading
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping

import psutil

from ..corenet.client import HOST, UpstreamError, control
from ..corenet.config import NfKind
from .ring import RingReader

log = logging.getLogger(__name__)

BACKEND_NAMES = {"inline": "InlineTap", "observer": "ExternalObserver"}
DRAIN_INTERVAL_S = 0.02


def hex_encode(data: bytes) -> str:
    return data.hex()


def hex_decode(text: str) -> bytes:
    if text != text.lower():
        raise ValueError("payload hex must be lowercase")
    return bytes.fromhex(text)


@dataclass(frozen=True)
class PacketRecord:
    ts_ns: int
    src_nf: str
    dst_nf: str
    length_bytes: int
    payload_hex: str

    @classmethod
    def from_bytes(cls, ts_ns: int, src: str, dst: str, data: bytes) -> "PacketRecord":
        return cls(ts_ns, src, dst, len(data), hex_encode(data))

    @property
    def payload(self) -> bytes:
        return hex_decode(self.payload_hex)

    def key(self) -> tuple[str, str, int]:
        return self.src_nf, self.dst_nf, self.length_bytes

    def to_json(self) -> str:
        return json.dumps(asdict(self))

    @classmethod
    def from_json(cls, line: str) -> "PacketRecord":
        d = json.loads(line)
        return cls(int(d["ts_ns"]), d["src_nf"], d["dst_nf"], int(d["length_bytes"]), d["payload_hex"])


def read_records(path: str | Path) -> list[PacketRecord]:
    with open(path) as fh:
        return [PacketRecord.from_json(line) for line in fh if line.strip()]


@dataclass
class CaptureStats:
    backend: str
    cpu_pct: list[float] = field(default_factory=list)
    mem_bytes: list[int] = field(default_factory=list)
    frames_captured: int = 0
    frames_dropped: int = 0
    nf_cpu_ns: int = 0
    consumer_cpu_ns: int = 0
    duration_s: float = 0.0

    @property
    def median_cpu_pct(self) -> float:
        return statistics.median(self.cpu_pct) if self.cpu_pct else 0.0

    @property
    def mean_cpu_pct(self) -> float:
        return statistics.fmean(self.cpu_pct) if self.cpu_pct else 0.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["median_cpu_pct"] = self.median_cpu_pct
        d["mean_cpu_pct"] = self.mean_cpu_pct
        return d


class CaptureSession:
    """Start/stop one capture backend across a set of NFs.

    ``ports`` maps NF -> control port. Records go to ``out`` (JSON Lines); with
    ``keep`` they are also held in memory on ``records``.
    """

    def __init__(self, backend: str, ports: Mapping[NfKind | str, int], out: str | Path | None = None,
                 host: str = HOST, interval_s: float = 1.0, ring_capacity: int = 4 << 20,
                 keep: bool = True, on_record: Callable[[PacketRecord], None] | None = None):
        if backend not in BACKEND_NAMES:
            raise ValueError(f"backend must be one of {sorted(BACKEND_NAMES)}")
        self.backend = backend
        self.ports = {NfKind.parse(k).value: p for k, p in ports.items()}
        self.host = host
        self.interval_s = interval_s
        self.ring_capacity = ring_capacity
        self.keep = keep
        self.on_record = on_record
        self._tmp = tempfile.TemporaryDirectory(prefix="corebench-cap-")
        self.out = Path(out) if out is not None else Path(self._tmp.name) / "packets.jsonl"
        self.records: list[PacketRecord] = []
        self.stats = CaptureStats(BACKEND_NAMES[backend])
        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []
        self._rings: dict[str, RingReader] = {}
        self._fh = None
        self._consumed_frames = 0
        self._consumed_bytes = 0
        self._collector_cpu_ns = 0
        self._lock = threading.Lock()
        self._observer: subprocess.Popen | None = None
        self._observer_ps: psutil.Process | None = None
        self._observer_cpu0 = 0.0
        self._started = 0.0
        self._stats_path = os.path.join(self._tmp.name, "observer.json")

    # -- NF side ------------------------------------------------------------------
    def _nf_counters(self) -> tuple[int, int, int, int]:
        """Sum over NFs of (cpu_ns, frames, bytes, dropped) for this backend."""
        cpu = frames = nbytes = dropped = 0
        for port in self.ports.values():
            try:
                s = control(port, "STATS", timeout=5.0, host=self.host)
            except UpstreamError:
                continue
            c = s.get("capture", {}).get(self.backend, {})
            cpu += int(c.get("cpu_ns", 0))
            frames += int(c.get("frames", 0))
            nbytes += int(c.get("bytes", 0))
            dropped += int(c.get("dropped", 0))
        return cpu, frames, nbytes, dropped

    # -- consumer side ------------------------------------------------------------
    def _drain_once(self) -> None:
        t0 = time.thread_time_ns()
        batch = []
        for ring in self._rings.values():
            batch.extend(ring.drain())
        if batch:
            batch.sort(key=lambda r: r[0])
            lines = []
            for ts, src, dst, data in batch:
                rec = PacketRecord.from_bytes(ts, src, dst, data)
                lines.append(rec.to_json())
                if self.keep:
                    self.records.append(rec)
                if self.on_record is not None:
                    self.on_record(rec)
            self._fh.write("\n".join(lines) + "\n")
            with self._lock:
                self._consumed_frames += len(batch)
                self._consumed_bytes += sum(len(b[3]) for b in batch)
        with self._lock:
            self._collector_cpu_ns += time.thread_time_ns() - t0

    def _collector(self) -> None:
        while not self._stop.wait(DRAIN_INTERVAL_S):
            self._drain_once()
        self._drain_once()

    def _consumer_cpu_ns(self) -> int:
        if self.backend == "inline":
            with self._lock:
                return self._collector_cpu_ns
        try:
            t = self._observer_ps.cpu_times()
            return int((t.user + t.system - self._observer_cpu0) * 1e9)
        except (psutil.Error, AttributeError):
            return self.stats.consumer_cpu_ns

    def _sampler(self) -> None:
        nf_cpu0, _, _, _ = self._nf_counters()
        cons0 = self._consumer_cpu_ns()
        t_prev = time.monotonic()
        prev_nf, prev_cons = nf_cpu0, cons0
        tick = t_prev
        while True:
            tick += self.interval_s
            if self._stop.wait(max(0.0, tick - time.monotonic())):
                break
            nf_cpu, _, nbytes, _ = self._nf_counters()
            cons = self._consumer_cpu_ns()
            now = time.monotonic()
            dt = max(now - t_prev, 1e-9)
            pct = 100.0 * ((nf_cpu - prev_nf) + (cons - prev_cons)) / 1e9 / dt
            self.stats.cpu_pct.append(max(0.0, pct))
            self.stats.mem_bytes.append(max(0, nbytes - self._consumed_estimate()))
            prev_nf, prev_cons, t_prev = nf_cpu, cons, now

    def _consumed_estimate(self) -> int:
        if self.backend == "inline":
            with self._lock:
                return self._consumed_bytes
        # The observer's backlog sits in its socket queue; its progress file says
        # how much it has taken off so far.
        try:
            with open(self._stats_path) as fh:
                return int(json.load(fh).get("bytes", 0))
        except (OSError, ValueError):
            return 0

    # -- lifecycle ----------------------------------------------------------------
    def start(self) -> "CaptureSession":
        self._started = time.monotonic()
        if self.backend == "inline":
            self._fh = open(self.out, "w")
            for kind, port in self.ports.items():
                ring = RingReader(self.ring_capacity)
                self._rings[kind] = ring
                control(port, "CAPTURE_START", {"backend": "inline", "shm": ring.name}, host=self.host)
            self._threads.append(threading.Thread(target=self._collector, name="cap-collector", daemon=True))
        else:
            sock_path = os.path.join(self._tmp.name, "observer.sock")
            spec = json.dumps({"path": sock_path, "out": str(self.out), "stats": self._stats_path})
            self._observer = subprocess.Popen([sys.executable, "-m", "corebench.telemetry.observer", spec],
                                              stdout=subprocess.PIPE, text=True)
            line = self._observer.stdout.readline()
            if line.strip() != "ready":
                raise RuntimeError("capture observer failed to start")
            self._observer_ps = psutil.Process(self._observer.pid)
            t = self._observer_ps.cpu_times()
            self._observer_cpu0 = t.user + t.system
            for port in self.ports.values():
                control(port, "CAPTURE_START", {"backend": "observer", "path": sock_path}, host=self.host)
        self._threads.append(threading.Thread(target=self._sampler, name="cap-sampler", daemon=True))
        for t in self._threads:
            t.start()
        return self

    def stop(self) -> CaptureStats:
        finals = {}
        for kind, port in self.ports.items():
            try:
                finals[kind] = control(port, "CAPTURE_STOP", {"backend": self.backend}, host=self.host)
            except UpstreamError as exc:
                log.warning("CAPTURE_STOP to %s failed: %s", kind, exc)
        self.stats.nf_cpu_ns = sum(int(f.get(self.backend, {}).get("cpu_ns", 0)) for f in finals.values())
        nf_dropped = sum(int(f.get(self.backend, {}).get("dropped", 0)) for f in finals.values())
        self._stop.set()
        for t in self._threads:
            t.join(timeout=10.0)
        if self.backend == "inline":
            ring_dropped = sum(r.dropped for r in self._rings.values())
            for r in self._rings.values():
                r.close()
            self._fh.close()
            self.stats.frames_captured = self._consumed_frames
            self.stats.consumer_cpu_ns = self._collector_cpu_ns
            self.stats.frames_dropped = max(nf_dropped, ring_dropped)
        else:
            self.stats.consumer_cpu_ns = self._consumer_cpu_ns()
            self._stop_observer()
            try:
                with open(self._stats_path) as fh:
                    obs = json.load(fh)
            except (OSError, ValueError):
                obs = {}
            self.stats.frames_captured = int(obs.get("frames", 0))
            self.stats.frames_dropped = nf_dropped
            if self.keep:
                self.records = read_records(self.out)
        self.stats.duration_s = time.monotonic() - self._started
        return self.stats

    def _stop_observer(self) -> None:
        import socket
        proc = self._observer
        if proc is None:
            return
        sock_path = os.path.join(self._tmp.name, "observer.sock")
        try:
            s = socket.socket(socket.AF_UNIX, socket.SOCK_DGRAM)
            s.sendto(b"STOP", sock_path)
            s.close()
        except OSError:
            proc.terminate()
        try:
            proc.wait(timeout=30)
        except subprocess.TimeoutExpired:
            proc.kill()
            proc.wait()
        if proc.stdout is not None:
            proc.stdout.close()

    def __enter__(self) -> "CaptureSession":
        return self.start()

    def __exit__(self, *exc) -> None:
        if not self._stop.is_set():
            self.stop()

    def close(self) -> None:
        self._tmp.cleanup()


def multiset(records: Iterable[PacketRecord]) -> dict[tuple[str, str, int], int]:
    out: dict[tuple[str, str, int], int] = {}
    for r in records:
        out[r.key()] = out.get(r.key(), 0) + 1
    return out
