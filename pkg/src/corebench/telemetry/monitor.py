"""Per-NF resource sampling: process CPU and RSS plus the NF's own byte counters."""
from __future__ import annotations

import csv
import logging
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterator, Mapping

import psutil

from ..corenet.client import HOST, UpstreamError, control
from ..corenet.config import NfKind
from ..corenet.counters import read_counters

log = logging.getLogger(__name__)

CSV_HEADER = ["ts_ns", "nf", "cpu_pct", "rss_bytes", "net_rx", "net_tx"]


@dataclass
class ResourceSample:
    ts_ns: int
    nf: str
    cpu_pct: float
    rss_bytes: int
    net_rx: int
    net_tx: int
    exited: bool = False

    def to_row(self) -> dict:
        return {"ts_ns": self.ts_ns, "nf": self.nf, "cpu_pct": f"{self.cpu_pct:.3f}",
                "rss_bytes": self.rss_bytes, "net_rx": self.net_rx, "net_tx": self.net_tx}


@dataclass
class _Target:
    kind: str
    pid: int
    port: int | None
    proc: psutil.Process | None = None
    cpu_s: float = 0.0
    t: float = 0.0
    rx: int = 0
    tx: int = 0
    done: bool = False


def _cpu_seconds(proc: psutil.Process) -> float:
    t = proc.cpu_times()
    return t.user + t.system


class ResourceMonitor:
    """Samples every NF each ``interval_ms`` on a fixed grid until stopped.

    ``nfs`` maps NF -> (pid, control port); a port of None skips the byte counters.
    An NF whose process has gone gets one final sample with ``exited`` set and is
    then dropped from the rotation.
    """

    def __init__(self, nfs: Mapping[NfKind | str, tuple[int, int | None]], interval_ms: float = 1000.0,
                 host: str = HOST, out: str | Path | None = None,
                 on_sample: Callable[[ResourceSample], None] | None = None):
        if interval_ms <= 0:
            raise ValueError("interval_ms must be > 0")
        self.interval_s = interval_ms / 1e3
        self.host = host
        self.out = Path(out) if out is not None else None
        self.on_sample = on_sample
        self.samples: list[ResourceSample] = []
        self._targets = [_Target(NfKind.parse(k).value, int(pid), port) for k, (pid, port) in nfs.items()]
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None
        self._lock = threading.Lock()
        self._fh = None
        self._writer = None

    def _counters(self, tgt: _Target) -> tuple[int, int]:
        shm = read_counters(tgt.pid) if tgt.pid else None
        if shm is not None:
            return max(tgt.rx, shm[0]), max(tgt.tx, shm[1])
        if tgt.port is None:
            return tgt.rx, tgt.tx
        try:
            s = control(tgt.port, "STATS", timeout=max(2.0, self.interval_s), host=self.host)
        except UpstreamError:
            return tgt.rx, tgt.tx  # keep the last reading; counters never go backwards
        return max(tgt.rx, int(s.get("rx_bytes", 0))), max(tgt.tx, int(s.get("tx_bytes", 0)))

    def _prime(self) -> None:
        for tgt in self._targets:
            try:
                tgt.proc = psutil.Process(tgt.pid)
                tgt.cpu_s = _cpu_seconds(tgt.proc)
                tgt.t = time.monotonic()
            except psutil.Error:
                tgt.done = True
            tgt.rx, tgt.tx = self._counters(tgt)

    def sample_once(self) -> list[ResourceSample]:
        out = []
        for tgt in self._targets:
            if tgt.done:
                continue
            ts = time.time_ns()
            try:
                cpu_s = _cpu_seconds(tgt.proc)
                rss = tgt.proc.memory_info().rss
                now = time.monotonic()
                if not tgt.proc.is_running() or tgt.proc.status() == psutil.STATUS_ZOMBIE:
                    raise psutil.NoSuchProcess(tgt.pid)
            except psutil.Error:
                tgt.done = True
                out.append(ResourceSample(ts, tgt.kind, 0.0, 0, tgt.rx, tgt.tx, exited=True))
                continue
            dt = max(now - tgt.t, 1e-9)
            pct = max(0.0, 100.0 * (cpu_s - tgt.cpu_s) / dt)
            tgt.cpu_s, tgt.t = cpu_s, now
            tgt.rx, tgt.tx = self._counters(tgt)
            out.append(ResourceSample(ts, tgt.kind, pct, rss, tgt.rx, tgt.tx))
        with self._lock:
            self.samples.extend(out)
            if self._writer is not None:
                for s in out:
                    self._writer.writerow(s.to_row())
                self._fh.flush()
        if self.on_sample is not None:
            for s in out:
                self.on_sample(s)
        return out

    def _run(self) -> None:
        tick = time.monotonic()
        while not self._stop.is_set():
            tick += self.interval_s
            if self._stop.wait(max(0.0, tick - time.monotonic())):
                break
            self.sample_once()
            if all(t.done for t in self._targets):
                break

    def start(self) -> "ResourceMonitor":
        if self.out is not None:
            self._fh = open(self.out, "w", newline="")
            self._writer = csv.DictWriter(self._fh, fieldnames=CSV_HEADER, lineterminator="\n")
            self._writer.writeheader()
        self._prime()
        self._thread = threading.Thread(target=self._run, name="monitor", daemon=True)
        self._thread.start()
        return self

    def stop(self) -> list[ResourceSample]:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=10.0)
        if self._fh is not None:
            self._fh.close()
            self._fh = None
            self._writer = None
        return list(self.samples)

    def __enter__(self) -> "ResourceMonitor":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()


def monitor(nfs: Mapping[NfKind | str, tuple[int, int | None]], interval_ms: float = 1000.0,
            duration_s: float | None = None, host: str = HOST) -> Iterator[ResourceSample]:
    """Generator form: yields samples as they are taken, forever or for ``duration_s``."""
    mon = ResourceMonitor(nfs, interval_ms, host)
    mon._prime()
    tick = start = time.monotonic()
    while duration_s is None or tick - start < duration_s - 1e-9:
        tick += mon.interval_s
        time.sleep(max(0.0, tick - time.monotonic()))
        batch = mon.sample_once()
        yield from batch
        if all(t.done for t in mon._targets):
            return


def read_resources(path: str | Path) -> list[ResourceSample]:
    with open(path, newline="") as fh:
        return [ResourceSample(int(r["ts_ns"]), r["nf"], float(r["cpu_pct"]), int(r["rss_bytes"]),
                               int(r["net_rx"]), int(r["net_tx"])) for r in csv.DictReader(fh)]
