"""Closed-loop request flood against one NF endpoint."""
from __future__ import annotations

import json
import os
import random
import socket
import threading
import time
from dataclasses import asdict, dataclass
from pathlib import Path

from .corenet import messages as m
from .corenet.client import HOST, connect
from .corenet.config import NfKind, ue_id
from .corenet.frame import HEADER, Frame, recv_frame

MODES = ("valid", "garbage")


@dataclass
class FloodConfig:
    target: NfKind = NfKind.AMF
    concurrency: int = 100
    duration_s: float = 10.0
    payload_bytes: int = 64
    mode: str = "valid"
    timeout_s: float = 2.0
    seed: int = 0

    def __post_init__(self) -> None:
        self.target = NfKind.parse(self.target)
        self.mode = {"valid-frame": "valid", "garbage-bytes": "garbage"}.get(self.mode, self.mode)
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if int(self.concurrency) < 1:
            raise ValueError("concurrency must be >= 1")
        if not self.duration_s > 0:
            raise ValueError("duration_s must be > 0")
        if self.payload_bytes < 0:
            raise ValueError("payload_bytes must be >= 0")


@dataclass
class FloodReport:
    target: str
    mode: str
    concurrency: int
    duration_s: float
    attempted: int = 0
    completed: int = 0
    errored: int = 0
    error_replies: int = 0
    bytes_sent: int = 0
    wall_s: float = 0.0
    start_mono_ns: int = 0
    end_mono_ns: int = 0
    detail: str = ""

    @property
    def achieved_rps(self) -> float:
        return self.attempted / self.duration_s

    def to_dict(self) -> dict:
        d = asdict(self)
        d["achieved_rps"] = self.achieved_rps
        return d


class _Counters:
    def __init__(self):
        self.lock = threading.Lock()
        self.attempted = self.completed = self.errored = self.error_replies = self.bytes_sent = 0

    def add(self, attempted=0, completed=0, errored=0, error_replies=0, bytes_sent=0) -> None:
        with self.lock:
            self.attempted += attempted
            self.completed += completed
            self.errored += errored
            self.error_replies += error_replies
            self.bytes_sent += bytes_sent


def _valid_frame(rng: random.Random, cfg: FloodConfig) -> bytes:
    ue = ue_id(rng.randrange(10**9))
    payload = rng.randbytes(cfg.payload_bytes)
    return Frame(m.REGISTRATION_REQUEST, rng.getrandbits(64), ue, (), payload).encode()


def _garbage_frame(rng: random.Random, cfg: FloodConfig) -> bytes:
    # A well-formed length prefix around random bytes: the NF must parse and reject it.
    body = rng.randbytes(max(1, cfg.payload_bytes))
    return HEADER.pack(len(body)) + body


def min_frame_size(cfg: FloodConfig) -> int:
    if cfg.mode == "garbage":
        return HEADER.size + max(1, cfg.payload_bytes)
    probe = Frame(m.REGISTRATION_REQUEST, 0, ue_id(0), (), bytes(cfg.payload_bytes))
    return len(probe.encode())


def _worker(idx: int, cfg: FloodConfig, port: int, host: str, deadline: float, counters: _Counters) -> None:
    rng = random.Random((cfg.seed << 16) ^ idx ^ os.getpid())
    build = _valid_frame if cfg.mode == "valid" else _garbage_frame
    sock: socket.socket | None = None
    while True:
        left = deadline - time.monotonic()
        if left <= 0:
            break
        if sock is None:
            try:
                sock = connect(port, host, timeout=min(cfg.timeout_s, left))
            except OSError:
                counters.add(attempted=1, errored=1)
                time.sleep(min(0.01, max(0.0, deadline - time.monotonic())))
                continue
        data = build(rng, cfg)
        try:
            sock.settimeout(max(1e-3, min(cfg.timeout_s, deadline - time.monotonic())))
            sock.sendall(data)
            counters.add(attempted=1, bytes_sent=len(data))
            reply = recv_frame(sock)
        except socket.timeout:
            if time.monotonic() < deadline:
                counters.add(errored=1)
            sock.close()
            sock = None
            continue
        except (OSError, ConnectionError, ValueError):
            counters.add(errored=1)
            sock.close()
            sock = None
            continue
        if reply.is_error:
            counters.add(completed=1, error_replies=1)
        else:
            counters.add(completed=1)
    if sock is not None:
        sock.close()


def run_flood(config: FloodConfig, port: int, host: str = HOST, out: str | Path | None = None) -> FloodReport:
    """Hammer ``port`` with ``config.concurrency`` back-to-back workers for ``duration_s``."""
    report = FloodReport(config.target.value, config.mode, config.concurrency, config.duration_s)
    try:
        connect(port, host, timeout=1.0).close()
    except OSError as exc:
        report.detail = f"target unreachable: {exc}"
        if out is not None:
            Path(out).write_text(json.dumps(report.to_dict(), indent=2) + "\n")
        return report
    counters = _Counters()
    report.start_mono_ns = time.monotonic_ns()
    t0 = time.monotonic()
    deadline = t0 + config.duration_s
    threads = [threading.Thread(target=_worker, args=(i, config, port, host, deadline, counters),
                                name=f"flood-{i}", daemon=True) for i in range(config.concurrency)]
    for t in threads:
        t.start()
    for t in threads:
        t.join(timeout=max(0.0, deadline - time.monotonic()) + config.timeout_s + 1.0)
    report.wall_s = time.monotonic() - t0
    report.end_mono_ns = time.monotonic_ns()
    report.attempted = counters.attempted
    report.completed = counters.completed
    report.errored = counters.errored
    report.error_replies = counters.error_replies
    report.bytes_sent = counters.bytes_sent
    if out is not None:
        Path(out).write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    return report
