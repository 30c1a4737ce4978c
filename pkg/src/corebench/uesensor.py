"""Open-loop UE driver: registration followed by PDU session at a fixed rate."""
from __future__ import annotations

import csv
import logging
import math
import statistics
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

from .corenet.client import HOST, ping
from .corenet.config import ue_id
from .corenet.flows import Outcome, pdu_session_flow, registration_flow
from .corenet.work import MASK64, splitmix64

log = logging.getLogger(__name__)

CSV_HEADER = ["seq", "ue_id", "wall_ts_ns", "mono_ts_ns", "reg_ms", "pdu_ms", "total_ms",
              "outcome", "sched_lag_ms"]


class SensorError(RuntimeError):
    pass


@dataclass
class SensorConfig:
    rate_hz: float = 1.0
    duration_s: float = 60.0
    ue_pool: int = 64
    timeout_ms: float = 5000.0
    seed: int = 0
    lead_s: float = 0.2

    def __post_init__(self) -> None:
        if not (self.rate_hz > 0 and math.isfinite(self.rate_hz)):
            raise ValueError("rate_hz must be > 0")
        if not (self.duration_s > 0 and math.isfinite(self.duration_s)):
            raise ValueError("duration_s must be > 0")
        if int(self.ue_pool) < 1:
            raise ValueError("ue_pool must be >= 1")
        if self.timeout_ms <= 0:
            raise ValueError("timeout_ms must be > 0")

    @property
    def period_s(self) -> float:
        return 1.0 / self.rate_hz

    @property
    def count(self) -> int:
        # Exact floor of rate * duration; float products like 0.1 * 30 misround.
        return math.floor(Fraction(str(self.rate_hz)) * Fraction(str(self.duration_s)))


@dataclass
class RegistrationSample:
    seq: int
    ue_id: str
    wall_ts_ns: int
    mono_ts_ns: int
    reg_ms: float | None
    pdu_ms: float | None
    total_ms: float
    outcome: str
    sched_lag_ms: float = 0.0

    @property
    def latency_ms(self) -> float:
        return self.total_ms

    @property
    def ok(self) -> bool:
        return self.outcome == Outcome.SUCCESS.value

    def to_row(self) -> dict:
        d = asdict(self)
        for k in ("reg_ms", "pdu_ms", "total_ms", "sched_lag_ms"):
            d[k] = "" if d[k] is None else f"{d[k]:.6f}"
        return d

    @classmethod
    def from_row(cls, row: dict) -> "RegistrationSample":
        def num(v):
            return None if v in ("", None) else float(v)
        return cls(int(row["seq"]), row["ue_id"], int(row["wall_ts_ns"]), int(row["mono_ts_ns"]),
                   num(row["reg_ms"]), num(row["pdu_ms"]), float(row["total_ms"]), row["outcome"],
                   float(row.get("sched_lag_ms") or 0.0))


def txn_ids(seed: int, seq: int) -> tuple[int, int]:
    """Registration and PDU transaction ids for sample ``seq``; distinct across a run."""
    base = (int(seed) * 0x100000001B3 + 2 * seq) & MASK64
    return splitmix64(base), splitmix64((base + 1) & MASK64)


def _transaction(amf_port: int, host: str, seq: int, ue: str, cfg: SensorConfig) -> tuple:
    reg_id, pdu_id = txn_ids(cfg.seed, seq)
    budget = cfg.timeout_ms / 1e3
    t0 = time.perf_counter()
    reg = registration_flow(amf_port, ue, reg_id, timeout_s=budget, host=host)
    if reg.outcome is not Outcome.SUCCESS:
        return reg.latency_ms, None, reg.latency_ms, reg.outcome.value
    left = budget - (time.perf_counter() - t0)
    pdu = pdu_session_flow(amf_port, ue, pdu_id, timeout_s=max(left, 1e-3), host=host)
    total = reg.latency_ms + pdu.latency_ms
    if pdu.outcome is not Outcome.SUCCESS:
        return reg.latency_ms, pdu.latency_ms, total, pdu.outcome.value
    return reg.latency_ms, pdu.latency_ms, total, Outcome.SUCCESS.value


def run_sensor(config: SensorConfig, amf_port: int, host: str = HOST, out: str | Path | None = None,
               check: bool = True, stop: threading.Event | None = None,
               start_at_ns: int | None = None) -> list[RegistrationSample]:
    """Drive ``config.count`` transactions on a fixed schedule and return them in seq order.

    Sends follow ``t0 + i / rate`` regardless of how earlier transactions fare; a
    late scheduler sends immediately and records the lag. ``start_at_ns`` pins t0
    to a given ``time.monotonic_ns`` value so other schedules can align to it.
    """
    if check and ping(amf_port, timeout=2.0, host=host) is None:
        raise SensorError(f"core unreachable: no AMF answering on {host}:{amf_port}")
    n = config.count
    period_ns = round(1e9 / config.rate_hz)
    t0 = start_at_ns if start_at_ns is not None else time.monotonic_ns() + int(config.lead_s * 1e9)
    inflight = max(16, math.ceil(config.rate_hz * config.timeout_ms / 1e3) + 8)
    results: list[RegistrationSample | None] = [None] * n
    lock = threading.Lock()

    def work(seq: int, ue: str, wall: int, mono: int, lag_ms: float) -> None:
        reg_ms, pdu_ms, total, outcome = _transaction(amf_port, host, seq, ue, config)
        sample = RegistrationSample(seq, ue, wall, mono, reg_ms, pdu_ms, total, outcome, lag_ms)
        with lock:
            results[seq] = sample

    last_mono = 0
    with ThreadPoolExecutor(max_workers=inflight, thread_name_prefix="ue") as pool:
        for seq in range(n):
            if stop is not None and stop.is_set():
                break
            due = t0 + seq * period_ns
            while True:
                wait = (due - time.monotonic_ns()) / 1e9
                if wait <= 0:
                    break
                time.sleep(min(wait, 0.05) if wait > 2e-3 else wait)
            mono = max(time.monotonic_ns(), last_mono + 1)
            last_mono = mono
            wall = time.time_ns()
            pool.submit(work, seq, ue_id(seq % config.ue_pool), wall, mono, (mono - due) / 1e6)
    samples = [s for s in results if s is not None]
    if out is not None:
        write_samples(out, samples)
    return samples


def write_samples(path: str | Path, samples: Iterable[RegistrationSample]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_HEADER, lineterminator="\n")
        w.writeheader()
        for s in samples:
            w.writerow(s.to_row())


def read_samples(path: str | Path) -> list[RegistrationSample]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CSV_HEADER:
            raise ValueError(f"{path}: unexpected sample header {reader.fieldnames}")
        return [RegistrationSample.from_row(r) for r in reader]


@dataclass
class DescriptiveStats:
    n: int
    mean_ms: float
    std_ms: float
    median_ms: float
    p95_ms: float
    success_rate: float
    degenerate: bool = False
    failures: int = 0

    def describe(self) -> str:
        return f"{self.mean_ms:.2f} ms (standard deviation: {self.std_ms:.2f} ms)"

    def to_dict(self) -> dict:
        return asdict(self)


def nearest_rank(sorted_values: Sequence[float], pct: float) -> float:
    if not sorted_values:
        raise ValueError("percentile of an empty sample")
    rank = max(1, math.ceil(pct / 100.0 * len(sorted_values)))
    return sorted_values[rank - 1]


def summarize(samples: Iterable[RegistrationSample] | Iterable[float]) -> DescriptiveStats:
    """Latency summary over successful samples; failures only enter ``success_rate``.

    Plain numbers are treated as successful latencies.
    """
    items = list(samples)
    if not items:
        raise ValueError("cannot summarize an empty sample set")
    if isinstance(items[0], RegistrationSample):
        values = [s.total_ms for s in items if s.ok]
    else:
        values = [float(v) for v in items]
    total = len(items)
    failures = total - len(values)
    if not values:
        nan = float("nan")
        return DescriptiveStats(0, nan, nan, nan, nan, 0.0, True, failures)
    ordered = sorted(values)
    mean = math.fsum(values) / len(values)
    degenerate = len(values) < 2
    std = 0.0 if degenerate else statistics.stdev(values, mean)
    return DescriptiveStats(len(values), mean, std, nearest_rank(ordered, 50), nearest_rank(ordered, 95),
                            len(values) / total, degenerate, failures)
