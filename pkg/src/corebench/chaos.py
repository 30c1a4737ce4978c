"""Stress injection into running NFs and the workload-window log."""
from __future__ import annotations

import json
import logging
import random
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .corenet.client import HOST, UpstreamError, control
from .corenet.config import NfKind

log = logging.getLogger(__name__)

DEFAULT_CPU_LOAD_PCT = 50.0
DEFAULT_MEMORY_MIB = 512
DEFAULT_DURATION_S = 20.0
REALIZED_TOLERANCE = 0.05
# Stress auto-releases this long after its nominal end if STRESS_STOP never arrives.
SAFETY_MARGIN_S = 10.0


class StressKind(str, Enum):
    CPU = "CPU"
    MEMORY = "Memory"
    CPU_MEMORY = "CpuMemory"

    @classmethod
    def parse(cls, value) -> "StressKind":
        if isinstance(value, cls):
            return value
        key = str(value).strip().replace("+", "").replace("_", "").lower()
        for k in cls:
            if k.value.lower() == key:
                return k
        raise ValueError(f"unknown stress kind {value!r}")

    @property
    def uses_cpu(self) -> bool:
        return self in (StressKind.CPU, StressKind.CPU_MEMORY)

    @property
    def uses_memory(self) -> bool:
        return self in (StressKind.MEMORY, StressKind.CPU_MEMORY)

    def __str__(self) -> str:
        return self.value


ALL_KINDS = tuple(StressKind)


@dataclass(frozen=True)
class StressScenario:
    kind: StressKind
    target: NfKind
    cpu_load_pct: float | None = None
    memory_mib: int | None = None
    duration_s: float = DEFAULT_DURATION_S

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", StressKind.parse(self.kind))
        object.__setattr__(self, "target", NfKind.parse(self.target))
        if self.kind.uses_cpu:
            if self.cpu_load_pct is None:
                object.__setattr__(self, "cpu_load_pct", DEFAULT_CPU_LOAD_PCT)
            if not 0 < self.cpu_load_pct <= 100:
                raise ValueError("cpu_load_pct must lie in (0, 100]")
        elif self.cpu_load_pct is not None:
            raise ValueError(f"{self.kind} stress takes no cpu_load_pct")
        if self.kind.uses_memory:
            if self.memory_mib is None:
                object.__setattr__(self, "memory_mib", DEFAULT_MEMORY_MIB)
            if int(self.memory_mib) <= 0:
                raise ValueError("memory_mib must be > 0")
        elif self.memory_mib is not None:
            raise ValueError(f"{self.kind} stress takes no memory_mib")
        if not self.duration_s > 0:
            raise ValueError("duration_s must be > 0")

    @property
    def memory_bytes(self) -> int:
        return int(self.memory_mib or 0) << 20

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "target": self.target.value, "cpu_load_pct": self.cpu_load_pct,
                "memory_mib": self.memory_mib, "duration_s": self.duration_s}

    @classmethod
    def from_dict(cls, d: Mapping) -> "StressScenario":
        return cls(d["kind"], d["target"], d.get("cpu_load_pct"), d.get("memory_mib"),
                   float(d.get("duration_s", DEFAULT_DURATION_S)))


@dataclass
class WorkloadWindow:
    scenario: StressScenario
    start_wall_ns: int
    start_mono_ns: int
    end_wall_ns: int
    end_mono_ns: int
    realized: bool
    window_id: int = 0
    rep: int = 0
    detail: str = ""
    stress_info: dict = field(default_factory=dict)

    @property
    def duration_s(self) -> float:
        return (self.end_mono_ns - self.start_mono_ns) / 1e9

    def contains(self, mono_ns: int) -> bool:
        return self.start_mono_ns <= mono_ns < self.end_mono_ns

    def to_dict(self) -> dict:
        return {"window_id": self.window_id, "rep": self.rep, "scenario": self.scenario.to_dict(),
                "start_wall_ns": self.start_wall_ns, "start_mono_ns": self.start_mono_ns,
                "end_wall_ns": self.end_wall_ns, "end_mono_ns": self.end_mono_ns,
                "realized": self.realized, "detail": self.detail, "stress_info": self.stress_info}

    @classmethod
    def from_dict(cls, d: Mapping) -> "WorkloadWindow":
        return cls(StressScenario.from_dict(d["scenario"]), int(d["start_wall_ns"]), int(d["start_mono_ns"]),
                   int(d["end_wall_ns"]), int(d["end_mono_ns"]), bool(d["realized"]),
                   int(d.get("window_id", 0)), int(d.get("rep", 0)), d.get("detail", ""),
                   dict(d.get("stress_info") or {}))


def write_windows(path: str | Path, windows: Iterable[WorkloadWindow]) -> None:
    with open(path, "w") as fh:
        for w in windows:
            fh.write(json.dumps(w.to_dict(), sort_keys=True) + "\n")


def append_window(path: str | Path, window: WorkloadWindow) -> None:
    with open(path, "a") as fh:
        fh.write(json.dumps(window.to_dict(), sort_keys=True) + "\n")


def read_windows(path: str | Path) -> list[WorkloadWindow]:
    with open(path) as fh:
        return [WorkloadWindow.from_dict(json.loads(line)) for line in fh if line.strip()]


def _sleep_until(mono_ns: int, stop: threading.Event | None = None) -> bool:
    """Sleep until ``time.monotonic_ns() >= mono_ns``; False if ``stop`` fired first."""
    while True:
        left = (mono_ns - time.monotonic_ns()) / 1e9
        if left <= 0:
            return True
        if stop is not None:
            if stop.wait(min(left, 0.25)):
                return False
        else:
            time.sleep(min(left, 0.25))


def inject(scenario: StressScenario, port: int, host: str = HOST, window_id: int = 0, rep: int = 0,
           seed: int | None = None, end_at_ns: int | None = None,
           stop: threading.Event | None = None) -> WorkloadWindow:
    """Run one stress window on the NF listening at ``port`` and time-stamp it.

    The window opens once the NF acknowledges STRESS_START and closes just before
    STRESS_STOP is sent, so its bounds lie inside the interval where stress was
    actually active.
    """
    args = {"kind": scenario.kind.value, "cpu_load_pct": scenario.cpu_load_pct,
            "memory_mib": scenario.memory_mib, "seed": seed,
            "max_s": scenario.duration_s + SAFETY_MARGIN_S}
    try:
        control(port, "STRESS_START", args, timeout=5.0, host=host)
    except UpstreamError as exc:
        now_w, now_m = time.time_ns(), time.monotonic_ns()
        log.warning("window %d: %s unreachable (%s)", window_id, scenario.target, exc)
        if end_at_ns is not None:
            _sleep_until(end_at_ns, stop)
        return WorkloadWindow(scenario, now_w, now_m, time.time_ns(), max(time.monotonic_ns(), now_m + 1),
                              False, window_id, rep, f"STRESS_START failed: {exc}")
    start_w, start_m = time.time_ns(), time.monotonic_ns()
    deadline = end_at_ns if end_at_ns is not None else start_m + int(scenario.duration_s * 1e9)
    interrupted = not _sleep_until(deadline, stop)
    end_w, end_m = time.time_ns(), time.monotonic_ns()
    detail, info, ok = "", {}, True
    try:
        info = control(port, "STRESS_STOP", timeout=10.0, host=host)
    except UpstreamError as exc:
        ok, detail = False, f"STRESS_STOP failed: {exc}"
    realized_s = (end_m - start_m) / 1e9
    if abs(realized_s - scenario.duration_s) > REALIZED_TOLERANCE * scenario.duration_s:
        ok = False
        detail = (detail + "; " if detail else "") + f"realized {realized_s:.3f} s"
    if interrupted:
        ok = False
        detail = (detail + "; " if detail else "") + "interrupted"
    return WorkloadWindow(scenario, start_w, start_m, end_w, end_m, ok, window_id, rep, detail,
                          {k: v for k, v in info.items() if k in ("busy_s", "memory_passes", "elapsed_s")})


@dataclass
class ChaosPlan:
    targets: list[NfKind]
    kinds: list[StressKind] = field(default_factory=lambda: list(ALL_KINDS))
    repetitions: int = 1
    duration_s: float = DEFAULT_DURATION_S
    cooldown_s: float = DEFAULT_DURATION_S
    cpu_load_pct: float = DEFAULT_CPU_LOAD_PCT
    memory_mib: int = DEFAULT_MEMORY_MIB
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self) -> None:
        self.targets = [NfKind.parse(t) for t in self.targets]
        self.kinds = [StressKind.parse(k) for k in self.kinds]
        if self.repetitions < 0:
            raise ValueError("repetitions must be >= 0")
        if self.duration_s <= 0 or self.cooldown_s < 0:
            raise ValueError("duration_s must be > 0 and cooldown_s >= 0")

    def scenario(self, target: NfKind, kind: StressKind) -> StressScenario:
        return StressScenario(kind, target, self.cpu_load_pct if kind.uses_cpu else None,
                              self.memory_mib if kind.uses_memory else None, self.duration_s)

    def schedule(self) -> list[tuple[int, StressScenario]]:
        """(rep, scenario) in execution order; deterministic for a given seed."""
        cells = [(rep, self.scenario(t, k)) for t in self.targets for k in self.kinds
                 for rep in range(self.repetitions)]
        if self.shuffle:
            random.Random(self.seed).shuffle(cells)
        return cells

    @property
    def slot_s(self) -> float:
        return self.duration_s + self.cooldown_s

    @property
    def span_s(self) -> float:
        return len(self.targets) * len(self.kinds) * self.repetitions * self.slot_s

    def to_dict(self) -> dict:
        return {"targets": [t.value for t in self.targets], "kinds": [k.value for k in self.kinds],
                "repetitions": self.repetitions, "duration_s": self.duration_s, "cooldown_s": self.cooldown_s,
                "cpu_load_pct": self.cpu_load_pct, "memory_mib": self.memory_mib, "seed": self.seed,
                "shuffle": self.shuffle}

    @classmethod
    def from_dict(cls, d: Mapping) -> "ChaosPlan":
        targets = d.get("targets", [])
        if targets == "all":
            targets = list(NfKind)
        return cls(targets, d.get("kinds", [k.value for k in ALL_KINDS]), int(d.get("repetitions", 1)),
                   float(d.get("duration_s", DEFAULT_DURATION_S)), float(d.get("cooldown_s", DEFAULT_DURATION_S)),
                   float(d.get("cpu_load_pct", DEFAULT_CPU_LOAD_PCT)), int(d.get("memory_mib", DEFAULT_MEMORY_MIB)),
                   int(d.get("seed", 0)), bool(d.get("shuffle", True)))


def run_plan(plan: ChaosPlan, ports: Mapping[NfKind, int], host: str = HOST, start_at_ns: int | None = None,
             out: str | Path | None = None, stop: threading.Event | None = None) -> list[WorkloadWindow]:
    """Execute every window of ``plan`` back to back, each followed by its cooldown.

    Window ``i`` nominally starts at ``start_at_ns + i * (duration + cooldown)``;
    keeping a fixed grid (rather than chaining off realized end times) makes the
    schedule reproducible and lets callers align it with the sensor.
    """
    ports = {NfKind.parse(k): v for k, v in ports.items()}
    t0 = start_at_ns if start_at_ns is not None else time.monotonic_ns()
    slot_ns = int(plan.slot_s * 1e9)
    dur_ns = int(plan.duration_s * 1e9)
    rng = random.Random(plan.seed ^ 0x5EED)
    if out is not None:
        Path(out).write_text("")
    windows: list[WorkloadWindow] = []
    for i, (rep, scenario) in enumerate(plan.schedule()):
        begin = t0 + i * slot_ns
        if not _sleep_until(begin, stop):
            break
        port = ports.get(scenario.target)
        if port is None:
            now_w, now_m = time.time_ns(), time.monotonic_ns()
            w = WorkloadWindow(scenario, now_w, now_m, now_w, now_m + 1, False, i, rep,
                               f"{scenario.target} is not deployed")
        else:
            w = inject(scenario, port, host, window_id=i, rep=rep, seed=rng.getrandbits(32),
                       end_at_ns=begin + dur_ns, stop=stop)
        windows.append(w)
        if out is not None:
            append_window(out, w)
        log.info("window %d %s/%s realized=%s %s", i, scenario.target, scenario.kind, w.realized, w.detail)
    if windows:
        _sleep_until(t0 + len(windows) * slot_ns, stop)
    return windows


def gaps(windows: Sequence[WorkloadWindow]) -> list[str]:
    """Human-readable notes for every unrealized window."""
    return [f"window {w.window_id} ({w.scenario.target}/{w.scenario.kind}): {w.detail or 'not realized'}"
            for w in windows if not w.realized]
