"""Labeling, end-to-end experiment orchestration and report emission.

The experiment runs the sensor and the chaos plan on one shared monotonic
timeline, labels every sample by the window (if any) its start timestamp falls
in, and fits the two factor models over the labeled latencies.
"""
from __future__ import annotations

import bisect
import csv
import json
import logging
import math
import os
import statistics
import threading
import time
import traceback
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .chaos import ChaosPlan, StressKind, WorkloadWindow, read_windows, run_plan, write_windows
from .corenet import Core, NfKind
from .corenet.config import ALL_NFS
from .stats import LabeledDataset, anova_oneway, group_rows, lmm_fit, lmm_report, lmm_report_json
from .telemetry import CaptureSession, ResourceMonitor
from .uesensor import RegistrationSample, SensorConfig, read_samples, run_sensor, summarize, write_samples

log = logging.getLogger(__name__)

LABELED_HEADER = ["seq", "total_ms", "reg_ms", "pdu_ms", "outcome", "label", "nf", "kind", "window_id"]
DISCARDED_HEADER = ["seq", "mono_ts_ns", "reason", "window_id"]
BASELINE = "Baseline"
STRESSED = "Stressed"
NO_STRESS = "None"
DEFAULT_GUARD_S = 2.0
# Two clocks agree on a domain if their wall-minus-monotonic offsets differ by less than this.
CLOCK_SLACK_NS = 2_000_000_000


class MergeError(ValueError):
    pass


@dataclass(frozen=True)
class LabeledSample:
    sample: RegistrationSample
    label: str
    nf: str
    kind: str
    window_id: int | None = None

    @property
    def stressed(self) -> bool:
        return self.label == STRESSED

    def to_row(self) -> dict:
        s = self.sample
        return {"seq": s.seq, "total_ms": f"{s.total_ms:.3f}",
                "reg_ms": "" if s.reg_ms is None else f"{s.reg_ms:.3f}",
                "pdu_ms": "" if s.pdu_ms is None else f"{s.pdu_ms:.3f}",
                "outcome": s.outcome, "label": self.label, "nf": self.nf, "kind": self.kind,
                "window_id": "" if self.window_id is None else self.window_id}


@dataclass(frozen=True)
class Discarded:
    sample: RegistrationSample
    reason: str
    window_id: int | None = None

    def to_row(self) -> dict:
        return {"seq": self.sample.seq, "mono_ts_ns": self.sample.mono_ts_ns, "reason": self.reason,
                "window_id": "" if self.window_id is None else self.window_id}


@dataclass
class MergeResult:
    labeled: list[LabeledSample]
    discarded: list[Discarded]

    def rows(self, successes_only: bool = False) -> list[dict]:
        return [ls.to_row() for ls in self.labeled if not successes_only or ls.sample.ok]

    def dataset(self, y: str = "total_ms") -> LabeledDataset:
        return LabeledDataset.from_rows(self.rows(successes_only=True), y=y)


def _key_ns(s: RegistrationSample, key: str) -> int:
    if key == "start":
        return s.mono_ts_ns
    if key == "midpoint":
        return s.mono_ts_ns + int(s.total_ms * 5e5)
    raise ValueError("key must be 'start' or 'midpoint'")


def _median_offset(pairs: Iterable[tuple[int, int]]) -> float:
    return statistics.median(w - m for w, m in pairs)


def check_clock_domain(samples: Sequence[RegistrationSample], windows: Sequence[WorkloadWindow]) -> None:
    """Raise MergeError unless samples and windows share one monotonic clock."""
    ordered = sorted(samples, key=lambda s: s.seq)
    for a, b in zip(ordered, ordered[1:]):
        if b.mono_ts_ns <= a.mono_ts_ns:
            raise MergeError(f"non-monotonic sample clock at seq {b.seq}: mono_ts does not increase with seq")
    for w in windows:
        if w.end_mono_ns <= w.start_mono_ns:
            raise MergeError(f"window {w.window_id} ends before it starts")
    if not ordered or not windows:
        return
    s_off = _median_offset((s.wall_ts_ns, s.mono_ts_ns) for s in ordered)
    w_off = _median_offset((w.start_wall_ns, w.start_mono_ns) for w in windows)
    if abs(s_off - w_off) > CLOCK_SLACK_NS:
        raise MergeError(f"clock-domain mismatch: sample and window monotonic clocks differ by "
                         f"{(s_off - w_off) / 1e9:.1f} s against wall time")


def check_disjoint(windows: Sequence[WorkloadWindow]) -> None:
    ws = sorted(windows, key=lambda w: w.start_mono_ns)
    for a, b in zip(ws, ws[1:]):
        if b.start_mono_ns < a.end_mono_ns:
            raise MergeError(f"overlapping windows {a.window_id} and {b.window_id}")


def merge(samples: Sequence[RegistrationSample], windows: Sequence[WorkloadWindow], guard_s: float = DEFAULT_GUARD_S,
          key: str = "start", nfs: Sequence[NfKind | str] | None = None) -> MergeResult:
    """Label each sample Stressed{nf, kind}, Baseline, or discard it with a reason.

    Baseline samples carry the NF of the window whose slot they sit in (the most
    recent realized window before them, or the first one for samples before any
    stress), so per-NF grouping covers unstressed traffic too. Without realized
    windows they are spread round-robin by seq over ``nfs``.
    """
    if guard_s < 0:
        raise ValueError("guard_s must be >= 0")
    check_clock_domain(samples, windows)
    check_disjoint(windows)
    realized = sorted((w for w in windows if w.realized), key=lambda w: w.start_mono_ns)
    dead = sorted((w for w in windows if not w.realized), key=lambda w: w.start_mono_ns)
    guard_ns = int(guard_s * 1e9)
    pool = [NfKind.parse(n).value for n in (nfs or [])]
    labeled: list[LabeledSample] = []
    discarded: list[Discarded] = []
    starts = [w.start_mono_ns for w in realized]
    for s in sorted(samples, key=lambda s: s.seq):
        t = _key_ns(s, key)
        i = bisect.bisect_right(starts, t) - 1
        w = realized[i] if i >= 0 else None
        if w is not None and w.contains(t):
            labeled.append(LabeledSample(s, STRESSED, w.scenario.target.value, w.scenario.kind.value, w.window_id))
            continue
        if w is not None and w.end_mono_ns <= t < w.end_mono_ns + guard_ns:
            discarded.append(Discarded(s, "guard", w.window_id))
            continue
        hit = next((d for d in dead if d.start_mono_ns <= t < d.end_mono_ns + guard_ns), None)
        if hit is not None:
            discarded.append(Discarded(s, "unrealized window", hit.window_id))
            continue
        if w is not None:
            nf = w.scenario.target.value
        elif realized:
            nf = realized[0].scenario.target.value
        elif pool:
            nf = pool[s.seq % len(pool)]
        else:
            nf = ""
        labeled.append(LabeledSample(s, BASELINE, nf, NO_STRESS))
    return MergeResult(labeled, discarded)


def write_labeled(path: str | Path, result: MergeResult) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=LABELED_HEADER, lineterminator="\n")
        w.writeheader()
        for row in result.rows():
            w.writerow(row)


def write_discarded(path: str | Path, result: MergeResult) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=DISCARDED_HEADER, lineterminator="\n")
        w.writeheader()
        for d in result.discarded:
            w.writerow(d.to_row())


def read_labeled(path: str | Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _ok_rows(rows: Iterable[Mapping], include_failures: bool = False) -> list[dict]:
    return [dict(r) for r in rows if include_failures or r["outcome"] == "success"]


# -- experiment --------------------------------------------------------------------

@dataclass
class ExperimentPlan:
    chaos: ChaosPlan
    rate_hz: float = 2.0
    nfs: list[NfKind] = field(default_factory=lambda: list(ALL_NFS))
    lead_s: float = 10.0
    tail_s: float = 2.0
    guard_s: float = DEFAULT_GUARD_S
    seed: int = 0
    ue_pool: int = 64
    timeout_ms: float = 5000.0
    monitor_interval_ms: float = 1000.0
    work_units: int | None = None
    capture_backends: list[str] = field(default_factory=list)
    capture_duration_s: float = 60.0
    label_key: str = "start"

    def __post_init__(self) -> None:
        self.nfs = [NfKind.parse(n) for n in self.nfs]
        missing = [t.value for t in self.chaos.targets if t not in self.nfs]
        if missing:
            raise ValueError(f"chaos targets not deployed: {missing}")
        if self.rate_hz <= 0 or self.lead_s < 0 or self.tail_s < 0:
            raise ValueError("rate_hz must be > 0 and lead_s, tail_s >= 0")

    @property
    def sensor_duration_s(self) -> float:
        return self.lead_s + self.chaos.span_s + self.tail_s

    def sensor_config(self) -> SensorConfig:
        return SensorConfig(rate_hz=self.rate_hz, duration_s=self.sensor_duration_s, ue_pool=self.ue_pool,
                            timeout_ms=self.timeout_ms, seed=self.seed)

    def with_seed(self, seed: int) -> "ExperimentPlan":
        d = self.to_dict()
        d["seed"] = seed
        return ExperimentPlan.from_dict(d)

    def to_dict(self) -> dict:
        return {"chaos": self.chaos.to_dict(), "rate_hz": self.rate_hz, "nfs": [n.value for n in self.nfs],
                "lead_s": self.lead_s, "tail_s": self.tail_s, "guard_s": self.guard_s, "seed": self.seed,
                "ue_pool": self.ue_pool, "timeout_ms": self.timeout_ms,
                "monitor_interval_ms": self.monitor_interval_ms, "work_units": self.work_units,
                "capture_backends": list(self.capture_backends), "capture_duration_s": self.capture_duration_s,
                "label_key": self.label_key}

    @classmethod
    def from_dict(cls, d: Mapping) -> "ExperimentPlan":
        d = dict(d)
        seed = int(d.get("seed", 0))
        chaos = dict(d.pop("chaos", {}))
        chaos["seed"] = seed
        return cls(chaos=ChaosPlan.from_dict(chaos), **{k: v for k, v in d.items() if k in _PLAN_FIELDS})

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentPlan":
        return cls.from_dict(json.loads(Path(path).read_text()))


_PLAN_FIELDS = {"rate_hz", "nfs", "lead_s", "tail_s", "guard_s", "seed", "ue_pool", "timeout_ms",
                "monitor_interval_ms", "work_units", "capture_backends", "capture_duration_s", "label_key"}


def effective_seed(plan: ExperimentPlan) -> ExperimentPlan:
    env = os.environ.get("COREBENCH_SEED")
    return plan.with_seed(int(env, 0)) if env else plan


@dataclass
class ExperimentResult:
    out_dir: Path
    plan: ExperimentPlan
    samples: list[RegistrationSample] = field(default_factory=list)
    windows: list[WorkloadWindow] = field(default_factory=list)
    merged: MergeResult | None = None
    anova: object | None = None
    lmm: object | None = None
    errors: dict[str, str] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.errors

    def failed_stage(self) -> str | None:
        return next(iter(self.errors), None)


class _Stage:
    def __init__(self, result: ExperimentResult, name: str):
        self.result, self.name = result, name

    def __enter__(self):
        log.info("stage %s", self.name)
        return self

    def __exit__(self, etype, exc, tb) -> bool:
        if exc is None:
            return False
        self.result.errors[self.name] = f"{etype.__name__}: {exc}"
        log.error("stage %s failed: %s\n%s", self.name, exc, "".join(traceback.format_tb(tb)))
        return True


def run_experiment(plan: ExperimentPlan, out_dir: str | Path, host: str = "127.0.0.1",
                   stop: threading.Event | None = None) -> ExperimentResult:
    """Boot, stress, measure, label and analyze; artifacts land in ``out_dir``.

    A failing stage is recorded in ``result.errors`` under its name; later stages
    that depend on it are skipped and whatever was written so far stays on disk.
    """
    plan = effective_seed(plan)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "plan.json").write_text(json.dumps(plan.to_dict(), indent=2) + "\n")
    res = ExperimentResult(out, plan)
    core: Core | None = None
    mon: ResourceMonitor | None = None
    try:
        with _Stage(res, "boot"):
            core = Core.on_free_ports(plan.nfs, plan.work_units).start()
            core.save_state(out / "core.json")
        if res.errors:
            return res
        with _Stage(res, "provision"):
            core.provision(plan.ue_pool)
        if res.errors:
            return res
        with _Stage(res, "monitor"):
            nfs = {k: (pid, core.port(k)) for k, pid in core.pids.items()}
            mon = ResourceMonitor(nfs, plan.monitor_interval_ms, host, out / "resources.csv").start()
        with _Stage(res, "sensor"):
            cfg = plan.sensor_config()
            period_ns = round(1e9 / cfg.rate_hz)
            t0 = time.monotonic_ns() + int(cfg.lead_s * 1e9)
            # Windows open half a period after a send so no sample sits on a window edge.
            chaos_t0 = t0 + int(plan.lead_s * 1e9) + period_ns // 2
            ports = {k: core.port(k) for k in core.ports}
            chaos_box: dict = {}

            def _chaos() -> None:
                try:
                    chaos_box["windows"] = run_plan(plan.chaos, ports, host, start_at_ns=chaos_t0,
                                                    out=out / "windows.jsonl", stop=stop)
                except BaseException as exc:  # surfaced below under the chaos stage
                    chaos_box["error"] = exc

            th = threading.Thread(target=_chaos, name="chaos", daemon=True)
            th.start()
            try:
                res.samples = run_sensor(cfg, core.port(NfKind.AMF), host, out / "samples.csv", stop=stop,
                                         start_at_ns=t0)
            finally:
                th.join()
        with _Stage(res, "chaos"):
            if "error" in chaos_box:
                raise chaos_box["error"]
            res.windows = chaos_box.get("windows", [])
        if plan.capture_backends and not res.errors:
            with _Stage(res, "capture"):
                _capture_compare(plan, core, host, out)
    finally:
        if mon is not None:
            mon.stop()
        if core is not None:
            core.stop()
    if res.errors:
        return res
    analyze(res)
    emit_report(out)
    return res


def _capture_compare(plan: ExperimentPlan, core: Core, host: str, out: Path) -> None:
    ports = {k: core.port(k) for k in core.ports}
    for backend in plan.capture_backends:
        sess = CaptureSession(backend, ports, out / f"capture_{backend}.jsonl", host=host, keep=False).start()
        try:
            run_sensor(SensorConfig(rate_hz=plan.rate_hz, duration_s=plan.capture_duration_s, ue_pool=plan.ue_pool,
                                    seed=plan.seed), core.port(NfKind.AMF), host)
        finally:
            stats = sess.stop()
            sess.close()
        (out / f"capture_{backend}.json").write_text(json.dumps(stats.to_dict(), indent=2) + "\n")


def analyze(res: ExperimentResult) -> None:
    """Merge, ANOVA over NF, and the stress LMM; each recorded as its own stage."""
    out, plan = res.out_dir, res.plan
    with _Stage(res, "merge"):
        res.merged = merge(res.samples, res.windows, plan.guard_s, plan.label_key, plan.nfs)
        write_labeled(out / "labeled.csv", res.merged)
        write_discarded(out / "discarded.csv", res.merged)
    if "merge" in res.errors:
        return
    rows = res.merged.rows(successes_only=True)
    with _Stage(res, "anova"):
        res.anova = anova_oneway(group_rows(rows, "nf"))
        (out / "anova.json").write_text(json.dumps(res.anova.to_dict(), indent=2) + "\n")
        (out / "anova.txt").write_text(res.anova.table() + "\n")
    with _Stage(res, "lmm"):
        res.lmm = lmm_fit(LabeledDataset.from_rows(rows))
        (out / "lmm.json").write_text(lmm_report_json(res.lmm) + "\n")
        (out / "lmm.txt").write_text(lmm_report(res.lmm) + "\n")


def load_result(out_dir: str | Path) -> ExperimentResult:
    out = Path(out_dir)
    res = ExperimentResult(out, ExperimentPlan.load(out / "plan.json"))
    res.samples = read_samples(out / "samples.csv")
    res.windows = read_windows(out / "windows.jsonl") if (out / "windows.jsonl").exists() else []
    return res


# -- report ------------------------------------------------------------------------

SUMMARY_HEADER = ["n", "mean_ms", "std_ms", "median_ms", "p95_ms"]
INTERACTION_HEADER = ["nf", "kind", "mean_ms", "std_ms", "n"]
INFLATION_HEADER = ["nf", "kind", "inflation_ms", "n"]
CAPTURE_HEADER = ["backend", "median_cpu_pct", "mean_cpu_pct", "median_mem_bytes", "frames_captured",
                  "frames_dropped", "samples"]


def _fmt(x: float) -> str:
    return "" if x is None or (isinstance(x, float) and math.isnan(x)) else f"{x:.3f}"


def _summary_row(values: list[float]) -> dict:
    d = summarize(values) if values else None
    if d is None or d.n == 0:
        return {"n": 0, "mean_ms": "", "std_ms": "", "median_ms": "", "p95_ms": ""}
    return {"n": d.n, "mean_ms": _fmt(d.mean_ms), "std_ms": _fmt(d.std_ms), "median_ms": _fmt(d.median_ms),
            "p95_ms": _fmt(d.p95_ms)}


def _write_csv(path: Path, header: list[str], rows: Iterable[Mapping]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=header, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow(r)


def _kind_order(kinds: Iterable[str]) -> list[str]:
    known = [NO_STRESS] + [k.value for k in StressKind]
    present = set(kinds)
    return [k for k in known if k in present] + sorted(present - set(known))


def interaction_table(rows: Sequence[Mapping], kinds: Sequence[str] | None = None) -> list[dict]:
    """One row per (nf, kind) over the full NF x kind grid; empty cells have n=0."""
    nfs = sorted({r["nf"] for r in rows})
    kinds = _kind_order(kinds if kinds is not None else [r["kind"] for r in rows])
    cells: dict[tuple[str, str], list[float]] = {}
    for r in rows:
        cells.setdefault((r["nf"], r["kind"]), []).append(float(r["total_ms"]))
    out = []
    for nf in nfs:
        for k in kinds:
            v = cells.get((nf, k), [])
            s = _summary_row(v)
            out.append({"nf": nf, "kind": k, "mean_ms": s["mean_ms"], "std_ms": s["std_ms"], "n": s["n"]})
    return out


def inflation_table(rows: Sequence[Mapping]) -> tuple[float, list[dict]]:
    """Mean stressed latency per (nf, kind) minus the pooled baseline mean."""
    base = [float(r["total_ms"]) for r in rows if r["label"] == BASELINE]
    if not base:
        return math.nan, []
    b = statistics.fmean(base)
    cells: dict[tuple[str, str], list[float]] = {}
    for r in rows:
        if r["label"] == STRESSED:
            cells.setdefault((r["nf"], r["kind"]), []).append(float(r["total_ms"]))
    out = [{"nf": nf, "kind": k, "inflation_ms": statistics.fmean(v) - b, "n": len(v)}
           for (nf, k), v in sorted(cells.items())]
    return b, out


def kind_inflation(rows: Sequence[Mapping]) -> dict[str, float]:
    base, _ = inflation_table(rows)
    by = group_rows([r for r in rows if r["label"] == STRESSED], "kind")
    return {k: statistics.fmean(v) - base for k, v in by.items()}


def most_affected(rows: Sequence[Mapping], kind: str = StressKind.CPU_MEMORY.value) -> tuple[str, float] | None:
    _, infl = inflation_table(rows)
    cand = [(r["inflation_ms"], r["nf"]) for r in infl if r["kind"] == kind]
    if not cand:
        return None
    v, nf = max(cand)
    return nf, v


def emit_report(out_dir: str | Path, include_failures: bool = False, plots: bool = True) -> Path:
    """Write CSV plot-data, PNG figures and ``summary.txt`` under ``out_dir/report``."""
    out = Path(out_dir)
    rep = out / "report"
    rep.mkdir(parents=True, exist_ok=True)
    notes: list[str] = []
    lines: list[str] = []
    labeled = out / "labeled.csv"
    rows = _ok_rows(read_labeled(labeled), include_failures) if labeled.exists() else []
    if not labeled.exists():
        notes.append("labeled.csv missing: latency sections omitted")

    by_nf = group_rows(rows, "nf")
    _write_csv(rep / "nf_summary.csv", ["nf"] + SUMMARY_HEADER,
               ({"nf": nf, **_summary_row(v)} for nf, v in sorted(by_nf.items())))
    by_kind = group_rows(rows, "kind")
    _write_csv(rep / "kind_summary.csv", ["kind"] + SUMMARY_HEADER,
               ({"kind": k, **_summary_row(by_kind[k])} for k in _kind_order(by_kind)))
    inter = interaction_table(rows)
    _write_csv(rep / "interaction.csv", INTERACTION_HEADER, inter)
    base, infl = inflation_table(rows)
    _write_csv(rep / "inflation.csv", INFLATION_HEADER,
               ({**r, "inflation_ms": _fmt(r["inflation_ms"])} for r in infl))

    cap_rows = []
    for backend in ("inline", "observer"):
        p = out / f"capture_{backend}.json"
        if p.exists():
            d = json.loads(p.read_text())
            mem = d.get("mem_bytes") or [0]
            cap_rows.append({"backend": d["backend"], "median_cpu_pct": f"{d['median_cpu_pct']:.4f}",
                             "mean_cpu_pct": f"{d['mean_cpu_pct']:.4f}",
                             "median_mem_bytes": statistics.median(mem), "frames_captured": d["frames_captured"],
                             "frames_dropped": d["frames_dropped"], "samples": len(d.get("cpu_pct", []))})
    _write_csv(rep / "capture_overhead.csv", CAPTURE_HEADER, cap_rows)
    if not cap_rows:
        notes.append("no capture_*.json artifacts: capture-overhead section omitted")

    total = len(rows)
    lines.append(f"samples used: {total} ({'all outcomes' if include_failures else 'successes only'})")
    base_vals = by_kind.get(NO_STRESS, [])
    if base_vals:
        lines.append(f"baseline latency: {summarize(base_vals).describe()}")
    if infl:
        lines.append("mean inflation over baseline by stress kind:")
        for k, v in sorted(kind_inflation(rows).items(), key=lambda kv: -kv[1]):
            lines.append(f"  {k:<10} {v:+.3f} ms")
        top = most_affected(rows)
        if top is not None:
            lines.append(f"largest CpuMemory inflation: {top[0]} ({top[1]:+.3f} ms)")
    for name in ("anova.txt", "lmm.txt"):
        p = out / name
        if p.exists():
            lines.append("")
            lines.append(p.read_text().rstrip())
        else:
            notes.append(f"{name} missing: section omitted")
    if cap_rows:
        lines.append("")
        lines.append("capture overhead (median cpu % of one core):")
        for r in cap_rows:
            lines.append(f"  {r['backend']:<17} {r['median_cpu_pct']}  dropped={r['frames_dropped']}")
    if notes:
        lines.append("")
        lines.extend(f"notice: {n}" for n in notes)
    (rep / "summary.txt").write_text("\n".join(lines) + "\n")
    if plots:
        from . import plotting
        plotting.render_all(rep, rows, inter, cap_rows)
    return rep


def merge_files(samples: str | Path, windows: str | Path, out: str | Path, guard_s: float = DEFAULT_GUARD_S,
                key: str = "start", discarded: str | Path | None = None) -> MergeResult:
    res = merge(read_samples(samples), read_windows(windows), guard_s, key)
    write_labeled(out, res)
    if discarded is not None:
        write_discarded(discarded, res)
    return res


__all__ = [
    "LABELED_HEADER", "MergeError", "LabeledSample", "Discarded", "MergeResult", "merge", "merge_files",
    "write_labeled", "read_labeled", "ExperimentPlan", "ExperimentResult", "run_experiment", "analyze",
    "emit_report", "interaction_table", "inflation_table", "kind_inflation", "most_affected", "load_result",
    "write_samples", "write_windows",
]
