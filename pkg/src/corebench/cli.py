"""``corebench`` command line."""
from __future__ import annotations

import argparse
import json
import logging
import signal
import sys
import threading
import time
from pathlib import Path

from .corenet import Core, CoreError, NfKind
from .corenet.config import ALL_NFS, default_topology, load_topology

DEFAULT_STATE = "corebench-core.json"


def _nfs(text: str) -> list[NfKind]:
    if text.strip().lower() == "all":
        return list(ALL_NFS)
    return [NfKind.parse(t) for t in text.split(",") if t.strip()]


def _attach(args) -> Core:
    path = Path(args.state)
    if not path.exists():
        raise SystemExit(f"no running core recorded in {path}; run 'corebench core up' first")
    return Core.attach(path)


def _amf_port(args) -> int:
    if getattr(args, "amf_port", None):
        return args.amf_port
    return _attach(args).port(NfKind.AMF)


def _stop_event() -> threading.Event:
    ev = threading.Event()
    signal.signal(signal.SIGINT, lambda *_: ev.set())
    signal.signal(signal.SIGTERM, lambda *_: ev.set())
    return ev


# -- core -----------------------------------------------------------------------

def cmd_core_up(args) -> int:
    if args.topology:
        topo = load_topology(args.topology)
        if args.work_units is not None:
            for c in topo:
                c.work_units = args.work_units
        core = Core(topo)
    elif args.base_port:
        core = Core(default_topology(args.base_port, kinds=_nfs(args.nfs), work_units=args.work_units))
    else:
        core = Core.on_free_ports(_nfs(args.nfs), args.work_units)
    try:
        core.start()
    except CoreError as exc:
        print(f"core up failed: {exc}", file=sys.stderr)
        return 1
    core.save_state(args.state)
    for kind, port in core.ports.items():
        print(f"{kind.value:<5} port={port} pid={core.pids.get(kind)}")
    print(f"state written to {args.state}")
    return 0


def cmd_core_provision(args) -> int:
    ids = _attach(args).provision(args.ue_count, args.start)
    print(f"provisioned {len(ids)} UEs ({ids[0]} .. {ids[-1]})" if ids else "nothing to provision")
    return 0


def cmd_core_status(args) -> int:
    core = _attach(args)
    rc = 0
    for kind, port in core.ports.items():
        try:
            s = core.stats(kind)
            print(f"{kind.value:<5} port={port} up  frames_in={s.get('frames_in', 0)} stress={s.get('stress')}")
        except Exception as exc:  # report and keep going
            print(f"{kind.value:<5} port={port} DOWN ({exc})")
            rc = 1
    return rc


def cmd_core_down(args) -> int:
    core = _attach(args)
    core.stop()
    Path(args.state).unlink(missing_ok=True)
    print("core stopped")
    return 0


# -- drivers ----------------------------------------------------------------------

def cmd_sensor(args) -> int:
    from .uesensor import SensorConfig, SensorError, run_sensor, summarize
    cfg = SensorConfig(rate_hz=args.rate, duration_s=args.duration, ue_pool=args.ue_pool,
                       timeout_ms=args.timeout_ms, seed=args.seed)
    try:
        samples = run_sensor(cfg, _amf_port(args), out=args.out, stop=_stop_event())
    except SensorError as exc:
        print(f"sensor aborted: {exc}", file=sys.stderr)
        return 2
    stats = summarize(samples)
    print(f"{len(samples)} samples -> {args.out}")
    print(f"latency: {stats.describe()}  success rate: {stats.success_rate:.3f}")
    return 0


def cmd_chaos_run(args) -> int:
    from .chaos import ChaosPlan, gaps, run_plan
    core = _attach(args)
    plan = ChaosPlan(_nfs(args.targets), args.kinds.split(","), args.reps, args.duration, args.cooldown,
                     args.cpu_load, args.memory_mib, args.seed)
    print(f"{len(plan.schedule())} windows, about {plan.span_s:.0f} s")
    windows = run_plan(plan, core.ports, core.host, out=args.out, stop=_stop_event())
    for g in gaps(windows):
        print(f"gap: {g}")
    print(f"{sum(w.realized for w in windows)}/{len(windows)} windows realized -> {args.out}")
    return 0 if all(w.realized for w in windows) else 1


def cmd_flood(args) -> int:
    from .flood import FloodConfig, run_flood
    cfg = FloodConfig(NfKind.parse(args.target), args.concurrency, args.duration, args.payload_bytes, args.mode,
                      args.timeout, args.seed)
    port = args.port or _attach(args).port(cfg.target)
    rep = run_flood(cfg, port, out=args.out)
    print(json.dumps(rep.to_dict(), indent=2))
    return 0 if rep.attempted else 1


def cmd_capture(args) -> int:
    from .telemetry import CaptureSession
    core = _attach(args)
    ev = _stop_event()
    sess = CaptureSession(args.backend, core.ports, args.out, core.host, keep=False).start()
    ev.wait(args.duration)
    stats = sess.stop()
    sess.close()
    if args.stats:
        Path(args.stats).write_text(json.dumps(stats.to_dict(), indent=2) + "\n")
    print(f"{stats.backend}: {stats.frames_captured} frames, {stats.frames_dropped} dropped, "
          f"median cpu {stats.median_cpu_pct:.3f}% -> {args.out}")
    return 0


def cmd_monitor(args) -> int:
    from .telemetry import ResourceMonitor
    core = _attach(args)
    nfs = {k: (pid, core.port(k)) for k, pid in core.pids.items()}
    ev = _stop_event()
    mon = ResourceMonitor(nfs, args.interval, core.host, args.out).start()
    ev.wait(args.duration)
    samples = mon.stop()
    print(f"{len(samples)} samples -> {args.out}")
    return 0


def cmd_detect(args) -> int:
    from .telemetry import RateThresholdDetector, read_records
    det = RateThresholdDetector(args.threshold) if args.threshold else RateThresholdDetector.for_sensor(args.rate)
    records = read_records(args.input)
    if not records:
        print("empty packet window", file=sys.stderr)
        return 2
    step = int(args.window * 1e9)
    t0 = records[0].ts_ns
    buckets: dict[int, list] = {}
    for r in records:
        buckets.setdefault((r.ts_ns - t0) // step, []).append(r)
    for idx, win in sorted(buckets.items()):
        verdict = det.classify(win, span_s=args.window)
        print(f"window {idx:>4} t+{idx * args.window:>7.1f}s frames={len(win):>6} "
              f"peak={det.peak_rate(win, args.window):9.1f}/s {verdict.value}")
    return 0


# -- analysis -----------------------------------------------------------------------

def _labeled_rows(path: str, include_failures: bool) -> list[dict]:
    from .pipeline import read_labeled
    return [r for r in read_labeled(path) if include_failures or r["outcome"] == "success"]


def cmd_stats_anova(args) -> int:
    from .stats import anova_oneway, group_rows
    res = anova_oneway(group_rows(_labeled_rows(args.input, args.include_failures), args.by, args.value))
    print(res.table())
    if args.out:
        Path(args.out).write_text(json.dumps(res.to_dict(), indent=2) + "\n")
    return 0


def cmd_stats_lmm(args) -> int:
    from .stats import LabeledDataset, LmmError, lmm_fit, lmm_report, lmm_report_json
    fixed = "kind" if args.fixed == "stress" else args.fixed
    data = LabeledDataset.from_rows(_labeled_rows(args.input, args.include_failures), y=args.value,
                                    group=args.group, treatment=fixed)
    try:
        fit = lmm_fit(data)
    except LmmError as exc:
        print(f"lmm: {exc}", file=sys.stderr)
        return 1
    print(lmm_report(fit))
    if args.out:
        Path(args.out).write_text(lmm_report_json(fit) + "\n")
    return 0


def cmd_merge(args) -> int:
    from .pipeline import MergeError, merge_files
    try:
        res = merge_files(args.samples, args.windows, args.out, args.guard, args.key, args.discarded)
    except MergeError as exc:
        print(f"merge: {exc}", file=sys.stderr)
        return 1
    print(f"{len(res.labeled)} labeled, {len(res.discarded)} discarded -> {args.out}")
    return 0


def cmd_run(args) -> int:
    from .pipeline import ExperimentPlan, run_experiment
    plan = ExperimentPlan.load(args.plan)
    t = time.monotonic()
    res = run_experiment(plan, args.out_dir, stop=_stop_event())
    if res.errors:
        for stage, msg in res.errors.items():
            print(f"stage {stage} failed: {msg}", file=sys.stderr)
        print(f"partial artifacts kept in {args.out_dir}", file=sys.stderr)
        return 1
    print(f"done in {time.monotonic() - t:.0f} s; report in {Path(args.out_dir) / 'report'}")
    return 0


def cmd_report(args) -> int:
    from .pipeline import emit_report
    rep = emit_report(args.dir, include_failures=args.include_failures, plots=not args.no_plots)
    print((rep / "summary.txt").read_text(), end="")
    return 0


# -- parser -----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="corebench", description="Chaos benchmark harness for a miniature 5G core.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="cmd", required=True)

    def with_state(sp):
        sp.add_argument("--state", default=DEFAULT_STATE, help="core state file (default: %(default)s)")
        return sp

    core = sub.add_parser("core", help="start, provision and stop the NF processes")
    csub = core.add_subparsers(dest="core_cmd", required=True)
    up = with_state(csub.add_parser("up"))
    up.add_argument("--topology", help="JSON list of NF configs")
    up.add_argument("--work-units", type=int)
    up.add_argument("--nfs", default="all", help="comma list of NFs, or 'all'")
    up.add_argument("--base-port", type=int, help="fixed ports from here instead of free ones")
    up.set_defaults(func=cmd_core_up)
    prov = with_state(csub.add_parser("provision"))
    prov.add_argument("--ue-count", type=int, required=True)
    prov.add_argument("--start", type=int, default=0)
    prov.set_defaults(func=cmd_core_provision)
    with_state(csub.add_parser("status")).set_defaults(func=cmd_core_status)
    with_state(csub.add_parser("down")).set_defaults(func=cmd_core_down)

    s = with_state(sub.add_parser("sensor", help="constant-rate UE registration sensor"))
    s.add_argument("--rate", type=float, default=1.0)
    s.add_argument("--duration", type=float, default=60.0)
    s.add_argument("--ue-pool", type=int, default=64)
    s.add_argument("--timeout-ms", type=float, default=5000.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--amf-port", type=int)
    s.add_argument("--out", default="samples.csv")
    s.set_defaults(func=cmd_sensor)

    ch = sub.add_parser("chaos", help="stress injection")
    chsub = ch.add_subparsers(dest="chaos_cmd", required=True)
    cr = with_state(chsub.add_parser("run"))
    cr.add_argument("--targets", default="all")
    cr.add_argument("--kinds", default="CPU,Memory,CpuMemory")
    cr.add_argument("--reps", type=int, default=1)
    cr.add_argument("--duration", type=float, default=20.0)
    cr.add_argument("--cooldown", type=float, default=20.0)
    cr.add_argument("--cpu-load", type=float, default=50.0)
    cr.add_argument("--memory-mib", type=int, default=512)
    cr.add_argument("--seed", type=int, default=0)
    cr.add_argument("--out", default="windows.jsonl")
    cr.set_defaults(func=cmd_chaos_run)

    f = with_state(sub.add_parser("flood", help="concurrent request flood"))
    f.add_argument("--target", default="amf")
    f.add_argument("--concurrency", type=int, default=100)
    f.add_argument("--duration", type=float, default=10.0)
    f.add_argument("--payload-bytes", type=int, default=64)
    f.add_argument("--mode", default="valid", choices=["valid", "garbage", "valid-frame", "garbage-bytes"])
    f.add_argument("--timeout", type=float, default=2.0)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--port", type=int)
    f.add_argument("--out")
    f.set_defaults(func=cmd_flood)

    c = with_state(sub.add_parser("capture", help="mirror NF frames to a packet feed"))
    c.add_argument("--backend", choices=["inline", "observer"], default="inline")
    c.add_argument("--duration", type=float, default=300.0)
    c.add_argument("--out", default="pcap.jsonl")
    c.add_argument("--stats")
    c.set_defaults(func=cmd_capture)

    mo = with_state(sub.add_parser("monitor", help="per-NF CPU, RSS and byte counters"))
    mo.add_argument("--interval", type=float, default=1000.0, help="milliseconds")
    mo.add_argument("--duration", type=float, help="seconds (default: until interrupted)")
    mo.add_argument("--out", default="res.csv")
    mo.set_defaults(func=cmd_monitor)

    d = sub.add_parser("detect", help="classify a packet feed in fixed windows")
    d.add_argument("--input", required=True)
    d.add_argument("--rate", type=float, default=1.0, help="nominal sensor rate used for the default threshold")
    d.add_argument("--threshold", type=float, help="frames/s toward one NF")
    d.add_argument("--window", type=float, default=10.0, help="seconds")
    d.set_defaults(func=cmd_detect)

    st = sub.add_parser("stats", help="ANOVA and mixed-model fits over a labeled CSV")
    stsub = st.add_subparsers(dest="stats_cmd", required=True)
    an = stsub.add_parser("anova")
    an.add_argument("--input", default="labeled.csv")
    an.add_argument("--by", default="nf")
    an.add_argument("--value", default="total_ms")
    an.add_argument("--include-failures", action="store_true")
    an.add_argument("--out")
    an.set_defaults(func=cmd_stats_anova)
    lm = stsub.add_parser("lmm")
    lm.add_argument("--input", default="labeled.csv")
    lm.add_argument("--fixed", default="stress")
    lm.add_argument("--group", default="nf")
    lm.add_argument("--value", default="total_ms")
    lm.add_argument("--include-failures", action="store_true")
    lm.add_argument("--out")
    lm.set_defaults(func=cmd_stats_lmm)

    mg = sub.add_parser("merge", help="label sensor samples with workload windows")
    mg.add_argument("--samples", required=True)
    mg.add_argument("--windows", required=True)
    mg.add_argument("--guard", type=float, default=2.0)
    mg.add_argument("--key", choices=["start", "midpoint"], default="start")
    mg.add_argument("--out", default="labeled.csv")
    mg.add_argument("--discarded")
    mg.set_defaults(func=cmd_merge)

    r = sub.add_parser("run", help="full experiment from a plan file")
    r.add_argument("--plan", required=True)
    r.add_argument("--out-dir", default="results")
    r.set_defaults(func=cmd_run)

    rp = sub.add_parser("report", help="CSV plot data, PNG figures and a text summary")
    rp.add_argument("--dir", default="results")
    rp.add_argument("--include-failures", action="store_true")
    rp.add_argument("--no-plots", action="store_true")
    rp.set_defaults(func=cmd_report)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, CoreError, OSError) as exc:
        print(f"corebench {args.cmd}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
