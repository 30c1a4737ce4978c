import statistics
import time

import psutil
import pytest

from corebench.chaos import (ChaosPlan, StressKind, StressScenario, WorkloadWindow, gaps, inject, read_windows,
                             run_plan, write_windows)
from corebench.corenet import NfKind
from corebench.corenet.config import ALL_NFS
from corebench.corenet.deploy import free_ports
from corebench.telemetry import ResourceMonitor

# psutil reads process CPU in 10 ms clock ticks, so a 1 s sample resolves 1 point.
TICK_PCT = 1.0


def test_scenario_defaults():
    s = StressScenario("CPU", "AMF")
    assert s.cpu_load_pct == 50 and s.memory_mib is None and s.duration_s == 20
    m = StressScenario("Memory", "UDR")
    assert m.memory_mib == 512 and m.memory_bytes == 536_870_912
    c = StressScenario("CpuMemory", "UDM")
    assert c.cpu_load_pct == 50 and c.memory_mib == 512


@pytest.mark.parametrize("kw", [
    {"kind": "CPU", "target": "AMF", "cpu_load_pct": 0},
    {"kind": "CPU", "target": "AMF", "cpu_load_pct": 101},
    {"kind": "CPU", "target": "AMF", "memory_mib": 64},
    {"kind": "Memory", "target": "AMF", "cpu_load_pct": 50},
    {"kind": "Memory", "target": "AMF", "duration_s": 0},
    {"kind": "Disk", "target": "AMF"},
    {"kind": "CPU", "target": "XYZ"},
])
def test_scenario_validation(kw):
    with pytest.raises(ValueError):
        StressScenario(**kw)


def test_full_plan_arithmetic():
    plan = ChaosPlan(list(ALL_NFS), duration_s=20, cooldown_s=20)
    assert len(plan.schedule()) == 30
    assert plan.span_s == pytest.approx(1200)


def test_schedule_is_seeded():
    a = ChaosPlan(["AMF", "UDM"], repetitions=2, seed=5).schedule()
    b = ChaosPlan(["AMF", "UDM"], repetitions=2, seed=5).schedule()
    c = ChaosPlan(["AMF", "UDM"], repetitions=2, seed=6).schedule()
    assert a == b
    assert sorted(map(repr, a)) == sorted(map(repr, c))


def test_plan_round_trip():
    plan = ChaosPlan(["AMF"], ["CPU"], 3, 5.0, 1.0, 40.0, 64, 9, False)
    assert ChaosPlan.from_dict(plan.to_dict()) == plan
    assert ChaosPlan.from_dict({"targets": "all"}).targets == list(ALL_NFS)


def test_empty_plan_gives_no_windows(tmp_path):
    out = tmp_path / "w.jsonl"
    assert run_plan(ChaosPlan([]), {}, out=out) == []
    assert read_windows(out) == []


def test_window_log_round_trip(tmp_path):
    w = WorkloadWindow(StressScenario("CPU", "AMF", duration_s=1), 1, 2, 3, 4, True, 7, 1, "", {"busy_s": 0.5})
    write_windows(tmp_path / "w.jsonl", [w, w])
    assert read_windows(tmp_path / "w.jsonl") == [w, w]


def test_unreachable_target_is_unrealized():
    port = free_ports(1)[0]
    w = inject(StressScenario("CPU", "AMF", duration_s=0.5), port)
    assert not w.realized and "STRESS_START" in w.detail
    assert gaps([w])


def test_undeployed_target_keeps_plan_going():
    plan = ChaosPlan(["AMF"], ["CPU", "Memory"], duration_s=0.2, cooldown_s=0.0, shuffle=False)
    ws = run_plan(plan, {})
    assert len(ws) == 2 and not any(w.realized for w in ws)
    assert len(gaps(ws)) == 2


def test_six_disjoint_windows(fresh_core, tmp_path):
    plan = ChaosPlan(["UDR"], repetitions=2, duration_s=1.0, cooldown_s=0.3, memory_mib=32, seed=1)
    ws = run_plan(plan, fresh_core.ports, out=tmp_path / "w.jsonl")
    assert len(ws) == 6 and all(w.realized for w in ws)
    assert sorted((w.scenario.kind.value, w.rep) for w in ws) == sorted(
        (k.value, r) for k in StressKind for r in range(2))
    spans = sorted((w.start_mono_ns, w.end_mono_ns) for w in ws)
    assert all(a[1] <= b[0] for a, b in zip(spans, spans[1:]))
    assert all(abs(w.duration_s - 1.0) <= 0.05 for w in ws)
    assert read_windows(tmp_path / "w.jsonl") == ws


def _cpu_series(core, kind, seconds):
    mon = ResourceMonitor({kind: (core.pids[kind], None)}, interval_ms=500).start()
    time.sleep(seconds)
    return [s.cpu_pct for s in mon.stop()]


def test_cpu_window_effective_and_released(fresh_core):
    amf = NfKind.AMF
    idle = statistics.mean(_cpu_series(fresh_core, amf, 3))
    mon = ResourceMonitor({amf: (fresh_core.pids[amf], None)}, interval_ms=500).start()
    w = inject(StressScenario("CPU", amf, duration_s=4), fresh_core.port(amf))
    samples = mon.stop()
    assert w.realized and 19 <= 20 * w.duration_s / 4 <= 21
    inside = [s.cpu_pct for s in samples if w.start_wall_ns + 5e8 <= s.ts_ns <= w.end_wall_ns]
    assert inside and statistics.mean(inside) >= idle + 25
    time.sleep(1.0)
    after = statistics.mean(_cpu_series(fresh_core, amf, 3))
    assert after <= max(2 * idle, idle + TICK_PCT)


def test_memory_window_allocates_and_releases(fresh_core):
    udr = NfKind.UDR
    proc = psutil.Process(fresh_core.pids[udr])
    before = proc.memory_info().rss
    w = inject(StressScenario("Memory", udr, memory_mib=128, duration_s=2), fresh_core.port(udr))
    assert w.realized and w.stress_info["memory_passes"] >= 1
    time.sleep(1.0)
    assert abs(proc.memory_info().rss - before) <= 0.10 * before
