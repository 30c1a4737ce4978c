import csv
import json
from collections import Counter

import pytest

from corebench.chaos import ChaosPlan, StressScenario, WorkloadWindow, write_windows
from corebench.pipeline import (LABELED_HEADER, ExperimentPlan, MergeError, effective_seed, emit_report,
                                interaction_table, merge, merge_files, most_affected, read_labeled, run_experiment,
                                write_labeled)
from corebench.uesensor import RegistrationSample, write_samples

S = 1_000_000_000
WALL = 1_700_000_000 * S


def sample(seq, t_s, ms=10.0, outcome="success"):
    t = int(t_s * S)
    return RegistrationSample(seq, f"u{seq}", WALL + t, t, ms / 2, ms / 2, ms, outcome)


def window(wid, a_s, b_s, nf="AMF", kind="CPU", realized=True):
    a, b = int(a_s * S), int(b_s * S)
    sc = StressScenario(kind, nf, duration_s=b_s - a_s)
    return WorkloadWindow(sc, WALL + a, a, WALL + b, b, realized, wid)


def by_seq(res):
    out = {ls.sample.seq: (ls.label, ls.nf, ls.kind, ls.window_id) for ls in res.labeled}
    out.update({d.sample.seq: ("discarded", d.reason, d.window_id) for d in res.discarded})
    return out


def test_merge_examples():
    res = merge([sample(0, 10), sample(1, 26), sample(2, 60)], [window(0, 5, 25)], guard_s=2)
    got = by_seq(res)
    assert got[0] == ("Stressed", "AMF", "CPU", 0)
    assert got[1] == ("discarded", "guard", 0)
    assert got[2][:3] == ("Baseline", "AMF", "None") and got[2][3] is None


def test_window_edges():
    got = by_seq(merge([sample(0, 4.9), sample(1, 5), sample(2, 25), sample(3, 27)], [window(0, 5, 25)]))
    assert got[0][0] == "Baseline"
    assert got[1][0] == "Stressed"
    assert got[2] == ("discarded", "guard", 0)
    assert got[3][0] == "Baseline"


def test_midpoint_key():
    s = sample(0, 4.99, ms=100.0)
    assert by_seq(merge([s], [window(0, 5, 25)], key="start"))[0][0] == "Baseline"
    assert by_seq(merge([s], [window(0, 5, 25)], key="midpoint"))[0][0] == "Stressed"


def test_unrealized_window_discards():
    got = by_seq(merge([sample(0, 10), sample(1, 40)], [window(0, 5, 25, realized=False)]))
    assert got[0] == ("discarded", "unrealized window", 0)
    assert got[1][0] == "Baseline"


def test_overlapping_windows_rejected():
    with pytest.raises(MergeError, match="overlapping"):
        merge([sample(0, 1)], [window(0, 5, 25), window(1, 20, 30, nf="UDM")])


def test_non_monotonic_samples_rejected():
    with pytest.raises(MergeError, match="non-monotonic"):
        merge([sample(0, 10), sample(1, 9)], [])


def test_clock_domain_mismatch_rejected():
    w = window(0, 5, 25)
    shifted = WorkloadWindow(w.scenario, w.start_wall_ns, w.start_mono_ns + 3600 * S, w.end_wall_ns,
                             w.end_mono_ns + 3600 * S, True, 0)
    with pytest.raises(MergeError, match="clock-domain"):
        merge([sample(0, 10), sample(1, 11)], [shifted])


def test_partition_and_baseline_attribution():
    samples = [sample(i, 0.5 * i) for i in range(200)]
    windows = [window(0, 10, 20, "AMF", "CPU"), window(1, 40, 50, "UDR", "Memory"),
               window(2, 70, 80, "UDM", "CpuMemory", realized=False)]
    res = merge(samples, windows)
    seqs = [ls.sample.seq for ls in res.labeled] + [d.sample.seq for d in res.discarded]
    assert sorted(seqs) == list(range(200))
    assert all((ls.window_id is not None) == ls.stressed for ls in res.labeled)
    realized = {0, 1}
    assert all(ls.window_id in realized for ls in res.labeled if ls.stressed)
    got = by_seq(res)
    assert got[2][1] == "AMF"  # before any window: first window's NF
    assert got[60][:2] == ("Baseline", "AMF")
    assert got[180][:2] == ("Baseline", "UDR")


def test_baseline_round_robin_without_windows():
    res = merge([sample(i, i) for i in range(6)], [], nfs=["AMF", "UDM", "UDR"])
    assert [ls.nf for ls in res.labeled] == ["AMF", "UDM", "UDR"] * 2


def test_merge_is_byte_deterministic(tmp_path):
    samples = [sample(i, 0.5 * i, ms=10 + (i % 7) / 3) for i in range(120)]
    windows = [window(0, 10, 20), window(1, 30, 40, "UDM", "Memory")]
    write_samples(tmp_path / "s.csv", samples)
    write_windows(tmp_path / "w.jsonl", windows)
    merge_files(tmp_path / "s.csv", tmp_path / "w.jsonl", tmp_path / "a.csv")
    write_labeled(tmp_path / "b.csv", merge(list(reversed(samples)), list(reversed(windows))))
    a = (tmp_path / "a.csv").read_bytes()
    assert a == (tmp_path / "b.csv").read_bytes()
    assert a.decode().splitlines()[0] == ",".join(LABELED_HEADER)


def test_interaction_shape():
    rows = [{"nf": nf, "kind": k, "total_ms": "1.0", "label": "x"}
            for nf in ("AMF", "UDM", "UDR") for k in ("None", "CPU", "Memory")]
    rows = rows[:-1]  # one empty cell still gets a row
    inter = interaction_table(rows, kinds=["None", "CPU", "Memory", "CpuMemory"])
    assert len(inter) == 3 * 4
    assert list(inter[0]) == ["nf", "kind", "mean_ms", "std_ms", "n"]
    assert sum(r["n"] == 0 for r in inter) == 4


def test_most_affected():
    rows = [{"nf": "X", "kind": "None", "label": "Baseline", "total_ms": "10"}]
    rows += [{"nf": nf, "kind": "CpuMemory", "label": "Stressed", "total_ms": str(v)}
             for nf, v in (("AMF", 40), ("UDM", 30), ("UDR", 20))]
    assert most_affected(rows) == ("AMF", 30.0)


def test_empty_dataset_report(tmp_path):
    (tmp_path / "labeled.csv").write_text(",".join(LABELED_HEADER) + "\n")
    rep = emit_report(tmp_path)
    assert (rep / "interaction.csv").read_text() == "nf,kind,mean_ms,std_ms,n\n"
    assert len((rep / "nf_summary.csv").read_text().splitlines()) == 1
    assert "notice: anova.txt missing" in (rep / "summary.txt").read_text()


def test_missing_artifacts_noticed(tmp_path):
    rep = emit_report(tmp_path, plots=False)
    text = (rep / "summary.txt").read_text()
    assert "labeled.csv missing" in text and "capture" in text


def test_plan_arithmetic_and_round_trip(tmp_path):
    plan = ExperimentPlan(ChaosPlan.from_dict({"targets": "all", "duration_s": 20, "cooldown_s": 20}))
    assert len(plan.chaos.schedule()) == 30
    assert plan.sensor_duration_s >= 1200
    p = tmp_path / "plan.json"
    p.write_text(json.dumps(plan.to_dict()))
    assert ExperimentPlan.load(p) == plan


def test_plan_rejects_undeployed_target():
    with pytest.raises(ValueError, match="not deployed"):
        ExperimentPlan(ChaosPlan(["CHF"]), nfs=["AMF", "UDM"])


def test_seed_override(monkeypatch):
    plan = ExperimentPlan(ChaosPlan(["AMF"]), seed=3)
    monkeypatch.delenv("COREBENCH_SEED", raising=False)
    assert effective_seed(plan).seed == 3
    monkeypatch.setenv("COREBENCH_SEED", "0x10")
    p = effective_seed(plan)
    assert p.seed == 16 and p.chaos.seed == 16


def _cells(out):
    return Counter((r["label"], r["nf"], r["kind"]) for r in read_labeled(out / "labeled.csv"))


def _schedule(out):
    return [(json.loads(l)["scenario"]["target"], json.loads(l)["scenario"]["kind"])
            for l in (out / "windows.jsonl").read_text().splitlines()]


def test_zero_target_plan(tmp_path):
    plan = ExperimentPlan(ChaosPlan([]), rate_hz=5, lead_s=1, tail_s=1, nfs=["AMF", "AUSF", "UDM", "UDR", "SMF",
                                                                             "PCF", "UPF", "NRF"])
    res = run_experiment(plan, tmp_path)
    assert set(res.errors) == {"lmm"} and "single treatment level" in res.errors["lmm"]
    assert res.anova is not None and (tmp_path / "anova.json").exists()
    rows = read_labeled(tmp_path / "labeled.csv")
    assert len(rows) == 10 and all(r["label"] == "Baseline" for r in rows)
    assert (tmp_path / "report" / "summary.txt").exists()


def test_end_to_end_seed_determinism(tmp_path):
    plan = ExperimentPlan(ChaosPlan(["AMF", "UDR"], ["CPU", "Memory"], duration_s=1.5, cooldown_s=1.5,
                                    memory_mib=64), rate_hz=4, lead_s=1, tail_s=1, seed=42)
    a = run_experiment(plan, tmp_path / "a")
    b = run_experiment(plan, tmp_path / "b")
    assert a.ok and b.ok, (a.errors, b.errors)
    assert _schedule(tmp_path / "a") == _schedule(tmp_path / "b")
    assert _cells(tmp_path / "a") == _cells(tmp_path / "b")
    for name in ("samples.csv", "windows.jsonl", "labeled.csv", "discarded.csv", "anova.json", "lmm.json",
                 "resources.csv", "report/interaction.csv", "report/summary.txt", "report/nf_latency.png"):
        assert (tmp_path / "a" / name).exists(), name
    with open(tmp_path / "a" / "report" / "interaction.csv") as fh:
        inter = list(csv.DictReader(fh))
    assert len(inter) == 2 * 3
