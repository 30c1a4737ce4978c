"""Exit criteria. Each test prints one ``criterion N: PASS|FAIL`` line.

The end-to-end criteria (5 to 9) boot real NF processes and take minutes; they
carry the ``slow`` marker so ``pytest -m "not slow"`` skips them.
"""
import math
import random
import statistics
import threading
import time
from collections import Counter

import numpy as np
import pytest

from corebench.chaos import ChaosPlan
from corebench.corenet import Core, NfKind
from corebench.flood import FloodConfig, run_flood
from corebench.pipeline import ExperimentPlan, inflation_table, kind_inflation, read_labeled, run_experiment
from corebench.stats import (LabeledDataset, anova_oneway, f_cdf, group_rows, lmm_fit, lmm_fit_arrays, normal_cdf)
from corebench.telemetry import CaptureSession, RateThresholdDetector, ResourceMonitor, Verdict, multiset
from corebench.uesensor import SensorConfig, run_sensor

pytestmark = pytest.mark.acceptance


@pytest.fixture
def verdict(capsys):
    def report(n: int, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'} - {detail}")
        assert ok, detail
    return report


def rel(a: float, b: float) -> float:
    return abs(a - b) / max(abs(b), 1e-300)


# -- 1. ANOVA oracle ---------------------------------------------------------------

def brute_force_f(groups: list[list[float]]) -> float:
    allv = [v for g in groups for v in g]
    n, k = len(allv), len(groups)
    grand = math.fsum(allv) / n
    means = [math.fsum(g) / len(g) for g in groups]
    ssb = math.fsum(len(g) * (m - grand) ** 2 for g, m in zip(groups, means))
    ssw = math.fsum((v - m) ** 2 for g, m in zip(groups, means) for v in g)
    return (ssb / (k - 1)) / (ssw / (n - k))


def test_c1_anova_oracle(verdict):
    rng = random.Random(20240601)
    t0 = time.perf_counter()
    worst_f = worst_p = 0.0
    d1_two = 0
    for _ in range(1000):
        k = rng.randint(2, 5)
        groups = [[rng.gauss(rng.uniform(-5, 5), rng.uniform(0.1, 3)) for _ in range(rng.randint(1, 8))]
                  for _ in range(k)]
        if sum(map(len, groups)) <= k:
            groups[0].extend(rng.gauss(0, 1) for _ in range(2))
        res = anova_oneway(groups)
        worst_f = max(worst_f, rel(res.f_stat, brute_force_f(groups)))
        if k == 3:
            d1_two += 1
            d2 = res.df_within
            worst_p = max(worst_p, abs(res.p_value - (1 + 2 * res.f_stat / d2) ** (-d2 / 2)))
    elapsed = time.perf_counter() - t0
    ok = worst_f <= 1e-9 and worst_p <= 1e-10 and elapsed < 10 and d1_two > 0
    verdict(1, ok, f"max rel F err {worst_f:.1e}, max d1=2 p err {worst_p:.1e} over {d1_two} cases, {elapsed:.2f} s")


# -- 2. distribution numerics --------------------------------------------------------

def test_c2_numerics(verdict):
    a = f_cdf(1, 1, 1)
    b = normal_cdf(0)
    c = normal_cdf(1.959964)
    ok = abs(a - 0.5) <= 1e-10 and b == 0.5 and abs(c - 0.975) <= 1e-6
    verdict(2, ok, f"f_cdf(1,1,1)={a:.15f} Phi(0)={b!r} Phi(1.959964)={c:.10f}")


# -- 3. LMM analytic recovery ----------------------------------------------------------

def balanced_closed_form(groups: list[list[float]]) -> tuple[float, float, float]:
    k, n = len(groups), len(groups[0])
    means = [statistics.fmean(g) for g in groups]
    grand = statistics.fmean(means)
    msb = n * sum((m - grand) ** 2 for m in means) / (k - 1)
    msw = sum((v - m) ** 2 for g, m in zip(groups, means) for v in g) / (k * (n - 1))
    return grand, msw, (msb - msw) / n


def fit_intercept_only(groups):
    y = [v for g in groups for v in g]
    labels = [f"g{i}" for i, g in enumerate(groups) for _ in g]
    return lmm_fit_arrays(y, np.ones((len(y), 1)), labels, ["Intercept"])


def test_c3_lmm_analytic(verdict):
    fit = fit_intercept_only([[0, 2], [4, 6], [8, 10]])
    worked = max(rel(fit.beta[0], 5), rel(fit.sigma2_e, 2), rel(fit.sigma2_u, 15))

    rng = np.random.default_rng(7)
    worst_bal, tried = 0.0, 0
    while tried < 50:
        k, n = int(rng.integers(3, 8)), int(rng.integers(2, 7))
        groups = [list(rng.normal(rng.normal(0, 3), 1, n)) for _ in range(k)]
        b0, s2e, s2u = balanced_closed_form(groups)
        if s2u <= 0:
            continue
        tried += 1
        f = fit_intercept_only(groups)
        worst_bal = max(worst_bal, rel(f.beta[0], b0), rel(f.sigma2_e, s2e), rel(f.sigma2_u, s2u))

    # Equal group means put the optimum on the lambda = 0 boundary, where REML is OLS.
    rng = np.random.default_rng(8)
    worst_ols = 0.0
    for _ in range(20):
        g = [f"g{i % 4}" for i in range(40)]
        X = np.column_stack([np.ones(40), rng.normal(size=40), rng.integers(0, 2, 40)])
        e = rng.normal(size=40)
        for lab in set(g):
            idx = [i for i, x in enumerate(g) if x == lab]
            e[idx] -= e[idx].mean()
        y = X @ np.array([3.0, -1.0, 2.0]) + e
        f = lmm_fit_arrays(y, X, g)
        beta, *_ = np.linalg.lstsq(X, y, rcond=None)
        r = y - X @ beta
        s2 = float(r @ r) / (40 - 3)
        assert f.boundary and f.lam == 0.0
        worst_ols = max(worst_ols, float(np.max(np.abs(f.beta - beta) / np.maximum(np.abs(beta), 1e-12))),
                        rel(f.sigma2_e, s2))
    ok = worked <= 1e-6 and worst_bal <= 1e-6 and worst_ols <= 1e-10
    verdict(3, ok, f"worked example rel err {worked:.1e}; balanced max {worst_bal:.1e} over {tried}; "
                   f"lambda=0 vs OLS max {worst_ols:.1e}")


# -- 4. LMM statistical recovery -------------------------------------------------------

TRUE_BETA = {"Intercept": 451.467, "CPU": 352.239, "Memory": 47.211, "CpuMemory": 420.092}
TRUE_S2U = 67402.169
TRUE_SE = 120.0
KINDS = ["None", "CPU", "Memory", "CpuMemory"]


def synthetic_paper_shaped(seed: int) -> LabeledDataset:
    rng = np.random.default_rng(seed)
    groups = [f"nf{j}" for j in range(10)]
    u = rng.normal(0, math.sqrt(TRUE_S2U), 10)
    g = [groups[i % 10] for i in range(380)]
    t = [KINDS[int(k)] for k in rng.integers(0, 4, 380)]
    y = np.array([TRUE_BETA["Intercept"] + (TRUE_BETA[k] if k != "None" else 0.0) + u[i % 10]
                  for i, k in enumerate(t)]) + rng.normal(0, TRUE_SE, 380)
    return LabeledDataset(y, g, t)


def test_c4_lmm_coverage(verdict):
    t0 = time.perf_counter()
    hits = Counter()
    for seed in range(100):
        fit = lmm_fit(synthetic_paper_shaped(seed))
        for j, term in enumerate(fit.terms):
            lo, hi = fit.ci95[j]
            hits[term] += lo <= TRUE_BETA[term] <= hi
    elapsed = time.perf_counter() - t0
    ok = all(hits[t] >= 90 for t in TRUE_BETA) and elapsed < 60
    verdict(4, ok, "coverage per 100: " + ", ".join(f"{t}={hits[t]}" for t in TRUE_BETA) + f"; {elapsed:.1f} s")


# -- 5 and 6. desk-scale end-to-end run ------------------------------------------------

E2E_TARGETS = ["AMF", "UDM", "UDR", "CHF"]


@pytest.fixture(scope="module")
def e2e(tmp_path_factory):
    out = tmp_path_factory.mktemp("e2e")
    plan = ExperimentPlan(ChaosPlan(E2E_TARGETS, repetitions=2, duration_s=10, cooldown_s=10),
                          rate_hz=2, lead_s=10, seed=1)
    t0 = time.monotonic()
    res = run_experiment(plan, out)
    return res, time.monotonic() - t0


@pytest.mark.slow
def test_c5_table3_ordering(e2e, verdict):
    res, wall = e2e
    assert res.ok, res.errors
    rows = [r for r in read_labeled(res.out_dir / "labeled.csv") if r["outcome"] == "success"]
    cells = Counter((r["nf"], r["kind"]) for r in rows if r["label"] == "Stressed")
    by_kind = kind_inflation(rows)
    _, infl = inflation_table(rows)
    stressed = [r for r in rows if r["label"] == "Stressed"]
    base = statistics.fmean(float(r["total_ms"]) for r in rows if r["label"] == "Baseline")
    by_nf = {nf: statistics.fmean(v) - base for nf, v in group_rows(stressed, "nf").items()}
    cpumem = {r["nf"]: r["inflation_ms"] for r in infl if r["kind"] == "CpuMemory"}
    order_ok = by_kind["CpuMemory"] > by_kind["CPU"] > by_kind["Memory"]
    # "Most affected" compares NFs over all stress kinds; the CpuMemory-only ranking is reported alongside.
    amf_ok = max(by_nf, key=by_nf.get) == "AMF"
    cells_ok = len(cells) == len(E2E_TARGETS) * 3 and min(cells.values()) >= 20
    ok = order_ok and amf_ok and cells_ok and wall < 15 * 60
    verdict(5, ok, "inflation by kind " + ", ".join(f"{k}={v:+.1f}" for k, v in sorted(by_kind.items(),
                                                                                         key=lambda kv: -kv[1]))
            + " ms; by NF " + ", ".join(f"{k}={v:+.1f}" for k, v in sorted(by_nf.items(), key=lambda kv: -kv[1]))
            + " ms; CpuMemory cells " + ", ".join(f"{k}={v:+.1f}" for k, v in sorted(cpumem.items(),
                                                                                      key=lambda kv: -kv[1]))
            + f" ms; min cell n={min(cells.values())}; {wall:.0f} s")


@pytest.mark.slow
def test_c6_table2_direction(e2e, verdict):
    res, _ = e2e
    rows = [r for r in read_labeled(res.out_dir / "labeled.csv") if r["outcome"] == "success"]
    a = anova_oneway(group_rows(rows, "nf"))
    verdict(6, a.p_value < 0.05, f"F({a.df_between}, {a.df_within}) = {a.f_stat:.3f}, p = {a.p_value:.3g}")


# -- 7. sensor fidelity ----------------------------------------------------------------

@pytest.mark.slow
def test_c7_sensor_fidelity(core, verdict):
    cfg = SensorConfig(rate_hz=5, duration_s=60, seed=5)
    t0 = time.monotonic_ns() + 500_000_000
    samples = run_sensor(cfg, core.port("AMF"), start_at_ns=t0)
    period_ns = 1e9 / cfg.rate_hz
    dev = [abs(s.mono_ts_ns - (t0 + s.seq * period_ns)) / period_ns for s in samples]
    within = sum(d < 0.10 for d in dev) / len(dev)
    ok = len(samples) == math.floor(cfg.rate_hz * cfg.duration_s) and within >= 0.99
    verdict(7, ok, f"{len(samples)} samples; {100 * within:.2f}% of sends within 10% of period; "
                   f"max deviation {100 * max(dev):.2f}% of period")


# -- 8. capture comparison -------------------------------------------------------------

@pytest.mark.slow
def test_c8_capture_comparison(fresh_core, verdict):
    cfg = SensorConfig(rate_hz=5, duration_s=300, seed=9)
    stats, sets = {}, {}
    for backend in ("inline", "observer"):
        sess = CaptureSession(backend, fresh_core.ports).start()
        try:
            run_sensor(cfg, fresh_core.port("AMF"))
            time.sleep(0.5)
        finally:
            stats[backend] = sess.stop()
            sess.close()
        sets[backend] = multiset(sess.records)
    drops = {b: s.frames_dropped for b, s in stats.items()}
    med = {b: s.median_cpu_pct for b, s in stats.items()}
    ok = (all(v == 0 for v in drops.values()) and sets["inline"] == sets["observer"]
          and med["inline"] <= med["observer"] and min(s.duration_s for s in stats.values()) >= 300)
    verdict(8, ok, f"frames {stats['inline'].frames_captured}/{stats['observer'].frames_captured}, drops {drops}, "
                   f"multisets equal={sets['inline'] == sets['observer']}, median cpu inline "
                   f"{med['inline']:.3f}% vs observer {med['observer']:.3f}%")


# -- 9. flood influence ----------------------------------------------------------------

@pytest.mark.slow
def test_c9_flood_influence(fresh_core, verdict):
    amf = NfKind.AMF
    rate = 2.0
    det = RateThresholdDetector.for_sensor(rate)
    mon = ResourceMonitor({amf: (fresh_core.pids[amf], fresh_core.port(amf))}, interval_ms=1000).start()
    sess = CaptureSession("inline", fresh_core.ports).start()
    stop = threading.Event()
    sensor = threading.Thread(target=run_sensor, args=(SensorConfig(rate_hz=rate, duration_s=60, seed=3),
                                                       fresh_core.port(amf)), kwargs={"stop": stop}, daemon=True)
    try:
        sensor.start()
        pre_wall, pre_mono = time.time_ns(), time.monotonic_ns()
        time.sleep(30)
        flood_wall, flood_mono = time.time_ns(), time.monotonic_ns()
        rep = run_flood(FloodConfig(amf, concurrency=100, duration_s=10), fresh_core.port(amf))
        end_wall, end_mono = time.time_ns(), time.monotonic_ns()
    finally:
        stop.set()
        sensor.join()
        sess.stop()
        sess.close()
        samples = mon.stop()

    pre = [s for s in samples if pre_wall < s.ts_ns <= flood_wall]
    during = [s for s in samples if flood_wall + 1e9 < s.ts_ns <= end_wall]

    def rx_rates(ss):
        return [(b.net_rx - a.net_rx) / ((b.ts_ns - a.ts_ns) / 1e9) for a, b in zip(ss, ss[1:])]

    cpu_pre, cpu_flood = statistics.fmean(s.cpu_pct for s in pre), statistics.fmean(s.cpu_pct for s in during)
    rx_pre, rx_flood = statistics.fmean(rx_rates(pre)), statistics.fmean(rx_rates(during))
    quiet = [r for r in sess.records if flood_mono - 10e9 <= r.ts_ns < flood_mono]
    loud = [r for r in sess.records if flood_mono <= r.ts_ns < end_mono]
    v_quiet = det.classify(quiet, span_s=10.0)
    v_loud = det.classify(loud, span_s=(end_mono - flood_mono) / 1e9)
    ok = (cpu_flood > cpu_pre and rx_flood > rx_pre and v_quiet is Verdict.NORMAL and v_loud is Verdict.DDOS
          and len(pre) >= 29)
    verdict(9, ok, f"AMF cpu {cpu_pre:.1f}% -> {cpu_flood:.1f}%, rx {rx_pre:.0f} -> {rx_flood:.0f} B/s, "
                   f"{rep.attempted} flood requests; sensor-only window {v_quiet.value} "
                   f"({det.peak_rate(quiet, 10.0):.1f}/s), flood window {v_loud.value}; theta {det.threshold:.0f}/s")
