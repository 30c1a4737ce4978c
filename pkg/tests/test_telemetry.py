import statistics
import time

import pytest
from hypothesis import given
from hypothesis import strategies as st

from corebench.corenet import NfKind
from corebench.corenet.client import control
from corebench.corenet.counters import CounterFile, counter_path, read_counters
from corebench.flood import FloodConfig, run_flood
from corebench.telemetry import (CaptureSession, EmptyWindowError, PacketRecord, RateThresholdDetector,
                                 ResourceMonitor, ScorerDetector, Verdict, default_threshold, detect, hex_decode,
                                 hex_encode, monitor, multiset, read_records, read_resources)
from corebench.uesensor import SensorConfig, run_sensor, summarize


def test_hex_encode_dead():
    assert hex_encode(bytes([0xDE, 0xAD])) == "dead"


@given(st.binary(max_size=256))
def test_hex_round_trip(data):
    h = hex_encode(data)
    assert len(h) == 2 * len(data) and set(h) <= set("0123456789abcdef")
    assert hex_decode(h) == data


def test_hex_decode_rejects_uppercase():
    with pytest.raises(ValueError):
        hex_decode("DEAD")


def test_packet_record_json():
    r = PacketRecord.from_bytes(5, "UE", "AMF", b"\x00\x01\xff")
    assert r.length_bytes == 3 and r.payload_hex == "0001ff"
    assert PacketRecord.from_json(r.to_json()) == r


def _window(dst, n, span_s=1.0, src="UE"):
    step = int(span_s * 1e9 / max(n - 1, 1))
    return [PacketRecord.from_bytes(i * step, src, dst, b"\x00" * 8) for i in range(n)]


def test_default_threshold():
    assert default_threshold(2) == 80.0
    with pytest.raises(ValueError):
        default_threshold(0)


def test_detector_examples():
    det = RateThresholdDetector.for_sensor(2)
    assert det.classify(_window("AMF", 8, span_s=1.0)) is Verdict.NORMAL
    assert det.classify(_window("AMF", 500, span_s=1.0)) is Verdict.DDOS
    # Per destination, not in aggregate.
    mixed = _window("AMF", 60) + _window("SMF", 60)
    assert detect(mixed, det, span_s=1.0) is Verdict.NORMAL


def test_detector_monotone_under_added_flood():
    det = RateThresholdDetector(50.0)
    w = _window("AMF", 100, span_s=1.0)
    assert det.classify(w, span_s=1.0) is Verdict.DDOS
    for extra in (1, 10, 1000):
        assert det.classify(w + _window("AMF", extra), span_s=1.0) is Verdict.DDOS


def test_empty_window():
    with pytest.raises(EmptyWindowError):
        RateThresholdDetector(1.0).classify([])
    with pytest.raises(EmptyWindowError):
        ScorerDetector(lambda hx: 1.0).classify([])


def test_scorer_detector_sees_hex():
    seen = []

    def scorer(payloads):
        seen.extend(payloads)
        return sum(p.startswith("ff") for p in payloads) / len(payloads)

    w = [PacketRecord.from_bytes(0, "UE", "AMF", b"\xff\x00"), PacketRecord.from_bytes(1, "UE", "AMF", b"\x00")]
    assert ScorerDetector(scorer, cutoff=0.4).classify(w) is Verdict.DDOS
    assert ScorerDetector(scorer, cutoff=0.6).classify(w) is Verdict.NORMAL
    assert seen[:2] == ["ff00", "00"]


def test_idle_monitor(fresh_core, tmp_path):
    amf = NfKind.AMF
    out = tmp_path / "res.csv"
    mon = ResourceMonitor({amf: (fresh_core.pids[amf], fresh_core.port(amf))}, interval_ms=1000, out=out)
    mon.start()
    time.sleep(10.3)
    samples = mon.stop()
    assert len(samples) == 10
    assert statistics.mean(s.cpu_pct for s in samples) < 5
    assert [s.ts_ns for s in read_resources(out)] == [s.ts_ns for s in samples]


def test_generator_form(core):
    amf = NfKind.AMF
    got = list(monitor({amf: (core.pids[amf], core.port(amf))}, interval_ms=200, duration_s=1.0))
    assert len(got) == 5 and all(s.nf == "AMF" for s in got)


def test_counters_grow_with_traffic(core):
    amf = NfKind.AMF
    mon = ResourceMonitor({amf: (core.pids[amf], core.port(amf))}, interval_ms=250).start()
    run_sensor(SensorConfig(rate_hz=25, duration_s=4, seed=11), core.port(amf))
    time.sleep(0.3)
    samples = mon.stop()
    rx = [s.net_rx for s in samples]
    assert all(b >= a for a, b in zip(rx, rx[1:]))
    assert rx[-1] > rx[0]
    assert all(s.cpu_pct >= 0 for s in samples)


def test_counter_file_round_trip():
    cf = CounterFile(pid=2**22 + 17)
    try:
        assert read_counters(2**22 + 17) == (0, 0)
        cf.publish(123, 2**40)
        assert read_counters(2**22 + 17) == (123, 2**40)
    finally:
        cf.close()
    assert read_counters(2**22 + 17) is None


def test_counter_file_matches_stats(core):
    amf = NfKind.AMF
    run_sensor(SensorConfig(rate_hz=10, duration_s=1, seed=3), core.port(amf))
    s = control(core.port(amf), "STATS")
    rx, tx = read_counters(core.pids[amf])
    assert rx >= s["rx_bytes"] > 0 and tx >= s["tx_bytes"] > 0


def test_exited_nf_flagged_and_others_continue(fresh_core):
    pids = {k: (fresh_core.pids[k], fresh_core.port(k)) for k in (NfKind.NSSF, NfKind.CHF)}
    mon = ResourceMonitor(pids, interval_ms=200).start()
    time.sleep(0.5)
    fresh_core.kill("NSSF")
    time.sleep(1.0)
    samples = mon.stop()
    nssf = [s for s in samples if s.nf == "NSSF"]
    assert nssf[-1].exited and sum(s.exited for s in nssf) == 1
    assert max(s.ts_ns for s in samples if s.nf == "CHF") > nssf[-1].ts_ns
    assert not counter_path(pids[NfKind.NSSF][0]).exists()


@pytest.mark.parametrize("backend", ["inline", "observer"])
def test_capture_records_feed(fresh_core, tmp_path, backend):
    out = tmp_path / f"{backend}.jsonl"
    with CaptureSession(backend, fresh_core.ports, out=out) as sess:
        run_sensor(SensorConfig(rate_hz=10, duration_s=1, seed=2), fresh_core.port("AMF"))
        time.sleep(0.3)
    sess.close()
    st_ = sess.stats
    assert st_.frames_dropped == 0 and st_.frames_captured == len(sess.records) > 0
    assert st_.cpu_pct and all(c >= 0 for c in st_.cpu_pct)
    recs = read_records(out)
    assert recs == sess.records
    assert all(len(r.payload_hex) == 2 * r.length_bytes for r in recs)


def test_capture_parity_between_backends(fresh_core):
    cfg = SensorConfig(rate_hz=10, duration_s=3, seed=4)
    sets = []
    for backend in ("inline", "observer"):
        with CaptureSession(backend, fresh_core.ports) as sess:
            run_sensor(cfg, fresh_core.port("AMF"))
            time.sleep(0.3)
        sess.close()
        assert sess.stats.frames_dropped == 0
        sets.append(multiset(sess.records))
    assert sets[0] == sets[1]


def test_capture_is_non_intrusive(fresh_core):
    cfg = SensorConfig(rate_hz=10, duration_s=3, seed=8)
    off = summarize(run_sensor(cfg, fresh_core.port("AMF"))).success_rate
    with CaptureSession("observer", fresh_core.ports) as sess:
        on = summarize(run_sensor(cfg, fresh_core.port("AMF"))).success_rate
    sess.close()
    assert on == off == 1.0


def test_detector_on_live_traffic(fresh_core):
    cfg = SensorConfig(rate_hz=2, duration_s=4, seed=1)
    det = RateThresholdDetector.for_sensor(cfg.rate_hz)
    with CaptureSession("inline", fresh_core.ports) as sess:
        run_sensor(cfg, fresh_core.port("AMF"))
    sess.close()
    assert det.classify(sess.records) is Verdict.NORMAL
    with CaptureSession("inline", fresh_core.ports) as sess:
        run_flood(FloodConfig(concurrency=100, duration_s=2), fresh_core.port("AMF"))
    sess.close()
    assert det.classify(sess.records) is Verdict.DDOS
