"""Window classifiers over the hex packet feed.

The baseline policy is a per-destination frame-rate threshold. Anything that
maps a window of hex payloads to a score can stand in for it via
``ScorerDetector``.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Protocol, Sequence

from .capture import PacketRecord

# Frames an NF-facing tap sees per sensor transaction toward the busiest NF (AMF):
# the UE's registration and PDU requests plus the two upstream answers it relays.
FRAMES_PER_TXN = 4
DEFAULT_FACTOR = 10.0


class Verdict(str, Enum):
    NORMAL = "Normal"
    DDOS = "DDoS"


class EmptyWindowError(ValueError):
    pass


def default_threshold(rate_hz: float, factor: float = DEFAULT_FACTOR) -> float:
    """θ in frames/s toward one NF: ``factor`` times the sensor's nominal frame rate."""
    if rate_hz <= 0:
        raise ValueError("rate_hz must be > 0")
    return factor * rate_hz * FRAMES_PER_TXN


def window_span_s(window: Sequence[PacketRecord], span_s: float | None = None) -> float:
    if span_s is not None:
        return span_s
    ts = [r.ts_ns for r in window]
    # A single frame, or frames sharing a timestamp, count as one second of traffic.
    return max((max(ts) - min(ts)) / 1e9, 1.0)


def rates_by_destination(window: Sequence[PacketRecord], span_s: float | None = None) -> dict[str, float]:
    if not window:
        raise EmptyWindowError("empty packet window")
    span = window_span_s(window, span_s)
    return {dst: n / span for dst, n in Counter(r.dst_nf for r in window).items()}


class Detector(Protocol):
    def classify(self, window: Sequence[PacketRecord], span_s: float | None = None) -> Verdict: ...


@dataclass
class RateThresholdDetector:
    """DDoS iff frames/s toward any single NF over the window exceeds ``threshold``."""

    threshold: float

    @classmethod
    def for_sensor(cls, rate_hz: float, factor: float = DEFAULT_FACTOR) -> "RateThresholdDetector":
        return cls(default_threshold(rate_hz, factor))

    def peak_rate(self, window: Sequence[PacketRecord], span_s: float | None = None) -> float:
        return max(rates_by_destination(window, span_s).values())

    def classify(self, window: Sequence[PacketRecord], span_s: float | None = None) -> Verdict:
        return Verdict.DDOS if self.peak_rate(window, span_s) > self.threshold else Verdict.NORMAL


@dataclass
class ScorerDetector:
    """Wraps any scorer over hex payloads; DDoS iff score > ``cutoff``."""

    scorer: Callable[[list[str]], float]
    cutoff: float = 0.5

    def classify(self, window: Sequence[PacketRecord], span_s: float | None = None) -> Verdict:
        if not window:
            raise EmptyWindowError("empty packet window")
        return Verdict.DDOS if self.scorer([r.payload_hex for r in window]) > self.cutoff else Verdict.NORMAL


def detect(window: Sequence[PacketRecord], policy: Detector, span_s: float | None = None) -> Verdict:
    return policy.classify(window, span_s)
