"""Per-NF resource monitoring, packet capture backends and the attack detector."""
from .capture import BACKEND_NAMES, CaptureSession, CaptureStats, PacketRecord, hex_decode, hex_encode, multiset, read_records
from .detect import (EmptyWindowError, RateThresholdDetector, ScorerDetector, Verdict, default_threshold, detect,
                     rates_by_destination)
from .monitor import CSV_HEADER, ResourceMonitor, ResourceSample, monitor, read_resources

__all__ = [
    "BACKEND_NAMES", "CaptureSession", "CaptureStats", "PacketRecord", "hex_decode", "hex_encode", "multiset",
    "read_records", "EmptyWindowError", "RateThresholdDetector", "ScorerDetector", "Verdict", "default_threshold",
    "detect", "rates_by_destination", "CSV_HEADER", "ResourceMonitor", "ResourceSample", "monitor", "read_resources",
]
