"""Network function identities, per-NF configuration and topology files."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping


class NfKind(str, Enum):
    AMF = "AMF"
    SMF = "SMF"
    AUSF = "AUSF"
    UDM = "UDM"
    UDR = "UDR"
    NRF = "NRF"
    PCF = "PCF"
    NSSF = "NSSF"
    UPF = "UPF"
    CHF = "CHF"

    @classmethod
    def parse(cls, value: "str | NfKind") -> "NfKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().upper())
        except ValueError:
            raise ValueError(f"unknown network function {value!r}") from None

    def __str__(self) -> str:
        return self.value


ALL_NFS: tuple[NfKind, ...] = tuple(NfKind)

# NFs whose synthetic work must be non-zero, or stress has nothing to contend with.
WORKING_NFS = (NfKind.AMF, NfKind.UDM, NfKind.UDR)

# Calibrated on a single-core desktop so an unstressed registration+PDU
# transaction lands in the 5-50 ms band.
DEFAULT_WORK_UNITS: dict[NfKind, int] = {
    NfKind.AMF: 5000,
    NfKind.SMF: 1500,
    NfKind.AUSF: 1500,
    NfKind.UDM: 4000,
    NfKind.UDR: 2500,
    NfKind.NRF: 200,
    NfKind.PCF: 800,
    NfKind.NSSF: 500,
    NfKind.UPF: 800,
    NfKind.CHF: 500,
}

DEFAULT_BASE_PORT = 38400
DEFAULT_STORE_SIZE = 1000


@dataclass
class NfConfig:
    kind: NfKind
    listen_port: int
    work_units: int = 0
    store_size: int = 0

    def __post_init__(self) -> None:
        self.kind = NfKind.parse(self.kind)
        if not 0 < int(self.listen_port) < 65536:
            raise ValueError(f"{self.kind}: invalid listen_port {self.listen_port}")
        if self.work_units < 0:
            raise ValueError(f"{self.kind}: work_units must be >= 0")
        if self.store_size < 0:
            raise ValueError(f"{self.kind}: store_size must be >= 0")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kind"] = self.kind.value
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "NfConfig":
        return cls(
            kind=NfKind.parse(d["kind"]),
            listen_port=int(d["listen_port"]),
            work_units=int(d.get("work_units", 0)),
            store_size=int(d.get("store_size", 0)),
        )


def default_topology(base_port: int = DEFAULT_BASE_PORT,
                     kinds: Iterable[NfKind] = ALL_NFS,
                     work_units: int | None = None,
                     store_size: int = DEFAULT_STORE_SIZE) -> list[NfConfig]:
    configs = []
    for i, kind in enumerate(kinds):
        kind = NfKind.parse(kind)
        configs.append(NfConfig(
            kind=kind,
            listen_port=base_port + i,
            work_units=DEFAULT_WORK_UNITS[kind] if work_units is None else work_units,
            store_size=store_size if kind is NfKind.UDR else 0,
        ))
    return configs


def validate_topology(configs: Iterable[NfConfig], strict: bool = True) -> list[NfConfig]:
    """Check kind/port uniqueness; with ``strict`` also require real work on AMF/UDM/UDR."""
    configs = list(configs)
    kinds = [c.kind for c in configs]
    ports = [c.listen_port for c in configs]
    if len(set(kinds)) != len(kinds):
        raise ValueError("topology lists a network function more than once")
    if len(set(ports)) != len(ports):
        raise ValueError("topology assigns one port to several network functions")
    if strict:
        idle = [c.kind.value for c in configs if c.kind in WORKING_NFS and c.work_units <= 0]
        if idle:
            raise ValueError(f"work_units must be > 0 for {', '.join(idle)}")
    return configs


def load_topology(path: str | Path) -> list[NfConfig]:
    with open(path) as fh:
        raw = json.load(fh)
    if not isinstance(raw, list):
        raise ValueError("topology file must hold a JSON list of NF configs")
    return [NfConfig.from_dict(d) for d in raw]


def save_topology(configs: Iterable[NfConfig], path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump([c.to_dict() for c in configs], fh, indent=2)
        fh.write("\n")


def ue_id(index: int) -> str:
    """Subscriber identity for pool slot ``index`` (IMSI-like, PLMN 00101)."""
    return f"imsi-00101{index:010d}"
