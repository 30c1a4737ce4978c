"""Launching, provisioning and tearing down a core of NF processes."""
from __future__ import annotations

import json
import logging
import os
import signal
import socket
import subprocess
import sys
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from . import messages as m
from .client import HOST, UpstreamError, control, ping
from .counters import counter_path
from .config import NfConfig, NfKind, default_topology, ue_id, validate_topology

log = logging.getLogger(__name__)


class CoreError(RuntimeError):
    pass


def free_ports(n: int, host: str = HOST) -> list[int]:
    socks = []
    try:
        for _ in range(n):
            s = socket.socket()
            s.bind((host, 0))
            socks.append(s)
        return [s.getsockname()[1] for s in socks]
    finally:
        for s in socks:
            s.close()


@dataclass
class NfHandle:
    config: NfConfig
    process: subprocess.Popen | None
    pid: int
    log_path: str | None = None

    @property
    def kind(self) -> NfKind:
        return self.config.kind

    @property
    def port(self) -> int:
        return self.config.listen_port

    def alive(self) -> bool:
        if self.process is not None:
            return self.process.poll() is None
        try:
            os.kill(self.pid, 0)
            return True
        except OSError:
            return False

    def kill(self, sig: int = signal.SIGKILL) -> None:
        try:
            os.kill(self.pid, sig)
        except ProcessLookupError:
            return
        if self.process is not None:
            try:
                self.process.wait(timeout=5)
            except subprocess.TimeoutExpired:
                pass
        if sig == signal.SIGKILL:
            counter_path(self.pid).unlink(missing_ok=True)  # the NF had no chance to remove it

    def diagnostic(self) -> str:
        if self.log_path and os.path.exists(self.log_path):
            with open(self.log_path) as fh:
                return fh.read().strip()
        return ""


def start_nf(config: NfConfig, peers: dict[NfKind, int], host: str = HOST, upstream_timeout_s: float = 4.0,
             log_dir: str | None = None, ready_timeout: float = 10.0) -> NfHandle:
    """Start one NF process and wait until it answers PING.

    Raises CoreError with the process diagnostic if it exits early (e.g. port in use).
    """
    spec = {"config": config.to_dict(), "peers": {k.value: p for k, p in peers.items()},
            "host": host, "upstream_timeout_s": upstream_timeout_s}
    log_dir = log_dir or tempfile.gettempdir()
    fd, log_path = tempfile.mkstemp(prefix=f"corebench-{config.kind.value.lower()}-", suffix=".log", dir=log_dir)
    with os.fdopen(fd, "w") as log_fh:
        proc = subprocess.Popen([sys.executable, "-m", "corebench.corenet.nf", json.dumps(spec)],
                                stdin=subprocess.DEVNULL, stdout=log_fh, stderr=subprocess.STDOUT,
                                start_new_session=True)
    handle = NfHandle(config, proc, proc.pid, log_path)
    deadline = time.monotonic() + ready_timeout
    while time.monotonic() < deadline:
        if proc.poll() is not None:
            raise CoreError(f"{config.kind.value} exited with code {proc.returncode} during startup: "
                            f"{handle.diagnostic()}")
        pong = ping(config.listen_port, timeout=0.5, host=host)
        if pong and pong.get("pid") == proc.pid:
            return handle
        if pong and pong.get("pid") != proc.pid:
            handle.kill()
            raise CoreError(f"{config.kind.value}: port {config.listen_port} is served by another process")
        time.sleep(0.05)
    handle.kill()
    raise CoreError(f"{config.kind.value} did not become ready within {ready_timeout} s: {handle.diagnostic()}")


@dataclass
class Core:
    """A set of NF processes on loopback.

    The NRF starts first so the others can register with it.
    """

    topology: list[NfConfig] = field(default_factory=default_topology)
    host: str = HOST
    upstream_timeout_s: float = 4.0
    log_dir: str | None = None
    strict: bool = True
    handles: dict[NfKind, NfHandle] = field(default_factory=dict)

    def __post_init__(self):
        self.topology = validate_topology(self.topology, strict=self.strict)

    @classmethod
    def on_free_ports(cls, kinds: Iterable[NfKind] | None = None, work_units: int | None = None,
                      **kwargs) -> "Core":
        kinds = list(kinds) if kinds is not None else list(NfKind)
        topo = default_topology(kinds=kinds, work_units=work_units)
        for cfg, port in zip(topo, free_ports(len(topo))):
            cfg.listen_port = port
        return cls(topo, **kwargs)

    @property
    def configs(self) -> dict[NfKind, NfConfig]:
        return {c.kind: c for c in self.topology}

    @property
    def ports(self) -> dict[NfKind, int]:
        return {c.kind: c.listen_port for c in self.topology}

    def port(self, kind: NfKind | str) -> int:
        return self.ports[NfKind.parse(kind)]

    @property
    def pids(self) -> dict[NfKind, int]:
        return {k: h.pid for k, h in self.handles.items()}

    def start(self, kinds: Iterable[NfKind] | None = None) -> "Core":
        wanted = [NfKind.parse(k) for k in kinds] if kinds is not None else [c.kind for c in self.topology]
        order = sorted(wanted, key=lambda k: k is not NfKind.NRF)
        try:
            for kind in order:
                if kind in self.handles and self.handles[kind].alive():
                    continue
                self.handles[kind] = start_nf(self.configs[kind], self.ports, self.host,
                                              self.upstream_timeout_s, self.log_dir)
        except Exception:
            self.stop()
            raise
        return self

    def stop(self, kinds: Iterable[NfKind] | None = None, timeout: float = 5.0) -> None:
        targets = [NfKind.parse(k) for k in kinds] if kinds is not None else list(self.handles)
        for kind in targets:
            handle = self.handles.get(kind)
            if handle is None:
                continue
            if handle.alive():
                try:
                    control(handle.port, m.SHUTDOWN, timeout=1.0, host=self.host)
                except UpstreamError:
                    pass
            end = time.monotonic() + timeout
            while handle.alive() and time.monotonic() < end:
                time.sleep(0.02)
            if handle.alive():
                handle.kill()
            if handle.process is not None:
                handle.process.wait(timeout=timeout)
            if handle.log_path and os.path.exists(handle.log_path):
                os.unlink(handle.log_path)
            del self.handles[kind]

    def kill(self, kind: NfKind | str) -> None:
        """SIGKILL one NF (fault injection)."""
        kind = NfKind.parse(kind)
        handle = self.handles.pop(kind)
        handle.kill()

    def provision(self, ue_count: int, start: int = 0) -> list[str]:
        ids = [ue_id(i) for i in range(start, start + ue_count)]
        control(self.port(NfKind.UDR), m.PROVISION, {"ue_ids": ids}, host=self.host)
        return ids

    def stats(self, kind: NfKind | str, timeout: float = 2.0) -> dict:
        return control(self.port(kind), m.STATS, timeout=timeout, host=self.host)

    def __enter__(self) -> "Core":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()

    # -- state file for multi-command CLI sessions ---------------------------------
    def save_state(self, path: str | Path) -> None:
        state = {"host": self.host, "topology": [c.to_dict() for c in self.topology],
                 "pids": {k.value: h.pid for k, h in self.handles.items()}}
        with open(path, "w") as fh:
            json.dump(state, fh, indent=2)

    @classmethod
    def attach(cls, path: str | Path) -> "Core":
        with open(path) as fh:
            state = json.load(fh)
        core = cls([NfConfig.from_dict(d) for d in state["topology"]], host=state.get("host", HOST), strict=False)
        for kind, pid in state.get("pids", {}).items():
            cfg = core.configs[NfKind.parse(kind)]
            core.handles[cfg.kind] = NfHandle(cfg, None, int(pid))
        return core
