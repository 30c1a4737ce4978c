"""UE-side transactions against the AMF."""
from __future__ import annotations

import socket
import time
from dataclasses import dataclass
from enum import Enum

from . import messages as m
from .client import HOST, connect
from .frame import Frame, recv_frame, send_frame


class Outcome(str, Enum):
    SUCCESS = "success"
    REJECT = "reject"
    # Anything that failed to complete: deadline, refused connection, error reply.
    TIMEOUT = "timeout"


@dataclass
class FlowResult:
    outcome: Outcome
    latency_ms: float
    reply: Frame | None = None
    detail: str = ""

    @property
    def hops(self) -> tuple[str, ...]:
        return self.reply.hops if self.reply is not None else ()


def _transact(sock: socket.socket, frame: Frame, accept: str, reject: str, deadline: float) -> FlowResult:
    t0 = time.perf_counter()
    try:
        remaining = deadline - time.monotonic()
        if remaining <= 0:
            raise socket.timeout
        sock.settimeout(remaining)
        send_frame(sock, frame)
        reply = recv_frame(sock)
    except socket.timeout:
        return FlowResult(Outcome.TIMEOUT, (time.perf_counter() - t0) * 1e3, None, "deadline exceeded")
    except (OSError, ConnectionError, ValueError) as exc:
        return FlowResult(Outcome.TIMEOUT, (time.perf_counter() - t0) * 1e3, None, str(exc))
    ms = (time.perf_counter() - t0) * 1e3
    if reply.txn_id != frame.txn_id:
        return FlowResult(Outcome.TIMEOUT, ms, reply, "reply for a different transaction")
    if reply.msg_type == accept:
        return FlowResult(Outcome.SUCCESS, ms, reply)
    if reply.msg_type == reject:
        return FlowResult(Outcome.REJECT, ms, reply)
    return FlowResult(Outcome.TIMEOUT, ms, reply, reply.msg_type)


def _run(amf_port: int, frame: Frame, accept: str, reject: str, timeout_s: float,
         sock: socket.socket | None, host: str) -> FlowResult:
    deadline = time.monotonic() + timeout_s
    if sock is not None:
        return _transact(sock, frame, accept, reject, deadline)
    t0 = time.perf_counter()
    try:
        own = connect(amf_port, host, timeout=timeout_s)
    except OSError as exc:
        return FlowResult(Outcome.TIMEOUT, (time.perf_counter() - t0) * 1e3, None, str(exc))
    with own:
        return _transact(own, frame, accept, reject, deadline)


def registration_flow(amf_port: int, ue: str, txn_id: int, payload: bytes = b"", timeout_s: float = 5.0,
                      sock: socket.socket | None = None, host: str = HOST) -> FlowResult:
    """UE -> AMF -> AUSF -> UDM -> UDR and back, ending in REGISTRATION_ACCEPT."""
    frame = Frame(m.REGISTRATION_REQUEST, txn_id, ue, (), payload)
    return _run(amf_port, frame, m.REGISTRATION_ACCEPT, m.REGISTRATION_REJECT, timeout_s, sock, host)


def pdu_session_flow(amf_port: int, ue: str, txn_id: int, payload: bytes = b"", timeout_s: float = 5.0,
                     sock: socket.socket | None = None, host: str = HOST) -> FlowResult:
    """UE -> AMF -> SMF -> {UDM, PCF, UPF} and back, ending in PDU_SESSION_ACCEPT."""
    frame = Frame(m.PDU_SESSION_REQUEST, txn_id, ue, (), payload)
    return _run(amf_port, frame, m.PDU_SESSION_ACCEPT, m.PDU_SESSION_REJECT, timeout_s, sock, host)
