"""Client side of the loopback wire protocol."""
from __future__ import annotations

import json
import queue
import socket
import threading
import time

from .frame import Frame, recv_frame, send_frame

HOST = "127.0.0.1"


class UpstreamError(Exception):
    def __init__(self, code: str, detail: str = ""):
        super().__init__(f"{code}: {detail}" if detail else code)
        self.code = code
        self.detail = detail


def connect(port: int, host: str = HOST, timeout: float = 5.0) -> socket.socket:
    sock = socket.create_connection((host, port), timeout=timeout)
    sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    return sock


def exchange(sock: socket.socket, frame: Frame, timeout: float | None = None) -> tuple[Frame, int, int]:
    """Send one frame and wait for its reply. Returns (reply, bytes_out, bytes_in)."""
    if timeout is not None:
        sock.settimeout(max(timeout, 1e-3))
    sent = send_frame(sock, frame)
    reply = recv_frame(sock)
    return reply, sent, len(reply.encode())


class ConnectionPool:
    """Reusable connections to one upstream endpoint, safe for concurrent callers."""

    def __init__(self, port: int, host: str = HOST, maxsize: int = 64):
        self.port = port
        self.host = host
        self._idle: queue.LifoQueue[socket.socket] = queue.LifoQueue(maxsize)

    def request(self, frame: Frame, timeout: float) -> tuple[Frame, int, int]:
        try:
            sock = self._idle.get_nowait()
        except queue.Empty:
            sock = None
        if sock is None:
            try:
                sock = connect(self.port, self.host, timeout=timeout)
            except OSError as exc:
                raise UpstreamError("UPSTREAM_UNAVAILABLE", str(exc)) from None
        try:
            result = exchange(sock, frame, timeout)
        except socket.timeout:
            sock.close()
            raise UpstreamError("UPSTREAM_TIMEOUT", f"no reply within {timeout:.3f} s") from None
        except (OSError, ConnectionError, ValueError) as exc:
            sock.close()
            raise UpstreamError("UPSTREAM_UNAVAILABLE", str(exc)) from None
        try:
            self._idle.put_nowait(sock)
        except queue.Full:
            sock.close()
        return result

    def close(self) -> None:
        while True:
            try:
                self._idle.get_nowait().close()
            except queue.Empty:
                return


_txn_lock = threading.Lock()
_txn_counter = int(time.time_ns()) & 0xFFFFFFFF


def control_txn() -> int:
    global _txn_counter
    with _txn_lock:
        _txn_counter = (_txn_counter + 1) & ((1 << 64) - 1)
        return _txn_counter


def request(port: int, frame: Frame, timeout: float = 5.0, host: str = HOST) -> Frame:
    with connect(port, host, timeout) as sock:
        reply, _, _ = exchange(sock, frame, timeout)
        return reply


def control(port: int, msg_type: str, payload: dict | None = None,
            timeout: float = 5.0, host: str = HOST) -> dict:
    """Send a control frame; returns the decoded JSON payload of the reply.

    Raises ``UpstreamError`` on transport failure or an error reply.
    """
    body = json.dumps(payload or {}).encode()
    try:
        reply = request(port, Frame(msg_type, control_txn(), "", (), body), timeout, host)
    except socket.timeout:
        raise UpstreamError("UPSTREAM_TIMEOUT", f"{msg_type} to port {port}") from None
    except (OSError, ConnectionError) as exc:
        raise UpstreamError("UPSTREAM_UNAVAILABLE", f"{msg_type} to port {port}: {exc}") from None
    if reply.is_error:
        raise UpstreamError(reply.msg_type, reply.payload.decode(errors="replace"))
    return json.loads(reply.payload.decode()) if reply.payload else {}


def ping(port: int, timeout: float = 1.0, host: str = HOST) -> dict | None:
    try:
        return control(port, "PING", timeout=timeout, host=host)
    except UpstreamError:
        return None
