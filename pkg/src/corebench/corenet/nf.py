"""One network function as a standalone process.

Run as ``python -m corebench.corenet.nf '<json>'`` where the JSON holds
``config`` (an NfConfig), ``peers`` (kind -> port) and optional ``host`` and
``upstream_timeout_s``.
"""
from __future__ import annotations

import errno
import json
import logging
import os
import signal
import socket
import socketserver
import sys
import threading
import time
from typing import Callable

from . import messages as m
from .client import ConnectionPool, UpstreamError, control
from .counters import CounterFile
from .config import NfConfig, NfKind, ue_id
from .frame import (HEADER, MALFORMED_FRAME, UNKNOWN_MSG_TYPE, Frame, FrameError, FrameTooLarge, decode,
                    read_body)
from .stress import StressEngine
from .tap import CaptureTap
from .work import mix

log = logging.getLogger("corebench.nf")

EXIT_PORT_IN_USE = 3


class _Server(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True
    request_queue_size = 512


class NetworkFunction:
    def __init__(self, config: NfConfig, peers: dict[NfKind, int], host: str = "127.0.0.1",
                 upstream_timeout_s: float = 4.0):
        self.config = config
        self.kind = config.kind
        self.host = host
        self.peers = {NfKind.parse(k): int(v) for k, v in peers.items()}
        self.upstream_timeout_s = upstream_timeout_s
        self._pools: dict[NfKind, ConnectionPool] = {}
        self._lock = threading.Lock()
        self._store_lock = threading.Lock()
        self.store: dict[str, bytes] = {}
        self.registered: set[str] = set()
        self.nrf_registry: dict[str, dict] = {}
        self.rx_bytes = 0
        self.tx_bytes = 0
        self.frames_in = 0
        self.errors_out = 0
        self.counters: CounterFile | None = None
        self._teid = 0
        self.stress = StressEngine()
        self.tap = CaptureTap()
        self.server: _Server | None = None
        if self.kind is NfKind.UDR:
            self._provision(range(config.store_size))
        self.handlers: dict[str, Callable[[Frame, tuple], Frame]] = self._service_table()

    # -- plumbing -----------------------------------------------------------------
    def _pool(self, kind: NfKind) -> ConnectionPool:
        with self._lock:
            pool = self._pools.get(kind)
            if pool is None:
                if kind not in self.peers:
                    raise UpstreamError("UPSTREAM_UNAVAILABLE", f"no route to {kind.value}")
                pool = self._pools[kind] = ConnectionPool(self.peers[kind], self.host)
            return pool

    def call(self, kind: NfKind, frame: Frame) -> Frame:
        reply, sent, got = self._pool(kind).request(frame, self.upstream_timeout_s)
        self._count(tx=sent, rx=got)
        if reply.is_error:
            raise UpstreamError(reply.msg_type, reply.payload.decode(errors="replace"))
        return reply

    def _count(self, rx: int = 0, tx: int = 0, frames: int = 0) -> None:
        with self._lock:
            self.rx_bytes += rx
            self.tx_bytes += tx
            self.frames_in += frames
            if self.counters is not None and (rx or tx):
                self.counters.publish(self.rx_bytes, self.tx_bytes)

    def work(self, frame: Frame) -> bytes:
        # Charged once per frame this NF processes: inbound requests and upstream answers.
        return mix(frame.payload + frame.ue_id.encode(), self.config.work_units)

    def _provision(self, indices) -> int:
        added = 0
        with self._store_lock:
            for i in indices:
                key = ue_id(i) if isinstance(i, int) else str(i)
                if key not in self.store:
                    self.store[key] = mix(key.encode(), 1) * 2
                    added += 1
        return added

    # -- service logic ------------------------------------------------------------
    def _service_table(self) -> dict:
        k = self.kind
        table = {
            NfKind.AMF: {m.REGISTRATION_REQUEST: self._amf_register, m.PDU_SESSION_REQUEST: self._amf_pdu},
            NfKind.AUSF: {m.AUTH_REQUEST: self._ausf_auth},
            NfKind.UDM: {m.AUTH_DATA_GET: self._udm_auth_data, m.SM_DATA_GET: self._udm_sm_data},
            NfKind.UDR: {m.SUBSCRIBER_GET: self._udr_get},
            NfKind.SMF: {m.CREATE_SM_CONTEXT: self._smf_create},
            NfKind.PCF: {m.POLICY_GET: self._leaf(m.POLICY_REPLY)},
            NfKind.UPF: {m.TUNNEL_SETUP: self._upf_tunnel},
            NfKind.NSSF: {m.SLICE_SELECT: self._leaf(m.SLICE_SELECT_REPLY)},
            NfKind.CHF: {m.CHARGING_DATA: self._leaf(m.CHARGING_DATA_REPLY)},
            NfKind.NRF: {},
        }
        return table[k]

    def _leaf(self, reply_type: str):
        def handler(frame: Frame, hops: tuple) -> Frame:
            return frame.reply(reply_type, self.work(frame), hops)
        return handler

    def _forward(self, frame: Frame, hops: tuple, kind: NfKind, msg_type: str, payload: bytes) -> Frame:
        return self.call(kind, Frame(msg_type, frame.txn_id, frame.ue_id, hops, payload))

    def _amf_register(self, frame, hops):
        digest = self.work(frame)
        up = self._forward(frame, hops, NfKind.AUSF, m.AUTH_REQUEST, digest)
        if up.msg_type == m.AUTH_REPLY:
            with self._store_lock:
                self.registered.add(frame.ue_id)
            return frame.reply(m.REGISTRATION_ACCEPT, self.work(up), up.hops)
        return frame.reply(m.REGISTRATION_REJECT, b"", up.hops)

    def _amf_pdu(self, frame, hops):
        digest = self.work(frame)
        with self._store_lock:
            known = frame.ue_id in self.registered
        if not known:
            return frame.reply(m.PDU_SESSION_REJECT, b"", hops)
        up = self._forward(frame, hops, NfKind.SMF, m.CREATE_SM_CONTEXT, digest)
        if up.msg_type == m.CREATE_SM_CONTEXT_REPLY:
            return frame.reply(m.PDU_SESSION_ACCEPT, self.work(up), up.hops)
        return frame.reply(m.PDU_SESSION_REJECT, b"", up.hops)

    def _ausf_auth(self, frame, hops):
        digest = self.work(frame)
        up = self._forward(frame, hops, NfKind.UDM, m.AUTH_DATA_GET, digest)
        if up.msg_type == m.AUTH_DATA_REPLY:
            return frame.reply(m.AUTH_REPLY, self.work(up), up.hops)
        return frame.reply(m.AUTH_REJECT, b"", up.hops)

    def _udm_auth_data(self, frame, hops):
        digest = self.work(frame)
        up = self._forward(frame, hops, NfKind.UDR, m.SUBSCRIBER_GET, digest)
        if up.msg_type == m.SUBSCRIBER_REPLY:
            return frame.reply(m.AUTH_DATA_REPLY, self.work(up), up.hops)
        return frame.reply(m.AUTH_DATA_REJECT, b"", up.hops)

    def _udm_sm_data(self, frame, hops):
        return frame.reply(m.SM_DATA_REPLY, self.work(frame), hops)

    def _udr_get(self, frame, hops):
        digest = self.work(frame)
        with self._store_lock:
            record = self.store.get(frame.ue_id)
        if record is None:
            return frame.reply(m.SUBSCRIBER_NOT_FOUND, b"", hops)
        return frame.reply(m.SUBSCRIBER_REPLY, digest + record, hops)

    def _smf_create(self, frame, hops):
        digest = self.work(frame)
        up = self._forward(frame, hops, NfKind.UDM, m.SM_DATA_GET, digest)
        up = self._forward(frame, up.hops, NfKind.PCF, m.POLICY_GET, up.payload)
        up = self._forward(frame, up.hops, NfKind.UPF, m.TUNNEL_SETUP, up.payload)
        if up.msg_type == m.TUNNEL_SETUP_REPLY:
            return frame.reply(m.CREATE_SM_CONTEXT_REPLY, self.work(up), up.hops)
        return frame.reply(m.CREATE_SM_CONTEXT_REJECT, b"", up.hops)

    def _upf_tunnel(self, frame, hops):
        digest = self.work(frame)
        with self._lock:
            self._teid += 1
            teid = self._teid
        return frame.reply(m.TUNNEL_SETUP_REPLY, digest + teid.to_bytes(4, "big"), hops)

    # -- control ------------------------------------------------------------------
    def handle_control(self, frame: Frame) -> Frame:
        try:
            args = json.loads(frame.payload.decode()) if frame.payload else {}
        except ValueError:
            return frame.reply(MALFORMED_FRAME, b"control payload is not JSON")
        t = frame.msg_type
        if t == m.PING:
            out = {"kind": self.kind.value, "pid": os.getpid(), "port": self.config.listen_port}
            return frame.reply(m.PONG, json.dumps(out).encode())
        if t == m.STATS:
            return frame.reply(m.STATS_REPLY, json.dumps(self.stats()).encode())
        if t == m.STRESS_START:
            try:
                self.stress.start(args.get("kind"), args.get("cpu_load_pct"), args.get("memory_mib"),
                                  args.get("workers", 1), args.get("seed"), args.get("max_s"))
            except ValueError as exc:
                return frame.reply(MALFORMED_FRAME, str(exc).encode())
            return frame.reply(m.STRESS_ACK, json.dumps({"active": True}).encode())
        if t == m.STRESS_STOP:
            return frame.reply(m.STRESS_ACK, json.dumps(self.stress.stop()).encode())
        if t == m.CAPTURE_START:
            try:
                self.tap.start(args.get("backend"), args)
            except (ValueError, KeyError, OSError) as exc:
                return frame.reply(MALFORMED_FRAME, str(exc).encode())
            return frame.reply(m.CAPTURE_ACK, json.dumps(self.tap.snapshot()).encode())
        if t == m.CAPTURE_STOP:
            return frame.reply(m.CAPTURE_ACK, json.dumps(self.tap.stop(args.get("backend"))).encode())
        if t == m.PROVISION and self.kind is NfKind.UDR:
            ids = args.get("ue_ids")
            added = self._provision(ids if ids is not None else range(int(args.get("count", 0))))
            return frame.reply(m.PROVISION_ACK, json.dumps({"added": added, "size": len(self.store)}).encode())
        if t == m.NF_REGISTER and self.kind is NfKind.NRF:
            with self._lock:
                self.nrf_registry[args["kind"]] = {"port": args["port"], "pid": args.get("pid")}
            return frame.reply(m.NF_REGISTER_ACK, b"{}")
        if t == m.NF_DISCOVER and self.kind is NfKind.NRF:
            with self._lock:
                registry = dict(self.nrf_registry)
            return frame.reply(m.NF_DISCOVER_REPLY, json.dumps(registry).encode())
        if t == m.SHUTDOWN:
            threading.Thread(target=self.shutdown, daemon=True).start()
            return frame.reply(m.SHUTDOWN_ACK, b"{}")
        return frame.reply(UNKNOWN_MSG_TYPE, t.encode())

    def stats(self) -> dict:
        with self._lock:
            out = {"kind": self.kind.value, "pid": os.getpid(), "rx_bytes": self.rx_bytes,
                   "tx_bytes": self.tx_bytes, "frames_in": self.frames_in, "errors_out": self.errors_out}
        with self._store_lock:
            out["store_size"] = len(self.store)
            out["registered"] = len(self.registered)
        out["capture"] = self.tap.snapshot()
        out["stress"] = {k: v for k, v in (self.stress.active or {}).items()}
        return out

    # -- frame loop ---------------------------------------------------------------
    def dispatch(self, frame: Frame) -> Frame:
        if frame.msg_type in m.CONTROL_TYPES:
            return self.handle_control(frame)
        handler = self.handlers.get(frame.msg_type)
        if handler is None:
            return frame.reply(UNKNOWN_MSG_TYPE, frame.msg_type.encode())
        hops = frame.hops + (self.kind.value,)
        try:
            return handler(frame, hops)
        except UpstreamError as exc:
            return frame.reply(exc.code, exc.detail.encode(), hops)

    def _mirror(self, src: str, dst: str, data: bytes) -> None:
        if self.tap.enabled:
            try:
                self.tap.mirror(src, dst, data)
            except Exception:  # capture must never break the data path
                log.debug("capture mirror failed", exc_info=True)

    def serve_connection(self, sock: socket.socket) -> None:
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        me = self.kind.value
        while True:
            try:
                body = read_body(sock)
            except FrameTooLarge as exc:
                self._send(sock, Frame(MALFORMED_FRAME, 0, "", (), str(exc).encode()), None)
                return
            except (OSError, ConnectionError):
                return
            if body is None:
                return
            wire = HEADER.pack(len(body)) + body
            self._count(rx=len(wire), frames=1)
            try:
                frame = decode(body)
            except FrameError as exc:
                self._mirror("EXT", me, wire)
                if not self._send(sock, Frame(MALFORMED_FRAME, 0, "", (), str(exc).encode()), "EXT"):
                    return
                continue
            src = None if frame.msg_type in m.CONTROL_TYPES else m.REQUEST_SOURCE.get(frame.msg_type, "EXT")
            if src is not None:
                self._mirror(src, me, wire)
            reply = self.dispatch(frame)
            if not self._send(sock, reply, src):
                return

    def _send(self, sock: socket.socket, reply: Frame, dst: str | None) -> bool:
        data = reply.encode()
        if reply.is_error:
            with self._lock:
                self.errors_out += 1
        if dst is not None:
            self._mirror(self.kind.value, dst, data)
        try:
            sock.sendall(data)
        except OSError:
            return False
        self._count(tx=len(data))
        return True

    # -- lifecycle ----------------------------------------------------------------
    def bind(self) -> None:
        nf = self

        class Handler(socketserver.BaseRequestHandler):
            def handle(self):
                nf.serve_connection(self.request)

        self.server = _Server((self.host, self.config.listen_port), Handler)

    def register_with_nrf(self, deadline_s: float = 10.0) -> None:
        port = self.peers.get(NfKind.NRF)
        if port is None or self.kind is NfKind.NRF:
            return
        end = time.monotonic() + deadline_s
        payload = {"kind": self.kind.value, "port": self.config.listen_port, "pid": os.getpid()}
        while time.monotonic() < end:
            try:
                control(port, m.NF_REGISTER, payload, timeout=1.0, host=self.host)
                return
            except UpstreamError:
                time.sleep(0.1)
        log.warning("%s could not register with NRF on port %d", self.kind.value, port)

    def serve_forever(self) -> None:
        if self.server is None:
            self.bind()
        threading.Thread(target=self.register_with_nrf, daemon=True).start()
        self.server.serve_forever(poll_interval=0.2)

    def shutdown(self) -> None:
        self.stress.stop()
        self.tap.stop()
        if self.server is not None:
            self.server.shutdown()


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    spec = json.loads(argv[0])
    logging.basicConfig(level=os.environ.get("COREBENCH_NF_LOG", "WARNING"),
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    config = NfConfig.from_dict(spec["config"])
    nf = NetworkFunction(config, spec.get("peers", {}), spec.get("host", "127.0.0.1"),
                         float(spec.get("upstream_timeout_s", 4.0)))
    try:
        nf.bind()
    except OSError as exc:
        if exc.errno == errno.EADDRINUSE:
            print(f"{config.kind.value}: port {config.listen_port} already in use", file=sys.stderr)
            return EXIT_PORT_IN_USE
        raise
    try:
        nf.counters = CounterFile()
    except OSError as exc:
        log.warning("byte counters not published: %s", exc)
    signal.signal(signal.SIGTERM, lambda *_: threading.Thread(target=nf.shutdown, daemon=True).start())
    try:
        nf.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        nf.server.server_close()
        if nf.counters is not None:
            with nf._lock:
                nf.counters.close()
                nf.counters = None
    return 0


if __name__ == "__main__":
    sys.exit(main())
