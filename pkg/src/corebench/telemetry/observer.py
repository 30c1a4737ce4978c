"""Stand-alone observer process for the external capture backend.

Receives one datagram per mirrored frame, re-parses the frame, and appends a
packet record to a JSON Lines file. A datagram shorter than the metadata header
is the stop signal. Counters go to ``stats_path`` every half second and on stop.

Run as ``python -m corebench.telemetry.observer '<json spec>'``.
"""
from __future__ import annotations

import json
import os
import signal
import socket
import sys
import time

from ..corenet.frame import FrameError, decode
from .ring import _META, unpack_datagram

STOP = b"STOP"
RCVBUF = 4 << 20
PROGRESS_S = 0.5


def serve(path: str, out: str, stats_path: str) -> int:
    sock = socket.socket(socket.AF_UNIX, socket.SOCK_DGRAM)
    try:
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_RCVBUF, RCVBUF)
    except OSError:
        pass
    if os.path.exists(path):
        os.unlink(path)
    sock.bind(path)
    sock.settimeout(0.2)
    frames = parse_errors = nbytes = 0
    running = True
    next_flush = time.monotonic() + PROGRESS_S

    def _dump() -> None:
        tmp = stats_path + ".tmp"
        with open(tmp, "w") as sf:
            json.dump({"frames": frames, "parse_errors": parse_errors, "bytes": nbytes,
                       "cpu_ns": time.process_time_ns()}, sf)
        os.replace(tmp, stats_path)

    def _term(*_):
        nonlocal running
        running = False

    signal.signal(signal.SIGTERM, _term)
    print("ready", flush=True)
    with open(out, "w") as fh:
        while running:
            if time.monotonic() >= next_flush:
                fh.flush()
                _dump()
                next_flush = time.monotonic() + PROGRESS_S
            try:
                data = sock.recv(1 << 21)
            except socket.timeout:
                continue
            except OSError:
                break
            if len(data) < _META.size:
                if data == STOP:
                    break
                continue
            ts, src, dst, frame = unpack_datagram(data)
            # The user-space analogue pays for a full parse of every copy.
            try:
                decode(frame[4:])
            except FrameError:
                parse_errors += 1
            fh.write(json.dumps({"ts_ns": ts, "src_nf": src, "dst_nf": dst, "length_bytes": len(frame),
                                 "payload_hex": frame.hex()}) + "\n")
            frames += 1
            nbytes += len(frame)
    sock.close()
    try:
        os.unlink(path)
    except OSError:
        pass
    _dump()
    return 0


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    spec = json.loads(argv[0])
    return serve(spec["path"], spec["out"], spec["stats"])


if __name__ == "__main__":
    sys.exit(main())
