"""Two-way wire protocol between model provider and data holder.

Frames are a 4-byte big-endian length followed by one UTF-8 JSON object.
The provider opens with ``{"type": "hello", "version": 1}``; afterwards it
sends ``query`` frames carrying full tunable-parameter vectors and receives
``feedback`` frames with the score tuple and remaining budget, or ``error``
frames with a code. A closing ``finish`` frame may carry the provider's final
candidate so the holder can compute its report locally. The holder never
sends anything else.
"""
from __future__ import annotations

import json
import os
import socket
import socketserver
import struct
import threading
from typing import Optional

import numpy as np

from .channel import BudgetExhausted, ProtocolError

VERSION = 1
HEADER = struct.Struct(">I")
MAX_FRAME = 64 * 1024 * 1024
BIND_ENV = "FEEDTUNE_BIND"


def encode_frame(msg: dict) -> bytes:
    body = json.dumps(msg, separators=(",", ":"), allow_nan=False).encode("utf-8")
    return HEADER.pack(len(body)) + body


def _read_exact(stream, n: int) -> bytes:
    buf = b""
    while len(buf) < n:
        chunk = stream.read(n - len(buf)) if hasattr(stream, "read") else stream.recv(n - len(buf))
        if not chunk:
            raise ConnectionError("connection closed mid-frame")
        buf += chunk
    return buf


def read_frame(stream) -> tuple[dict, bytes]:
    """Read one frame; returns the decoded message and the raw bytes."""
    header = _read_exact(stream, HEADER.size)
    (size,) = HEADER.unpack(header)
    if size > MAX_FRAME:
        raise ProtocolError("frame_too_large", f"{size} bytes")
    body = _read_exact(stream, size)
    try:
        msg = json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError("malformed", str(exc)) from None
    if not isinstance(msg, dict) or "type" not in msg:
        raise ProtocolError("malformed", "frame is not a typed object")
    return msg, header + body


def parse_bind(text: Optional[str]) -> tuple[str, int]:
    text = text or os.environ.get(BIND_ENV) or "127.0.0.1:0"
    host, _, port = text.rpartition(":")
    return host or "127.0.0.1", int(port)


class _HolderHandler(socketserver.StreamRequestHandler):
    def handle(self):
        oracle = self.server.oracle
        self.server.active = self.connection

        def send(msg):
            self.wfile.write(encode_frame(msg))
            self.wfile.flush()

        try:
            hello, _ = read_frame(self.rfile)
        except (ProtocolError, ConnectionError):
            send({"type": "error", "code": "malformed"})
            return
        if hello.get("type") != "hello" or hello.get("version") != VERSION:
            send({"type": "error", "code": "version_mismatch"})
            return
        send({"type": "hello", "version": VERSION, "remaining": oracle.remaining})
        while True:
            try:
                msg, _ = read_frame(self.rfile)
            except ConnectionError:
                return
            except ProtocolError as exc:
                send({"type": "error", "code": exc.code})
                return
            kind = msg.get("type")
            if kind == "finish":
                oracle.finish()
                theta = msg.get("theta")
                if isinstance(theta, list) and hasattr(oracle, "final_report"):
                    # the report stays on the holder's side; only the ack crosses the wire
                    try:
                        self.server.report = oracle.final_report(np.array(theta, dtype=np.float64))
                    except (RuntimeError, ValueError):
                        self.server.report = None
                send({"type": "finish", "remaining": oracle.remaining})
                return
            if kind != "query" or not isinstance(msg.get("theta"), list) or not isinstance(msg.get("id"), int):
                send({"type": "error", "code": "malformed"})
                return
            qid = msg["id"]
            try:
                theta = np.array(msg["theta"], dtype=np.float64)
                scores = oracle.submit(theta)
            except BudgetExhausted:
                send({"type": "error", "code": "budget_exhausted", "id": qid, "remaining": 0})
                continue
            except ProtocolError as exc:
                send({"type": "error", "code": exc.code, "id": qid, "remaining": oracle.remaining})
                continue
            except (TypeError, ValueError):
                send({"type": "error", "code": "malformed"})
                return
            send({"type": "feedback", "id": qid, "scores": list(scores), "remaining": oracle.remaining})


class HolderServer(socketserver.TCPServer):
    """Serves one oracle to one provider connection at a time."""

    allow_reuse_address = True

    def __init__(self, oracle, address=("127.0.0.1", 0)):
        super().__init__(address, _HolderHandler)
        self.oracle = oracle
        self.report = None  # (support, holdout) scores once a provider finishes with a candidate
        self.active = None  # socket of the provider being served
        self._thread: Optional[threading.Thread] = None

    @property
    def address(self) -> tuple[str, int]:
        return self.server_address[:2]

    def start(self) -> "HolderServer":
        self._thread = threading.Thread(target=self.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        if self.active is not None:
            # unblock a handler still waiting on a provider that never said finish
            try:
                self.active.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
        self.shutdown()
        self.server_close()
        if self._thread is not None:
            self._thread.join()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.stop()


def serve(oracle, endpoint: Optional[str] = None, background: bool = True) -> HolderServer:
    """Bind a holder server for ``oracle``; started in a daemon thread by default."""
    server = HolderServer(oracle, parse_bind(endpoint))
    return server.start() if background else server


class RemoteChannel:
    """Provider-side channel speaking the wire protocol.

    ``received_frames`` keeps every raw holder-to-provider frame when
    ``capture`` is set, so tests can inspect exactly what crossed the wire.
    """

    def __init__(self, host: str, port: int, capture: bool = False, timeout: float = 30.0):
        self.sock = socket.create_connection((host, port), timeout=timeout)
        self.capture = capture
        self.received_frames: list[bytes] = []
        self.bytes_sent = 0
        self.bytes_received = 0
        self._next_id = 1
        reply = self._roundtrip({"type": "hello", "version": VERSION})
        if reply.get("type") != "hello":
            raise ProtocolError(reply.get("code", "handshake_failed"))
        self.remaining = int(reply["remaining"])

    def _roundtrip(self, msg: dict) -> dict:
        frame = encode_frame(msg)
        self.sock.sendall(frame)
        self.bytes_sent += len(frame)
        reply, raw = read_frame(self.sock)
        self.bytes_received += len(raw)
        if self.capture:
            self.received_frames.append(raw)
        return reply

    def submit(self, theta) -> tuple[float, ...]:
        qid = self._next_id
        self._next_id += 1
        theta = [float(v) for v in np.asarray(theta, dtype=np.float64).reshape(-1)]
        reply = self._roundtrip({"type": "query", "id": qid, "theta": theta})
        if reply.get("type") == "error":
            if "remaining" in reply:
                self.remaining = int(reply["remaining"])
            if reply.get("code") == "budget_exhausted":
                raise BudgetExhausted("budget_exhausted")
            raise ProtocolError(reply.get("code", "unknown"))
        if reply.get("id") != qid:
            raise ProtocolError("id_mismatch", f"sent {qid}, got {reply.get('id')}")
        self.remaining = int(reply["remaining"])
        return tuple(float(s) for s in reply["scores"])

    def finish(self, theta=None) -> None:
        """End the session; ``theta`` names the provider's final candidate for the holder's report."""
        msg = {"type": "finish"}
        if theta is not None:
            msg["theta"] = [float(v) for v in np.asarray(theta, dtype=np.float64).reshape(-1)]
        try:
            self._roundtrip(msg)
        finally:
            self.close()

    def close(self) -> None:
        self.sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def connect(endpoint: str, capture: bool = False) -> RemoteChannel:
    host, port = parse_bind(endpoint)
    return RemoteChannel(host, port, capture=capture)
