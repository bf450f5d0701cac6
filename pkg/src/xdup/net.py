"""Framed TCP transport with byte accounting and optional link shaping.

Frame layout: 4-byte big-endian payload length, 1-byte type, payload.
"""

from __future__ import annotations

import collections
import queue
import socket
import struct
import threading
import time
from dataclasses import dataclass, field
from enum import IntEnum

HEADER = struct.Struct("!IB")
HEADER_SIZE = HEADER.size
DEFAULT_MAX_FRAME = 64 * 1024 * 1024
CHUNK_SIZE = 4 * 1024 * 1024


class FrameType(IntEnum):
    HELLO = 0x01
    PARAMS = 0x02
    ERROR = 0x0F
    OT_INIT = 0x10
    OT_BASE_MSG1 = 0x11
    OT_BASE_MSG2 = 0x12
    OT_PAYLOAD = 0x13
    OT_DONE = 0x14
    FPSI_HELLO = 0x20
    FPSI_PARAMS = 0x21
    FPSI_DONE = 0x22
    SHARES_PUT = 0x30
    SHARES_ACK = 0x31
    RESULT_GET = 0x32
    RESULT_DATA = 0x33
    LENGTHS_DATA = 0x34
    INFO_GET = 0x35
    INFO_DATA = 0x36
    PEER_PROCESS = 0x40
    PEER_READY = 0x41
    PEER_PREPARE = 0x42
    PEER_COMMIT = 0x43
    PEER_ACK = 0x44


class ErrorCode(IntEnum):
    PROTOCOL = 1
    PARAMS = 2
    NOT_FOUND = 3
    CONFLICT = 4
    FAILED = 5
    INTERNAL = 6


class ProtocolError(Exception):
    """Malformed, oversized, truncated, or unexpected frame."""


class RemoteError(ProtocolError):
    """The peer sent an ERROR frame."""

    def __init__(self, code: int, message: str):
        super().__init__(f"remote error {code}: {message}")
        self.code = code
        self.message = message


@dataclass(frozen=True)
class NetShape:
    """Emulated link: bandwidth in bit/s and one-way latency in ms."""

    bandwidth_bps: float
    latency_ms: float = 0.0
    burst_bytes: int = 16 * 1024

    def __post_init__(self):
        if self.bandwidth_bps <= 0:
            raise ValueError("bandwidth must be positive when shaped")
        if self.latency_ms < 0:
            raise ValueError("latency must be non-negative")

    @classmethod
    def named(cls, name: str) -> "NetShape | None":
        name = name.lower()
        if name in ("none", "unshaped"):
            return None
        if name == "gigabit":
            return GIGABIT
        if name == "slow":
            return SLOW
        raise ValueError(f"unknown network shape {name!r}")


GIGABIT = NetShape(1e9, 0.5)
SLOW = NetShape(250e6, 20.0)


@dataclass
class NetStats:
    bytes_sent: int = 0
    bytes_received: int = 0
    frames_sent: int = 0
    frames_received: int = 0
    sent_by_type: collections.Counter = field(default_factory=collections.Counter)
    received_by_type: collections.Counter = field(default_factory=collections.Counter)

    def snapshot(self) -> "NetStats":
        return NetStats(
            self.bytes_sent,
            self.bytes_received,
            self.frames_sent,
            self.frames_received,
            collections.Counter(self.sent_by_type),
            collections.Counter(self.received_by_type),
        )


class _ShapedWriter(threading.Thread):
    """Releases frames onto the socket after token-bucket and latency delays.

    Release times are computed in virtual time at enqueue, so the writer
    never reorders frames and the sender never blocks on the link.
    """

    def __init__(self, sock: socket.socket, shape: NetShape):
        super().__init__(daemon=True, name="xdup-shaper")
        self.sock = sock
        self.rate = shape.bandwidth_bps
        self.capacity = shape.burst_bytes * 8.0
        self.latency = shape.latency_ms / 1000.0
        self.tokens = self.capacity
        self.t_tokens = time.monotonic()
        self.queue: queue.Queue = queue.Queue()
        self.error: BaseException | None = None
        self.start()

    def submit(self, data: bytes):
        if self.error is not None:
            raise ConnectionError("shaped link failed") from self.error
        now = time.monotonic()
        t = max(now, self.t_tokens)
        tokens = min(self.capacity, self.tokens + (t - self.t_tokens) * self.rate)
        need = len(data) * 8.0
        if tokens >= need:
            tokens -= need
        else:
            t += (need - tokens) / self.rate
            tokens = 0.0
        self.tokens, self.t_tokens = tokens, t
        self.queue.put((t + self.latency, data))

    def run(self):
        while True:
            item = self.queue.get()
            if item is None:
                return
            release, data = item
            delay = release - time.monotonic()
            if delay > 0:
                time.sleep(delay)
            try:
                self.sock.sendall(data)
            except OSError as exc:
                self.error = exc
                return

    def close(self):
        self.queue.put(None)
        self.join(timeout=30)


class Connection:
    """Ordered, reliable, framed channel over a connected TCP socket."""

    def __init__(self, sock: socket.socket, shape: NetShape | None = None, max_frame: int = DEFAULT_MAX_FRAME):
        self.sock = sock
        self.shape = shape
        self.max_frame = max_frame
        self.stats = NetStats()
        self._writer = _ShapedWriter(sock, shape) if shape is not None else None
        self._rfile = sock.makefile("rb", buffering=1 << 16)
        self._closed = False
        try:
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        except OSError:
            pass

    def send_frame(self, ftype: int, payload: bytes = b""):
        ftype = FrameType(ftype)
        if len(payload) > self.max_frame:
            raise ProtocolError(f"frame of {len(payload)} bytes exceeds limit {self.max_frame}")
        data = HEADER.pack(len(payload), ftype) + payload
        if self._writer is not None:
            self._writer.submit(data)
        else:
            self.sock.sendall(data)
        self.stats.bytes_sent += len(data)
        self.stats.frames_sent += 1
        self.stats.sent_by_type[ftype] += len(data)

    def _read_exact(self, n: int) -> bytes:
        data = self._rfile.read(n)
        if data is None or len(data) < n:
            got = 0 if data is None else len(data)
            raise ProtocolError(f"truncated frame: wanted {n} bytes, got {got}")
        return data

    def recv_frame(self) -> tuple[FrameType, bytes]:
        head = self._rfile.read(HEADER_SIZE)
        if not head:
            raise ConnectionError("connection closed by peer")
        if len(head) < HEADER_SIZE:
            raise ProtocolError("truncated frame header")
        length, raw_type = HEADER.unpack(head)
        if length > self.max_frame:
            raise ProtocolError(f"frame of {length} bytes exceeds limit {self.max_frame}")
        try:
            ftype = FrameType(raw_type)
        except ValueError:
            raise ProtocolError(f"unknown frame type 0x{raw_type:02x}") from None
        payload = self._read_exact(length) if length else b""
        self.stats.bytes_received += HEADER_SIZE + length
        self.stats.frames_received += 1
        self.stats.received_by_type[ftype] += HEADER_SIZE + length
        return ftype, payload

    def expect(self, *ftypes: int) -> bytes:
        """Receive one frame of an allowed type; ERROR frames raise."""
        ftype, payload = self.recv_frame()
        if ftype == FrameType.ERROR and FrameType.ERROR not in ftypes:
            code, message = decode_error(payload)
            raise RemoteError(code, message)
        if ftype not in ftypes:
            names = ", ".join(FrameType(t).name for t in ftypes)
            raise ProtocolError(f"expected {names}, got {ftype.name}")
        return payload

    def send_error(self, code: int, message: str):
        try:
            self.send_frame(FrameType.ERROR, encode_error(code, message))
        except OSError:
            pass

    def close(self):
        if self._closed:
            return
        self._closed = True
        if self._writer is not None:
            self._writer.close()
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._rfile.close()
        self.sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def encode_error(code: int, message: str) -> bytes:
    return struct.pack("!H", code) + message.encode("utf-8")


def decode_error(payload: bytes) -> tuple[int, str]:
    if len(payload) < 2:
        return ErrorCode.PROTOCOL, "malformed error frame"
    (code,) = struct.unpack("!H", payload[:2])
    return code, payload[2:].decode("utf-8", errors="replace")


def send_blob(conn: Connection, ftype: int, data: bytes, chunk: int = CHUNK_SIZE):
    """Send a logical message of any size as a run of frames of one type.

    The first frame starts with the 8-byte big-endian total length.
    """
    head = struct.pack("!Q", len(data))
    first = chunk - len(head)
    conn.send_frame(ftype, head + data[:first])
    for start in range(first, len(data), chunk):
        conn.send_frame(ftype, data[start : start + chunk])


def recv_blob(conn: Connection, ftype: int) -> bytes:
    first = conn.expect(ftype)
    if len(first) < 8:
        raise ProtocolError("blob header truncated")
    (total,) = struct.unpack("!Q", first[:8])
    parts = [first[8:]]
    got = len(parts[0])
    while got < total:
        part = conn.expect(ftype)
        parts.append(part)
        got += len(part)
    if got != total:
        raise ProtocolError("blob length mismatch")
    return b"".join(parts)


def listen(host: str = "127.0.0.1", port: int = 0, backlog: int = 16) -> socket.socket:
    srv = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    srv.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    srv.bind((host, port))
    srv.listen(backlog)
    return srv


def accept(listener: socket.socket, shape: NetShape | None = None, **kw) -> Connection:
    sock, _ = listener.accept()
    return Connection(sock, shape, **kw)


def connect(host: str, port: int, shape: NetShape | None = None, timeout: float = 10.0, **kw) -> Connection:
    sock = socket.create_connection((host, port), timeout=timeout)
    sock.settimeout(None)
    return Connection(sock, shape, **kw)


def parse_endpoint(text: str) -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"endpoint must be host:port, got {text!r}")
    return host, int(port)


def loopback_pair(shape: NetShape | None = None, **kw) -> tuple[Connection, Connection]:
    """Two connected endpoints over TCP on 127.0.0.1; both directions shaped."""
    with listen() as srv:
        client = socket.create_connection(srv.getsockname())
        server, _ = srv.accept()
    return Connection(client, shape, **kw), Connection(server, shape, **kw)
