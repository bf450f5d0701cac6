"""JSON-headed messages for the node and client links.

A message is a blob (see ``net.send_blob``) holding a 4-byte big-endian
header length, a UTF-8 JSON header, and an optional binary body.
"""

from __future__ import annotations

import json
import struct

from ..net import Connection, ErrorCode, FrameType, ProtocolError, RemoteError, decode_error, recv_blob, send_blob

_LEN = struct.Struct("!I")


def send_message(conn: Connection, ftype: int, header: dict, body: bytes = b""):
    raw = json.dumps(header, separators=(",", ":")).encode()
    send_blob(conn, ftype, _LEN.pack(len(raw)) + raw + body)


def recv_message(conn: Connection, ftype: int) -> tuple[dict, bytes]:
    data = recv_blob(conn, ftype)
    return decode_message(data)


def decode_message(data: bytes) -> tuple[dict, bytes]:
    if len(data) < _LEN.size:
        raise ProtocolError("message header truncated")
    (n,) = _LEN.unpack_from(data)
    if _LEN.size + n > len(data):
        raise ProtocolError("message header truncated")
    try:
        header = json.loads(data[_LEN.size : _LEN.size + n])
    except ValueError as exc:
        raise ProtocolError(f"bad message header: {exc}") from None
    if not isinstance(header, dict):
        raise ProtocolError("message header must be a JSON object")
    return header, data[_LEN.size + n :]


def recv_any(conn: Connection) -> tuple[FrameType, dict, bytes]:
    """Next message of any type; ERROR frames raise :class:`RemoteError`."""
    ftype, first = conn.recv_frame()
    if ftype == FrameType.ERROR:
        code, message = decode_error(first)
        raise RemoteError(code, message)
    if len(first) < 8:
        raise ProtocolError("blob header truncated")
    total = struct.unpack("!Q", first[:8])[0]
    parts, got = [first[8:]], len(first) - 8
    while got < total:
        part = conn.expect(ftype)
        parts.append(part)
        got += len(part)
    if got != total:
        raise ProtocolError("blob length mismatch")
    header, body = decode_message(b"".join(parts))
    return ftype, header, body


__all__ = ["ErrorCode", "recv_any", "recv_message", "send_message"]
