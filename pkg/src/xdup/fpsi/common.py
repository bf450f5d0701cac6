from __future__ import annotations

import struct
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..core import BitString, DimensionError, bits_matrix
from ..net import Connection, ErrorCode, FrameType, NetShape, NetStats, ProtocolError, RemoteError, loopback_pair
from ..ot import OtStats

PROTOCOL_VERSION = 1
PLAIN = "FPSI"
SS = "SSFPSI"
SSB = "SSBFPSI"

_HELLO = struct.Struct("!8sH")
_PARAMS = struct.Struct("!IIIIB")

DISTANCE_OT_MODES = ("correlated", "chosen")


class ParamsMismatch(Exception):
    """The two endpoints disagree on protocol parameters."""


class BatchingNotApplicable(ValueError):
    """Batched secret-shared FPSI needs at least two query elements."""


@dataclass(frozen=True)
class FpsiParams:
    dimension: int
    tau: int
    nq: int | None = None
    nr: int | None = None

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be >= 1")
        if not 0 <= self.tau <= self.dimension:
            raise ValueError(f"threshold {self.tau} outside [0, {self.dimension}]")
        for n in (self.nq, self.nr):
            if n is not None and n < 1:
                raise ValueError("set sizes must be >= 1")

    @property
    def modulus(self) -> int:
        return self.dimension + 1


@dataclass
class MatchMatrix:
    bits: np.ndarray

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=np.uint8)
        if self.bits.ndim != 2:
            raise ValueError("match matrix must be 2-D")

    @property
    def shape(self) -> tuple[int, int]:
        return self.bits.shape

    def pairs(self) -> set[tuple[int, int]]:
        """Index set of matches, 0-based ``(query, responder)``."""
        return {(int(i), int(j)) for i, j in zip(*np.nonzero(self.bits))}

    @classmethod
    def from_pairs(cls, pairs, nq: int, nr: int) -> "MatchMatrix":
        bits = np.zeros((nq, nr), dtype=np.uint8)
        for i, j in pairs:
            bits[i, j] = 1
        return cls(bits)

    def __eq__(self, other) -> bool:
        return isinstance(other, MatchMatrix) and np.array_equal(self.bits, other.bits)


def reconstruct_matches(p1, p2) -> MatchMatrix:
    a, b = np.asarray(p1, dtype=np.uint8), np.asarray(p2, dtype=np.uint8)
    if a.shape != b.shape:
        raise DimensionError(f"share shapes differ: {a.shape} vs {b.shape}")
    return MatchMatrix(a ^ b)


def as_bit_rows(items, dimension: int | None = None) -> np.ndarray:
    """Accept a list of BitStrings or an ``(n, l)`` 0/1 array."""
    if isinstance(items, np.ndarray):
        arr = items.astype(np.uint8, copy=False)
        if arr.ndim != 2:
            raise ValueError("bit matrix must be 2-D")
        if dimension is not None and arr.shape[1] != dimension:
            raise DimensionError(f"expected dimension {dimension}, got {arr.shape[1]}")
        if arr.size and arr.max() > 1:
            raise ValueError("bit matrix entries must be 0 or 1")
        return arr
    items = list(items)
    if dimension is None and not items:
        raise ValueError("cannot infer dimension of an empty set")
    return bits_matrix(items, dimension)


def threshold_table(masks: np.ndarray, tau: int, modulus: int) -> np.ndarray:
    """Row n is ``((x - masks[n]) mod p <= tau)`` for every ``x`` in ``Z_p``."""
    xs = np.arange(modulus, dtype=np.int64)
    return (((xs[None, :] - np.asarray(masks, dtype=np.int64).reshape(-1, 1)) % modulus) <= tau).astype(np.uint8)


def send_hello(conn: Connection, protocol: str, params: FpsiParams, mode: int = 0) -> FpsiParams:
    """Initiator half of the handshake; returns the parameters the peer echoed."""
    conn.send_frame(FrameType.FPSI_HELLO, _HELLO.pack(protocol.encode(), PROTOCOL_VERSION))
    conn.send_frame(FrameType.FPSI_PARAMS, _PARAMS.pack(params.dimension, params.tau, params.nq, params.nr, mode))
    try:
        echo = conn.expect(FrameType.FPSI_PARAMS)
    except RemoteError as exc:
        raise ParamsMismatch(exc.message) from exc
    l, tau, nq, nr, _ = _PARAMS.unpack(echo)
    return FpsiParams(l, tau, nq, nr)


def accept_hello(conn: Connection, protocol: str, params: FpsiParams) -> tuple[FpsiParams, int]:
    """Responder half. ``None`` set sizes in ``params`` accept the peer's value."""
    raw = conn.expect(FrameType.FPSI_HELLO)
    if len(raw) != _HELLO.size:
        conn.send_error(ErrorCode.PROTOCOL, "malformed FPSI_HELLO")
        raise ParamsMismatch("malformed FPSI_HELLO")
    proto, version = _HELLO.unpack(raw)
    raw = conn.expect(FrameType.FPSI_PARAMS)
    if len(raw) != _PARAMS.size:
        conn.send_error(ErrorCode.PROTOCOL, "malformed FPSI_PARAMS")
        raise ParamsMismatch("malformed FPSI_PARAMS")
    l, tau, nq, nr, mode = _PARAMS.unpack(raw)
    problems = []
    if proto.rstrip(b"\0").decode(errors="replace") != protocol:
        problems.append(f"protocol {proto.rstrip(bytes(1))!r} != {protocol}")
    if version != PROTOCOL_VERSION:
        problems.append(f"version {version} != {PROTOCOL_VERSION}")
    if (l, tau) != (params.dimension, params.tau):
        problems.append(f"(l, tau) = {(l, tau)} != {(params.dimension, params.tau)}")
    if params.nq is not None and nq != params.nq:
        problems.append(f"nQ {nq} != {params.nq}")
    if params.nr is not None and nr != params.nr:
        problems.append(f"nR {nr} != {params.nr}")
    if problems:
        message = "; ".join(problems)
        conn.send_error(ErrorCode.PARAMS, message)
        raise ParamsMismatch(message)
    agreed = FpsiParams(l, tau, nq, nr)
    conn.send_frame(FrameType.FPSI_PARAMS, raw)
    return agreed, mode


@dataclass
class PartyReport:
    ot: OtStats = field(default_factory=OtStats)
    net: NetStats | None = None
    seconds: float = 0.0


@dataclass
class RunReport:
    """Both parties' accounting for one in-process protocol run."""

    initiator: PartyReport
    responder: PartyReport
    seconds: float

    @property
    def ot_count(self):
        return self.initiator.ot.ot_count

    @property
    def total_bytes(self) -> int:
        return self.initiator.net.bytes_sent + self.responder.net.bytes_sent


def run_pair(
    initiator: Callable[[Connection, OtStats], object],
    responder: Callable[[Connection, OtStats], object],
    shape: NetShape | None = None,
) -> tuple[object, object, RunReport]:
    """Run two protocol roles on a loopback connection pair, in two threads.

    Any failure on either side is re-raised after both threads stop.
    """
    a, b = loopback_pair(shape)
    reports = (PartyReport(), PartyReport())
    results: list[object] = [None, None]
    errors: list[BaseException | None] = [None, None]

    def role(idx, fn, conn):
        t0 = time.perf_counter()
        try:
            results[idx] = fn(conn, reports[idx].ot)
        except BaseException as exc:  # noqa: BLE001 - re-raised below
            errors[idx] = exc
            conn.close()
        finally:
            reports[idx].seconds = time.perf_counter() - t0

    t0 = time.perf_counter()
    other = threading.Thread(target=role, args=(1, responder, b), daemon=True)
    other.start()
    role(0, initiator, a)
    other.join()
    seconds = time.perf_counter() - t0
    for conn, rep in ((a, reports[0]), (b, reports[1])):
        rep.net = conn.stats.snapshot()
        conn.close()
    # prefer the root cause over the peer's broken-link error
    for exc in errors:
        if exc is not None and not _is_link_error(exc):
            raise exc
    for exc in errors:
        if exc is not None:
            raise exc
    return results[0], results[1], RunReport(reports[0], reports[1], seconds)


def _is_link_error(exc: BaseException) -> bool:
    if isinstance(exc, RemoteError):
        return False
    return isinstance(exc, (ConnectionError, OSError, ProtocolError))


def check_rows(rows: Sequence | np.ndarray, dimension: int, what: str) -> np.ndarray:
    arr = as_bit_rows(rows, dimension)
    if arr.shape[0] < 1:
        raise ValueError(f"{what} must be non-empty")
    return arr


def bitstrings(rows: np.ndarray) -> list[BitString]:
    return [BitString.from_bits(r) for r in rows]
