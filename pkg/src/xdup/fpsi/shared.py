"""Fuzzy PSI on XOR-shared inputs between two compute nodes S1 and S2.

Each node holds one share of every query and responder element and ends
with one share of the match matrix. S1 is always the OT receiver and S2
always the sender.

Per comparison bit ``b = q[k] xor r[k] = b1 xor b2`` with ``b_s`` computed
locally from node ``s``'s shares. S2 picks a mask ``m`` and arranges that
S1 ends with ``d = m + b (mod p)``; summing over ``k`` leaves ``D - M`` equal
to the Hamming distance. S2 then offers the table
``((x - M) mod p <= tau) xor P2`` and S1 fetches entry ``D`` as its share P1.

``ss`` runs one 1-of-2 OT per ``(i, j, k)``. ``ssb`` instead runs one random
OT per bit of every input share, so S1 holds a seed for ``(i, k)`` and one for
``(j, k)``; per comparison S2 derives four PRF values from the seed pairs and
sends three correction terms.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..core import BitString, DimensionError, Rng, prf_blocks
from ..net import Connection, FrameType, NetShape
from ..ot import OtReceiver, OtSender, OtStats, RandomOtBackend
from .common import (
    SS,
    SSB,
    BatchingNotApplicable,
    FpsiParams,
    MatchMatrix,
    ParamsMismatch,
    RunReport,
    accept_hello,
    check_rows,
    reconstruct_matches,
    run_pair,
    send_hello,
    threshold_table,
)
from .plain import make_backends

PROTOCOLS = {"ss": SS, "ssb": SSB}


def _shares(q_share, r_share, dimension: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    q = check_rows(q_share, dimension, "query shares")
    r = check_rows(r_share, q.shape[1], "responder shares")
    return q, r


def _check_protocol(protocol: str, nq: int):
    if protocol not in PROTOCOLS:
        raise ValueError(f"protocol must be one of {sorted(PROTOCOLS)}")
    if protocol == "ssb" and nq < 2:
        raise BatchingNotApplicable("batching is not applicable with a single query element; use ss")


def ssb_prf_inputs(nq: int, nr: int, k: int) -> np.ndarray:
    """PRF input blocks ``(nq, nr, 2)`` for comparisons ``(i, j, k)``.

    Byte layout: 2-byte length (12), 4-byte i, 4-byte j, 4-byte k, 2 zero
    bytes, all little-endian; identical to ``encode_prf_input``.
    """
    i = np.arange(nq, dtype=np.uint64)[:, None]
    j = np.arange(nr, dtype=np.uint64)[None, :]
    w0 = np.uint64(12) | (i << np.uint64(16)) | ((j & np.uint64(0xFFFF)) << np.uint64(48))
    w1 = (j >> np.uint64(16)) | (np.uint64(k) << np.uint64(16))
    w0, w1 = np.broadcast_arrays(w0, w1)
    return np.stack([w0, w1], axis=-1)


def _prf_pairs(keys: np.ndarray, inputs: np.ndarray, modulus: int) -> np.ndarray:
    """Both 64-bit halves of F_key(input), each reduced mod p."""
    shape = inputs.shape
    words = prf_blocks(np.broadcast_to(keys, shape).reshape(-1, 2), inputs.reshape(-1, 2))
    return (words % np.uint64(modulus)).astype(np.int64).reshape(shape)


def node1(
    conn: Connection,
    q_share: Sequence[BitString] | np.ndarray,
    r_share: Sequence[BitString] | np.ndarray,
    params: FpsiParams,
    backend: RandomOtBackend,
    *,
    protocol: str = "ss",
    stats: OtStats | None = None,
    trace: dict | None = None,
) -> np.ndarray:
    """S1: initiates the session; returns its ``(nQ, nR)`` result share."""
    q, r = _shares(q_share, r_share, params.dimension)
    nq, nr = q.shape[0], r.shape[0]
    _check_protocol(protocol, nq)
    params = FpsiParams(params.dimension, params.tau, nq, nr)
    agreed = send_hello(conn, PROTOCOLS[protocol], params)
    if agreed != params:
        raise ParamsMismatch(f"peer echoed {agreed}, sent {params}")
    p, l = params.modulus, params.dimension
    ot = OtReceiver(conn, backend, stats)
    acc = np.zeros((nq, nr), dtype=np.int64)
    for k in range(l):
        qk, rk = q[:, k].astype(np.int64), r[:, k].astype(np.int64)
        if protocol == "ss":
            b1 = (qk[:, None] ^ rk[None, :]).reshape(-1)
            d = ot.correlated(b1, 2, 1, p).reshape(nq, nr)
        else:
            seeds = ot.seeds(np.concatenate([qk, rk]), 2)
            x_keys, y_keys = seeds[:nq], seeds[nq:]
            inputs = ssb_prf_inputs(nq, nr, k)
            fx = _prf_pairs(x_keys[:, None, :], inputs, p)
            fy = _prf_pairs(y_keys[None, :, :], inputs, p)
            # X_i = X^{q1}: half r1 gives x = 2 q1 + r1; Y_j = Y^{r1}: half q1
            f = (np.where(rk[None, :] == 1, fx[..., 1], fx[..., 0]) + np.where(qk[:, None] == 1, fy[..., 1], fy[..., 0])) % p
            mu = ot.recv_payload((nq * nr, 3), p).reshape(nq, nr, 3)
            c = 2 * qk[:, None] + rk[None, :]
            mu_c = np.take_along_axis(mu, np.maximum(c - 1, 0)[..., None], axis=-1)[..., 0]
            d = (f + np.where(c == 0, 0, mu_c)) % p
            if trace is not None:
                trace.setdefault("d", []).append(d.copy())
        acc += d
    share = ot.one_of_n_bits((acc % p).reshape(-1), p).reshape(nq, nr)
    ot.finish()
    conn.send_frame(FrameType.FPSI_DONE)
    return share


def node2(
    conn: Connection,
    q_share: Sequence[BitString] | np.ndarray,
    r_share: Sequence[BitString] | np.ndarray,
    params: FpsiParams,
    backend: RandomOtBackend,
    *,
    protocol: str = "ss",
    rng: Rng | None = None,
    stats: OtStats | None = None,
    trace: dict | None = None,
) -> np.ndarray:
    """S2: answers S1's session; returns its ``(nQ, nR)`` result share."""
    q, r = _shares(q_share, r_share, params.dimension)
    nq, nr = q.shape[0], r.shape[0]
    _check_protocol(protocol, nq)
    agreed, _ = accept_hello(conn, PROTOCOLS[protocol], FpsiParams(params.dimension, params.tau, nq, nr))
    rng = rng or Rng()
    p, l = agreed.modulus, agreed.dimension
    ot = OtSender(conn, backend, stats)
    acc = np.zeros((nq, nr), dtype=np.int64)
    for k in range(l):
        qk, rk = q[:, k].astype(np.int64), r[:, k].astype(np.int64)
        b2 = qk[:, None] ^ rk[None, :]
        if protocol == "ss":
            # m0 = m + b2 and f_1(m0) = m + (1 xor b2)
            m0 = ot.correlated(((1 - 2 * b2) % p).reshape(-1, 1, 1), p).reshape(nq, nr)
            m = (m0 - b2) % p
        else:
            seeds = ot.seeds(nq + nr, 2)
            x_keys, y_keys = seeds[:nq], seeds[nq:]
            inputs = ssb_prf_inputs(nq, nr, k)
            # fx[b][..., h] is omega's X-part for x = 2b + h; fy[b][..., h] for x = 2h + b
            fx = [_prf_pairs(x_keys[:, None, b, :], inputs, p) for b in (0, 1)]
            fy = [_prf_pairs(y_keys[None, :, b, :], inputs, p) for b in (0, 1)]
            omega = [(fx[x >> 1][..., x & 1] + fy[x & 1][..., x >> 1]) % p for x in range(4)]
            m = (omega[0] - b2) % p
            m12 = (m + (1 ^ b2)) % p
            mu = np.stack([(m12 - omega[1]) % p, (m12 - omega[2]) % p, (omega[0] - omega[3]) % p], axis=-1)
            ot.send_payload(mu.reshape(nq * nr, 3), p)
            if trace is not None:
                trace.setdefault("m", []).append(m.copy())
                for b in (0, 1):
                    trace.setdefault("prf", []).append(_trace_rows(x_keys[:, None, b, :], inputs))
                    trace["prf"].append(_trace_rows(y_keys[None, :, b, :], inputs))
        acc += m
    masks = acc % p
    p2 = rng.bits((nq, nr)).astype(np.uint8)
    table = threshold_table(masks.reshape(-1), agreed.tau, p) ^ p2.reshape(-1, 1)
    ot.one_of_n_bits(table)
    ot.finish()
    conn.expect(FrameType.FPSI_DONE)
    return p2


def _trace_rows(keys: np.ndarray, inputs: np.ndarray) -> np.ndarray:
    """``(n, 4)`` rows of key words and input words, for uniqueness audits."""
    k = np.broadcast_to(keys, inputs.shape).reshape(-1, 2)
    return np.concatenate([k, inputs.reshape(-1, 2)], axis=1)


def otfpsi_ss_run(
    q_shares: tuple,
    r_shares: tuple,
    tau: int,
    *,
    protocol: str = "ss",
    backend: str = "dealer",
    shape: NetShape | None = None,
    seed: int | None = None,
    traces: tuple[dict, dict] | None = None,
) -> tuple[np.ndarray, np.ndarray, RunReport]:
    """Run S1 and S2 over loopback; returns ``([P]_1, [P]_2, report)``."""
    q1, r1 = _shares(q_shares[0], r_shares[0])
    q2, r2 = _shares(q_shares[1], r_shares[1], q1.shape[1])
    if q1.shape != q2.shape or r1.shape != r2.shape:
        raise DimensionError("share sets of the two nodes differ in shape")
    _check_protocol(protocol, q1.shape[0])
    params = FpsiParams(q1.shape[1], tau)
    send_backend, recv_backend = make_backends(backend, seed)
    rng = Rng(seed)
    t1, t2 = traces if traces is not None else (None, None)
    p1, p2, report = run_pair(
        lambda conn, st: node1(conn, q1, r1, params, recv_backend, protocol=protocol, stats=st, trace=t1),
        lambda conn, st: node2(conn, q2, r2, params, send_backend, protocol=protocol, rng=rng, stats=st, trace=t2),
        shape,
    )
    return p1, p2, report


def share_set(items, rng: Rng) -> tuple[np.ndarray, np.ndarray]:
    """XOR-share a set: returns ``(s, s xor x)`` as bit matrices."""
    x = check_rows(items, None, "set")
    s = rng.bits(x.shape).astype(np.uint8)
    return s, s ^ x


__all__ = [
    "BatchingNotApplicable",
    "MatchMatrix",
    "node1",
    "node2",
    "otfpsi_ss_run",
    "reconstruct_matches",
    "share_set",
    "ssb_prf_inputs",
]
