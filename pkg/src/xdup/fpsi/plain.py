"""Fuzzy PSI between a querier holding Q and a responder holding R.

For each query element the responder masks every bit column of R with a
fresh vector in ``Z_p`` (``p = l + 1``) and the querier picks the branch
matching its own bit by 1-of-2 OT, so that after ``l`` OTs the two hold
``D - M = d_H(q, r_j) mod p`` for all ``j`` at once. One 1-of-p OT per pair
then reveals ``(D - M mod p <= tau)`` to the querier and nothing else.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..core import BitString, Rng
from ..net import Connection, FrameType, NetShape
from ..ot import DealerOT, OtReceiver, OtSender, OtStats, RandomOtBackend
from .common import (
    DISTANCE_OT_MODES,
    PLAIN,
    FpsiParams,
    MatchMatrix,
    ParamsMismatch,
    RunReport,
    accept_hello,
    check_rows,
    run_pair,
    send_hello,
    threshold_table,
)


def query(
    conn: Connection,
    items: Sequence[BitString] | np.ndarray,
    params: FpsiParams,
    backend: RandomOtBackend,
    *,
    distance_ot: str = "correlated",
    stats: OtStats | None = None,
) -> MatchMatrix:
    """Querier role: returns the match matrix, or raises with no partial output."""
    if distance_ot not in DISTANCE_OT_MODES:
        raise ValueError(f"distance_ot must be one of {DISTANCE_OT_MODES}")
    q = check_rows(items, params.dimension, "query set")
    if params.nr is None:
        raise ValueError("querier must know the responder set size")
    params = FpsiParams(params.dimension, params.tau, q.shape[0], params.nr)
    agreed = send_hello(conn, PLAIN, params, DISTANCE_OT_MODES.index(distance_ot))
    if agreed != params:
        raise ParamsMismatch(f"peer echoed {agreed}, sent {params}")
    p, nr = params.modulus, params.nr
    ot = OtReceiver(conn, backend, stats)
    out = np.empty((q.shape[0], nr), dtype=np.uint8)
    for i, row in enumerate(q):
        if distance_ot == "correlated":
            got = ot.correlated(row, 2, nr, p)
        else:
            got = ot.chosen(row, 2, nr, p)
        d = got.sum(axis=0) % p
        out[i] = ot.one_of_n_bits(d, p)
    ot.finish()
    conn.send_frame(FrameType.FPSI_DONE)
    return MatchMatrix(out)


def respond(
    conn: Connection,
    items: Sequence[BitString] | np.ndarray,
    params: FpsiParams,
    backend: RandomOtBackend,
    *,
    rng: Rng | None = None,
    stats: OtStats | None = None,
) -> None:
    """Responder role. ``params.nq`` may be ``None`` to accept any query size."""
    r = check_rows(items, params.dimension, "responder set")
    expected = FpsiParams(params.dimension, params.tau, params.nq, r.shape[0])
    agreed, mode = accept_hello(conn, PLAIN, expected)
    distance_ot = DISTANCE_OT_MODES[mode] if mode < len(DISTANCE_OT_MODES) else "correlated"
    rng = rng or Rng()
    p, nr, l = agreed.modulus, agreed.nr, agreed.dimension
    rt = r.T.astype(np.int64)  # (l, nR): bit column j of R
    ot = OtSender(conn, backend, stats)
    for _ in range(agreed.nq):
        if distance_ot == "correlated":
            # m0 = m + r, and f_1(m0) = m0 + 1 - 2r = m + (1 xor r)
            m0 = ot.correlated(((1 - 2 * rt) % p)[:, None, :], p)
            masks = (m0 - rt).sum(axis=0) % p
        else:
            m = rng.residues(p, (l, nr))
            ot.chosen(np.stack([(m + rt) % p, (m + 1 - rt) % p], axis=1), p)
            masks = m.sum(axis=0) % p
        ot.one_of_n_bits(threshold_table(masks, agreed.tau, p))
    ot.finish()
    conn.expect(FrameType.FPSI_DONE)


def otfpsi_run(
    q_items,
    r_items,
    tau: int,
    *,
    backend: str = "dealer",
    distance_ot: str = "correlated",
    shape: NetShape | None = None,
    seed: int | None = None,
) -> tuple[MatchMatrix, RunReport]:
    """Run both roles over loopback; returns the querier's output and accounting."""
    q = check_rows(q_items, None, "query set")
    r = check_rows(r_items, q.shape[1], "responder set")
    params = FpsiParams(q.shape[1], tau, q.shape[0], r.shape[0])
    send_backend, recv_backend = make_backends(backend, seed)
    rng = Rng(seed)
    matches, _, report = run_pair(
        lambda conn, st: query(conn, q, params, recv_backend, distance_ot=distance_ot, stats=st),
        lambda conn, st: respond(conn, r, FpsiParams(params.dimension, tau), send_backend, rng=rng, stats=st),
        shape,
    )
    return matches, report


def make_backends(kind: str, seed: int | None = None) -> tuple[RandomOtBackend, RandomOtBackend]:
    """(sender, receiver) backend pair for an in-process run."""
    if kind == "dealer":
        dealer = DealerOT(0 if seed is None else seed)
        return dealer, dealer
    if kind == "group":
        from ..ot import GroupOT

        base = Rng(seed)
        return GroupOT(base.spawn("sender")), GroupOT(base.spawn("receiver"))
    raise ValueError(f"unknown OT backend {kind!r}")
