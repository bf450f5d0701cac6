"""Protocol benchmarks: one CSV row per configuration.

Columns (stable): protocol, l, tau, nq, nr, ot, shape, repeat, seconds,
initiator_sent, initiator_received, responder_sent, responder_received,
ot_total, ot_arity2, ot_arityp, payload_bits. The initiator is the querier
for ``plain`` and node S1 for ``ss``/``ssb``. ``seconds`` is the median over
``repeat`` runs; every other column is deterministic under the seed.
"""

from __future__ import annotations

import csv
import io
import statistics
from dataclasses import asdict, dataclass

import numpy as np

from .core import Rng
from .fpsi import otfpsi_run, otfpsi_ss_run, share_set
from .fpsi.common import RunReport
from .net import NetShape

COLUMNS = (
    "protocol",
    "l",
    "tau",
    "nq",
    "nr",
    "ot",
    "shape",
    "repeat",
    "seconds",
    "initiator_sent",
    "initiator_received",
    "responder_sent",
    "responder_received",
    "ot_total",
    "ot_arity2",
    "ot_arityp",
    "payload_bits",
)


@dataclass
class BenchRow:
    protocol: str
    l: int
    tau: int
    nq: int
    nr: int
    ot: str
    shape: str
    repeat: int
    seconds: float
    initiator_sent: int
    initiator_received: int
    responder_sent: int
    responder_received: int
    ot_total: int
    ot_arity2: int
    ot_arityp: int
    payload_bits: int


def run_once(protocol: str, l: int, tau: int, nq: int, nr: int, ot: str = "dealer", shape: str = "none", seed: int = 0) -> RunReport:
    rng = np.random.default_rng(seed)
    q = rng.integers(0, 2, (nq, l), dtype=np.uint8)
    r = rng.integers(0, 2, (nr, l), dtype=np.uint8)
    net = NetShape.named(shape)
    if protocol == "plain":
        _, report = otfpsi_run(q, r, tau, backend=ot, shape=net, seed=seed)
        return report
    if protocol in ("ss", "ssb"):
        sharer = Rng(seed)
        _, _, report = otfpsi_ss_run(share_set(q, sharer), share_set(r, sharer), tau, protocol=protocol, backend=ot, shape=net, seed=seed)
        return report
    raise ValueError(f"unknown protocol {protocol!r}")


def bench_fpsi(protocol: str, l: int, tau: int, nq: int, nr: int, ot: str = "dealer", shape: str = "none", seed: int = 0, repeat: int = 1) -> BenchRow:
    if repeat < 1:
        raise ValueError("repeat must be >= 1")
    reports = [run_once(protocol, l, tau, nq, nr, ot, shape, seed) for _ in range(repeat)]
    rep = reports[0]
    counts = rep.initiator.ot.ot_count
    return BenchRow(
        protocol,
        l,
        tau,
        nq,
        nr,
        ot,
        shape,
        repeat,
        statistics.median(r.seconds for r in reports),
        rep.initiator.net.bytes_sent,
        rep.initiator.net.bytes_received,
        rep.responder.net.bytes_sent,
        rep.responder.net.bytes_received,
        sum(counts.values()),
        counts.get(2, 0),
        counts.get(l + 1, 0) if l + 1 != 2 else 0,
        rep.responder.ot.payload_bits,
    )


def to_csv(rows: list[BenchRow], header: bool = True) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=COLUMNS, lineterminator="\n")
    if header:
        writer.writeheader()
    for row in rows:
        d = asdict(row)
        d["seconds"] = f"{row.seconds:.6f}"
        writer.writerow(d)
    return buf.getvalue()
