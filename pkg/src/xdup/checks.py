"""Randomised equivalence suite: every protocol against the brute-force oracle."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import Rng
from .fpsi import otfpsi_run, otfpsi_ss_run, reconstruct_matches, share_set
from .oracle import bruteforce_fpsi

DIMENSIONS = (15, 31, 63)


@dataclass
class CheckReport:
    instances: int = 0
    mismatches: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.mismatches


def random_instance(rng: np.random.Generator, max_l: int, max_n: int, min_nq: int = 1):
    dims = [d for d in DIMENSIONS if d <= max_l] or [max_l]
    l = int(rng.choice(dims))
    nq = int(rng.integers(min_nq, max_n + 1))
    nr = int(rng.integers(1, max_n + 1))
    tau = int(rng.integers(0, l + 1))
    q = rng.integers(0, 2, (nq, l), dtype=np.uint8)
    r = rng.integers(0, 2, (nr, l), dtype=np.uint8)
    # plant near neighbours so small thresholds see matches too
    for i in range(min(nq, nr) // 2):
        j = int(rng.integers(nr))
        r[j] = q[i]
        flips = rng.choice(l, size=int(rng.integers(0, min(l, tau + 2) + 1)), replace=False)
        r[j, flips] ^= 1
    return q, r, tau


def oracle_check(instances: int = 200, max_l: int = 63, max_n: int = 16, seed: int = 0, protocols=("plain", "ss", "ssb")) -> CheckReport:
    rng = np.random.default_rng(seed)
    report = CheckReport()
    for n in range(instances):
        for proto in protocols:
            q, r, tau = random_instance(rng, max_l, max_n, 2 if proto == "ssb" else 1)
            truth = bruteforce_fpsi(q.tolist(), r.tolist(), tau)
            if proto == "plain":
                got = otfpsi_run(q, r, tau, seed=n)[0].pairs()
            else:
                sharer = Rng(n)
                p1, p2, _ = otfpsi_ss_run(share_set(q, sharer), share_set(r, sharer), tau, protocol=proto, seed=n)
                got = reconstruct_matches(p1, p2).pairs()
            report.instances += 1
            if got != truth:
                report.mismatches.append(f"{proto} instance {n}: l={q.shape[1]} tau={tau} nq={len(q)} nr={len(r)}")
    return report
