"""Idealised OT through a trusted in-process dealer (tests and benchmarks).

Batch ``b`` of random messages is a pure function of ``(seed, b)``, so the
two roles never need to rendezvous and the ledger can regenerate any batch
on demand. Choices are recorded, never transmitted.

A dealer instance serves one sender and one receiver in one direction.
Two processes configured with the same seed form a working (and insecure)
dealer pair, which is what the command-line benchmarks use.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np

from ..net import Connection
from .base import OtError, check_choices


@dataclass
class LedgerEntry:
    batch: int
    count: int
    arity: int
    choices: np.ndarray | None = None


class DealerOT:
    def __init__(self, seed: int = 0, record: bool = False):
        self.seed = seed
        self.record = record
        self.ledger: list[LedgerEntry] = []
        self._lock = threading.Lock()
        self._next = {"send": 0, "recv": 0}
        self._pending: dict[int, tuple[int, int]] = {}

    def batch_seeds(self, batch: int, count: int, arity: int) -> np.ndarray:
        bitgen = np.random.PCG64(np.random.SeedSequence([self.seed, batch]))
        return bitgen.random_raw(count * arity * 2).astype(np.uint64).reshape(count, arity, 2)

    def _claim(self, side: str, count: int, arity: int) -> int:
        with self._lock:
            batch = self._next[side]
            self._next[side] += 1
            other = self._pending.pop(batch, None)
            if other is None:
                self._pending[batch] = (count, arity)
            elif other != (count, arity):
                raise OtError(f"dealer batch {batch}: sender/receiver specs differ {other} vs {(count, arity)}")
        return batch

    def send_random(self, conn: Connection, count: int, arity: int) -> np.ndarray:
        batch = self._claim("send", count, arity)
        return self.batch_seeds(batch, count, arity)

    def receive_random(self, conn: Connection, choices, arity: int) -> np.ndarray:
        c = check_choices(choices, arity)
        batch = self._claim("recv", c.size, arity)
        if self.record:
            with self._lock:
                self.ledger.append(LedgerEntry(batch, c.size, arity, c.copy()))
        seeds = self.batch_seeds(batch, c.size, arity)
        return seeds[np.arange(c.size), c]
