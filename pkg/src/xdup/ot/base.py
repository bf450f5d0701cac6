from __future__ import annotations

import collections
import struct
from dataclasses import dataclass, field
from enum import Enum
from typing import Protocol

import numpy as np

from ..core import LAMBDA
from ..net import Connection


class OtError(Exception):
    """OT batch rejected or desynchronised."""


class OtRole(Enum):
    SENDER = "sender"
    RECEIVER = "receiver"


@dataclass(frozen=True)
class OtBatchSpec:
    count: int
    arity: int
    message_bits: int = LAMBDA

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("OT batch needs count >= 1")
        if self.arity < 2:
            raise ValueError("OT arity must be >= 2")
        if self.message_bits < 1:
            raise ValueError("message_bits must be >= 1")

    _WIRE = struct.Struct("!HIIQ")
    VERSION = 1

    def encode(self) -> bytes:
        return self._WIRE.pack(self.VERSION, self.arity, self.message_bits, self.count)

    @classmethod
    def decode(cls, payload: bytes) -> "OtBatchSpec":
        if len(payload) != cls._WIRE.size:
            raise OtError("malformed OT_INIT")
        version, arity, bits, count = cls._WIRE.unpack(payload)
        if version != cls.VERSION:
            raise OtError(f"OT version mismatch: {version} != {cls.VERSION}")
        return cls(count, arity, bits)


@dataclass
class OtStats:
    """Per-party OT accounting.

    ``ot_count`` counts logical OTs by arity, as the protocols see them.
    ``random_ots`` counts the random 1-of-N instances drawn from the backend
    (a 1-of-p Naor-Pinkas OT draws ``ceil(log2 p)`` random 1-of-2 OTs).
    ``payload_bits`` is the masked-message volume sent by the sender side.
    """

    ot_count: collections.Counter = field(default_factory=collections.Counter)
    random_ots: collections.Counter = field(default_factory=collections.Counter)
    payload_bits: int = 0

    @property
    def total(self) -> int:
        return sum(self.ot_count.values())


class RandomOtBackend(Protocol):
    """Source of random 1-of-N OTs with 128-bit messages.

    Seeds are returned as uint64 pairs: ``(count, arity, 2)`` to the sender,
    ``(count, 2)`` to the receiver.
    """

    def send_random(self, conn: Connection, count: int, arity: int) -> np.ndarray: ...

    def receive_random(self, conn: Connection, choices: np.ndarray, arity: int) -> np.ndarray: ...


def check_choices(choices, arity: int) -> np.ndarray:
    c = np.asarray(choices)
    if c.ndim != 1:
        raise ValueError("choices must be a 1-D sequence")
    if c.size and (c.dtype.kind not in "iub"):
        raise ValueError("choices must be integers")
    c = c.astype(np.int64)
    if c.size and (c.min() < 0 or c.max() >= arity):
        bad = int(c[(c < 0) | (c >= arity)][0])
        raise ValueError(f"choice {bad} outside [0, {arity})")
    return c
