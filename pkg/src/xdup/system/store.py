"""Append-only per-team share database with an on-disk replay log.

Log record: 4-byte big-endian team id, 4-byte big-endian index, then the
share packed LSB-first in ``ceil(l/8)`` bytes. One file per team.
"""

from __future__ import annotations

import os
import struct
import threading
from contextlib import contextmanager
from pathlib import Path

import numpy as np

_HEAD = struct.Struct("!II")
_META = "store.meta"


class StoreError(Exception):
    pass


class RWLock:
    """Many readers or one writer; writers are not starved by new readers."""

    def __init__(self):
        self._cond = threading.Condition()
        self._readers = 0
        self._writer = False
        self._waiting = 0

    @contextmanager
    def read(self):
        with self._cond:
            while self._writer or self._waiting:
                self._cond.wait()
            self._readers += 1
        try:
            yield
        finally:
            with self._cond:
                self._readers -= 1
                self._cond.notify_all()

    @contextmanager
    def write(self):
        with self._cond:
            self._waiting += 1
            while self._writer or self._readers:
                self._cond.wait()
            self._waiting -= 1
            self._writer = True
        try:
            yield
        finally:
            with self._cond:
                self._writer = False
                self._cond.notify_all()


class ShareStore:
    """Shares of one node, kept in memory and mirrored to an append-only log.

    ``directory=None`` keeps everything in memory.
    """

    def __init__(self, dimension: int, directory: str | Path | None = None):
        if dimension < 1:
            raise ValueError("dimension must be >= 1")
        self.dimension = dimension
        self.nbytes = (dimension + 7) // 8
        self.directory = Path(directory) if directory is not None else None
        self.lock = RWLock()
        self._teams: dict[int, list[bytes]] = {}
        if self.directory is not None:
            self.directory.mkdir(parents=True, exist_ok=True)
            self._check_meta()
            self._replay()

    def _check_meta(self):
        meta = self.directory / _META
        if meta.exists():
            stored = int(meta.read_text().strip().removeprefix("l="))
            if stored != self.dimension:
                raise StoreError(f"store at {self.directory} holds l={stored}, not {self.dimension}")
        else:
            meta.write_text(f"l={self.dimension}\n")

    def _log_path(self, team: int) -> Path:
        return self.directory / f"team-{team}.log"

    def _replay(self):
        size = _HEAD.size + self.nbytes
        for path in sorted(self.directory.glob("team-*.log")):
            team = int(path.stem.split("-", 1)[1])
            data = path.read_bytes()
            whole = len(data) - len(data) % size
            if whole != len(data):
                # torn tail from a crash mid-append
                with open(path, "r+b") as fh:
                    fh.truncate(whole)
            shares = []
            for off in range(0, whole, size):
                t, idx = _HEAD.unpack_from(data, off)
                if t != team or idx != len(shares):
                    raise StoreError(f"{path.name}: record {len(shares)} carries team {t} index {idx}")
                shares.append(data[off + _HEAD.size : off + size])
            self._teams[team] = shares

    # -- queries (callers hold the read lock for multi-call consistency)

    def teams(self) -> list[int]:
        return sorted(self._teams)

    def has_team(self, team: int) -> bool:
        return team in self._teams

    def length(self, team: int) -> int:
        return len(self._teams.get(team, ()))

    def lengths(self) -> dict[int, int]:
        return {t: len(s) for t, s in sorted(self._teams.items())}

    def shares(self, team: int, count: int | None = None) -> np.ndarray:
        """First ``count`` shares of ``team`` as an ``(n, l)`` bit matrix."""
        rows = self._teams.get(team, [])
        if count is None:
            count = len(rows)
        if count > len(rows):
            raise StoreError(f"team {team} has {len(rows)} shares, {count} requested")
        return unpack_shares(b"".join(rows[:count]), count, self.dimension)

    # -- mutation

    def create_team(self, team: int, shares: np.ndarray):
        with self.lock.write():
            if team in self._teams:
                raise StoreError(f"team {team} already set up")
            self._teams[team] = []
            if self.directory is not None:
                self._log_path(team).touch()
            self._append_locked(team, shares)

    def append(self, team: int, shares: np.ndarray):
        with self.lock.write():
            if team not in self._teams:
                raise StoreError(f"unknown team {team}")
            self._append_locked(team, shares)

    def _append_locked(self, team: int, shares: np.ndarray):
        packed = pack_shares(shares, self.dimension)
        rows = self._teams[team]
        start = len(rows)
        new = [packed[n * self.nbytes : (n + 1) * self.nbytes] for n in range(len(packed) // self.nbytes)]
        if self.directory is not None and new:
            blob = b"".join(_HEAD.pack(team, start + n) + row for n, row in enumerate(new))
            with open(self._log_path(team), "ab") as fh:
                fh.write(blob)
                fh.flush()
                os.fsync(fh.fileno())
        rows.extend(new)


def pack_shares(bits: np.ndarray, dimension: int) -> bytes:
    bits = np.asarray(bits, dtype=np.uint8).reshape(-1, dimension)
    return np.packbits(bits, axis=1, bitorder="little").tobytes()


def unpack_shares(data: bytes, count: int, dimension: int) -> np.ndarray:
    nbytes = (dimension + 7) // 8
    if len(data) != count * nbytes:
        raise ValueError(f"{len(data)} bytes do not hold {count} shares of {dimension} bits")
    if count == 0:
        return np.zeros((0, dimension), dtype=np.uint8)
    packed = np.frombuffer(data, dtype=np.uint8).reshape(count, nbytes)
    bits = np.unpackbits(packed, axis=1, bitorder="little")
    if bits[:, dimension:].any():
        raise ValueError("nonzero padding bits in share")
    return bits[:, :dimension].copy()
