"""Field-team client: setup, query, retrieve."""

from __future__ import annotations

import uuid
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..core import Rng
from ..embedding import EmbeddingParams, Record, embed_many, min_distances
from ..fpsi import MatchMatrix, reconstruct_matches
from ..net import Connection, FrameType, NetShape, connect
from .node import MAX_OFFLINE_QUERY, MODES
from .store import pack_shares
from .wire import recv_message, send_message


@dataclass(frozen=True)
class Duplicate:
    """A match, 1-based: query ``query`` equals record ``record`` of org ``org``."""

    query: int
    org: int
    record: int
    team: int


@dataclass
class QueryResult:
    handle: str
    matrix: MatchMatrix
    teams: list[int]
    lengths: list[int]
    duplicates: list[Duplicate] = field(default_factory=list)


def decode_column(column: int, lengths: Sequence[int]) -> tuple[int, int]:
    """1-based column to 1-based ``(org, record)``.

    ``org`` is the smallest o with ``column <= L[1] + ... + L[o]`` and
    ``record = column - (L[1] + ... + L[o-1])``.
    """
    cum = np.cumsum(np.asarray(lengths, dtype=np.int64))
    if not 1 <= column <= (cum[-1] if cum.size else 0):
        raise ValueError(f"column {column} outside [1, {int(cum[-1]) if cum.size else 0}]")
    o = int(np.searchsorted(cum, column, side="left"))
    before = int(cum[o - 1]) if o else 0
    return o + 1, column - before


def decode_matches(bits: np.ndarray, lengths: Sequence[int], teams: Sequence[int] | None = None) -> list[Duplicate]:
    bits = np.asarray(bits)
    if bits.shape[1] != int(np.sum(lengths)):
        raise ValueError("result width does not match the length vector")
    teams = list(teams) if teams is not None else list(range(1, len(lengths) + 1))
    out = []
    for q, j in zip(*np.nonzero(bits)):
        org, rec = decode_column(int(j) + 1, lengths)
        out.append(Duplicate(int(q) + 1, org, rec, teams[org - 1]))
    return out


def local_dedup(query_bits: np.ndarray, own_bits: np.ndarray | None, tau: int) -> np.ndarray:
    """Indices of query rows to keep: not within tau of own records or of a kept earlier row."""
    keep: list[int] = []
    for n, row in enumerate(query_bits):
        others = [own_bits] if own_bits is not None and len(own_bits) else []
        if keep:
            others.append(query_bits[keep])
        if others and min_distances(row[None, :], np.concatenate(others))[0] <= tau:
            continue
        keep.append(n)
    return np.array(keep, dtype=np.int64)


class TeamClient:
    def __init__(
        self,
        team: int,
        params: EmbeddingParams,
        node1: tuple[str, int],
        node2: tuple[str, int],
        rng: Rng | None = None,
        shape: NetShape | None = None,
    ):
        self.team = team
        self.params = params
        self.nodes = (node1, node2)
        self.rng = rng or Rng()
        self.shape = shape
        self._kept: dict[str, np.ndarray] = {}

    def _connect(self, node: int) -> Connection:
        return connect(*self.nodes[node - 1], shape=self.shape)

    def share(self, bits: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        s = self.rng.bits(bits.shape).astype(np.uint8)
        return s, s ^ bits

    def _put(self, header: dict, shares: tuple[np.ndarray, np.ndarray]) -> list[dict]:
        acks = []
        for node in (1, 2):
            with self._connect(node) as conn:
                body = pack_shares(shares[node - 1], self.params.dimension)
                send_message(conn, FrameType.SHARES_PUT, header, body)
                acks.append(recv_message(conn, FrameType.SHARES_ACK)[0])
        return acks

    def setup(self, records: Sequence[Record] | None = None, bits: np.ndarray | None = None) -> int:
        """Embed, share and upload the team's registration database."""
        bits = self._bits(records, bits)
        acks = self._put({"op": "setup", "team": self.team, "count": len(bits), "dimension": self.params.dimension}, self.share(bits))
        return int(acks[0]["length"])

    def query(
        self,
        records: Sequence[Record] | None = None,
        mode: str = "offline",
        *,
        bits: np.ndarray | None = None,
        protocol: str = "auto",
        own: np.ndarray | None = None,
    ) -> str:
        """Upload a query; returns its handle.

        ``own`` (the team's own embeddings) enables the local deduplication
        pre-pass; dropped rows never leave the client.
        """
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        bits = self._bits(records, bits)
        keep = np.arange(len(bits))
        if own is not None:
            if self.params.tau is None:
                raise ValueError("local deduplication needs a calibrated tau")
            keep = local_dedup(bits, own, self.params.tau)
            bits = bits[keep]
        if mode == "online" and len(bits) != 1:
            raise ValueError(f"online queries carry exactly one record, got {len(bits)}")
        if not 1 <= len(bits) <= MAX_OFFLINE_QUERY:
            raise ValueError(f"query size {len(bits)} outside [1, {MAX_OFFLINE_QUERY}]")
        handle = uuid.UUID(bytes=self.rng.random_bytes(16), version=4).hex
        header = {
            "op": "query",
            "team": self.team,
            "count": len(bits),
            "dimension": self.params.dimension,
            "handle": handle,
            "mode": mode,
            "protocol": protocol,
        }
        self._put(header, self.share(bits))
        self._kept[handle] = keep
        return handle

    def fetch_share(self, node: int, handle: str, timeout: float = 600.0) -> tuple[np.ndarray, list[int], list[int]]:
        with self._connect(node) as conn:
            send_message(conn, FrameType.RESULT_GET, {"handle": handle, "timeout": timeout})
            header, body = recv_message(conn, FrameType.RESULT_DATA)
            lengths, _ = recv_message(conn, FrameType.LENGTHS_DATA)
        nq, ncols = int(header["nq"]), int(header["ncols"])
        bits = np.unpackbits(np.frombuffer(body, dtype=np.uint8), bitorder="little")[: nq * ncols]
        return bits.reshape(nq, ncols), list(lengths["teams"]), list(lengths["lengths"])

    def retrieve(self, handle: str, timeout: float = 600.0) -> QueryResult:
        m1, teams, lengths = self.fetch_share(1, handle, timeout)
        m2, _, _ = self.fetch_share(2, handle, timeout)
        matrix = reconstruct_matches(m1, m2)
        dups = decode_matches(matrix.bits, lengths, teams)
        keep = self._kept.get(handle)
        if keep is not None:
            dups = [Duplicate(int(keep[d.query - 1]) + 1, d.org, d.record, d.team) for d in dups]
        return QueryResult(handle, matrix, teams, lengths, dups)

    def info(self, node: int = 1) -> dict:
        with self._connect(node) as conn:
            send_message(conn, FrameType.INFO_GET, {})
            return recv_message(conn, FrameType.INFO_DATA)[0]

    def _bits(self, records, bits) -> np.ndarray:
        if (records is None) == (bits is None):
            raise ValueError("pass exactly one of records or bits")
        if bits is None:
            return embed_many(list(records), self.params)
        bits = np.asarray(bits, dtype=np.uint8)
        if bits.ndim != 2 or bits.shape[1] != self.params.dimension:
            raise ValueError(f"embeddings must be (n, {self.params.dimension})")
        return bits
