"""Chosen, correlated and 1-of-N OT built on a random-OT backend.

Every construction draws random OTs whose 128-bit seeds are expanded into
``width`` residues mod ``p``; the sender then ships masked messages
``mu_x = m_x - omega_x`` (XOR when ``p == 2``) in OT_PAYLOAD frames, packed as
tight ``ceil(log2 p)``-bit fields with no per-message padding.

Both parties keep an instance counter so PRF inputs never repeat within a
session.
"""

from __future__ import annotations

import struct

import numpy as np

from ..core import bits_for_modulus, pack_bits, pack_residues, prf_blocks, single_block_inputs, unpack_bits, unpack_residues
from ..net import CHUNK_SIZE, Connection, FrameType, ProtocolError
from .base import OtError, OtStats, RandomOtBackend, check_choices

MAX_ARITY = 1 << 16
_EXPAND_BLOCKS = 1 << 20
_DONE = struct.Struct("!QQ")


def expand_seeds(seeds: np.ndarray, width: int, modulus: int) -> np.ndarray:
    """Expand ``(..., 2)`` uint64 seeds into ``(..., width)`` residues mod p.

    Up to two residues come straight from the seed words; longer messages use
    the PRF in counter mode, two 64-bit words per block.
    """
    lead = seeds.shape[:-1]
    flat = np.ascontiguousarray(seeds, dtype=np.uint64).reshape(-1, 2)
    p = np.uint64(modulus)
    if width <= 2:
        return (flat[:, :width] % p).astype(np.int64).reshape(*lead, width)
    nblocks = (width + 1) // 2
    out = np.empty((flat.shape[0], width), dtype=np.int64)
    counters = single_block_inputs([(np.arange(nblocks, dtype=np.uint64), 8)])
    step = max(1, _EXPAND_BLOCKS // nblocks)
    for lo in range(0, flat.shape[0], step):
        keys = flat[lo : lo + step]
        words = prf_blocks(np.repeat(keys, nblocks, axis=0), np.tile(counters, (keys.shape[0], 1)))
        out[lo : lo + step] = (words.reshape(keys.shape[0], 2 * nblocks)[:, :width] % p).astype(np.int64)
    return out.reshape(*lead, width)


def _rows_per_frame(bits_per_row: int) -> int:
    rows = max(1, (CHUNK_SIZE * 8) // max(1, bits_per_row))
    return max(8, rows - rows % 8)


class _Party:
    def __init__(self, conn: Connection, backend: RandomOtBackend, stats: OtStats | None = None):
        self.conn = conn
        self.backend = backend
        self.stats = stats if stats is not None else OtStats()
        self.instances = 0

    def _next_instances(self, count: int) -> np.ndarray:
        base = self.instances
        self.instances += count
        return np.arange(base, base + count, dtype=np.uint64)


class OtSender(_Party):
    def seeds(self, count: int, arity: int) -> np.ndarray:
        """Raw random OT: ``(count, arity, 2)`` uint64 seeds."""
        if not 2 <= arity <= MAX_ARITY:
            raise ValueError(f"arity {arity} outside [2, {MAX_ARITY}]")
        out = self.backend.send_random(self.conn, count, arity)
        self.stats.ot_count[arity] += count
        self.stats.random_ots[arity] += count
        return out

    def random(self, count: int, arity: int, width: int, modulus: int) -> np.ndarray:
        return expand_seeds(self.seeds(count, arity), width, modulus)

    def send_payload(self, values: np.ndarray, modulus: int):
        """Ship ``(count, ...)`` residues, framed on instance boundaries."""
        values = np.asarray(values)
        per_row = int(np.prod(values.shape[1:], dtype=np.int64))
        step = _rows_per_frame(per_row * bits_for_modulus(modulus))
        for lo in range(0, values.shape[0], step):
            self.conn.send_frame(FrameType.OT_PAYLOAD, pack_residues(values[lo : lo + step], modulus))
        self.stats.payload_bits += values.size * bits_for_modulus(modulus)

    def chosen(self, messages: np.ndarray, modulus: int):
        messages = np.asarray(messages, dtype=np.int64)
        count, arity, width = messages.shape
        omega = self.random(count, arity, width, modulus)
        self.send_payload(_mask(messages, omega, modulus), modulus)

    def correlated(self, offsets: np.ndarray, modulus: int) -> np.ndarray:
        """Correlated OT with ``f_x(m0) = m0 + offsets[:, x-1]``; returns ``m0``."""
        offsets = np.asarray(offsets, dtype=np.int64)
        count, n1, width = offsets.shape
        omega = self.random(count, n1 + 1, width, modulus)
        m0 = omega[:, 0]
        targets = (m0[:, None, :] + offsets) % modulus
        self.send_payload(_mask(targets, omega[:, 1:], modulus), modulus)
        return m0

    def one_of_n_bits(self, table: np.ndarray):
        """1-of-N OT on 1-bit messages from ``ceil(log2 N)`` 1-of-2 key OTs."""
        table = np.asarray(table, dtype=np.uint8)
        count, arity = table.shape
        if not 2 <= arity <= MAX_ARITY:
            raise ValueError(f"arity {arity} outside [2, {MAX_ARITY}]")
        t = bits_for_modulus(arity)
        keys = self.backend.send_random(self.conn, count * t, 2).reshape(count, t, 2, 2)
        self.stats.ot_count[arity] += count
        self.stats.random_ots[2] += count * t
        instances = self._next_instances(count)
        xs = np.arange(arity)
        step = _rows_per_frame(arity)
        for lo in range(0, count, step):
            hi = min(count, lo + step)
            pads = _np_pads(keys[lo:hi], instances[lo:hi], arity)
            mask = np.zeros((hi - lo, arity), dtype=np.uint8)
            for j in range(t):
                sel = ((xs >> j) & 1).astype(bool)
                mask ^= np.where(sel, pads[:, j, 1], pads[:, j, 0])
            self.conn.send_frame(FrameType.OT_PAYLOAD, pack_bits(table[lo:hi] ^ mask))
        self.stats.payload_bits += count * arity

    def finish(self):
        self.conn.send_frame(FrameType.OT_DONE, _DONE.pack(self.stats.total, self.stats.payload_bits))


class OtReceiver(_Party):
    def seeds(self, choices, arity: int) -> np.ndarray:
        if not 2 <= arity <= MAX_ARITY:
            raise ValueError(f"arity {arity} outside [2, {MAX_ARITY}]")
        c = check_choices(choices, arity)
        out = self.backend.receive_random(self.conn, c, arity)
        self.stats.ot_count[arity] += c.size
        self.stats.random_ots[arity] += c.size
        return out

    def random(self, choices, arity: int, width: int, modulus: int) -> np.ndarray:
        return expand_seeds(self.seeds(choices, arity), width, modulus)

    def recv_payload(self, shape: tuple[int, ...], modulus: int) -> np.ndarray:
        count = shape[0]
        per_row = int(np.prod(shape[1:], dtype=np.int64))
        step = _rows_per_frame(per_row * bits_for_modulus(modulus))
        parts = []
        for lo in range(0, count, step):
            rows = min(step, count - lo)
            try:
                parts.append(unpack_residues(self.conn.expect(FrameType.OT_PAYLOAD), rows * per_row, modulus))
            except ValueError as exc:
                raise ProtocolError(f"bad OT payload: {exc}") from None
        self.stats.payload_bits += count * per_row * bits_for_modulus(modulus)
        flat = np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)
        return flat.reshape(shape)

    def chosen(self, choices, arity: int, width: int, modulus: int) -> np.ndarray:
        c = check_choices(choices, arity)
        omega = self.random(c, arity, width, modulus)
        mu = self.recv_payload((c.size, arity, width), modulus)
        return _unmask(omega, mu[np.arange(c.size), c], modulus)

    def correlated(self, choices, arity: int, width: int, modulus: int) -> np.ndarray:
        c = check_choices(choices, arity)
        omega = self.random(c, arity, width, modulus)
        mu = self.recv_payload((c.size, arity - 1, width), modulus)
        picked = mu[np.arange(c.size), np.maximum(c - 1, 0)]
        out = _unmask(omega, picked, modulus)
        out[c == 0] = omega[c == 0]
        return out

    def one_of_n_bits(self, choices, arity: int) -> np.ndarray:
        if not 2 <= arity <= MAX_ARITY:
            raise ValueError(f"arity {arity} outside [2, {MAX_ARITY}]")
        c = check_choices(choices, arity)
        count = c.size
        t = bits_for_modulus(arity)
        cbits = ((c[:, None] >> np.arange(t)) & 1).reshape(-1)
        keys = self.backend.receive_random(self.conn, cbits, 2).reshape(count, t, 2)
        self.stats.ot_count[arity] += count
        self.stats.random_ots[2] += count * t
        instances = self._next_instances(count)
        out = np.empty(count, dtype=np.uint8)
        step = _rows_per_frame(arity)
        for lo in range(0, count, step):
            hi = min(count, lo + step)
            raw = self.conn.expect(FrameType.OT_PAYLOAD)
            try:
                cipher = unpack_bits(raw, (hi - lo) * arity).reshape(hi - lo, arity)
            except ValueError as exc:
                raise ProtocolError(f"bad OT payload: {exc}") from None
            cc = c[lo:hi]
            blocks = single_block_inputs([(instances[lo:hi], 8), ((cc // 128).astype(np.uint64), 2)])
            bit = np.zeros(hi - lo, dtype=np.uint8)
            for j in range(t):
                words = prf_blocks(keys[lo:hi, j], blocks)
                pos = (cc % 128).astype(np.uint64)
                word = np.where(pos < 64, words[:, 0], words[:, 1])
                bit ^= ((word >> (pos % np.uint64(64))) & np.uint64(1)).astype(np.uint8)
            out[lo:hi] = cipher[np.arange(hi - lo), cc] ^ bit
        self.stats.payload_bits += count * arity
        return out

    def finish(self):
        payload = self.conn.expect(FrameType.OT_DONE)
        if len(payload) != _DONE.size:
            raise ProtocolError("malformed OT_DONE")
        total, bits = _DONE.unpack(payload)
        if (total, bits) != (self.stats.total, self.stats.payload_bits):
            raise OtError(f"OT accounting mismatch: sender {total}/{bits}, receiver {self.stats.total}/{self.stats.payload_bits}")


def _mask(messages: np.ndarray, omega: np.ndarray, modulus: int) -> np.ndarray:
    if modulus == 2:
        return messages ^ omega
    return (messages - omega) % modulus


def _unmask(omega: np.ndarray, mu: np.ndarray, modulus: int) -> np.ndarray:
    if modulus == 2:
        return omega ^ mu
    return (omega + mu) % modulus


def _np_pads(keys: np.ndarray, instances: np.ndarray, arity: int) -> np.ndarray:
    """Sender pad bits ``(n, t, 2, arity)``: bit x of F(K_j^b, instance || x//128)."""
    n, t = keys.shape[:2]
    nb = (arity + 127) // 128
    inputs = single_block_inputs(
        [(np.repeat(instances, nb), 8), (np.tile(np.arange(nb, dtype=np.uint64), n), 2)]
    ).reshape(n, 1, 1, nb, 2)
    words = prf_blocks(
        np.broadcast_to(keys[:, :, :, None, :], (n, t, 2, nb, 2)).reshape(-1, 2),
        np.broadcast_to(inputs, (n, t, 2, nb, 2)).reshape(-1, 2),
    )
    raw = words.astype("<u8").view(np.uint8).reshape(n, t, 2, nb * 16)
    return np.unpackbits(raw, axis=-1, bitorder="little")[..., :arity]
