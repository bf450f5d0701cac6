"""Bit strings, residues mod p, the keyed PRF, and seeded randomness.

Everything above this module works on numpy arrays; the small value types
here (:class:`BitString`, :class:`Residue`, :class:`ResidueVector`) are the
API-boundary forms.

Bit layout: bit ``i`` (1-indexed) of a bit string lives in byte
``(i - 1) // 8`` at position ``(i - 1) % 8``, least-significant bit first.
"""

from __future__ import annotations

import hashlib
import os
import secrets
from dataclasses import dataclass
from typing import Iterable, Sequence, Union

import numpy as np
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

LAMBDA = 128
KEY_BYTES = LAMBDA // 8

# Public permutation key for the fixed-key AES PRF. Any constant works.
_FIXED_AES_KEY = bytes.fromhex("78447570206669786564206b65792121")
_PERMUTATION = Cipher(algorithms.AES(_FIXED_AES_KEY), modes.ECB())


class DimensionError(ValueError):
    """Operands have different bit-string dimensions."""


def bits_for_modulus(p: int) -> int:
    """Number of bits needed to write any residue in ``Z_p``."""
    if p < 2:
        raise ValueError("modulus must be >= 2")
    return (p - 1).bit_length()


# --------------------------------------------------------------------------
# Bit strings


@dataclass(frozen=True)
class BitString:
    """Element of ``{0,1}^l`` stored packed, LSB first."""

    dimension: int
    packed: bytes

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be positive")
        nbytes = (self.dimension + 7) // 8
        if len(self.packed) != nbytes:
            raise ValueError(f"expected {nbytes} packed bytes, got {len(self.packed)}")
        spare = nbytes * 8 - self.dimension
        if spare and self.packed[-1] >> (8 - spare):
            raise ValueError("bits beyond the dimension must be zero")

    @classmethod
    def from_bits(cls, bits: Iterable[int]) -> "BitString":
        arr = np.asarray(list(bits) if not isinstance(bits, np.ndarray) else bits, dtype=np.uint8)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("need a non-empty 1-D bit sequence")
        if np.any(arr > 1):
            raise ValueError("bits must be 0 or 1")
        return cls(int(arr.size), np.packbits(arr, bitorder="little").tobytes())

    @classmethod
    def from_str(cls, text: str) -> "BitString":
        """Parse ``"0110..."`` with the first character as bit 1."""
        return cls.from_bits([int(ch) for ch in text])

    @classmethod
    def zeros(cls, dimension: int) -> "BitString":
        return cls(dimension, bytes((dimension + 7) // 8))

    def to_bits(self) -> np.ndarray:
        raw = np.frombuffer(self.packed, dtype=np.uint8)
        return np.unpackbits(raw, bitorder="little")[: self.dimension].copy()

    def __getitem__(self, i: int) -> int:
        """1-indexed bit access, matching ``q[i]`` notation."""
        if not 1 <= i <= self.dimension:
            raise IndexError(i)
        return (self.packed[(i - 1) // 8] >> ((i - 1) % 8)) & 1

    def __len__(self) -> int:
        return self.dimension

    def __xor__(self, other: "BitString") -> "BitString":
        return bitstring_xor(self, other)

    def weight(self) -> int:
        return sum(bin(b).count("1") for b in self.packed)

    def __str__(self) -> str:
        return "".join(str(b) for b in self.to_bits())


def bitstring_xor(a: BitString, b: BitString) -> BitString:
    if a.dimension != b.dimension:
        raise DimensionError(f"dimension mismatch: {a.dimension} != {b.dimension}")
    return BitString(a.dimension, bytes(x ^ y for x, y in zip(a.packed, b.packed)))


def hamming_distance(a: BitString, b: BitString) -> int:
    if a.dimension != b.dimension:
        raise DimensionError(f"dimension mismatch: {a.dimension} != {b.dimension}")
    return int.from_bytes(a.packed, "little").__xor__(int.from_bytes(b.packed, "little")).bit_count()


def bits_matrix(strings: Sequence[BitString], dimension: int | None = None) -> np.ndarray:
    """Stack bit strings into an ``(n, l)`` uint8 matrix of 0/1 values."""
    if not strings:
        if dimension is None:
            raise ValueError("dimension required for an empty set")
        return np.zeros((0, dimension), dtype=np.uint8)
    dims = {s.dimension for s in strings}
    if len(dims) != 1 or (dimension is not None and dims != {dimension}):
        raise DimensionError(f"inconsistent dimensions {sorted(dims)}")
    dim = dims.pop()
    raw = np.frombuffer(b"".join(s.packed for s in strings), dtype=np.uint8)
    raw = raw.reshape(len(strings), -1)
    return np.unpackbits(raw, axis=1, bitorder="little")[:, :dim].copy()


def bitstrings_from_matrix(bits: np.ndarray) -> list[BitString]:
    bits = np.asarray(bits, dtype=np.uint8)
    packed = np.packbits(bits, axis=1, bitorder="little")
    return [BitString(bits.shape[1], row.tobytes()) for row in packed]


# --------------------------------------------------------------------------
# Residues


@dataclass(frozen=True)
class Residue:
    value: int
    modulus: int

    def __post_init__(self):
        if self.modulus < 2:
            raise ValueError("modulus must be >= 2")
        if not 0 <= self.value < self.modulus:
            raise ValueError(f"{self.value} not in [0, {self.modulus})")

    @classmethod
    def of(cls, value: int, modulus: int) -> "Residue":
        return cls(value % modulus, modulus)

    def _check(self, other: "Residue"):
        if other.modulus != self.modulus:
            raise ValueError("modulus mismatch")

    def __add__(self, other: "Residue") -> "Residue":
        self._check(other)
        return Residue((self.value + other.value) % self.modulus, self.modulus)

    def __sub__(self, other: "Residue") -> "Residue":
        self._check(other)
        return Residue((self.value - other.value) % self.modulus, self.modulus)

    def __neg__(self) -> "Residue":
        return Residue(-self.value % self.modulus, self.modulus)

    def __int__(self) -> int:
        return self.value


@dataclass(frozen=True, eq=False)
class ResidueVector:
    modulus: int
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.int64)
        if vals.ndim != 1:
            raise ValueError("residue vector must be 1-D")
        if vals.size and (vals.min() < 0 or vals.max() >= self.modulus):
            raise ValueError("element outside [0, p)")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return int(self.values.size)

    def __getitem__(self, k: int) -> Residue:
        return Residue(int(self.values[k]), self.modulus)

    def __add__(self, other: "ResidueVector") -> "ResidueVector":
        if other.modulus != self.modulus:
            raise ValueError("modulus mismatch")
        return ResidueVector(self.modulus, (self.values + other.values) % self.modulus)

    def __sub__(self, other: "ResidueVector") -> "ResidueVector":
        if other.modulus != self.modulus:
            raise ValueError("modulus mismatch")
        return ResidueVector(self.modulus, (self.values - other.values) % self.modulus)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, ResidueVector)
            and other.modulus == self.modulus
            and np.array_equal(other.values, self.values)
        )


# --------------------------------------------------------------------------
# PRF
#
# F_K(t) = AES_c(K xor t) xor K with a public constant AES key c, i.e. a
# single-key Even-Mansour construction keyed by the 128-bit seed K. Inputs
# longer than one block are absorbed by cascading: the output of one block
# becomes the key for the next. The first block carries the input length, so
# the encoding is injective and prefix-free.


@dataclass(frozen=True)
class PrfKey:
    seed: bytes

    def __post_init__(self):
        if len(self.seed) != KEY_BYTES:
            raise ValueError(f"PRF key must be exactly {KEY_BYTES} bytes")

    @classmethod
    def random(cls) -> "PrfKey":
        return cls(secrets.token_bytes(KEY_BYTES))

    def words(self) -> np.ndarray:
        return np.frombuffer(self.seed, dtype="<u8").astype(np.uint64)


def aes_permute(blocks: np.ndarray) -> np.ndarray:
    """Apply the public AES permutation to an ``(n, 2)`` uint64 block array."""
    blocks = np.ascontiguousarray(blocks, dtype=np.uint64)
    enc = _PERMUTATION.encryptor()
    out = enc.update(blocks.tobytes()) + enc.finalize()
    return np.frombuffer(out, dtype=np.uint64).reshape(blocks.shape)


def prf_blocks(keys: np.ndarray, inputs: np.ndarray) -> np.ndarray:
    """Single-block PRF over ``(n, 2)`` uint64 keys and encoded input blocks."""
    x = keys ^ inputs
    return aes_permute(x) ^ keys


def encode_prf_input(data: bytes) -> np.ndarray:
    """Split ``data`` into the ``(blocks, 2)`` word layout the PRF absorbs.

    First block: 2-byte little-endian length, then up to 14 data bytes.
    Further blocks: 16 data bytes each, zero padded.
    """
    if len(data) > 0xFFFF:
        raise ValueError("PRF input too long")
    raw = len(data).to_bytes(2, "little") + data
    raw += bytes(-len(raw) % 16)
    return np.frombuffer(raw, dtype="<u8").astype(np.uint64).reshape(-1, 2)


def single_block_inputs(fields: Sequence[tuple[np.ndarray, int]]) -> np.ndarray:
    """Vectorised :func:`encode_prf_input` for fixed-width integer fields.

    ``fields`` lists ``(values, byte_width)`` pairs; the concatenation must fit
    in 14 bytes. Row ``n`` equals ``encode_prf_input(b"".join(...))`` for the
    little-endian encoding of row ``n`` of each field.
    """
    total = sum(w for _, w in fields)
    if total > 14:
        raise ValueError("fields exceed a single PRF block")
    n = None
    for vals, _ in fields:
        size = np.asarray(vals).size
        n = size if n is None else max(n, size)
    out = np.zeros((n, 16), dtype=np.uint8)
    out[:, 0] = total & 0xFF
    out[:, 1] = total >> 8
    pos = 2
    for vals, width in fields:
        v = np.broadcast_to(np.asarray(vals, dtype=np.uint64), (n,))
        for b in range(width):
            out[:, pos + b] = ((v >> np.uint64(8 * b)) & np.uint64(0xFF)).astype(np.uint8)
        pos += width
    return out.view("<u8").astype(np.uint64)


def prf_raw(key: PrfKey, data: bytes) -> bytes:
    """128-bit PRF output for an arbitrary byte string."""
    state = key.words().reshape(1, 2)
    for block in encode_prf_input(data):
        state = prf_blocks(state, block.reshape(1, 2))
    return state.astype("<u8").tobytes()


def prf_eval(key: PrfKey, data: bytes, modulus: int) -> int:
    """PRF output reduced into ``Z_p``.

    Takes the low 64 output bits modulo ``p``; the statistical distance from
    uniform is below ``p / 2**64`` (under 2**-47 for every modulus used here).
    """
    if modulus < 2:
        raise ValueError("modulus must be >= 2")
    low = int.from_bytes(prf_raw(key, data)[:8], "little")
    return low % modulus


# --------------------------------------------------------------------------
# Randomness


class Rng:
    """Deterministic CSPRNG (AES-128-CTR keystream) for protocol sampling.

    ``Rng(None)`` draws its seed from the OS. Any int or byte seed gives a
    reproducible stream, which the tests use to replay transcripts.
    """

    def __init__(self, seed: Union[int, bytes, str, None] = None):
        if seed is None:
            material = os.urandom(32)
        elif isinstance(seed, (int, str)):
            material = f"{type(seed).__name__}:{seed}".encode()
        else:
            material = bytes(seed)
        key = hashlib.blake2b(material, digest_size=16, person=b"xdup-rng").digest()
        self._enc = Cipher(algorithms.AES(key), modes.CTR(bytes(16))).encryptor()

    def spawn(self, label: str) -> "Rng":
        """Independent child stream, e.g. one per party."""
        return Rng(self.random_bytes(16) + label.encode())

    def random_bytes(self, n: int) -> bytes:
        return self._enc.update(bytes(n))

    def words(self, shape) -> np.ndarray:
        shape = (shape,) if isinstance(shape, (int, np.integer)) else tuple(shape)
        n = int(np.prod(shape, dtype=np.int64))
        return np.frombuffer(self.random_bytes(8 * n), dtype=np.uint64).reshape(shape).copy()

    def residues(self, modulus: int, shape) -> np.ndarray:
        """Uniform residues in ``Z_p`` as int64 (64-bit draw reduced mod p)."""
        if modulus < 2:
            raise ValueError("modulus must be >= 2")
        return (self.words(shape) % np.uint64(modulus)).astype(np.int64)

    def bits(self, shape) -> np.ndarray:
        shape = (shape,) if isinstance(shape, (int, np.integer)) else tuple(shape)
        n = int(np.prod(shape, dtype=np.int64))
        raw = np.frombuffer(self.random_bytes((n + 7) // 8), dtype=np.uint8)
        return np.unpackbits(raw, bitorder="little")[:n].reshape(shape)

    def below(self, bound: int) -> int:
        """Uniform Python int in ``[0, bound)`` by rejection sampling."""
        if bound < 1:
            raise ValueError("bound must be positive")
        nbytes = (bound.bit_length() + 7) // 8 + 8
        limit = (256**nbytes // bound) * bound
        while True:
            v = int.from_bytes(self.random_bytes(nbytes), "little")
            if v < limit:
                return v % bound


def sample_residue_vector(rng: Rng, p: int, n: int) -> ResidueVector:
    return ResidueVector(p, rng.residues(p, n))


def sample_bitstring(rng: Rng, dimension: int) -> BitString:
    return BitString.from_bits(rng.bits(dimension))


# --------------------------------------------------------------------------
# Bit packing used by the wire format


def pack_residues(values: np.ndarray, modulus: int) -> bytes:
    """Concatenate residues as ``ceil(log2 p)``-bit LSB-first fields."""
    width = bits_for_modulus(modulus)
    flat = np.ascontiguousarray(values, dtype=np.int64).reshape(-1)
    if width == 8:
        return flat.astype(np.uint8).tobytes()
    if width == 16:
        return flat.astype("<u2").tobytes()
    shifts = np.arange(width, dtype=np.int64)
    bits = ((flat[:, None] >> shifts) & 1).astype(np.uint8)
    return np.packbits(bits.reshape(-1), bitorder="little").tobytes()


def unpack_residues(data: bytes, count: int, modulus: int) -> np.ndarray:
    width = bits_for_modulus(modulus)
    if len(data) != (count * width + 7) // 8:
        raise ValueError(f"payload of {len(data)} bytes does not hold {count} residues")
    if width == 8:
        vals = np.frombuffer(data, dtype=np.uint8).astype(np.int64)
    elif width == 16:
        vals = np.frombuffer(data, dtype="<u2").astype(np.int64)
    else:
        bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8), bitorder="little")
        bits = bits[: count * width].reshape(count, width).astype(np.int64)
        vals = (bits << np.arange(width, dtype=np.int64)).sum(axis=1)
    if vals.size and vals.max() >= modulus:
        raise ValueError("decoded residue out of range")
    return vals


def pack_bits(bits: np.ndarray) -> bytes:
    return np.packbits(np.asarray(bits, dtype=np.uint8).reshape(-1), bitorder="little").tobytes()


def unpack_bits(data: bytes, count: int) -> np.ndarray:
    if len(data) != (count + 7) // 8:
        raise ValueError(f"payload of {len(data)} bytes does not hold {count} bits")
    return np.unpackbits(np.frombuffer(data, dtype=np.uint8), bitorder="little")[:count].copy()
