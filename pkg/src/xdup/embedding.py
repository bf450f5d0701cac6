"""Record embedding into Hamming space.

A record becomes a set of attribute-tagged q-grams; each output bit is a
1-bit MinHash of that set. For bit ``b`` with seeds ``(s_b, t_b)`` the
selected gram minimises ``mix(h(g) ^ s_b)`` and the bit is the low bit of
``mix(h(g) ^ t_b)``. Two sets agree on a bit with probability
``(1 + J) / 2`` where ``J`` is their Jaccard similarity.
"""

from __future__ import annotations

import functools
import hashlib
import unicodedata
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import BitString

SCHEMA = (
    "first_name",
    "last_name",
    "dob",
    "gender",
    "mother_first_name",
    "mother_last_name",
    "father_first_name",
)

PARAMS_HEADER = "xdup-embedding v1"


@dataclass(frozen=True)
class Record:
    attributes: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "attributes", tuple("" if a is None else str(a) for a in self.attributes))

    @classmethod
    def from_mapping(cls, values: dict, schema: Sequence[str] = SCHEMA) -> "Record":
        return cls(tuple(values.get(name, "") or "" for name in schema))

    def as_dict(self, schema: Sequence[str] = SCHEMA) -> dict:
        return dict(zip(schema, self.attributes))

    def __getitem__(self, i: int) -> str:
        return self.attributes[i]

    def __len__(self) -> int:
        return len(self.attributes)


def normalize(value: str) -> str:
    return unicodedata.normalize("NFC", value).casefold().strip()


def record_to_grams(record: Record | Sequence[str], q: int = 2) -> frozenset[tuple[int, str]]:
    """Attribute-tagged q-grams; tags are 1-based attribute positions."""
    if q < 1:
        raise ValueError("q must be >= 1")
    attrs = record.attributes if isinstance(record, Record) else tuple(record)
    grams = set()
    for tag, raw in enumerate(attrs, start=1):
        value = normalize(raw or "")
        if not value:
            continue
        if len(value) < q:
            grams.add((tag, value))
            continue
        grams.update((tag, value[s : s + q]) for s in range(len(value) - q + 1))
    return frozenset(grams)


@functools.lru_cache(maxsize=1 << 18)
def gram_hash(tag: int, gram: str) -> int:
    """64-bit base hash of a tagged gram (2-byte tag, then UTF-8)."""
    data = tag.to_bytes(2, "little") + gram.encode("utf-8")
    return int.from_bytes(hashlib.blake2b(data, digest_size=8, person=b"xdup-gram").digest(), "little")


_M1 = np.uint64(0xFF51AFD7ED558CCD)
_M2 = np.uint64(0xC4CEB9FE1A85EC53)
_S33 = np.uint64(33)


def mix64(x: np.ndarray) -> np.ndarray:
    """MurmurHash3 64-bit finaliser (a bijection on uint64)."""
    x = np.asarray(x, dtype=np.uint64)
    with np.errstate(over="ignore"):
        x = x ^ (x >> _S33)
        x = x * _M1
        x = x ^ (x >> _S33)
        x = x * _M2
        x = x ^ (x >> _S33)
    return x


def derive_bit_seeds(master_seed: int, dimension: int) -> np.ndarray:
    """``(l, 2)`` uint64 per-bit seeds (selection, output) from the master seed."""
    material = b"xdup-embedding-seeds" + int(master_seed).to_bytes(16, "little", signed=True)
    raw = hashlib.shake_128(material).digest(16 * dimension)
    return np.frombuffer(raw, dtype="<u8").astype(np.uint64).reshape(dimension, 2)


@dataclass(frozen=True)
class EmbeddingParams:
    dimension: int = 511
    q: int = 2
    n_attributes: int = len(SCHEMA)
    seed: int = 0
    tau: int | None = None
    bit_seeds: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be >= 1")
        if self.q < 1:
            raise ValueError("q must be >= 1")
        if self.n_attributes < 1:
            raise ValueError("n_attributes must be >= 1")
        if self.tau is not None and not 0 <= self.tau <= self.dimension:
            raise ValueError(f"tau {self.tau} outside [0, {self.dimension}]")
        seeds = derive_bit_seeds(self.seed, self.dimension)
        seeds.setflags(write=False)
        object.__setattr__(self, "bit_seeds", seeds)

    def with_tau(self, tau: int) -> "EmbeddingParams":
        return replace(self, tau=tau)

    def dumps(self) -> str:
        lines = [PARAMS_HEADER, f"l={self.dimension}", f"q={self.q}", f"n_a={self.n_attributes}", f"seed={self.seed}"]
        if self.tau is not None:
            lines.append(f"tau={self.tau}")
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "EmbeddingParams":
        lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
        if not lines or lines[0] != PARAMS_HEADER:
            raise ValueError(f"not an embedding parameter file (expected {PARAMS_HEADER!r})")
        kv = {}
        for ln in lines[1:]:
            key, sep, value = ln.partition("=")
            if not sep:
                raise ValueError(f"malformed parameter line {ln!r}")
            kv[key.strip()] = int(value)
        known = {"l", "q", "n_a", "seed", "tau"}
        if set(kv) - known:
            raise ValueError(f"unknown parameters {sorted(set(kv) - known)}")
        return cls(kv.get("l", 511), kv.get("q", 2), kv.get("n_a", len(SCHEMA)), kv.get("seed", 0), kv.get("tau"))

    def save(self, path: str | Path):
        Path(path).write_text(self.dumps())

    @classmethod
    def load(cls, path: str | Path) -> "EmbeddingParams":
        return cls.loads(Path(path).read_text())


def _combined_keys(hashes: np.ndarray, seeds: np.ndarray) -> np.ndarray:
    """Selection hash with its low bit replaced by the output bit: ``(g, l)``.

    Taking the minimum picks the argmin gram under the top 63 selection bits
    and carries that gram's output bit along in bit 0.
    """
    h = np.asarray(hashes, dtype=np.uint64)[:, None]
    select = mix64(h ^ seeds[None, :, 0])
    out = mix64(h ^ seeds[None, :, 1])
    return (select & ~np.uint64(1)) | (out & np.uint64(1))


def minhash_bit(grams: Iterable[tuple[int, str]], seed: Sequence[int] | np.ndarray) -> int:
    """One output bit for a gram set under a ``(selection, output)`` seed pair."""
    grams = list(grams)
    if not grams:
        return 0
    hashes = np.array([gram_hash(t, g) for t, g in grams], dtype=np.uint64)
    keys = _combined_keys(hashes, np.asarray(seed, dtype=np.uint64).reshape(1, 2))
    return int(keys.min() & np.uint64(1))


def embed_grams(grams: Iterable[tuple[int, str]], params: EmbeddingParams) -> np.ndarray:
    grams = list(grams)
    if not grams:
        return np.zeros(params.dimension, dtype=np.uint8)
    hashes = np.array([gram_hash(t, g) for t, g in grams], dtype=np.uint64)
    return (_combined_keys(hashes, params.bit_seeds).min(axis=0) & np.uint64(1)).astype(np.uint8)


def embed(record: Record, params: EmbeddingParams) -> BitString:
    return BitString.from_bits(embed_grams(record_to_grams(record, params.q), params))


def embed_many(records: Sequence[Record], params: EmbeddingParams, batch_grams: int = 1 << 14) -> np.ndarray:
    """Embed many records at once; returns an ``(n, l)`` uint8 bit matrix."""
    out = np.zeros((len(records), params.dimension), dtype=np.uint8)
    hashes: list[int] = []
    owners: list[int] = []

    def flush():
        if not hashes:
            return
        idx = np.array(owners)
        keys = _combined_keys(np.array(hashes, dtype=np.uint64), params.bit_seeds)
        starts = np.flatnonzero(np.r_[True, idx[1:] != idx[:-1]])
        mins = np.minimum.reduceat(keys, starts, axis=0)
        out[idx[starts]] = (mins & np.uint64(1)).astype(np.uint8)
        hashes.clear()
        owners.clear()

    for n, rec in enumerate(records):
        grams = record_to_grams(rec, params.q)
        if len(hashes) + len(grams) > batch_grams:
            flush()
        hashes.extend(gram_hash(t, g) for t, g in grams)
        owners.extend([n] * len(grams))
    flush()
    return out


# --------------------------------------------------------------------------
# Threshold calibration


def min_distances(test: np.ndarray, reference: np.ndarray, chunk: int = 2048) -> np.ndarray:
    """Minimum Hamming distance from each test row to any reference row."""
    test = np.asarray(test, dtype=np.float32)
    ref = np.asarray(reference, dtype=np.float32)
    if test.shape[1] != ref.shape[1]:
        raise ValueError("dimension mismatch")
    if ref.shape[0] == 0:
        return np.full(test.shape[0], test.shape[1] + 1, dtype=np.int64)
    ref_w = ref.sum(axis=1)
    out = np.empty(test.shape[0], dtype=np.int64)
    for lo in range(0, test.shape[0], chunk):
        block = test[lo : lo + chunk]
        # |a xor b| = |a| + |b| - 2 a.b, exact in float32 for l < 2**24
        d = block.sum(axis=1)[:, None] + ref_w[None, :] - 2.0 * (block @ ref.T)
        out[lo : lo + chunk] = np.rint(d.min(axis=1)).astype(np.int64)
    return out


@dataclass(frozen=True)
class Calibration:
    tau: int
    fpr: float
    fnr: float
    diagnostic: str = ""


def rates_at(tau: int, dup_dist: np.ndarray, nondup_dist: np.ndarray) -> tuple[float, float]:
    fpr = float(np.mean(nondup_dist <= tau)) if nondup_dist.size else 0.0
    fnr = float(np.mean(dup_dist > tau)) if dup_dist.size else 0.0
    return fpr, fnr


def calibrate_threshold(
    reference: np.ndarray,
    test: np.ndarray,
    is_duplicate: Sequence[bool] | np.ndarray,
    target_fpr: float,
) -> Calibration:
    """Largest tau whose false-positive rate on the test records is <= target.

    A test record is flagged when its minimum distance to the reference set is
    at most tau; non-duplicates flagged are false positives and duplicates not
    flagged are false negatives.
    """
    if not 0 < target_fpr <= 1:
        raise ValueError("target FPR must be in (0, 1]")
    test = np.asarray(test)
    labels = np.asarray(is_duplicate, dtype=bool)
    if labels.shape != (test.shape[0],):
        raise ValueError("one label per test record required")
    l = test.shape[1]
    dist = min_distances(test, reference)
    dup, nondup = dist[labels], dist[~labels]
    best = None
    for tau in range(l + 1):
        fpr, _ = rates_at(tau, dup, nondup)
        if fpr <= target_fpr:
            best = tau
        else:
            break
    if best is None:
        fpr, fnr = rates_at(0, dup, nondup)
        return Calibration(0, fpr, fnr, f"no threshold reaches FPR <= {target_fpr}; FPR at tau=0 is {fpr:.6f}")
    fpr, fnr = rates_at(best, dup, nondup)
    return Calibration(best, fpr, fnr)


def save_embeddings(path: str | Path, bits: np.ndarray):
    """One hex line per record, packed LSB-first like BitString."""
    bits = np.asarray(bits, dtype=np.uint8)
    packed = np.packbits(bits, axis=1, bitorder="little")
    Path(path).write_text("".join(row.tobytes().hex() + "\n" for row in packed))


def load_embeddings(path: str | Path, dimension: int) -> np.ndarray:
    rows = [ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip()]
    nbytes = (dimension + 7) // 8
    packed = np.zeros((len(rows), nbytes), dtype=np.uint8)
    for n, ln in enumerate(rows):
        raw = bytes.fromhex(ln)
        if len(raw) != nbytes:
            raise ValueError(f"line {n + 1}: expected {nbytes} bytes, got {len(raw)}")
        packed[n] = np.frombuffer(raw, dtype=np.uint8)
    bits = np.unpackbits(packed, axis=1, bitorder="little")[:, :dimension]
    return bits
