"""Brute-force references for tests and ``xdup oracle-check``.

Deliberately naive and free of imports from the protocol modules: inputs
are plain sequences of 0/1 values (or anything iterable into them).
"""

from __future__ import annotations

from fractions import Fraction
from typing import Iterable, Sequence


def _bits(x) -> list[int]:
    if hasattr(x, "to_bits"):
        x = x.to_bits()
    return [int(b) for b in x]


def naive_hamming(a, b) -> int:
    a, b = _bits(a), _bits(b)
    if len(a) != len(b):
        raise ValueError("dimension mismatch")
    count = 0
    for x, y in zip(a, b):
        if x != y:
            count += 1
    return count


def bruteforce_fpsi(Q: Iterable, R: Iterable, tau: int) -> set[tuple[int, int]]:
    """All ``(i, j)`` (0-based) with ``d_H(Q[i], R[j]) <= tau``."""
    Q = [_bits(q) for q in Q]
    R = [_bits(r) for r in R]
    dims = {len(x) for x in Q + R}
    if len(dims) > 1:
        raise ValueError("dimension mismatch")
    return {(i, j) for i, q in enumerate(Q) for j, r in enumerate(R) if naive_hamming(q, r) <= tau}


def bruteforce_fpsi_xor(Q: Iterable, R: Iterable, tau: int) -> set[tuple[int, int]]:
    """Second, independent formulation via integer XOR popcount."""
    def as_int(bits):
        return sum(b << n for n, b in enumerate(_bits(bits)))

    Qi, Ri = [as_int(q) for q in Q], [as_int(r) for r in R]
    return {(i, j) for i, q in enumerate(Qi) for j, r in enumerate(Ri) if bin(q ^ r).count("1") <= tau}


def match_matrix(pairs: set[tuple[int, int]], nq: int, nr: int) -> list[list[int]]:
    return [[1 if (i, j) in pairs else 0 for j in range(nr)] for i in range(nq)]


def exact_jaccard(X: Iterable, Y: Iterable) -> Fraction:
    X, Y = set(X), set(Y)
    if not X and not Y:
        return Fraction(1)
    return Fraction(len(X & Y), len(X | Y))


def comparison_table(mask: int, tau: int, modulus: int) -> list[int]:
    """Plaintext threshold table ``v_x = ((x - mask) mod p <= tau)``."""
    return [1 if (x - mask) % modulus <= tau else 0 for x in range(modulus)]


def table_lookup(table: Sequence[int], index: int) -> int:
    return table[index]


def decode_columns(matrix: Sequence[Sequence[int]], lengths: Sequence[int]) -> list[tuple[int, int, int]]:
    """Walk organisations' column ranges left to right, 1-based ``(q, o, r)``."""
    out = []
    for q, row in enumerate(matrix, start=1):
        for j, bit in enumerate(row, start=1):
            if not bit:
                continue
            o, before = 1, 0
            while j > before + lengths[o - 1]:
                before += lengths[o - 1]
                o += 1
            out.append((q, o, j - before))
    return out
