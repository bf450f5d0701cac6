"""Semi-honest random 1-of-N OT over a prime-order group.

Chou-Orlandi "simplest OT" in the order-q subgroup of the RFC 3526 2048-bit
MODP group (safe prime, generator 2), with 256-bit exponents.

    sender:   a <- random, A = g^a                      --OT_BASE_MSG1-->
    receiver: b_n <- random, B_n = g^b_n * A^c_n        <--OT_BASE_MSG2--
    receiver key  H(n, A, B_n, A^b_n)
    sender keys   H(n, A, B_n, B_n^a * (A^a)^-x)  for x in [0, N)

Only x = c_n reproduces the receiver's key.
"""

from __future__ import annotations

import hashlib

import gmpy2
import numpy as np

from ..core import Rng
from ..net import Connection, ErrorCode, FrameType, RemoteError
from .base import OtBatchSpec, OtError, check_choices

MODP_2048 = int(
    "FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD129024E088A67CC74"
    "020BBEA63B139B22514A08798E3404DDEF9519B3CD3A431B302B0A6DF25F1437"
    "4FE1356D6D51C245E485B576625E7EC6F44C42E9A637ED6B0BFF5CB6F406B7ED"
    "EE386BFB5A899FA5AE9F24117C4B1FE649286651ECE45B3DC2007CB8A163BF05"
    "98DA48361C55D39A69163FA8FD24CF5F83655D23DCA3AD961C62F356208552BB"
    "9ED529077096966D670C354E4ABC9804F1746C08CA18217C32905E462E36CE3B"
    "E39E772C180E86039B2783A2EC07A28FB5C55DF06F4C52C9DE2BCBF695581718"
    "3995497CEA956AE515D2261898FA051015728E5A8AACAA68FFFFFFFFFFFFFFFF",
    16,
)
GENERATOR = 2
ELEMENT_BYTES = 256
EXPONENT_BITS = 256

_P = gmpy2.mpz(MODP_2048)


def _encode(x) -> bytes:
    return int(x).to_bytes(ELEMENT_BYTES, "big")


def _decode(raw: bytes) -> gmpy2.mpz:
    x = gmpy2.mpz(int.from_bytes(raw, "big"))
    if not 1 < x < _P - 1:
        raise OtError("group element out of range")
    return x


def _kdf(index: int, a_raw: bytes, b_raw: bytes, shared) -> np.ndarray:
    h = hashlib.sha256(b"xdup-simplest-ot" + index.to_bytes(8, "little") + a_raw + b_raw + _encode(shared))
    return np.frombuffer(h.digest()[:16], dtype="<u8").astype(np.uint64)


class GroupOT:
    """One party's view of the group backend; ``rng`` supplies exponents."""

    def __init__(self, rng: Rng | None = None):
        self.rng = rng or Rng()

    def _exponent(self):
        while True:
            e = self.rng.below(1 << EXPONENT_BITS)
            if e:
                return gmpy2.mpz(e)

    def send_random(self, conn: Connection, count: int, arity: int) -> np.ndarray:
        spec = OtBatchSpec(count, arity)
        conn.send_frame(FrameType.OT_INIT, spec.encode())
        a = self._exponent()
        big_a = gmpy2.powmod(GENERATOR, a, _P)
        a_raw = _encode(big_a)
        conn.send_frame(FrameType.OT_BASE_MSG1, a_raw)
        try:
            payload = conn.expect(FrameType.OT_BASE_MSG2)
        except RemoteError as exc:
            raise OtError(f"receiver rejected OT batch: {exc.message}") from exc
        if len(payload) != count * ELEMENT_BYTES:
            raise OtError("OT_BASE_MSG2 has the wrong length")
        t_inv = gmpy2.invert(gmpy2.powmod(big_a, a, _P), _P)
        out = np.empty((count, arity, 2), dtype=np.uint64)
        for n in range(count):
            b_raw = payload[n * ELEMENT_BYTES : (n + 1) * ELEMENT_BYTES]
            shared = gmpy2.powmod(_decode(b_raw), a, _P)
            for x in range(arity):
                out[n, x] = _kdf(n, a_raw, b_raw, shared)
                shared = shared * t_inv % _P
        return out

    def receive_random(self, conn: Connection, choices, arity: int) -> np.ndarray:
        c = check_choices(choices, arity)
        spec = OtBatchSpec.decode(conn.expect(FrameType.OT_INIT))
        if (spec.count, spec.arity) != (c.size, arity):
            conn.send_error(ErrorCode.PARAMS, f"batch spec mismatch: sender {spec.count}x{spec.arity}, receiver {c.size}x{arity}")
            raise OtError(f"batch spec mismatch: sender {spec.count}x{spec.arity}, receiver {c.size}x{arity}")
        a_raw = conn.expect(FrameType.OT_BASE_MSG1)
        big_a = _decode(a_raw)
        powers = [gmpy2.mpz(1)]
        for _ in range(1, min(arity, int(c.max()) + 1 if c.size else 1)):
            powers.append(powers[-1] * big_a % _P)
        out = np.empty((c.size, 2), dtype=np.uint64)
        msg = bytearray()
        b_list = []
        for n, choice in enumerate(c):
            b = self._exponent()
            big_b = gmpy2.powmod(GENERATOR, b, _P) * powers[int(choice)] % _P
            b_raw = _encode(big_b)
            msg += b_raw
            b_list.append((b, b_raw))
        conn.send_frame(FrameType.OT_BASE_MSG2, bytes(msg))
        for n, (b, b_raw) in enumerate(b_list):
            out[n] = _kdf(n, a_raw, b_raw, gmpy2.powmod(big_a, b, _P))
        return out
