import numpy as np
import pytest
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from xdup.core import (
    BitString,
    DimensionError,
    PrfKey,
    Residue,
    ResidueVector,
    Rng,
    bits_for_modulus,
    bitstring_xor,
    encode_prf_input,
    hamming_distance,
    pack_bits,
    pack_residues,
    prf_eval,
    prf_raw,
    sample_bitstring,
    sample_residue_vector,
    single_block_inputs,
    unpack_bits,
    unpack_residues,
)
from xdup.oracle import naive_hamming

bit_lists = st.integers(1, 200).flatmap(lambda n: st.tuples(st.lists(st.integers(0, 1), min_size=n, max_size=n), st.lists(st.integers(0, 1), min_size=n, max_size=n)))


def test_xor_examples():
    assert str(BitString.from_str("000") ^ BitString.from_str("000")) == "000"
    assert str(bitstring_xor(BitString.from_str("101"), BitString.from_str("010"))) == "111"
    a = sample_bitstring(Rng(3), 63)
    assert (a ^ a) == BitString.zeros(63)


def test_distance_examples():
    assert hamming_distance(BitString.from_str("000"), BitString.from_str("000")) == 0
    assert hamming_distance(BitString.from_str("101"), BitString.from_str("010")) == 3
    rng = Rng(11)
    a, b = sample_bitstring(rng, 511), sample_bitstring(rng, 511)
    assert hamming_distance(a, b) == naive_hamming(a.to_bits().tolist(), b.to_bits().tolist())


def test_dimension_mismatch():
    with pytest.raises(DimensionError):
        BitString.from_str("01") ^ BitString.from_str("011")
    with pytest.raises(DimensionError):
        hamming_distance(BitString.from_str("01"), BitString.from_str("011"))


def test_bit_layout():
    # bit 1 is the LSB of byte 0, bit 9 the LSB of byte 1
    b = BitString.from_str("100000001")
    assert b.packed == bytes([0x01, 0x01])
    assert b[1] == 1 and b[2] == 0 and b[9] == 1
    with pytest.raises(ValueError):
        BitString(3, bytes([0xFF]))


@given(bit_lists)
def test_distance_is_weight_of_xor(pair):
    a, b = (BitString.from_bits(x) for x in pair)
    assert hamming_distance(a, b) == (a ^ b).weight() == naive_hamming(pair[0], pair[1])
    assert len((a ^ b).packed) == (a.dimension + 7) // 8


@given(st.integers(2, 4096).flatmap(lambda p: st.tuples(st.just(p), st.integers(0, p - 1), st.integers(0, p - 1))))
def test_residue_add_sub(args):
    p, x, y = args
    rx, ry = Residue(x, p), Residue(y, p)
    assert (rx + ry) - ry == rx
    assert int(rx + ry) == (x + y) % p
    assert int(-rx) == (-x) % p


def test_residue_guards():
    with pytest.raises(ValueError):
        Residue(5, 5)
    with pytest.raises(ValueError):
        Residue(0, 1)
    with pytest.raises(ValueError):
        Residue(1, 4) + Residue(1, 5)


def _reference_prf(key: bytes, data: bytes) -> bytes:
    fixed = bytes.fromhex("78447570206669786564206b65792121")
    raw = len(data).to_bytes(2, "little") + data
    raw += bytes(-len(raw) % 16)
    state = key
    for off in range(0, len(raw), 16):
        x = bytes(a ^ b for a, b in zip(state, raw[off : off + 16]))
        enc = Cipher(algorithms.AES(fixed), modes.ECB()).encryptor()
        y = enc.update(x) + enc.finalize()
        state = bytes(a ^ b for a, b in zip(y, state))
    return state


@pytest.mark.parametrize("data", [b"", b"x", b"0123456789abcd", b"0123456789abcde", bytes(range(40))])
def test_prf_matches_reference_construction(data):
    key = bytes(range(16))
    assert prf_raw(PrfKey(key), data) == _reference_prf(key, data)


def test_prf_frozen_vector():
    # frozen from the byte-level reference construction above
    key = PrfKey(bytes(range(16)))
    assert prf_raw(key, b"xdup").hex() == "ad8206f9d84c0a25e7901f1f0674043a"
    assert prf_eval(key, b"xdup", 512) == 173


def test_prf_determinism_and_range():
    key = PrfKey.random()
    for p in (2, 16, 512, 4096):
        vals = [prf_eval(key, bytes([i]), p) for i in range(200)]
        assert vals == [prf_eval(key, bytes([i]), p) for i in range(200)]
        assert all(0 <= v < p for v in vals)
    with pytest.raises(ValueError):
        PrfKey(bytes(15))


def test_prf_collision_rate():
    # two fixed inputs under 10^5 fresh keys collide mod 512 at rate 1/512
    rng = Rng(5)
    n, p = 100_000, 512
    keys = rng.words((n, 2))
    from xdup.core import prf_blocks

    a = prf_blocks(keys, single_block_inputs([(np.zeros(n, dtype=np.uint64), 4)]))[:, 0] % p
    b = prf_blocks(keys, single_block_inputs([(np.ones(n, dtype=np.uint64), 4)]))[:, 0] % p
    rate = np.mean(a == b)
    sigma = np.sqrt((1 / p) * (1 - 1 / p) / n)
    assert abs(rate - 1 / p) <= 3 * sigma


@given(st.lists(st.tuples(st.integers(0, 2**32 - 1), st.integers(0, 2**16 - 1)), min_size=1, max_size=20))
def test_single_block_inputs_matches_encoding(rows):
    a = np.array([r[0] for r in rows], dtype=np.uint64)
    b = np.array([r[1] for r in rows], dtype=np.uint64)
    got = single_block_inputs([(a, 4), (b, 2)])
    for n, (x, y) in enumerate(rows):
        want = encode_prf_input(x.to_bytes(4, "little") + y.to_bytes(2, "little"))
        assert np.array_equal(got[n], want[0])


def test_sampling():
    assert sample_residue_vector(Rng(1), 8, 50) == sample_residue_vector(Rng(1), 8, 50)
    assert len(sample_residue_vector(Rng(1), 8, 0)) == 0
    assert sample_bitstring(Rng(2), 100) == sample_bitstring(Rng(2), 100)
    counts = np.bincount(Rng(9).residues(8, 100_000), minlength=8)
    assert stats.chisquare(counts).pvalue > 0.001


def test_residue_vector():
    v = ResidueVector(7, [1, 2, 6])
    assert (v + v).values.tolist() == [2, 4, 5]
    assert ((v + v) - v) == v
    with pytest.raises(ValueError):
        ResidueVector(7, [7])


def test_rng_below_and_spawn():
    rng = Rng(0)
    vals = [rng.below(10) for _ in range(2000)]
    assert set(vals) == set(range(10))
    assert Rng(0).spawn("a").random_bytes(8) != Rng(0).spawn("b").random_bytes(8)


@settings(max_examples=60)
@given(st.integers(2, 70000).flatmap(lambda p: st.tuples(st.just(p), st.lists(st.integers(0, p - 1), max_size=40))))
def test_pack_residues_roundtrip(args):
    p, vals = args
    data = pack_residues(np.array(vals, dtype=np.int64), p)
    assert len(data) == (len(vals) * bits_for_modulus(p) + 7) // 8
    assert unpack_residues(data, len(vals), p).tolist() == vals


def test_pack_rejects_bad_payloads():
    with pytest.raises(ValueError):
        unpack_residues(b"\xff", 1, 5)
    with pytest.raises(ValueError):
        unpack_residues(b"\x00\x00", 1, 5)
    with pytest.raises(ValueError):
        unpack_bits(b"\x00", 9)
    assert unpack_bits(pack_bits(np.array([1, 0, 1])), 3).tolist() == [1, 0, 1]


def test_bits_for_modulus():
    assert [bits_for_modulus(p) for p in (2, 3, 4, 5, 16, 17, 128, 512, 513)] == [1, 2, 2, 3, 4, 5, 7, 9, 10]
