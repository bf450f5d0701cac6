import numpy as np
import pytest
from conftest import run_ot
from hypothesis import given, settings
from hypothesis import strategies as st

from xdup.core import Rng
from xdup.net import RemoteError, loopback_pair
from xdup.ot import DealerOT, GroupOT, OtBatchSpec, OtError, expand_seeds
from xdup.oracle import comparison_table, table_lookup


def test_random_ot_single():
    s, r, *_ = run_ot(lambda S: S.seeds(1, 2), lambda R: R.seeds([0], 2))
    assert np.array_equal(r[0], s[0, 0])


def test_random_ot_dealer_ledger():
    dealer = DealerOT(seed=3, record=True)
    choices = np.random.default_rng(0).integers(0, 2, 10_000)
    s, r, *_ = run_ot(lambda S: S.seeds(10_000, 2), lambda R: R.seeds(choices, 2), dealer)
    assert np.array_equal(r, s[np.arange(10_000), choices])
    assert np.array_equal(dealer.ledger[0].choices, choices)


@pytest.mark.parametrize("backend", ["dealer", "group"])
def test_random_ot_contract_per_backend(backend):
    b = DealerOT(1) if backend == "dealer" else None
    backends = None if b else (GroupOT(Rng("s")), GroupOT(Rng("r")))
    choices = np.random.default_rng(1).integers(0, 2, 64)
    s, r, *_ = run_ot(lambda S: S.seeds(64, 2), lambda R: R.seeds(choices, 2), backend=b, backends=backends)
    assert np.array_equal(r, s[np.arange(64), choices])
    # the other message is unrelated to the receiver's output
    assert not np.any(np.all(r == s[np.arange(64), 1 - choices], axis=1))


def test_group_arity_four():
    choices = np.array([0, 1, 2, 3, 3, 0])
    s, r, *_ = run_ot(lambda S: S.seeds(6, 4), lambda R: R.seeds(choices, 4), backends=(GroupOT(Rng(1)), GroupOT(Rng(2))))
    assert np.array_equal(r, s[np.arange(6), choices])


def test_group_rejects_mismatched_spec():
    with pytest.raises((RemoteError, OtError)):
        run_ot(lambda S: S.seeds(4, 2), lambda R: R.seeds([0, 1, 0], 2), backends=(GroupOT(Rng(1)), GroupOT(Rng(2))))


def test_chosen_small():
    msgs = np.array([[[5], [9]]])
    _, r, *_ = run_ot(lambda S: S.chosen(msgs, 16), lambda R: R.chosen([1], 2, 1, 16))
    assert r.tolist() == [[9]]


def test_chosen_threshold_table():
    table = np.array([[[int(i <= 132)] for i in range(512)]])
    _, r, *_ = run_ot(lambda S: S.chosen(table, 2), lambda R: R.chosen([200], 512, 1, 2))
    assert r.tolist() == [[0]]


@settings(max_examples=15, deadline=None)
@given(st.integers(2, 8), st.integers(1, 20), st.integers(2, 600), st.data())
def test_chosen_matches_sender_messages(arity, count, modulus, data):
    rng = np.random.default_rng(data.draw(st.integers(0, 2**32)))
    msgs = rng.integers(0, modulus, (count, arity, 3))
    choices = rng.integers(0, arity, count)
    _, r, *_ = run_ot(lambda S: S.chosen(msgs, modulus), lambda R: R.chosen(choices, arity, 3, modulus))
    assert np.array_equal(r, msgs[np.arange(count), choices])


def test_correlated_examples():
    offs = np.array([[[1]]])
    m0, r, *_ = run_ot(lambda S: S.correlated(offs, 512), lambda R: R.correlated([1], 2, 1, 512))
    assert r[0, 0] == (m0[0, 0] + 1) % 512
    m0, r, *_ = run_ot(lambda S: S.correlated(offs, 512), lambda R: R.correlated([0], 2, 1, 512))
    assert r[0, 0] == m0[0, 0]


@settings(max_examples=15, deadline=None)
@given(st.integers(2, 8), st.integers(1, 30), st.data())
def test_correlated_contract(arity, count, data):
    rng = np.random.default_rng(data.draw(st.integers(0, 2**32)))
    p = 97
    offs = rng.integers(0, p, (count, arity - 1, 2))
    choices = rng.integers(0, arity, count)
    m0, r, *_ = run_ot(lambda S: S.correlated(offs, p), lambda R: R.correlated(choices, arity, 2, p))
    full = np.concatenate([np.zeros((count, 1, 2), dtype=np.int64), offs], axis=1)
    assert np.array_equal(r, (m0 + full[np.arange(count), choices]) % p)


def test_correlated_payload_accounting():
    # count=100, N=2, 10-bit messages: exactly (N-1)*10 bits per instance
    offs = np.ones((100, 1, 1), dtype=np.int64)
    _, _, s, r = run_ot(lambda S: S.correlated(offs, 1024), lambda R: R.correlated(np.zeros(100, int), 2, 1, 1024))
    assert s.stats.payload_bits == r.stats.payload_bits == 100 * 10
    assert 1000 // 8 <= s.conn.stats.bytes_sent - 0 <= 1000 // 8 + 5 * 4


def test_chosen_payload_accounting():
    msgs = np.zeros((64, 4, 1), dtype=np.int64)
    _, _, s, _ = run_ot(lambda S: S.chosen(msgs, 16), lambda R: R.chosen(np.zeros(64, int), 4, 1, 16))
    assert s.stats.payload_bits == 64 * 4 * 4


def test_prf_extension_vector_payload():
    # nR=64 residues of 9 bits: a 576-bit message per instance
    rng = np.random.default_rng(2)
    msgs = rng.integers(0, 512, (3, 2, 64))
    choices = np.array([1, 0, 1])
    _, r, *_ = run_ot(lambda S: S.chosen(msgs, 512), lambda R: R.chosen(choices, 2, 64, 512))
    assert np.array_equal(r, msgs[np.arange(3), choices])


def test_expand_seeds():
    seeds = np.arange(2 * 3 * 2, dtype=np.uint64).reshape(2, 3, 2) * np.uint64(0x9E3779B97F4A7C15)
    short = expand_seeds(seeds, 2, 512)
    assert np.array_equal(short, (seeds % np.uint64(512)).astype(np.int64))
    long = expand_seeds(seeds, 40, 512)
    assert long.shape == (2, 3, 40) and long.max() < 512
    assert not np.array_equal(long[0, 0], long[0, 1])
    assert np.array_equal(long, expand_seeds(seeds, 40, 512))


def test_naor_pinkas_small():
    table = np.array([[0, 1, 1, 0]], dtype=np.uint8)
    _, r, *_ = run_ot(lambda S: S.one_of_n_bits(table), lambda R: R.one_of_n_bits([2], 4))
    assert r.tolist() == [1]


def test_naor_pinkas_comparison_table():
    table = np.array([comparison_table(300, 132, 512)], dtype=np.uint8)
    _, r, *_ = run_ot(lambda S: S.one_of_n_bits(table), lambda R: R.one_of_n_bits([400], 512))
    assert r.tolist() == [1] == [table_lookup(table[0], 400)]


def test_naor_pinkas_exhaustive_n8():
    rng = np.random.default_rng(4)
    table = np.repeat(rng.integers(0, 2, (1, 8), dtype=np.uint8), 8, axis=0)
    choices = np.arange(8)
    _, r, *_ = run_ot(lambda S: S.one_of_n_bits(table), lambda R: R.one_of_n_bits(choices, 8))
    assert r.tolist() == table[0].tolist()


@settings(max_examples=10, deadline=None)
@given(st.integers(3, 1100), st.integers(1, 40), st.data())
def test_naor_pinkas_contract(arity, count, data):
    rng = np.random.default_rng(data.draw(st.integers(0, 2**32)))
    table = rng.integers(0, 2, (count, arity), dtype=np.uint8)
    choices = rng.integers(0, arity, count)
    _, r, s, rr = run_ot(lambda S: S.one_of_n_bits(table), lambda R: R.one_of_n_bits(choices, arity))
    assert np.array_equal(r, table[np.arange(count), choices])
    assert s.stats.ot_count[arity] == count
    assert s.stats.payload_bits == count * arity


def test_naor_pinkas_group_backend():
    rng = np.random.default_rng(8)
    table = rng.integers(0, 2, (5, 16), dtype=np.uint8)
    choices = rng.integers(0, 16, 5)
    _, r, *_ = run_ot(lambda S: S.one_of_n_bits(table), lambda R: R.one_of_n_bits(choices, 16), backends=(GroupOT(Rng(1)), GroupOT(Rng(2))))
    assert np.array_equal(r, table[np.arange(5), choices])


def test_invalid_choice_aborts_before_send():
    a, b = loopback_pair()
    from xdup.ot import OtReceiver

    r = OtReceiver(b, DealerOT())
    with pytest.raises(ValueError):
        r.chosen([5], 4, 1, 16)
    assert b.stats.bytes_sent == 0
    a.close()
    b.close()


def test_finish_checks_accounting():
    offs = np.zeros((4, 1, 1), dtype=np.int64)

    def sender(S):
        S.correlated(offs, 16)
        S.finish()

    def receiver(R):
        R.correlated(np.zeros(4, int), 2, 1, 16)
        R.finish()
        return R.stats.total

    _, total, *_ = run_ot(sender, receiver)
    assert total == 4


def test_batch_spec_roundtrip():
    spec = OtBatchSpec(10, 4, 9)
    assert OtBatchSpec.decode(spec.encode()) == spec
    with pytest.raises(ValueError):
        OtBatchSpec(0, 2)
    with pytest.raises(OtError):
        OtBatchSpec.decode(b"x")
