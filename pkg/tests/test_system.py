import numpy as np
import pytest
from conftest import start_cluster

from xdup.core import Rng
from xdup.embedding import EmbeddingParams
from xdup.net import RemoteError
from xdup.oracle import bruteforce_fpsi, decode_columns
from xdup.system import (
    ShareStore,
    StoreError,
    TeamClient,
    decode_column,
    decode_matches,
    local_dedup,
)
from xdup.system.store import pack_shares, unpack_shares

L = 15
TAU = 3
PARAMS = EmbeddingParams(dimension=L, tau=TAU)


@pytest.fixture
def cluster(tmp_path):
    n1, n2 = start_cluster(L, TAU, tmp_path)
    yield n1, n2
    n1.stop()
    n2.stop()


def client(nodes, team, seed=0):
    n1, n2 = nodes
    return TeamClient(team, PARAMS, n1.client_address, n2.client_address, Rng(f"team{team}:{seed}"))


def stored_plaintext(nodes, team):
    return nodes[0].store.shares(team) ^ nodes[1].store.shares(team)


def rand_bits(rng, n):
    return rng.integers(0, 2, (n, L), dtype=np.uint8)


def test_decode_column_examples():
    assert decode_column(6, [0, 5, 3]) == (3, 1)
    assert decode_column(1, [0, 5, 3]) == (2, 1)
    assert decode_column(5, [0, 5, 3]) == (2, 5)
    with pytest.raises(ValueError):
        decode_column(9, [0, 5, 3])
    assert decode_matches(np.zeros((2, 8), np.uint8), [0, 5, 3]) == []


def test_decode_matches_agrees_with_walk_oracle():
    rng = np.random.default_rng(0)
    for _ in range(50):
        lengths = rng.integers(0, 5, 4).tolist()
        if not sum(lengths):
            continue
        bits = rng.integers(0, 2, (3, sum(lengths)), dtype=np.uint8)
        got = [(d.query, d.org, d.record) for d in decode_matches(bits, lengths)]
        assert sorted(got) == sorted(decode_columns(bits.tolist(), lengths))


def test_setup_sizes_and_sharing(cluster):
    rng = np.random.default_rng(1)
    assert client(cluster, 1).setup(bits=np.zeros((0, L), np.uint8)) == 0
    assert cluster[0].store.length(1) == cluster[1].store.length(1) == 0
    one = rand_bits(rng, 1)
    client(cluster, 2).setup(bits=one)
    assert np.array_equal(stored_plaintext(cluster, 2), one)
    big = rand_bits(rng, 1024)
    assert client(cluster, 3).setup(bits=big) == 1024
    assert cluster[0].store.length(3) == cluster[1].store.length(3) == 1024


def test_duplicate_setup_conflicts(cluster):
    c = client(cluster, 1)
    c.setup(bits=np.zeros((2, L), np.uint8))
    with pytest.raises(RemoteError) as info:
        c.setup(bits=np.zeros((2, L), np.uint8))
    assert info.value.code == 4


def test_query_mode_rules(cluster):
    c = client(cluster, 1)
    c.setup(bits=np.zeros((1, L), np.uint8))
    with pytest.raises(ValueError):
        c.query(bits=np.zeros((2, L), np.uint8), mode="online")
    with pytest.raises(ValueError):
        c.query(bits=np.zeros((2049, L), np.uint8))
    with pytest.raises(RemoteError):
        client(cluster, 9).query(bits=np.zeros((1, L), np.uint8))


def test_client_shares_are_reproducible():
    a = TeamClient(1, PARAMS, ("h", 1), ("h", 2), Rng(5)).share(np.ones((3, L), np.uint8))
    b = TeamClient(1, PARAMS, ("h", 1), ("h", 2), Rng(5)).share(np.ones((3, L), np.uint8))
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


def test_two_team_query_matches_oracle(cluster):
    rng = np.random.default_rng(2)
    own, other = rand_bits(rng, 3), rand_bits(rng, 8)
    q = rand_bits(rng, 4)
    q[0] = other[5]
    q[1] = other[2] ^ np.eye(1, L, 4, dtype=np.uint8)[0]
    q[2] = own[1]  # own records are never columns
    a, b = client(cluster, 1), client(cluster, 2)
    a.setup(bits=own)
    b.setup(bits=other)
    result = a.retrieve(a.query(bits=q), timeout=60)
    assert result.matrix.shape == (4, 8)
    assert result.matrix.pairs() == bruteforce_fpsi(q.tolist(), other.tolist(), TAU)
    assert all(d.team == 2 for d in result.duplicates)
    assert cluster[0].store.length(1) == cluster[1].store.length(1) == 7
    assert cluster[0].store.length(2) == 8
    assert np.array_equal(stored_plaintext(cluster, 1)[3:], q)


def test_online_query(cluster):
    rng = np.random.default_rng(3)
    data = rand_bits(rng, 6)
    client(cluster, 1).setup(bits=data)
    c = client(cluster, 2)
    c.setup(bits=rand_bits(rng, 2))
    result = c.retrieve(c.query(bits=data[4:5], mode="online"), timeout=60)
    assert {(d.query, d.org, d.record) for d in result.duplicates} >= {(1, 1, 5)}


def test_failed_query_leaves_state_unchanged(tmp_path):
    from xdup.system import ComputeNode, NodeConfig

    n2 = ComputeNode(NodeConfig(2, L, TAU + 1, tmp_path / "b")).start()
    n1 = ComputeNode(NodeConfig(1, L, TAU, tmp_path / "a", peer_address=n2.peer_listen_address)).start()
    try:
        c = TeamClient(1, PARAMS, n1.client_address, n2.client_address, Rng(1))
        c.setup(bits=np.ones((2, L), np.uint8))
        before = (n1.store.shares(1).copy(), n2.store.shares(1).copy())
        with pytest.raises(RemoteError):
            c.retrieve(c.query(bits=np.ones((1, L), np.uint8)), timeout=30)
        assert np.array_equal(n1.store.shares(1), before[0])
        assert np.array_equal(n2.store.shares(1), before[1])
    finally:
        n1.stop()
        n2.stop()


def test_local_dedup():
    own = np.zeros((1, L), np.uint8)
    q = np.stack([np.zeros(L, np.uint8), np.ones(L, np.uint8), np.ones(L, np.uint8)])
    assert local_dedup(q, own, TAU).tolist() == [1]
    assert local_dedup(q, None, TAU).tolist() == [0, 1]


def test_store_replay_and_torn_tail(tmp_path):
    rng = np.random.default_rng(4)
    s = ShareStore(L, tmp_path)
    a, b = rand_bits(rng, 3), rand_bits(rng, 2)
    s.create_team(7, a)
    s.append(7, b)
    with pytest.raises(StoreError):
        s.create_team(7, a)
    log = tmp_path / "team-7.log"
    with open(log, "ab") as fh:
        fh.write(b"\x00\x00\x00")
    back = ShareStore(L, tmp_path)
    assert back.lengths() == {7: 5}
    assert np.array_equal(back.shares(7), np.concatenate([a, b]))
    with pytest.raises(StoreError):
        ShareStore(L + 1, tmp_path)


def test_pack_shares_roundtrip():
    bits = np.random.default_rng(5).integers(0, 2, (9, L), dtype=np.uint8)
    assert np.array_equal(unpack_shares(pack_shares(bits, L), 9, L), bits)
    with pytest.raises(ValueError):
        unpack_shares(b"\x00", 9, L)
