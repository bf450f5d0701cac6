import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xdup.core import hamming_distance
from xdup.dataset import PerturbationConfig, generate_base, perturb
from xdup.embedding import (
    EmbeddingParams,
    Record,
    calibrate_threshold,
    embed,
    embed_grams,
    embed_many,
    load_embeddings,
    min_distances,
    minhash_bit,
    mix64,
    record_to_grams,
    save_embeddings,
)
from xdup.oracle import exact_jaccard

WIDE = EmbeddingParams(dimension=10_000, seed=42)


def jaccard_pair(shared: int, only: int, tag: int = 1):
    common = {(tag, f"c{n}") for n in range(shared)}
    x = common | {(tag, f"x{n}") for n in range(only)}
    y = common | {(tag, f"y{n}") for n in range(only)}
    return x, y


def test_grams_examples():
    assert record_to_grams(["ab"], 2) == {(1, "ab")}
    assert record_to_grams(["abc"], 2) == {(1, "ab"), (1, "bc")}
    a = record_to_grams(["smith", ""], 2)
    b = record_to_grams(["", "smith"], 2)
    assert a and b and not (a & b)


def test_grams_normalisation_and_short_values():
    assert record_to_grams(["  ÉVA "], 2) == record_to_grams(["éva"], 2)
    assert record_to_grams(["a", "", "M"], 2) == {(1, "a"), (3, "m")}
    with pytest.raises(ValueError):
        record_to_grams(["ab"], 0)


def test_minhash_identical_sets():
    x, _ = jaccard_pair(10, 5)
    seeds = WIDE.bit_seeds[:200]
    assert [minhash_bit(x, s) for s in seeds] == [minhash_bit(set(x), s) for s in seeds]


@pytest.mark.parametrize("shared,only,want", [(0, 20, 0.5), (20, 10, 0.75), (30, 0, 1.0)])
def test_minhash_collision_law(shared, only, want):
    x, y = jaccard_pair(shared, only)
    assert float(exact_jaccard(x, y)) == pytest.approx(2 * want - 1)
    agree = np.mean(embed_grams(x, WIDE) == embed_grams(y, WIDE))
    assert abs(agree - want) <= 0.02


def test_minhash_bit_matches_vector_path():
    x, _ = jaccard_pair(7, 3)
    bits = embed_grams(x, WIDE)
    for b in range(0, 10_000, 997):
        assert bits[b] == minhash_bit(x, WIDE.bit_seeds[b])


def test_mix64_is_a_bijection_sample():
    xs = np.arange(100_000, dtype=np.uint64)
    assert len(np.unique(mix64(xs))) == xs.size


def test_embed_determinism_and_empty():
    params = EmbeddingParams()
    rec = generate_base(1, seed=3)[0]
    assert embed(rec, params) == embed(rec, params)
    assert hamming_distance(embed(rec, params), embed(Record(rec.attributes), params)) == 0
    assert embed(Record(("",) * 7), params).weight() == 0


def test_embed_many_matches_embed():
    params = EmbeddingParams(dimension=127, seed=5)
    recs = generate_base(40, seed=9)
    many = embed_many(recs, params, batch_grams=50)
    for n, rec in enumerate(recs):
        assert many[n].tolist() == embed(rec, params).to_bits().tolist()


def test_typo_vs_unrelated_distances():
    params = EmbeddingParams()
    base = generate_base(400, seed=1)
    rng = np.random.default_rng(0)
    one_typo = PerturbationConfig(max_perturbations=1, destructive_probability=0.0)
    a = embed_many(base[:200], params)
    typo = embed_many([perturb(r, one_typo, rng) for r in base[:200]], params)
    other = embed_many(base[200:], params)
    near = (a != typo).sum(axis=1).mean()
    far = (a != other).sum(axis=1).mean()
    assert near < 132 / 2
    assert 200 < far < 300


def test_locality_monotone_in_jaccard():
    params = EmbeddingParams(dimension=511, seed=2)
    means = []
    for j in (0.0, 0.25, 0.5, 0.75, 1.0):
        dists = []
        for s in range(200):
            total = 40
            shared = int(round(2 * j * total / (1 + j)))
            x = {(1, f"{s}c{n}") for n in range(shared)} | {(1, f"{s}x{n}") for n in range(total - shared)}
            y = {(1, f"{s}c{n}") for n in range(shared)} | {(1, f"{s}y{n}") for n in range(total - shared)}
            dists.append(int((embed_grams(x, params) != embed_grams(y, params)).sum()))
        means.append(np.mean(dists))
    assert all(a > b for a, b in zip(means, means[1:]))
    assert means[-1] == 0


def test_attribute_permutation_changes_embedding():
    params = EmbeddingParams()
    rec = generate_base(1, seed=4)[0]
    swapped = Record((rec[1], rec[0], *rec.attributes[2:]))
    assert record_to_grams(rec) != record_to_grams(swapped)
    assert hamming_distance(embed(rec, params), embed(swapped, params)) > 0


def test_params_roundtrip(tmp_path):
    p = EmbeddingParams(dimension=127, q=3, seed=9, tau=30)
    path = tmp_path / "params.txt"
    p.save(path)
    back = EmbeddingParams.load(path)
    assert back == p and np.array_equal(back.bit_seeds, p.bit_seeds)
    assert EmbeddingParams.loads(EmbeddingParams().dumps()).tau is None
    with pytest.raises(ValueError):
        EmbeddingParams.loads("wrong header\nl=3\n")
    with pytest.raises(ValueError):
        EmbeddingParams(dimension=15, tau=16)


def test_embedding_file_roundtrip(tmp_path):
    bits = np.random.default_rng(0).integers(0, 2, (5, 13), dtype=np.uint8)
    save_embeddings(tmp_path / "e.txt", bits)
    assert np.array_equal(load_embeddings(tmp_path / "e.txt", 13), bits)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 40), st.integers(1, 30), st.integers(1, 70), st.integers(0, 2**32))
def test_min_distances_exact(nt, nr, l, seed):
    rng = np.random.default_rng(seed)
    t = rng.integers(0, 2, (nt, l), dtype=np.uint8)
    r = rng.integers(0, 2, (nr, l), dtype=np.uint8)
    want = [min(int((a != b).sum()) for b in r) for a in t]
    assert min_distances(t, r, chunk=7).tolist() == want


def test_calibration_edges():
    rng = np.random.default_rng(1)
    ref = rng.integers(0, 2, (50, 31), dtype=np.uint8)
    test = np.concatenate([ref[:10], rng.integers(0, 2, (10, 31), dtype=np.uint8)])
    labels = np.array([True] * 10 + [False] * 10)
    assert calibrate_threshold(ref, test, labels, 1.0).tau == 31
    cal = calibrate_threshold(ref, test, labels, 0.05)
    assert cal.fnr == 0.0 and cal.fpr <= 0.05
    # every test record identical to a reference record: no misses at any tau
    same = calibrate_threshold(ref, ref[:20], np.ones(20, bool), 0.001)
    assert same.fnr == 0.0


def test_calibration_diagnostic_when_unreachable():
    ref = np.zeros((3, 7), np.uint8)
    cal = calibrate_threshold(ref, ref[:2], np.array([False, False]), 0.1)
    assert cal.tau == 0 and cal.diagnostic
    with pytest.raises(ValueError):
        calibrate_threshold(ref, ref[:2], np.array([True]), 0.1)
