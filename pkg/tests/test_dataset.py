import datetime as dt

import numpy as np
import pytest

from xdup.dataset import (
    CsvFormatError,
    PerturbationConfig,
    build_eval_corpus,
    export_corpus,
    export_csv,
    generate_base,
    ingest_csv,
    load_corpus,
    perturb,
    perturb_with_log,
    snap_to_january_first,
)
from xdup.embedding import SCHEMA, Record


def test_generate_base_basics():
    assert generate_base(0) == []
    assert generate_base(50, seed=3) == generate_base(50, seed=3)
    assert generate_base(50, seed=3) != generate_base(50, seed=4)


def test_generated_records_are_complete():
    for rec in generate_base(10_000, seed=1):
        assert len(rec) == 7 and all(rec.attributes)
        dt.date.fromisoformat(rec[2])
        assert rec[3] in ("M", "F")


def test_swap_only_menu():
    config = PerturbationConfig(
        max_perturbations=1,
        destructive_probability=0.0,
        menus={"first_name": ("swap",)},
        attributes=("first_name",),
    )
    rng = np.random.default_rng(0)
    allowed = {"bacd", "acbd", "abdc"}
    for _ in range(50):
        out = perturb(Record(("abcd",)), config, rng)
        assert out[0] in allowed


def test_destructive_rate_follows_binomial_law():
    base = generate_base(200, seed=2)
    rng = np.random.default_rng(5)
    hit, expected, var = 0, 0.0, 0.0
    for n in range(10_000):
        _, log = perturb_with_log(base[n % 200], rng=rng)
        k = len(log)
        p = 1 - (15 / 16) ** k
        hit += any(e.destructive for e in log)
        expected += p
        var += p * (1 - p)
    assert abs(hit - expected) <= 3 * np.sqrt(var)


def test_january_first_rule():
    assert snap_to_january_first("1990-07-14") == "1990-01-01"
    config = PerturbationConfig(max_perturbations=1, destructive_probability=0.0, menus={"dob": ("jan1",)}, attributes=("dob",))
    rec = Record(("1990-07-14",))
    assert perturb(rec, config, np.random.default_rng(0))[0] == "1990-01-01"


def test_duplicates_touch_at_most_four_attributes():
    corpus = build_eval_corpus(300, 200, 50, seed=7)
    assert len(corpus.test) == 250 and corpus.labels.sum() == 200
    for pair in corpus.test:
        if pair.is_duplicate:
            changed = sum(a != b for a, b in zip(pair.record.attributes, pair.original.attributes))
            assert changed <= 4
            assert corpus.reference[pair.reference_index] == pair.original


def test_corpus_determinism_and_roundtrip(tmp_path):
    a = build_eval_corpus(100, 30, 30, seed=1)
    b = build_eval_corpus(100, 30, 30, seed=1)
    assert a.reference == b.reference and a.test == b.test
    export_corpus(tmp_path, a)
    back = load_corpus(tmp_path)
    assert back.reference == a.reference
    assert [p.record for p in back.test] == [p.record for p in a.test]
    assert back.labels.tolist() == a.labels.tolist()
    with pytest.raises(ValueError):
        build_eval_corpus(5, 6, 0)


def test_ingest_completeness_rule(tmp_path):
    path = tmp_path / "in.csv"
    rows = [
        Record(("ann", "lee", "1980-02-03", "F", "", "", "")),
        Record(("", "lee", "1980-02-03", "F", "", "", "")),
        Record(("ann", "", "1980-02-03", "F", "", "", "")),
        Record(("ann", "lee", "", "F", "", "", "")),
        Record(("bob", "ray", "1971", "M", "", "", "")),
    ]
    export_csv(path, rows)
    result = ingest_csv(path)
    assert result.dropped == 3
    assert [r[0] for r in result.records] == ["ann", "bob"]
    assert len(ingest_csv(path, drop_incomplete=False).records) == 5


def test_ingest_mapping_and_errors(tmp_path):
    path = tmp_path / "ncvr.csv"
    path.write_text("first,last,birth_year,county\nANN,LEE,1980,wake\n")
    result = ingest_csv(path, {"first_name": "first", "last_name": "last", "dob": "birth_year"})
    assert result.records[0].as_dict()["first_name"] == "ANN"
    assert result.extra == [{"county": "wake"}]
    with pytest.raises(CsvFormatError):
        ingest_csv(path)
    bad = tmp_path / "bad.csv"
    bad.write_text(",".join(SCHEMA) + "\na,b\n")
    with pytest.raises(CsvFormatError) as info:
        ingest_csv(bad)
    assert info.value.row == 2
