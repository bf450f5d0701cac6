"""Synthetic registration records, duplicate perturbation, and CSV I/O.

Name pools are US Census 1990 frequency lists bundled under ``data/``.
"""

from __future__ import annotations

import csv
import datetime as dt
import functools
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .embedding import SCHEMA, Record

ALPHABET = "abcdefghijklmnopqrstuvwxyz"
CHAR_EDITS = ("insert", "delete", "replace", "swap")
DOB_EDITS = ("jan1", "replace", "swap")
GENDER_EDITS = ("reassign",)
FIXED_LENGTH = frozenset({"dob", "gender"})


@dataclass(frozen=True)
class NamePools:
    male: tuple[str, ...]
    female: tuple[str, ...]
    last: tuple[str, ...]
    male_p: np.ndarray = field(repr=False, compare=False)
    female_p: np.ndarray = field(repr=False, compare=False)
    last_p: np.ndarray = field(repr=False, compare=False)

    @classmethod
    def uniform(cls, male: Sequence[str], female: Sequence[str], last: Sequence[str]) -> "NamePools":
        if not (male and female and last):
            raise ValueError("name pools must be non-empty")

        def flat(n):
            return np.full(len(n), 1.0 / len(n))

        return cls(tuple(male), tuple(female), tuple(last), flat(male), flat(female), flat(last))


def _read_pool(name: str) -> tuple[tuple[str, ...], np.ndarray]:
    text = resources.files("xdup.data").joinpath(name).read_text(encoding="utf-8")
    rows = list(csv.DictReader(text.splitlines()))
    names = tuple(r["name"] for r in rows)
    freq = np.array([float(r["freq"]) for r in rows])
    return names, freq / freq.sum()


@functools.lru_cache(maxsize=1)
def default_pools() -> NamePools:
    male, mp = _read_pool("male_first.csv")
    female, fp = _read_pool("female_first.csv")
    last, lp = _read_pool("last.csv")
    return NamePools(male, female, last, mp, fp, lp)


YEAR_RANGE = (1930, 2009)


def _random_dob(rng: np.random.Generator) -> str:
    start = dt.date(YEAR_RANGE[0], 1, 1).toordinal()
    stop = dt.date(YEAR_RANGE[1], 12, 31).toordinal()
    return dt.date.fromordinal(int(rng.integers(start, stop + 1))).isoformat()


def _pick(rng: np.random.Generator, names: Sequence[str], probs: np.ndarray) -> str:
    return names[int(rng.choice(len(names), p=probs))]


def _random_record(rng: np.random.Generator, pools: NamePools) -> Record:
    gender = "M" if rng.random() < 0.5 else "F"
    first = _pick(rng, pools.male, pools.male_p) if gender == "M" else _pick(rng, pools.female, pools.female_p)
    return Record(
        (
            first,
            _pick(rng, pools.last, pools.last_p),
            _random_dob(rng),
            gender,
            _pick(rng, pools.female, pools.female_p),
            _pick(rng, pools.last, pools.last_p),
            _pick(rng, pools.male, pools.male_p),
        )
    )


def generate_base(n: int, seed: int = 0, pools: NamePools | None = None) -> list[Record]:
    """``n`` schema-complete records; names drawn by census frequency."""
    if n < 0:
        raise ValueError("n must be >= 0")
    pools = pools or default_pools()
    rng = np.random.default_rng([seed, 0x62617365])
    return [_random_record(rng, pools) for _ in range(n)]


def random_value(attr: str, rng: np.random.Generator, pools: NamePools | None = None) -> str:
    pools = pools or default_pools()
    if attr in ("first_name", "mother_first_name"):
        return _pick(rng, pools.female, pools.female_p) if attr.startswith("mother") or rng.random() < 0.5 else _pick(rng, pools.male, pools.male_p)
    if attr == "father_first_name":
        return _pick(rng, pools.male, pools.male_p)
    if attr in ("last_name", "mother_last_name"):
        return _pick(rng, pools.last, pools.last_p)
    if attr == "dob":
        return _random_dob(rng)
    if attr == "gender":
        return "M" if rng.random() < 0.5 else "F"
    raise ValueError(f"unknown attribute {attr!r}")


def _default_menus() -> dict[str, tuple[str, ...]]:
    menus = {name: CHAR_EDITS for name in SCHEMA}
    menus["dob"] = DOB_EDITS
    menus["gender"] = GENDER_EDITS
    return menus


@dataclass(frozen=True)
class PerturbationConfig:
    max_perturbations: int = 4
    destructive_probability: float = 1 / 16
    menus: dict[str, tuple[str, ...]] = field(default_factory=_default_menus)
    attributes: tuple[str, ...] = SCHEMA

    def __post_init__(self):
        if self.max_perturbations < 1:
            raise ValueError("max_perturbations must be >= 1")
        if not 0 <= self.destructive_probability <= 1:
            raise ValueError("destructive_probability must be in [0, 1]")
        for name in self.attributes:
            if not self.menus.get(name):
                raise ValueError(f"empty perturbation menu for {name!r}")


@dataclass(frozen=True)
class Edit:
    attribute: str
    kind: str
    destructive: bool


def _char_edit(value: str, kind: str, rng: np.random.Generator) -> str:
    n = len(value)
    if kind == "insert":
        pos = int(rng.integers(0, n + 1))
        return value[:pos] + ALPHABET[int(rng.integers(26))] + value[pos:]
    if n == 0:
        return value
    if kind == "delete":
        pos = int(rng.integers(0, n))
        return value[:pos] + value[pos + 1 :]
    if kind == "replace":
        pos = int(rng.integers(0, n))
        choices = [c for c in ALPHABET if c != value[pos]]
        return value[:pos] + choices[int(rng.integers(len(choices)))] + value[pos + 1 :]
    if kind == "swap":
        if n < 2:
            return value
        pos = int(rng.integers(0, n - 1))
        return value[:pos] + value[pos + 1] + value[pos] + value[pos + 2 :]
    raise ValueError(f"unknown character edit {kind!r}")


def snap_to_january_first(dob: str) -> str:
    return f"{dob[:4]}-01-01" if len(dob) >= 4 else dob


def _dob_edit(value: str, kind: str, rng: np.random.Generator) -> str:
    if kind == "jan1":
        return snap_to_january_first(value)
    digits = [i for i, c in enumerate(value) if c.isdigit()]
    if not digits:
        return value
    chars = list(value)
    if kind == "replace":
        pos = digits[int(rng.integers(len(digits)))]
        chars[pos] = str((int(chars[pos]) + int(rng.integers(1, 10))) % 10)
    elif kind == "swap":
        pairs = [i for i in digits if i + 1 in digits]
        if not pairs:
            return value
        pos = pairs[int(rng.integers(len(pairs)))]
        chars[pos], chars[pos + 1] = chars[pos + 1], chars[pos]
    else:
        raise ValueError(f"unknown date edit {kind!r}")
    return "".join(chars)


def perturb_with_log(
    record: Record,
    config: PerturbationConfig | None = None,
    rng: np.random.Generator | None = None,
    pools: NamePools | None = None,
) -> tuple[Record, list[Edit]]:
    config = config or PerturbationConfig()
    rng = rng if rng is not None else np.random.default_rng()
    values = list(record.attributes)
    names = list(config.attributes)
    log = []
    for _ in range(int(rng.integers(1, config.max_perturbations + 1))):
        a = int(rng.integers(len(names)))
        attr = names[a]
        if rng.random() < config.destructive_probability:
            if rng.random() < 0.5:
                values[a], kind = "", "delete_value"
            else:
                values[a], kind = random_value(attr, rng, pools), "random_value"
            log.append(Edit(attr, kind, True))
            continue
        menu = config.menus[attr]
        kind = menu[int(rng.integers(len(menu)))]
        if kind == "reassign":
            values[a] = random_value(attr, rng, pools)
        elif attr == "dob" or kind == "jan1":
            values[a] = _dob_edit(values[a], kind, rng)
        elif attr in FIXED_LENGTH and kind in ("insert", "delete"):
            values[a] = _char_edit(values[a], "replace", rng)
        else:
            values[a] = _char_edit(values[a], kind, rng)
        log.append(Edit(attr, kind, False))
    return Record(tuple(values)), log


def perturb(record: Record, config: PerturbationConfig | None = None, rng: np.random.Generator | None = None) -> Record:
    return perturb_with_log(record, config, rng)[0]


@dataclass(frozen=True)
class LabeledPair:
    record: Record
    is_duplicate: bool
    original: Record | None = None
    reference_index: int | None = None


@dataclass
class EvalCorpus:
    reference: list[Record]
    test: list[LabeledPair]

    @property
    def labels(self) -> np.ndarray:
        return np.array([p.is_duplicate for p in self.test], dtype=bool)


def build_eval_corpus(n_ref: int, n_dup: int, n_nondup: int, seed: int = 0, config: PerturbationConfig | None = None) -> EvalCorpus:
    """Reference records plus duplicates of some of them and fresh non-duplicates."""
    if n_dup > n_ref:
        raise ValueError("cannot draw more duplicates than reference records")
    pools = default_pools()
    reference = generate_base(n_ref, seed, pools)
    rng = np.random.default_rng([seed, 0x74657374])
    originals = rng.choice(n_ref, size=n_dup, replace=False) if n_dup else np.zeros(0, dtype=int)
    test = []
    for idx in originals:
        dup = perturb(reference[int(idx)], config, rng)
        test.append(LabeledPair(dup, True, reference[int(idx)], int(idx)))
    known = set(reference)
    fresh = np.random.default_rng([seed, 0x6E6F6E64])
    while len(test) < n_dup + n_nondup:
        rec = _random_record(fresh, pools)
        if rec not in known:
            known.add(rec)
            test.append(LabeledPair(rec, False))
    order = rng.permutation(len(test))
    return EvalCorpus(reference, [test[i] for i in order])


# --------------------------------------------------------------------------
# CSV


class CsvFormatError(ValueError):
    def __init__(self, row: int, message: str):
        super().__init__(f"row {row}: {message}")
        self.row = row


@dataclass
class IngestResult:
    records: list[Record]
    dropped: int = 0
    extra: list[dict] = field(default_factory=list)


def _year_of(dob: str) -> str:
    head = dob.strip()[:4]
    return head if len(head) == 4 and head.isdigit() else ""


def ingest_csv(
    path: str | Path,
    mapping: dict[str, str] | None = None,
    schema: Sequence[str] = SCHEMA,
    drop_incomplete: bool = True,
) -> IngestResult:
    """Read records; rows without first name, last name, or year of birth are dropped.

    ``mapping`` maps schema attributes to CSV column names (identity by
    default). Columns not in the mapping are returned per row in ``extra``.
    ``drop_incomplete=False`` keeps every row, for labelled test files whose
    perturbed records may have lost a required value.
    """
    mapping = {name: name for name in schema} | dict(mapping or {})
    records, extra, dropped = [], [], 0
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, strict=True)
        try:
            header = next(reader)
        except StopIteration:
            return IngestResult([], 0)
        except csv.Error as exc:
            raise CsvFormatError(1, str(exc)) from None
        columns = {name: i for i, name in enumerate(header)}
        missing = [mapping[a] for a in ("first_name", "last_name", "dob") if mapping.get(a) not in columns]
        if missing:
            raise CsvFormatError(1, f"missing required columns {missing}")
        used = {mapping[a] for a in schema if mapping.get(a) in columns}
        while True:
            try:
                row = next(reader)
            except StopIteration:
                break
            except csv.Error as exc:
                raise CsvFormatError(reader.line_num, str(exc)) from None
            if not row:
                continue
            if len(row) != len(header):
                raise CsvFormatError(reader.line_num, f"expected {len(header)} fields, got {len(row)}")
            values = {a: row[columns[mapping[a]]].strip() if mapping.get(a) in columns else "" for a in schema}
            if drop_incomplete and (not values["first_name"] or not values["last_name"] or not _year_of(values["dob"])):
                dropped += 1
                continue
            records.append(Record(tuple(values[a] for a in schema)))
            extra.append({h: row[i] for h, i in columns.items() if h not in used})
    return IngestResult(records, dropped, extra)


def export_csv(path: str | Path, records: Iterable[Record], schema: Sequence[str] = SCHEMA, extra: Sequence[dict] | None = None):
    records = list(records)
    extra_cols = sorted({k for e in extra or () for k in e})
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([*schema, *extra_cols])
        for n, rec in enumerate(records):
            more = extra[n] if extra else {}
            writer.writerow([*rec.attributes, *(more.get(c, "") for c in extra_cols)])


def export_corpus(directory: str | Path, corpus: EvalCorpus) -> tuple[Path, Path]:
    """Write ``reference.csv`` and ``test.csv`` (with label and reference index)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    ref_path, test_path = directory / "reference.csv", directory / "test.csv"
    export_csv(ref_path, corpus.reference, extra=[{"record_id": str(i)} for i in range(len(corpus.reference))])
    export_csv(
        test_path,
        [p.record for p in corpus.test],
        extra=[
            {
                "label": "duplicate" if p.is_duplicate else "non-duplicate",
                "reference_index": "" if p.reference_index is None else str(p.reference_index),
            }
            for p in corpus.test
        ],
    )
    return ref_path, test_path


def load_corpus(directory: str | Path) -> EvalCorpus:
    directory = Path(directory)
    ref = ingest_csv(directory / "reference.csv")
    test = ingest_csv(directory / "test.csv", drop_incomplete=False)
    if ref.dropped:
        raise ValueError(f"reference.csv has {ref.dropped} incomplete rows")
    pairs = []
    for rec, more in zip(test.records, test.extra):
        idx = int(more["reference_index"]) if more.get("reference_index") else None
        dup = more.get("label") == "duplicate"
        pairs.append(LabeledPair(rec, dup, ref.records[idx] if idx is not None else None, idx))
    return EvalCorpus(ref.records, pairs)
