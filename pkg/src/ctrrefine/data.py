"""Raw CTR ingestion: vocabularies, numeric discretization, encoding, splits.

Three raw formats are understood:

* ``criteo`` -- tab separated, no header: label, 13 integer columns, 26
  categorical columns.
* ``frappe`` -- delimited with a header row; every non-label column is
  categorical.
* ``generic`` -- like ``frappe`` but with configurable numeric columns.

Every field owns a ``<unknown>`` token at local index 0; surviving tokens
follow in order of descending count, ties broken by the token string.
"""
from __future__ import annotations

import bz2
import gzip
import io
import json
import lzma
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

UNKNOWN = "<unknown>"
MISSING = "<missing>"

CRITEO_NUMERIC = [f"I{i}" for i in range(1, 14)]
CRITEO_CATEGORICAL = [f"C{i}" for i in range(1, 27)]

CACHE_MAGIC = b"CTRREFINE-CACHE 1\n"


class IngestionError(ValueError):
    """A raw row could not be parsed."""


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class RawRecord:
    """One parsed row: the label plus one string token per field."""

    label: int
    values: tuple[str, ...]


@dataclass
class FieldSchema:
    """Multi-field categorical vocabulary with per-field offsets."""

    field_names: list[str]
    vocabularies: list[list[str]]

    def __post_init__(self):
        if len(self.field_names) != len(self.vocabularies):
            raise ValueError("one vocabulary per field required")
        for name, vocab in zip(self.field_names, self.vocabularies):
            if not vocab or vocab[0] != UNKNOWN:
                raise ValueError(f"field {name!r} must start with the {UNKNOWN} token")
        self._index = [{tok: i for i, tok in enumerate(v)} for v in self.vocabularies]
        self.offsets = [0]
        for v in self.vocabularies[:-1]:
            self.offsets.append(self.offsets[-1] + len(v))

    @property
    def num_fields(self) -> int:
        return len(self.field_names)

    @property
    def vocab_sizes(self) -> list[int]:
        return [len(v) for v in self.vocabularies]

    @property
    def num_features(self) -> int:
        return sum(self.vocab_sizes)

    def unknown(self, k: int) -> int:
        return self.offsets[k]

    def feature_id(self, k: int, token: str) -> int:
        return self.offsets[k] + self._index[k].get(token, 0)

    def decode(self, feature_id: int) -> tuple[int, str]:
        """Map a global feature id back to ``(field index, token)``."""
        if not 0 <= feature_id < self.num_features:
            raise IndexError(f"feature id {feature_id} outside [0, {self.num_features})")
        k = int(np.searchsorted(self.offsets, feature_id, side="right")) - 1
        return k, self.vocabularies[k][feature_id - self.offsets[k]]

    def field_of(self, feature_id: int) -> int:
        return self.decode(feature_id)[0]

    def to_manifest(self) -> dict:
        return {"field_names": self.field_names, "vocabularies": self.vocabularies}

    @classmethod
    def from_manifest(cls, manifest: dict) -> "FieldSchema":
        return cls(list(manifest["field_names"]), [list(v) for v in manifest["vocabularies"]])

    @classmethod
    def synthetic(cls, vocab_sizes: Sequence[int], prefix: str = "f") -> "FieldSchema":
        """Schema with placeholder tokens, for audits and probes that need no data."""
        names = [f"{prefix}{k}" for k in range(len(vocab_sizes))]
        vocabs = [[UNKNOWN] + [str(j) for j in range(1, n)] for n in vocab_sizes]
        return cls(names, vocabs)

    @classmethod
    def with_totals(cls, num_fields: int, num_features: int) -> "FieldSchema":
        """Synthetic schema with exactly ``num_features`` spread over ``num_fields``."""
        base, extra = divmod(num_features, num_fields)
        return cls.synthetic([base + (1 if k < extra else 0) for k in range(num_fields)])


@dataclass(frozen=True)
class EncodedInstance:
    feature_ids: tuple[int, ...]
    label: int


@dataclass
class DatasetBundle:
    """Train/validation/test id matrices (``N x F``) with labels."""

    schema: FieldSchema
    seed: int
    train_x: np.ndarray
    train_y: np.ndarray
    valid_x: np.ndarray
    valid_y: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray
    source_index: dict = field(default_factory=dict)

    @property
    def sizes(self) -> tuple[int, int, int]:
        return len(self.train_y), len(self.valid_y), len(self.test_y)


# -- numeric discretization -------------------------------------------------

def discretize_numeric(x) -> str:
    """Bucket a raw integer value: ``floor(ln(x)**2)`` above 2, literal otherwise."""
    if x is None:
        return MISSING
    if isinstance(x, str):
        x = x.strip()
        if x == "":
            return MISSING
        x = int(x)
    x = int(x)
    if x > 2:
        return str(int(math.floor(math.log(x) ** 2)))
    return str(x)


# -- readers ----------------------------------------------------------------

def _open_text(path) -> io.TextIOBase:
    path = Path(path)
    opener = {".gz": gzip.open, ".bz2": bz2.open, ".xz": lzma.open}.get(path.suffix, open)
    return opener(path, "rt", encoding="utf-8", newline="")


def read_criteo(lines: Iterable[str]) -> Iterator[RawRecord]:
    ncols = 1 + len(CRITEO_NUMERIC) + len(CRITEO_CATEGORICAL)
    for lineno, line in enumerate(lines, start=1):
        line = line.rstrip("\r\n")
        if not line:
            continue
        cols = line.split("\t")
        if len(cols) != ncols:
            raise IngestionError(f"line {lineno}: expected {ncols} columns, got {len(cols)}")
        try:
            label = int(cols[0])
            numeric = [discretize_numeric(c) for c in cols[1:14]]
        except ValueError as exc:
            raise IngestionError(f"line {lineno}: {exc}") from None
        cats = [c if c != "" else MISSING for c in cols[14:]]
        yield RawRecord(label, tuple(numeric + cats))


def read_delimited(lines: Iterable[str], label_column: str = "label", delimiter: str = ",",
                   numeric_columns: Sequence[str] = ()) -> tuple[list[str], Iterator[RawRecord]]:
    """Parse a headed delimited stream; returns the field names and a record iterator."""
    it = iter(lines)
    header_line = next(it, None)
    if header_line is None:
        raise IngestionError("line 1: empty input, header expected")
    header = [h.strip() for h in header_line.rstrip("\r\n").split(delimiter)]
    if label_column not in header:
        raise IngestionError(f"line 1: label column {label_column!r} not in header")
    li = header.index(label_column)
    names = [h for i, h in enumerate(header) if i != li]
    numeric = set(numeric_columns)

    def records():
        for lineno, line in enumerate(it, start=2):
            line = line.rstrip("\r\n")
            if not line:
                continue
            cols = line.split(delimiter)
            if len(cols) != len(header):
                raise IngestionError(
                    f"line {lineno}: expected {len(header)} columns, got {len(cols)}")
            try:
                label = int(float(cols[li]))
            except ValueError:
                raise IngestionError(f"line {lineno}: bad label {cols[li]!r}") from None
            if label not in (0, 1):
                # frappe ships -1/1 labels in some distributions
                label = 1 if label > 0 else 0
            vals = []
            for i, c in enumerate(cols):
                if i == li:
                    continue
                c = c.strip()
                if header[i] in numeric:
                    try:
                        vals.append(discretize_numeric(c))
                    except ValueError:
                        raise IngestionError(f"line {lineno}: bad integer {c!r}") from None
                else:
                    vals.append(c if c != "" else MISSING)
            yield RawRecord(label, tuple(vals))

    return names, records()


def read_records(path, fmt: str, label_column: str = "label", delimiter: str | None = None,
                 numeric_columns: Sequence[str] = ()) -> tuple[list[str], list[RawRecord]]:
    """Read a whole raw file into memory."""
    with _open_text(path) as fh:
        if fmt == "criteo":
            return CRITEO_NUMERIC + CRITEO_CATEGORICAL, list(read_criteo(fh))
        if fmt in ("frappe", "generic"):
            names, recs = read_delimited(fh, label_column, delimiter or ",",
                                         numeric_columns if fmt == "generic" else ())
            return names, list(recs)
    raise ConfigurationError(f"unknown data.format {fmt!r}")


# -- vocabulary / encoding / split -----------------------------------------

def build_vocabulary(records: Iterable[RawRecord], min_count: int = 10,
                     field_names: Sequence[str] | None = None) -> FieldSchema:
    if min_count < 1:
        raise ConfigurationError("min_count must be >= 1")
    counters: list[Counter] | None = None
    for lineno, rec in enumerate(records, start=1):
        if counters is None:
            counters = [Counter() for _ in rec.values]
        elif len(rec.values) != len(counters):
            raise IngestionError(
                f"line {lineno}: expected {len(counters)} fields, got {len(rec.values)}")
        for c, v in zip(counters, rec.values):
            c[v] += 1
    if counters is None:
        raise IngestionError("no records")
    vocabs = []
    for c in counters:
        kept = sorted((tok for tok, n in c.items() if n >= min_count and tok != UNKNOWN),
                      key=lambda tok: (-c[tok], tok))
        vocabs.append([UNKNOWN] + kept)
    names = list(field_names) if field_names is not None else [f"f{k}" for k in range(len(vocabs))]
    return FieldSchema(names, vocabs)


def encode(record: RawRecord, schema: FieldSchema) -> EncodedInstance:
    ids = tuple(schema.feature_id(k, v) for k, v in enumerate(record.values))
    return EncodedInstance(ids, int(record.label))


def encode_all(records: Sequence[RawRecord], schema: FieldSchema) -> tuple[np.ndarray, np.ndarray]:
    x = np.empty((len(records), schema.num_fields), dtype=np.int64)
    y = np.empty(len(records), dtype=np.int64)
    for i, rec in enumerate(records):
        x[i] = [schema.feature_id(k, v) for k, v in enumerate(rec.values)]
        y[i] = rec.label
    return x, y


def split_sizes(n: int, ratios: Sequence[float]) -> tuple[int, int, int]:
    if len(ratios) != 3 or abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigurationError(f"split ratios must be three values summing to 1, got {ratios}")
    n_valid = int(math.floor(n * ratios[1] + 1e-9))
    n_test = int(math.floor(n * ratios[2] + 1e-9))
    return n - n_valid - n_test, n_valid, n_test


def split(x: np.ndarray, y: np.ndarray, schema: FieldSchema,
          ratios: Sequence[float] = (0.8, 0.1, 0.1), seed: int = 2022) -> DatasetBundle:
    """Seeded shuffle then slice into train/validation/test."""
    n_train, n_valid, _ = split_sizes(len(y), ratios)
    perm = np.random.default_rng(seed).permutation(len(y))
    tr, va, te = perm[:n_train], perm[n_train:n_train + n_valid], perm[n_train + n_valid:]
    return DatasetBundle(schema, seed, x[tr], y[tr], x[va], y[va], x[te], y[te],
                         source_index={"train": tr, "valid": va, "test": te})


def prepare(path, fmt: str = "frappe", min_count: int = 10, seed: int = 2022,
            ratios: Sequence[float] = (0.8, 0.1, 0.1), label_column: str = "label",
            delimiter: str | None = None, numeric_columns: Sequence[str] = ()) -> DatasetBundle:
    names, records = read_records(path, fmt, label_column, delimiter, numeric_columns)
    schema = build_vocabulary(records, min_count, names)
    x, y = encode_all(records, schema)
    return split(x, y, schema, ratios, seed)


# -- on-disk cache ----------------------------------------------------------
# Layout: magic line, one JSON manifest line (schema, seed, sizes), then an npz payload.

def save_cache(bundle: DatasetBundle, path) -> None:
    manifest = {"schema": bundle.schema.to_manifest(), "seed": bundle.seed,
                "sizes": list(bundle.sizes)}
    buf = io.BytesIO()
    np.savez(buf, train_x=bundle.train_x, train_y=bundle.train_y, valid_x=bundle.valid_x,
             valid_y=bundle.valid_y, test_x=bundle.test_x, test_y=bundle.test_y)
    with open(path, "wb") as fh:
        fh.write(CACHE_MAGIC)
        fh.write(json.dumps(manifest, ensure_ascii=False).encode("utf-8") + b"\n")
        fh.write(buf.getvalue())


def read_cache_manifest(path) -> dict:
    with open(path, "rb") as fh:
        if fh.readline() != CACHE_MAGIC:
            raise IngestionError(f"{path}: not an encoded cache")
        return json.loads(fh.readline())


def load_cache(path) -> DatasetBundle:
    with open(path, "rb") as fh:
        if fh.readline() != CACHE_MAGIC:
            raise IngestionError(f"{path}: not an encoded cache")
        manifest = json.loads(fh.readline())
        arrays = np.load(io.BytesIO(fh.read()))
        return DatasetBundle(FieldSchema.from_manifest(manifest["schema"]), manifest["seed"],
                             *(arrays[k] for k in ("train_x", "train_y", "valid_x", "valid_y",
                                                   "test_x", "test_y")))
