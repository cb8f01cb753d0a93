import gzip
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ctrrefine.data import (MISSING, UNKNOWN, ConfigurationError, FieldSchema, IngestionError,
                            RawRecord, build_vocabulary, discretize_numeric, encode, encode_all,
                            load_cache, prepare, read_cache_manifest, read_criteo, read_delimited,
                            read_records, save_cache, split, split_sizes)


def criteo_line(label=1, ints=None, cats=None):
    ints = ints if ints is not None else [str(i) for i in range(13)]
    cats = cats if cats is not None else [f"c{i}" for i in range(26)]
    return "\t".join([str(label)] + ints + cats)


# -- vocabulary --------------------------------------------------------------

def test_toy_vocabulary_min_count_1(toy_schema):
    assert toy_schema.vocab_sizes == [3, 3]
    assert toy_schema.num_features == 6
    assert toy_schema.vocabularies[0] == [UNKNOWN, "a1", "a2"]
    assert toy_schema.vocabularies[1] == [UNKNOWN, "b2", "b1"]


def test_toy_row_encodes_to_hand_ids(toy_schema):
    # field A: <unknown>=0, a1=1, a2=2; field B (offset 3): <unknown>=3, b2=4, b1=5
    assert encode(RawRecord(1, ("a1", "b2")), toy_schema).feature_ids == (1, 4)


def test_min_count_above_all_counts_collapses(toy_records):
    schema = build_vocabulary(toy_records, min_count=3)
    assert schema.vocab_sizes == [1, 1]
    x, _ = encode_all(toy_records, schema)
    assert (x == np.array([schema.unknown(0), schema.unknown(1)])).all()


def test_unseen_value_maps_to_field_unknown(toy_schema):
    ids = encode(RawRecord(0, ("zz", "b1")), toy_schema).feature_ids
    assert ids[0] == toy_schema.unknown(0) == 0
    assert ids[1] == 5


def test_min_count_zero_rejected(toy_records):
    with pytest.raises(ConfigurationError):
        build_vocabulary(toy_records, min_count=0)


def test_ragged_records_rejected():
    with pytest.raises(IngestionError, match="line 2"):
        build_vocabulary([RawRecord(1, ("a", "b")), RawRecord(0, ("a",))], 1)


def test_decode_round_trip(toy_schema):
    for fid in range(toy_schema.num_features):
        k, tok = toy_schema.decode(fid)
        assert toy_schema.feature_id(k, tok) == fid
    with pytest.raises(IndexError):
        toy_schema.decode(6)


def test_schema_requires_unknown_first():
    with pytest.raises(ValueError):
        FieldSchema(["A"], [["a1", UNKNOWN]])


def test_with_totals_hits_exact_counts():
    s = FieldSchema.with_totals(39, 1_086_784)
    assert (s.num_fields, s.num_features) == (39, 1_086_784)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.sampled_from("abcde"), st.sampled_from("xyz")), min_size=1, max_size=40),
       st.integers(1, 6))
def test_higher_threshold_never_grows_vocab(rows, t):
    recs = [RawRecord(0, r) for r in rows]
    lo, hi = build_vocabulary(recs, t), build_vocabulary(recs, t + 1)
    assert all(a >= b for a, b in zip(lo.vocab_sizes, hi.vocab_sizes))
    x, _ = encode_all(recs, hi)
    for k in range(hi.num_fields):  # every id stays within its own field's range
        assert ((x[:, k] >= hi.offsets[k]) & (x[:, k] < hi.offsets[k] + hi.vocab_sizes[k])).all()


# -- discretization --------------------------------------------------------------

@pytest.mark.parametrize("raw,token", [(100, "21"), (2, "2"), (1, "1"), (0, "0"), (-5, "-5"),
                                       ("", MISSING), (None, MISSING), ("3", "1")])
def test_discretize(raw, token):
    assert discretize_numeric(raw) == token


@settings(max_examples=100, deadline=None)
@given(st.integers(3, 10**9))
def test_discretize_matches_formula(x):
    assert discretize_numeric(x) == str(math.floor(math.log(x) ** 2))


# -- readers --------------------------------------------------------------------

def test_read_criteo_row():
    ints = ["", "2", "100"] + ["0"] * 10
    cats = [""] + [f"c{i}" for i in range(25)]
    (rec,) = read_criteo([criteo_line(0, ints, cats) + "\n"])
    assert rec.label == 0 and len(rec.values) == 39
    assert rec.values[:3] == (MISSING, "2", "21")
    assert rec.values[13] == MISSING


def test_read_criteo_bad_column_count_names_line():
    with pytest.raises(IngestionError, match="line 2"):
        list(read_criteo([criteo_line(), "1\t2\t3"]))


def test_read_criteo_bad_integer_names_line():
    ints = ["x"] + ["0"] * 12
    with pytest.raises(IngestionError, match="line 1"):
        list(read_criteo([criteo_line(1, ints)]))


def test_read_delimited_header_and_labels():
    names, recs = read_delimited(["user,label,item", "u1,1,i1", "u2,-1,i2", ""])
    recs = list(recs)
    assert names == ["user", "item"]
    assert [r.label for r in recs] == [1, 0]
    assert recs[1].values == ("u2", "i2")


def test_read_delimited_errors():
    with pytest.raises(IngestionError, match="line 1"):
        read_delimited(["a,b", "1,2"])
    _, recs = read_delimited(["label,a", "1,x,y"])
    with pytest.raises(IngestionError, match="line 2"):
        list(recs)


def test_read_records_gzip_criteo(tmp_path):
    p = tmp_path / "day.txt.gz"
    with gzip.open(p, "wt") as fh:
        fh.write(criteo_line(1) + "\n" + criteo_line(0) + "\n")
    names, recs = read_records(p, "criteo")
    assert len(names) == 39 and len(recs) == 2


def test_read_records_unknown_format(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("label,a\n1,x\n")
    with pytest.raises(ConfigurationError):
        read_records(p, "parquet")


# -- split ---------------------------------------------------------------------

def test_split_sizes_ten_records():
    assert split_sizes(10, (0.8, 0.1, 0.1)) == (8, 1, 1)


def test_split_sizes_frappe_total():
    assert split_sizes(288_609, (0.8, 0.1, 0.1)) == (230_889, 28_860, 28_860)


@pytest.mark.parametrize("ratios", [(0.8, 0.1), (0.8, 0.1, 0.2), (0.5, 0.5, 0.1)])
def test_bad_ratios(ratios):
    with pytest.raises(ConfigurationError):
        split_sizes(10, ratios)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 100_000), st.floats(0.05, 0.9), st.floats(0.01, 0.5))
def test_split_sizes_track_ratios(n, a, b):
    if a + b >= 1:
        return
    ratios = (1 - a - b, a, b)
    tr, va, te = split_sizes(n, ratios)
    assert tr + va + te == n
    # validation and test are floored; train absorbs both remainders
    assert 0 <= n * a - va < 1 + 1e-6 and 0 <= n * b - te < 1 + 1e-6
    assert 0 <= tr - n * ratios[0] < 2 + 1e-6


def test_split_deterministic_and_disjoint(toy_schema):
    x = np.arange(20).reshape(10, 2)
    y = np.arange(10) % 2
    a, b = split(x, y, toy_schema, seed=7), split(x, y, toy_schema, seed=7)
    assert a.sizes == (8, 1, 1)
    for k in ("train_x", "valid_x", "test_x", "train_y"):
        assert getattr(a, k).tobytes() == getattr(b, k).tobytes()
    idx = np.concatenate(list(a.source_index.values()))
    assert sorted(idx) == list(range(10))
    c = split(x, y, toy_schema, seed=8)
    assert not np.array_equal(a.source_index["train"], c.source_index["train"])


# -- end to end + cache -------------------------------------------------------------

def test_prepare_and_cache_round_trip(tmp_path):
    p = tmp_path / "toy.csv"
    rows = ["label,user,item"] + [f"{i % 2},u{i % 3},i{i % 4}" for i in range(40)]
    p.write_text("\n".join(rows) + "\n")
    bundle = prepare(p, "frappe", min_count=2, seed=1)
    assert bundle.sizes == (32, 4, 4)
    assert bundle.schema.field_names == ["user", "item"]
    cache = tmp_path / "toy.cache"
    save_cache(bundle, cache)
    head = cache.read_bytes().split(b"\n")[1]
    assert b"vocabularies" in head  # manifest is readable text
    assert read_cache_manifest(cache)["sizes"] == [32, 4, 4]
    back = load_cache(cache)
    assert back.schema.to_manifest() == bundle.schema.to_manifest()
    for k in ("train_x", "train_y", "valid_x", "valid_y", "test_x", "test_y"):
        np.testing.assert_array_equal(getattr(back, k), getattr(bundle, k))


def test_load_cache_rejects_other_files(tmp_path):
    p = tmp_path / "x.cache"
    p.write_bytes(b"not a cache\n")
    with pytest.raises(IngestionError):
        load_cache(p)
