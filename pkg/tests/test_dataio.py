import gzip

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from s3vmkit.dataio import (
    EmptyDataError,
    ParseError,
    SplitSpec,
    load_dataset,
    make_split,
    normalize_features,
    parse_libsvm,
    parse_registry,
    serialize_libsvm,
)
from tests.conftest import dataset_from_dense


def test_parse_basic():
    d = parse_libsvm("+1 1:0.5 3:1.0\n-1 2:0.2")
    assert d.n_samples == 2
    assert d.n_features == 3
    assert d.labels.tolist() == [1, -1]
    dense = d.X.toarray()
    assert dense[0].tolist() == [0.5, 0.0, 1.0]
    assert dense[1].tolist() == [0.0, 0.2, 0.0]


def test_parse_accepts_bytes_and_blank_lines():
    d = parse_libsvm(b"+1 1:2\n\n-1 1:4\n")
    assert d.n_samples == 2


def test_parse_empty_input():
    with pytest.raises(EmptyDataError):
        parse_libsvm("")


def test_parse_bad_label_reports_line():
    with pytest.raises(ParseError, match="line 2"):
        parse_libsvm("+1 1:1\nxyz 1:1")


def test_parse_bad_token_reports_line():
    with pytest.raises(ParseError, match="line 1"):
        parse_libsvm("+1 a:b")


@pytest.mark.parametrize("line", ["+1 2:1 2:3", "+1 3:1 2:1"])
def test_parse_nonincreasing_indices(line):
    with pytest.raises(ParseError, match="strictly increasing"):
        parse_libsvm(line)


def test_label_mapping_positive_vs_nonpositive():
    d = parse_libsvm("0.5 1:1\n0 1:1")
    assert d.labels.tolist() == [1, -1]
    d2 = parse_libsvm("0.5 1:1\n-3 1:1\n0 1:1", binary_map=True)
    assert d2.labels.tolist() == [1, -1, -1]


def test_multiclass_rejected_without_flag():
    text = "1 1:1\n2 1:1\n3 1:1"
    with pytest.raises(ParseError, match="binary_map"):
        parse_libsvm(text)
    d = parse_libsvm(text, binary_map=True)
    assert d.labels.tolist() == [1, 1, 1]


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_serialize_round_trip(seed):
    rng = np.random.default_rng(seed)
    n, f = 12, 6
    X = rng.uniform(-2, 3, (n, f)) * (rng.random((n, f)) < 0.6)
    labels = rng.choice([-1, 1], n)
    d = dataset_from_dense(X, labels)
    again = parse_libsvm(serialize_libsvm(d))
    assert again.labels.tolist() == d.labels.tolist()
    # column count can shrink when trailing columns are empty
    assert np.allclose(again.X.toarray(), d.X.toarray()[:, : again.n_features])
    assert d.X.toarray()[:, again.n_features:].sum() == 0


def test_load_dataset_gzip(tmp_path):
    raw = b"+1 1:0.5\n-1 1:0.25\n"
    path = tmp_path / "tiny.txt.gz"
    path.write_bytes(gzip.compress(raw))
    d = load_dataset(path)
    assert d.n_samples == 2
    assert d.X.toarray()[:, 0].tolist() == [0.5, 0.25]


def test_normalize_minmax_column():
    d = dataset_from_dense([[0.0], [2.0], [4.0]], [1, -1, 1])
    nd = normalize_features(d)
    assert nd.X.toarray()[:, 0].tolist() == [0.0, 0.5, 1.0]


def test_normalize_constant_column_maps_to_zero():
    d = dataset_from_dense([[3.0, 1.0], [3.0, 2.0], [3.0, 3.0]], [1, -1, 1])
    nd = normalize_features(d)
    assert nd.X.toarray()[:, 0].tolist() == [0.0, 0.0, 0.0]
    assert nd.X.toarray()[:, 1].tolist() == [0.0, 0.5, 1.0]


def test_normalize_unit_range_column_unchanged():
    d = dataset_from_dense([[0.0], [0.25], [1.0]], [1, -1, 1])
    nd = normalize_features(d)
    assert nd.X.toarray()[:, 0].tolist() == [0.0, 0.25, 1.0]


def test_normalize_sparse_zero_min_stays_sparse():
    d = parse_libsvm("+1 1:2\n-1 2:5\n+1 1:4")
    nd = normalize_features(d)
    assert nd.X.nnz == d.X.nnz
    assert nd.X.toarray()[:, 0].tolist() == [0.5, 0.0, 1.0]
    assert nd.X.toarray()[:, 1].tolist() == [0.0, 1.0, 0.0]


def test_normalize_negative_min_densifies_honestly():
    d = parse_libsvm("+1 1:-1\n-1 2:1\n+1 1:1")
    nd = normalize_features(d)
    # implicit zero of column 1 lands at 0.5 = (0 - (-1)) / 2
    assert nd.X.toarray()[:, 0].tolist() == [0.0, 0.5, 1.0]


def test_normalize_empty_dataset_rejected():
    d = dataset_from_dense(np.zeros((0, 2)), [])
    with pytest.raises(EmptyDataError):
        normalize_features(d)


@settings(max_examples=30, deadline=None)
@given(
    st.lists(
        st.lists(st.floats(-1e6, 1e6, allow_nan=False, width=32), min_size=3, max_size=3),
        min_size=2,
        max_size=8,
    )
)
def test_normalize_idempotent_and_bounded(rows):
    d = dataset_from_dense(np.asarray(rows), [1] * (len(rows) - 1) + [-1])
    once = normalize_features(d)
    dense = once.X.toarray()
    assert dense.min(initial=0.0) >= 0.0 and dense.max(initial=0.0) <= 1.0
    twice = normalize_features(once)
    assert np.array_equal(twice.X.toarray(), dense)


def _random_labeled(n=120, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.uniform(0, 1, (n, 5))
    labels = rng.choice([-1, 1], n)
    labels[:2] = [1, -1]
    return dataset_from_dense(X, labels)


def test_split_sizes_and_hidden_labels():
    d = _random_labeled()
    s = make_split(d, SplitSpec(n_labeled=7, seed=3))
    assert len(s.labeled_idx) == 7
    assert len(s.unlabeled_idx) == 113
    assert np.all(s.labels[s.unlabeled_idx] == 0)
    assert np.all(np.abs(s.labels[s.labeled_idx]) == 1)
    assert np.array_equal(s.truth, d.labels)


def test_split_deterministic():
    d = _random_labeled()
    a = make_split(d, SplitSpec(n_labeled=5, seed=7))
    b = make_split(d, SplitSpec(n_labeled=5, seed=7))
    assert np.array_equal(a.labeled_idx, b.labeled_idx)
    assert np.array_equal(a.labels, b.labels)


def test_split_distinct_seeds_differ():
    d = _random_labeled()
    seen = {tuple(make_split(d, SplitSpec(n_labeled=5, seed=s)).labeled_idx)
            for s in range(10)}
    assert len(seen) == 10


def test_split_stratified_keeps_both_classes():
    rng = np.random.default_rng(0)
    labels = np.array([1] * 117 + [-1] * 3)
    d = dataset_from_dense(rng.uniform(0, 1, (120, 4)), labels)
    for seed in range(10):
        s = make_split(d, SplitSpec(n_labeled=3, seed=seed))
        lab = s.labels[s.labeled_idx]
        assert (lab == 1).any() and (lab == -1).any()


def test_split_rejects_single_class_stratified():
    d = dataset_from_dense(np.random.default_rng(0).uniform(0, 1, (10, 2)), [1] * 10)
    with pytest.raises(ValueError, match="single-class"):
        make_split(d, SplitSpec(n_labeled=3, seed=0))


def test_split_rejects_oversized_labeled_set():
    d = _random_labeled(n=10)
    with pytest.raises(ValueError, match="smaller"):
        make_split(d, SplitSpec(n_labeled=10, seed=0))


def test_split_spec_minimum_size():
    with pytest.raises(ValueError):
        SplitSpec(n_labeled=1, seed=0)


def test_registry_round_trip():
    text = """
# benchmark registry
name=australian
path=australian.txt
C=0.922
Cstar_over_C=0.1
r=0.44
n_labeled=3

name=svmguide1
path=svmguide1.txt
C=1.055
Cstar_over_C=0.001
r=0.65
n_labeled=15
"""
    entries = parse_registry(text)
    assert [e.name for e in entries] == ["australian", "svmguide1"]
    assert entries[0].C == 0.922
    assert entries[1].cstar_over_c == 0.001
    assert entries[1].n_labeled == 15


def test_registry_missing_key():
    with pytest.raises(ParseError, match="missing"):
        parse_registry("name=x\npath=y\nC=1\nCstar_over_C=0.1\nr=0.5")


def test_registry_unknown_key():
    with pytest.raises(ParseError, match="expected one of"):
        parse_registry("name=x\nbogus=1")
