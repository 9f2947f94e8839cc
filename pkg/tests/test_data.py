import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sumorl import data
from sumorl.data import OfflineDataset, Transition, compute_stats
from sumorl.errors import EmptyDatasetError, ParseError, ShapeError

from conftest import random_dataset


def test_single_transition_stats():
    ds = OfflineDataset.from_transitions([Transition(np.array([1.0, 2.0]), np.array([0.5]), 0.3,
                                                     np.array([3.0, 4.0]), False)])
    st_ = compute_stats(ds)
    np.testing.assert_array_equal(st_.mean, [1.0, 2.0, 0.5, 3.0, 4.0])
    np.testing.assert_array_equal(st_.std, 0.0)
    assert st_.zero_std.all()


def test_two_state_stats():
    ds = OfflineDataset(np.array([[0.0], [2.0]]), np.array([[1.0], [1.0]]), np.zeros(2),
                        np.array([[0.0], [2.0]]))
    st_ = compute_stats(ds)
    assert st_.mean[0] == 1.0 and st_.std[0] == 1.0
    assert st_.std[1] == 0.0 and st_.zero_std[1]


def test_stats_permutation_invariant(rng):
    ds = random_dataset(rng, n=200)
    perm = rng.permutation(200)
    a, b = compute_stats(ds), compute_stats(ds.subset(perm))
    np.testing.assert_array_equal(a.mean, b.mean)
    np.testing.assert_array_equal(a.std, b.std)


def test_stats_recomputable(rng):
    ds = random_dataset(rng, n=100)
    x = ds.concat_sas()
    np.testing.assert_allclose(ds.stats.mean, x.mean(axis=0), atol=1e-9)
    np.testing.assert_allclose(ds.stats.std, x.std(axis=0), atol=1e-9)


def test_empty_stats_error():
    ds = OfflineDataset(np.zeros((0, 2)), np.zeros((0, 1)), np.zeros(0), np.zeros((0, 2)))
    with pytest.raises(EmptyDatasetError):
        compute_stats(ds)


def test_dimension_validation():
    with pytest.raises(ShapeError):
        OfflineDataset(np.zeros((3, 2)), np.zeros((3, 1)), np.zeros(3), np.zeros((3, 3)))


def test_dataset_is_read_only(small_dataset):
    with pytest.raises(ValueError):
        small_dataset.s[0, 0] = 1.0


@given(st.integers(0, 2**31), st.integers(1, 300), st.integers(1, 8), st.integers(1, 4))
def test_round_trip(tmp_path_factory, seed, n, d_s, d_a):
    rng = np.random.default_rng(seed)
    ds = random_dataset(rng, n=n, d_s=d_s, d_a=d_a)
    path = tmp_path_factory.mktemp("rt") / "d.sumods"
    data.save(ds, path)
    assert data.load(path) == ds


def test_round_trip_large(tmp_path):
    ds = random_dataset(np.random.default_rng(0), n=10_000, d_s=8, d_a=3)
    data.save(ds, tmp_path / "big.sumods")
    assert data.load(tmp_path / "big.sumods") == ds


def test_round_trip_extreme_values(tmp_path):
    s = np.array([[1e-308, -1.7976931348623157e308], [0.1 + 0.2, -0.0]])
    ds = OfflineDataset(s, np.array([[5e-324], [1.0]]), np.array([0.0, 1.0]), s[::-1])
    data.save(ds, tmp_path / "x.sumods")
    assert data.load(tmp_path / "x.sumods") == ds


def _write(tmp_path, text):
    p = tmp_path / "bad.sumods"
    p.write_text(text)
    return p


ROW = "0 0 1 0.5 1 1 0"


@pytest.mark.parametrize("text, line", [
    (f"sumods v1 d_s=2 d_a=1 n=3\n{ROW}\n{ROW}\n", 4),
    (f"sumods v2 d_s=2 d_a=1 n=1\n{ROW}\n", 1),
    (f"sumods v1 d_s=2 d_a=1 n=2\n{ROW}\n0 nan 1 0.5 1 1 0\n", 3),
    (f"sumods v1 d_s=2 d_a=1 n=1\n0 inf 1 0.5 1 1 0\n", 2),
    (f"sumods v1 d_s=2 d_a=1 n=1\n0 0 1 0.5 1 1\n", 2),
    (f"sumods v1 d_s=2 d_a=1 n=1\n0 0 1 0.5 1 1 2\n", 2),
    (f"sumods v1 d_s=2 d_a=1 n=1\n0 0 x 0.5 1 1 0\n", 2),
    (f"sumods v1 d_s=2 d_a=1 n=1\n{ROW}\n{ROW}\n", 3),
])
def test_parse_errors_name_line(tmp_path, text, line):
    with pytest.raises(ParseError) as info:
        data.load(_write(tmp_path, text))
    assert info.value.line == line
    assert f"line {line}" in str(info.value)


def test_grammar_accepts_extra_whitespace(tmp_path):
    ds = data.load(_write(tmp_path, "sumods v1 d_s=2 d_a=1 n=1\n 0\t0  1 0.5 1 1 1 \n"))
    assert len(ds) == 1 and bool(ds.done[0])
    np.testing.assert_array_equal(ds.s_next, [[1.0, 1.0]])


def test_fingerprint_is_content_hash(small_dataset):
    same = small_dataset.subset(np.arange(len(small_dataset)))
    assert data.fingerprint(same) == data.fingerprint(small_dataset)
    assert data.fingerprint(small_dataset.subset(np.arange(10))) != data.fingerprint(small_dataset)
