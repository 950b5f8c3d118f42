"""Unit tests for datasets, synthesis, CSV ingestion and partitioning."""
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from infra.errors import ConfigError, DataError
from modules.dataset.dataset import (
    N_FOLDS,
    Dataset,
    Partition,
    Standardizer,
    SyntheticSpec,
    load_csv,
    make_synthetic_spec,
    partition,
    round_half_up,
    synthesize,
    write_csv,
)
from tests.fixtures.synthetic import dataset_from_arrays, one_group_dataset, two_group_dataset


def _write(path, text):
    Path(path).write_text(text, encoding="utf-8")
    return str(path)


class TestDataset:
    """Test the (X, Y, A) container contract."""

    def test_valid_dataset(self):
        ds = dataset_from_arrays([[0.0], [1.0], [2.0]], [0, 1, 1], [0, 1, 0])
        assert (ds.n, ds.m, ds.k) == (3, 1, 2)
        assert ds.group_counts().tolist() == [2, 1]
        assert ds.proportions().tolist() == pytest.approx([2 / 3, 1 / 3])

    def test_arrays_are_read_only(self):
        ds = dataset_from_arrays([[0.0], [1.0]], [0, 1], [0, 0])
        with pytest.raises(ValueError):
            ds.features[0, 0] = 5.0

    def test_non_binary_label(self):
        with pytest.raises(DataError) as e:
            dataset_from_arrays([[0.0], [1.0]], [0, 2], [0, 0])
        assert e.value.code == "non_binary_label"

    def test_fractional_label_rejected(self):
        with pytest.raises(DataError):
            dataset_from_arrays([[0.0], [1.0]], [0, 0.5], [0, 0])

    def test_non_finite_feature(self):
        with pytest.raises(DataError) as e:
            dataset_from_arrays([[0.0], [np.nan]], [0, 1], [0, 0])
        assert e.value.code == "non_finite_feature"

    def test_empty_group_named(self):
        with pytest.raises(DataError) as e:
            Dataset(np.zeros((2, 1)), np.array([0, 1]), np.array([0, 0]), ("a", "b"), ("x0",))
        assert e.value.code == "empty_group"
        assert "b" in e.value.detail

    def test_group_members(self):
        ds = dataset_from_arrays(np.arange(6.0), [0, 1, 0, 1, 0, 1], [0, 1, 1, 0, 1, 0])
        assert ds.group_members(1).tolist() == [1, 2, 4]
        assert ds.group_members(0, np.array([5, 0, 1])).tolist() == [5, 0]


class TestSynthesize:
    """Test synthetic generation."""

    def test_deterministic_in_seed(self):
        a = two_group_dataset(n=300, seed=7)
        b = two_group_dataset(n=300, seed=7)
        assert np.array_equal(a.features, b.features)
        assert np.array_equal(a.labels, b.labels)
        assert np.array_equal(a.groups, b.groups)

    def test_different_seeds_differ(self):
        assert not np.array_equal(two_group_dataset(seed=1).features, two_group_dataset(seed=2).features)

    def test_single_group_positive_rate(self):
        spec = SyntheticSpec(group_proportions=(1.0,), means=((0.0,),), coefficients=((0.0,),),
                             intercepts=(0.0,), n=4000, seed=3)
        ds = synthesize(spec)
        # zero coefficients and intercept: Bernoulli(0.5)
        assert abs(ds.labels.mean() - 0.5) < 4 * np.sqrt(0.25 / 4000)

    def test_group_counts_binomial(self):
        spec = make_synthetic_spec((0.9, 0.1), n_features=2, n=5000, seed=11)
        ds = synthesize(spec)
        expected, sd = 500.0, np.sqrt(5000 * 0.1 * 0.9)
        assert abs(ds.group_counts()[1] - expected) < 4 * sd

    def test_names(self):
        ds = two_group_dataset(n=50)
        assert ds.group_names == ("group_00", "group_01")
        assert ds.feature_names == ("x0", "x1", "x2")

    def test_negated_groups_flip_coefficients(self):
        spec = make_synthetic_spec((0.5, 0.5), n_features=3, n=10, negated_groups=(1,))
        assert np.allclose(np.asarray(spec.coefficients[0]), -np.asarray(spec.coefficients[1]))

    def test_invalid_proportions(self):
        with pytest.raises(ConfigError):
            SyntheticSpec((0.5, 0.6), ((0.0,), (0.0,)), ((1.0,), (1.0,)), (0.0, 0.0), n=10)

    def test_spec_dict_round_trip(self):
        spec = make_synthetic_spec((0.7, 0.3), n_features=2, n=100, seed=4, mean_shift=0.5)
        assert SyntheticSpec.from_dict(spec.to_dict()) == spec


class TestCSV:
    """Test CSV ingestion errors and write/load."""

    def test_load_sorted_group_names(self, temp_dir):
        path = _write(Path(temp_dir) / "d.csv", "x,y,label,site\n1,2,0,b\n3,4,1,a\n5,6,1,b\n")
        ds = load_csv(path, "label", "site")
        assert ds.group_names == ("a", "b")
        assert ds.groups.tolist() == [1, 0, 1]
        assert ds.feature_names == ("x", "y")
        assert ds.features.tolist() == [[1, 2], [3, 4], [5, 6]]

    def test_missing_column(self, temp_dir):
        path = _write(Path(temp_dir) / "d.csv", "x,label\n1,0\n")
        with pytest.raises(ConfigError) as e:
            load_csv(path, "label", "site")
        assert e.value.code == "missing_column"
        assert e.value.detail == "site"

    def test_missing_file(self, temp_dir):
        with pytest.raises(ConfigError) as e:
            load_csv(str(Path(temp_dir) / "absent.csv"), "label", "g")
        assert e.value.code == "missing_file"

    def test_non_numeric_feature_reports_cell(self, temp_dir):
        path = _write(Path(temp_dir) / "d.csv", "x,label,g\n1,0,a\nabc,1,a\n")
        with pytest.raises(DataError) as e:
            load_csv(path, "label", "g")
        assert e.value.code == "non_numeric_feature"
        assert "row=2" in e.value.detail and "column=x" in e.value.detail

    def test_empty_feature_cell(self, temp_dir):
        path = _write(Path(temp_dir) / "d.csv", "x,label,g\n1,0,a\n,1,a\n")
        with pytest.raises(DataError) as e:
            load_csv(path, "label", "g")
        assert e.value.code == "non_numeric_feature"

    def test_non_binary_label_reports_cell(self, temp_dir):
        path = _write(Path(temp_dir) / "d.csv", "x,label,g\n1,0,a\n2,2,a\n")
        with pytest.raises(DataError) as e:
            load_csv(path, "label", "g")
        assert e.value.code == "non_binary_label"
        assert "row=2" in e.value.detail

    def test_write_then_load_preserves_values(self, temp_dir):
        ds = two_group_dataset(n=60)
        path = write_csv(ds, str(Path(temp_dir) / "out" / "d.csv"))
        back = load_csv(path, "label", "group")
        assert np.array_equal(back.features, ds.features)
        assert np.array_equal(back.labels, ds.labels)
        assert back.group_names == ds.group_names


class TestPartition:
    """Test split sizes, disjointness and folds."""

    def test_sizes_for_1000(self):
        part = partition(two_group_dataset(n=1000), seed=0)
        assert (part.train_idx.size, part.val_idx.size, part.test_idx.size) == (625, 125, 250)
        assert [f.size for f in part.folds] == [125] * 5

    def test_round_half_up(self):
        assert round_half_up(2.5) == 3
        assert round_half_up(0.625 * 20) == 13
        assert round_half_up(0.125 * 20) == 3

    def test_small_dataset_sizes(self):
        part = partition(one_group_dataset(n=20), seed=0)
        assert (part.train_idx.size, part.val_idx.size, part.test_idx.size) == (13, 3, 4)

    def test_too_small(self):
        with pytest.raises(DataError) as e:
            partition(one_group_dataset(n=15), seed=0)
        assert e.value.code == "dataset_too_small"

    def test_deterministic(self):
        ds = two_group_dataset(n=200)
        a, b = partition(ds, 5), partition(ds, 5)
        assert np.array_equal(a.train_idx, b.train_idx)
        assert all(np.array_equal(x, y) for x, y in zip(a.folds, b.folds))
        assert not np.array_equal(partition(ds, 6).train_idx, a.train_idx)

    def test_pool_and_dev(self):
        part = partition(two_group_dataset(n=200), seed=1)
        for f in range(N_FOLDS):
            pool, dev = part.pool_idx(f), part.dev_idx(f)
            assert np.intersect1d(pool, dev).size == 0
            assert sorted(np.concatenate([pool, dev]).tolist()) == sorted(part.train_idx.tolist())

    def test_bad_fold(self):
        part = partition(two_group_dataset(n=200), seed=1)
        with pytest.raises(ConfigError):
            part.dev_idx(5)

    def test_dict_round_trip(self):
        part = partition(two_group_dataset(n=100), seed=2)
        back = Partition.from_dict(part.to_dict())
        assert np.array_equal(back.test_idx, part.test_idx)
        assert back.seed == 2

    @settings(max_examples=30, deadline=None)
    @given(n=st.integers(min_value=16, max_value=400), seed=st.integers(min_value=0, max_value=2**31))
    def test_partition_properties(self, n, seed):
        part = partition(one_group_dataset(n=n), seed)
        everything = np.concatenate([part.train_idx, part.val_idx, part.test_idx])
        assert sorted(everything.tolist()) == list(range(n))
        assert part.train_idx.size == round_half_up(0.625 * n)
        assert part.val_idx.size == round_half_up(0.125 * n)
        sizes = [f.size for f in part.folds]
        assert max(sizes) - min(sizes) <= 1
        assert sorted(np.concatenate(part.folds).tolist()) == sorted(part.train_idx.tolist())


class TestStandardizer:

    def test_fit_on_train_rows_only(self):
        ds = dataset_from_arrays([[0.0, 5.0], [2.0, 5.0], [100.0, 5.0]], [0, 1, 0], [0, 0, 0])
        std = Standardizer.fit(ds, np.array([0, 1]))
        out = std.apply(ds)
        assert out.features[:2, 0].tolist() == [-1.0, 1.0]
        assert out.features[2, 0] == pytest.approx(99.0)
        # constant column: centred, unscaled
        assert out.features[:, 1].tolist() == [0.0, 0.0, 0.0]
