"""Unit tests for the stratified bootstrap and its confidence intervals."""
from collections import Counter

import numpy as np
import pytest
from scipy.special import expit

from infra.errors import ConfigError, DataError
from modules.evaluation.bootstrap import (
    BootstrapSpec,
    absolute_ci,
    bootstrap_distribution,
    bootstrap_indices,
    percentile_ci,
    relative_ci,
    relative_differences,
    strata,
    worst_case_ci,
    worst_case_values,
)
from modules.metrics.metrics import METRICS, group_metric_table

NAMES = ("a", "b")


class _Constant:
    def __init__(self, value):
        self.value = value

    def predict(self, X, groups=None):
        return np.full(len(X), self.value)


class _Linear:
    def __init__(self, w):
        self.w = np.asarray(w, dtype=float)

    def predict(self, X, groups=None):
        return expit(np.asarray(X) @ self.w)


@pytest.fixture
def holdout():
    rng = np.random.default_rng(0)
    n = 240
    groups = np.repeat([0, 1], [160, 80])
    X = rng.normal(size=(n, 2))
    labels = (rng.random(n) < expit(X[:, 0] * np.where(groups == 0, 1.0, -1.0))).astype(int)
    return X, labels, groups


class TestResampling:

    def test_stratum_sizes_preserved(self, holdout):
        _, y, a = holdout
        expected = Counter(zip(a.tolist(), y.tolist()))
        for idx in bootstrap_indices(BootstrapSpec(replicates=20, seed=3), y, a, NAMES):
            assert Counter(zip(a[idx].tolist(), y[idx].tolist())) == expected

    def test_replicates_depend_only_on_seed_and_index(self, holdout):
        _, y, a = holdout
        short = bootstrap_indices(BootstrapSpec(replicates=5, seed=1), y, a, NAMES)
        long = bootstrap_indices(BootstrapSpec(replicates=10, seed=1), y, a, NAMES)
        assert all(np.array_equal(s, l) for s, l in zip(short, long))
        other = bootstrap_indices(BootstrapSpec(replicates=5, seed=2), y, a, NAMES)
        assert not np.array_equal(short[0], other[0])

    def test_named_group_without_rows(self):
        with pytest.raises(DataError) as e:
            strata(np.array([0, 1, 0]), np.array([0, 0, 0]), ("a", "b"))
        assert e.value.code == "empty_stratum"
        assert "b" in e.value.detail

    def test_single_class_group_is_one_stratum(self):
        cells = strata(np.array([0, 1, 1, 1]), np.array([0, 0, 1, 1]), ("a", "b"))
        assert [c.tolist() for c in cells] == [[0], [1], [2, 3]]


class TestPercentileCI:

    def test_one_to_hundred(self):
        assert percentile_ci(np.arange(1, 101), 0.05) == pytest.approx((3.475, 97.525))

    def test_nan_dropped(self):
        assert percentile_ci([np.nan, 1.0, 1.0], 0.05) == (1.0, 1.0)

    def test_empty(self):
        with pytest.raises(DataError):
            percentile_ci([np.nan], 0.05)

    def test_bad_spec(self):
        with pytest.raises(ConfigError):
            BootstrapSpec(replicates=0)
        with pytest.raises(ConfigError):
            BootstrapSpec(alpha=1.0)


class TestDistribution:

    def test_shape_and_point(self, holdout):
        X, y, a = holdout
        models = [_Linear([1.0, 0.0]), _Linear([0.5, 0.2])]
        dist = bootstrap_distribution(models, X, y, a, NAMES, BootstrapSpec(replicates=30, seed=0))
        assert dist.values.shape == (30, 2, 4, 3)
        assert dist.scopes == ("a", "b", "overall", "worst_case")
        direct = [group_metric_table(m.predict(X), y, a, NAMES) for m in models]
        expected = np.mean([t.row("a").loss for t in direct])
        assert dist.point_estimate("a", "loss") == pytest.approx(expected)
        assert dist.point_estimate("worst_case", "auc") == pytest.approx(np.mean([t.worst_case["auc"] for t in direct]))

    def test_deterministic_and_thread_independent(self, holdout):
        X, y, a = holdout
        spec = BootstrapSpec(replicates=12, seed=5)
        one = bootstrap_distribution([_Linear([1.0, 0.0])], X, y, a, NAMES, spec, jobs=1)
        many = bootstrap_distribution([_Linear([1.0, 0.0])], X, y, a, NAMES, spec, jobs=4)
        assert np.array_equal(one.values, many.values, equal_nan=True)

    def test_constant_predictor_has_zero_width_loss_ci(self, holdout):
        X, y, a = holdout
        dist = bootstrap_distribution([_Constant(0.5)], X, y, a, NAMES, BootstrapSpec(replicates=25))
        lo, hi = absolute_ci(dist, "overall", "loss")
        assert lo == pytest.approx(np.log(2)) and hi == pytest.approx(np.log(2))
        assert absolute_ci(dist, "a", "auc") == pytest.approx((0.5, 0.5))

    def test_worst_case_matches_loop(self, holdout):
        X, y, a = holdout
        dist = bootstrap_distribution([_Linear([1.0, 0.0]), _Linear([-0.3, 1.0])], X, y, a, NAMES,
                                      BootstrapSpec(replicates=15, seed=2))
        for r in range(15):
            for m in range(2):
                for j, metric in enumerate(METRICS):
                    per_group = [dist.values[r, m, g, j] for g in range(2)]
                    per_group = [v for v in per_group if not np.isnan(v)]
                    naive = (min(per_group) if metric == "auc" else max(per_group)) if per_group else np.nan
                    got = dist.values[r, m, 3, j]
                    assert (np.isnan(naive) and np.isnan(got)) or got == naive
        assert worst_case_ci(dist, "loss") == absolute_ci(dist, "worst_case", "loss")

    def test_undefined_auc_counted_missing(self):
        X = np.linspace(-1, 1, 40)[:, None]
        y = np.array([0, 1] * 10 + [1] * 20)
        a = np.repeat([0, 1], 20)
        dist = bootstrap_distribution([_Linear([1.0])], X, y, a, NAMES, BootstrapSpec(replicates=10))
        assert dist.n_missing("b", "auc") == 10
        assert dist.n_missing("a", "auc") == 0
        assert absolute_ci(dist, "b", "auc") is None
        assert dist.point_estimate("b", "auc") is None

    def test_no_models(self, holdout):
        X, y, a = holdout
        with pytest.raises(ConfigError):
            bootstrap_distribution([], X, y, a, NAMES, BootstrapSpec(replicates=2))


class TestWorstCaseValues:

    def test_nan_skipped(self):
        v = np.array([[[0.7, 0.3, 0.1], [np.nan, 0.5, np.nan]]])
        out = worst_case_values(v)
        assert out[0].tolist() == pytest.approx([0.7, 0.5, 0.1])

    def test_all_nan_stays_nan(self):
        v = np.full((1, 2, 3), np.nan)
        assert np.isnan(worst_case_values(v)).all()


class TestRelative:

    def test_self_difference_is_zero(self, holdout):
        X, y, a = holdout
        dist = bootstrap_distribution([_Linear([1.0, 0.0])], X, y, a, NAMES, BootstrapSpec(replicates=20))
        assert relative_ci(dist, dist, "worst_case", "loss") == (0.0, 0.0)

    def test_paired_difference_of_replicate_means(self, holdout):
        X, y, a = holdout
        spec = BootstrapSpec(replicates=20, seed=4)
        method = bootstrap_distribution([_Linear([1.0, 0.0]), _Linear([0.8, 0.1])], X, y, a, NAMES, spec)
        baseline = bootstrap_distribution([_Constant(0.5)], X, y, a, NAMES, spec)
        diffs = relative_differences(method, baseline, "overall", "loss")
        expected = method.values[:, :, 2, 1].mean(axis=1) - np.log(2)
        assert np.allclose(diffs, expected)

    def test_unpaired_seeds(self, holdout):
        X, y, a = holdout
        m = bootstrap_distribution([_Constant(0.5)], X, y, a, NAMES, BootstrapSpec(replicates=5, seed=1))
        b = bootstrap_distribution([_Constant(0.5)], X, y, a, NAMES, BootstrapSpec(replicates=5, seed=2))
        with pytest.raises(ConfigError) as e:
            relative_ci(m, b, "overall", "loss")
        assert e.value.code == "unpaired_bootstrap"

    def test_unpaired_holdout(self, holdout):
        X, y, a = holdout
        spec = BootstrapSpec(replicates=5)
        m = bootstrap_distribution([_Constant(0.5)], X, y, a, NAMES, spec)
        b = bootstrap_distribution([_Constant(0.5)], X[:200], y[:200], a[:200], NAMES, spec)
        with pytest.raises(ConfigError):
            relative_differences(m, b, "overall", "loss")
