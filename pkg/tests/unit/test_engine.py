"""Unit tests for the training loop, early stopping and trained-model documents."""
from pathlib import Path

import numpy as np
import pytest

from infra.errors import ConfigError, DataError, NumericError
from modules.dataset.dataset import make_synthetic_spec, synthesize
from modules.model.network import ModelSpec, predict
from modules.trainer.engine import (
    DevMetrics,
    TrainedModel,
    _batch_g_auc,
    dev_metrics,
    early_stop_value,
    train,
    train_stratified,
)
from modules.trainer.objective import GroupWeights, lambda_update_metric
from tests.fixtures.synthetic import dataset_from_arrays, one_group_dataset, split, tiny_objective

MLP = ModelSpec(hidden_sizes=(4,), dropout_p=0.25, init_seed=3)


def _same_params(a, b):
    return np.array_equal(a.params.flat(), b.params.flat())


class TestEquivalences:
    """Degenerate DRO settings reproduce ERM exactly."""

    def test_zero_eta_balanced_dro_matches_balanced_erm(self, small_dataset):
        part = split(small_dataset, 0)
        erm = train(small_dataset, part, 0, MLP, tiny_objective(sampler="balanced"), seed=11)
        dro = train(small_dataset, part, 0, MLP, tiny_objective(family="dro", eta=0.0, sampler="balanced"), seed=11)
        assert _same_params(erm, dro)
        assert all(lam == [0.5, 0.5] for lam in dro.lambda_trajectory)
        assert [h["criterion"] for h in erm.history] == [h["criterion"] for h in dro.history]

    @pytest.mark.parametrize("proportions, batch_size, model_spec, seed", [
        ((0.6, 0.3, 0.1), 32, MLP, 11),
        ((0.5, 0.3, 0.2), 512, ModelSpec(hidden_sizes=(5, 3), dropout_p=0.5, init_seed=1), 4),
        ((0.4, 0.3, 0.2, 0.1), 30, ModelSpec(), 7),
    ])
    def test_zero_eta_matches_erm_when_groups_do_not_divide_batch(self, proportions, batch_size, model_spec, seed):
        k = len(proportions)
        ds = synthesize(make_synthetic_spec(proportions, n_features=3, n=800, seed=seed, negated_groups=(k - 1,)))
        part = split(ds, seed)
        base = dict(sampler="balanced", batch_size=batch_size)
        erm = train(ds, part, 1, model_spec, tiny_objective(**base), seed=seed)
        for metric in ("loss", "auc"):
            dro = train(ds, part, 1, model_spec, tiny_objective(family="dro", eta=0.0, dro_metric=metric, **base),
                        seed=seed)
            assert _same_params(erm, dro)
            assert dro.final_lambda == GroupWeights.uniform(k).tolist()

    @pytest.mark.parametrize("overrides", [
        dict(family="dro", eta=0.1),
        dict(family="dro", eta=1.0, dro_metric="auc"),
        dict(family="dro", eta=0.1, adjustment="marginal_baseline"),
        dict(family="dro", eta=0.1, adjustment="reciprocal", C=1.0),
        dict(family="dro", eta=0.1, sampler="balanced"),
    ])
    def test_single_group_dro_is_erm(self, overrides):
        ds = one_group_dataset(n=300)
        part = split(ds, 1)
        erm = train(ds, part, 2, MLP, tiny_objective(sampler=overrides.get("sampler", "standard")), seed=5)
        dro = train(ds, part, 2, MLP, tiny_objective(**overrides), seed=5)
        assert _same_params(erm, dro)
        assert dro.final_lambda == [1.0]

    @pytest.mark.parametrize("model_spec, seed", [
        (ModelSpec(), 0),
        (ModelSpec(hidden_sizes=(6,), dropout_p=0.1, init_seed=2), 9),
        (ModelSpec(hidden_sizes=(3, 3), init_seed=5), 21),
    ])
    def test_single_group_random_configs(self, model_spec, seed):
        ds = one_group_dataset(n=300, seed=seed)
        part = split(ds, seed)
        erm = train(ds, part, 0, model_spec, tiny_objective(), seed=seed)
        dro = train(ds, part, 0, model_spec, tiny_objective(family="dro", eta=1.0), seed=seed)
        assert _same_params(erm, dro)


class TestAUCGroupScores:

    def test_absent_group_leaves_lambda_unchanged(self):
        probs = np.array([0.9, 0.8, 0.2, 0.1])
        y = np.array([1, 1, 0, 0])
        a = np.zeros(4, dtype=int)
        batch, carried = _batch_g_auc(probs, y, a, np.array([0.5, 0.5]))
        assert batch[0] == 0.0 and np.isnan(batch[1])
        assert carried.tolist() == [0.0, 0.5]
        assert lambda_update_metric(GroupWeights.uniform(2), batch, 1.0).tolist() == [0.5, 0.5]

    def test_single_class_group_reuses_carried_value(self):
        probs = np.array([0.9, 0.2, 0.7, 0.6])
        y = np.array([1, 0, 1, 1])
        a = np.array([0, 0, 1, 1])
        batch, carried = _batch_g_auc(probs, y, a, np.array([0.5, 0.3]))
        assert batch.tolist() == [0.0, 0.3]
        assert carried.tolist() == [0.0, 0.3]


class TestTrainingLoop:

    def test_deterministic_in_seed(self, small_dataset):
        part = split(small_dataset, 0)
        a = train(small_dataset, part, 1, MLP, tiny_objective(), seed=4)
        b = train(small_dataset, part, 1, MLP, tiny_objective(), seed=4)
        c = train(small_dataset, part, 1, MLP, tiny_objective(), seed=5)
        assert _same_params(a, b)
        assert not _same_params(a, c)

    @pytest.mark.parametrize("rule", ["pooled_loss", "worst_group_loss", "worst_group_auc", "weighted_objective"])
    def test_best_snapshot_is_minimum_of_history(self, small_dataset, rule):
        part = split(small_dataset, 0)
        objective = tiny_objective(family="dro", eta=0.5, early_stop=rule, max_iterations=8, patience=3)
        model = train(small_dataset, part, 0, MLP, objective, seed=2)
        criteria = [h["criterion"] for h in model.history]
        assert model.best_value == min(criteria)
        assert model.best_iteration == criteria.index(min(criteria))
        # the kept snapshot reproduces the recorded criterion
        lam = GroupWeights(np.asarray(model.history[model.best_iteration]["lam"]))
        replay = early_stop_value(rule, dev_metrics(model.params, small_dataset, part.dev_idx(0)), lam)
        assert replay == pytest.approx(model.best_value, rel=1e-12)

    def test_patience_stops_early(self, small_dataset):
        part = split(small_dataset, 0)
        objective = tiny_objective(max_iterations=60, patience=1, learning_rate=0.5)
        model = train(small_dataset, part, 0, MLP, objective, seed=1)
        n = len(model.history)
        if n < 60:
            assert n == model.best_iteration + 2

    def test_history_and_trajectory_lengths(self, small_dataset):
        part = split(small_dataset, 0)
        model = train(small_dataset, part, 3, MLP, tiny_objective(family="dro", eta=1.0), seed=0)
        assert len(model.lambda_trajectory) == len(model.history) + 1
        assert model.lambda_trajectory[0] == [0.5, 0.5]
        for lam in model.lambda_trajectory:
            assert sum(lam) == pytest.approx(1.0, abs=1e-9)
        assert model.fold_id == 3

    def test_numeric_error_carries_coordinates(self, small_dataset, monkeypatch):
        def broken(params, grad, lr):
            raise NumericError("non_finite_gradient", "step=1")

        monkeypatch.setattr("modules.trainer.engine.optimizer_step", broken)
        with pytest.raises(NumericError) as e:
            train(small_dataset, split(small_dataset, 0), 0, MLP, tiny_objective(), seed=0)
        assert e.value.code == "non_finite_gradient"
        assert "iteration=0" in e.value.detail and "minibatch=0" in e.value.detail


class TestEarlyStopRules:

    def test_values(self):
        m = DevMetrics(pooled_loss=0.5, group_losses=[0.4, 0.8], group_aucs=[0.7, None])
        assert early_stop_value("pooled_loss", m) == 0.5
        assert early_stop_value("worst_group_loss", m) == 0.8
        assert early_stop_value("worst_group_auc", m) == -0.7
        assert early_stop_value("weighted_objective", m, GroupWeights(np.array([0.25, 0.75]))) == pytest.approx(0.7)

    def test_no_defined_auc(self):
        m = DevMetrics(0.5, [0.4], [None])
        assert early_stop_value("worst_group_auc", m) == float("inf")

    def test_weighted_objective_needs_lambda(self):
        with pytest.raises(ConfigError):
            early_stop_value("weighted_objective", DevMetrics(0.5, [0.5], [0.5]))

    def test_unknown_rule(self):
        with pytest.raises(ConfigError):
            early_stop_value("median_loss", DevMetrics(0.5, [0.5], [0.5]))


class TestStratified:

    def test_trains_on_one_group(self, small_dataset):
        part = split(small_dataset, 0)
        model = train_stratified(small_dataset, part, 0, ModelSpec(weight_decay=0.01), 1,
                                 tiny_objective(family="dro", eta=1.0, sampler="balanced"), seed=0)
        assert model.group_id == 1
        assert model.objective_spec.family == "erm"
        assert model.objective_spec.sampler == "standard"
        assert model.final_lambda == [1.0]
        dev_members = small_dataset.group_members(1, part.dev_idx(0))
        loss = dev_metrics(model.params, small_dataset, dev_members).pooled_loss
        assert model.best_value == pytest.approx(loss, rel=1e-12)

    def test_class_degenerate_group(self):
        rng = np.random.default_rng(0)
        n = 200
        groups = np.repeat([0, 1], n // 2)
        labels = np.where(groups == 1, 1, rng.integers(0, 2, size=n))
        ds = dataset_from_arrays(rng.normal(size=(n, 2)), labels, groups, ("mixed", "all_positive"))
        with pytest.raises(DataError) as e:
            train_stratified(ds, split(ds, 0), 0, ModelSpec(), 1, tiny_objective())
        assert e.value.code == "class_degenerate_group"
        assert "all_positive" in e.value.detail

    def test_bad_group(self, small_dataset):
        with pytest.raises(ConfigError):
            train_stratified(small_dataset, split(small_dataset, 0), 0, ModelSpec(), 2)


class TestTrainedModelDocument:

    def test_save_load_predicts_identically(self, small_dataset, temp_dir):
        part = split(small_dataset, 0)
        model = train(small_dataset, part, 0, MLP, tiny_objective(family="dro", eta=0.3), seed=7)
        path = model.save(str(Path(temp_dir) / "models" / "m.json"))
        back = TrainedModel.load(path)
        X = small_dataset.features[part.test_idx]
        assert np.array_equal(back.predict(X), predict(model.params, X))
        assert back.objective_spec == model.objective_spec
        assert back.lambda_trajectory == model.lambda_trajectory
        assert back.best_iteration == model.best_iteration

    def test_missing_file(self, temp_dir):
        with pytest.raises(ConfigError):
            TrainedModel.load(str(Path(temp_dir) / "absent.json"))

    def test_version_mismatch(self, small_dataset):
        model = train(small_dataset, split(small_dataset, 0), 0, ModelSpec(), tiny_objective(max_iterations=1))
        doc = dict(model.to_dict(), format_version=99)
        with pytest.raises(DataError):
            TrainedModel.from_dict(doc)

