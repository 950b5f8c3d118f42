"""
Training loop shared by pooled ERM, balanced ERM, every DRO variant and
stratified ERM.

One iteration is `minibatches_per_iteration` minibatch steps followed by one
evaluation of the early-stopping criterion on the development fold. The best
snapshot is kept; training stops after `patience` evaluations without strict
improvement or after `max_iterations` iterations.
"""

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from infra.errors import ConfigError, DataError, NumericError, with_coordinates
from infra.observability import emit
from modules.dataset.dataset import Dataset, Partition
from modules.dataset.sampling import SAMPLERS
from modules.metrics.metrics import auc, binary_cross_entropy, mean_loss
from modules.model.network import ModelParams, ModelSpec, forward_pass, init, optimizer_step, predict, weighted_loss_grad
from tools.fs import read_json, write_json

from .objective import (
    G_INITIAL,
    GroupWeights,
    ObjectiveSpec,
    compute_adjustments,
    g_auc,
    group_means,
    lambda_update_loss,
    lambda_update_metric,
    weighted_example_weights,
)

logger = logging.getLogger(__name__)

MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True)
class DevMetrics:
    """Development-set losses and AUCs; None marks an absent group or undefined AUC."""
    pooled_loss: float
    group_losses: List[Optional[float]]
    group_aucs: List[Optional[float]]

    def to_dict(self) -> Dict[str, Any]:
        return {"pooled_loss": self.pooled_loss, "group_losses": list(self.group_losses),
                "group_aucs": list(self.group_aucs)}


def dev_metrics(params: ModelParams, ds: Dataset, indices: np.ndarray) -> DevMetrics:
    idx = np.asarray(indices, dtype=np.int64)
    probs = predict(params, ds.features[idx])
    y = ds.labels[idx]
    a = ds.groups[idx]
    losses, aucs = [], []
    for g in range(ds.k):
        sel = a == g
        if not np.any(sel):
            losses.append(None)
            aucs.append(None)
            continue
        losses.append(mean_loss(probs[sel], y[sel]))
        aucs.append(auc(probs[sel], y[sel]))
    return DevMetrics(mean_loss(probs, y), losses, aucs)


def early_stop_value(rule: str, metrics: DevMetrics, lam: Optional[GroupWeights] = None) -> float:
    """Early-stopping criterion; lower is better."""
    losses = [v for v in metrics.group_losses if v is not None]
    if rule == "pooled_loss":
        return float(metrics.pooled_loss)
    if rule == "worst_group_loss":
        return float(max(losses)) if losses else float("inf")
    if rule == "worst_group_auc":
        aucs = [v for v in metrics.group_aucs if v is not None]
        return -float(min(aucs)) if aucs else float("inf")
    if rule == "weighted_objective":
        if lam is None:
            raise ConfigError("missing_lambda", "weighted_objective needs the current λ")
        return float(sum(lam.values[g] * v for g, v in enumerate(metrics.group_losses) if v is not None))
    raise ConfigError("bad_early_stop", rule)


@dataclass
class TrainedModel:
    """Best-by-early-stop parameters plus the training history that produced them."""
    params: ModelParams
    model_spec: ModelSpec
    objective_spec: ObjectiveSpec
    fold_id: int
    seed: int
    best_iteration: int
    best_value: float
    history: List[Dict[str, Any]] = field(default_factory=list)
    lambda_trajectory: List[List[float]] = field(default_factory=list)
    group_id: Optional[int] = None

    def predict(self, X: np.ndarray, groups: Optional[np.ndarray] = None) -> np.ndarray:
        # groups is accepted for interface parity with CompositePredictor
        return predict(self.params, X)

    @property
    def final_lambda(self) -> List[float]:
        return self.lambda_trajectory[-1] if self.lambda_trajectory else []

    def to_dict(self) -> Dict[str, Any]:
        return {
            "format_version": MODEL_FORMAT_VERSION,
            "params": self.params.to_dict(),
            "model_spec": self.model_spec.to_dict(),
            "objective_spec": self.objective_spec.to_dict(),
            "fold_id": int(self.fold_id),
            "group_id": self.group_id,
            "seed": int(self.seed),
            "best_iteration": int(self.best_iteration),
            "best_value": float(self.best_value),
            "history": self.history,
            "lambda_trajectory": self.lambda_trajectory,
        }

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "TrainedModel":
        if int(d.get("format_version", -1)) != MODEL_FORMAT_VERSION:
            raise DataError("bad_model_document", f"format_version={d.get('format_version')}")
        return cls(
            params=ModelParams.from_dict(d["params"]),
            model_spec=ModelSpec.from_dict(d["model_spec"]),
            objective_spec=ObjectiveSpec.from_dict(d["objective_spec"]),
            fold_id=int(d["fold_id"]),
            seed=int(d["seed"]),
            best_iteration=int(d["best_iteration"]),
            best_value=float(d["best_value"]),
            history=list(d.get("history", [])),
            lambda_trajectory=[list(v) for v in d.get("lambda_trajectory", [])],
            group_id=d.get("group_id"),
        )

    def save(self, path: str) -> str:
        write_json(path, self.to_dict())
        return str(path)

    @classmethod
    def load(cls, path: str) -> "TrainedModel":
        if not Path(path).exists():
            raise ConfigError("missing_file", str(path))
        return cls.from_dict(read_json(path))


def _batch_g_auc(probs: np.ndarray, y: np.ndarray, a: np.ndarray,
                 carried: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(batch g, carried g): 1 − AUC per group on the batch.

    Absent groups are NaN in the batch vector (exponent 0 in the λ update);
    present single-class groups reuse their carried value.
    """
    carried = carried.copy()
    batch = np.full(carried.size, np.nan)
    for g in range(carried.size):
        sel = a == g
        if np.any(sel):
            value = g_auc(probs[sel], y[sel])
            if value is not None:
                carried[g] = value
            batch[g] = carried[g]
    return batch, carried


def _run(ds: Dataset, pool: np.ndarray, dev: np.ndarray, fold_id: int, model_spec: ModelSpec,
         objective: ObjectiveSpec, seed: int, train_counts: np.ndarray, group_id: Optional[int] = None) -> TrainedModel:
    t0 = time.time()
    k = ds.k
    sampler = SAMPLERS[objective.sampler]
    sample_seq, dropout_seq = np.random.SeedSequence(int(seed)).spawn(2)
    sample_rng = np.random.default_rng(sample_seq)
    dropout_rng = np.random.default_rng(dropout_seq)

    params = init(model_spec, ds.m)
    # a stratified model sees one group
    lam = GroupWeights.uniform(k if group_id is None else 1)
    uniform = lam
    is_dro = objective.family == "dro"
    adjustments = np.zeros(k)
    g_last = np.full(k, G_INITIAL)
    n_train = int(np.sum(train_counts))

    best_params, best_value, best_iteration = params, None, -1
    since_best = 0
    history: List[Dict[str, Any]] = []
    trajectory: List[List[float]] = [lam.tolist()]
    emit({"kind": "train_start", "fold": int(fold_id), "group": group_id, "variant": objective.variant,
          "sampler": objective.sampler, "early_stop": objective.early_stop, "seed": int(seed),
          "hidden_sizes": list(model_spec.hidden_sizes), "pool": int(pool.size), "dev": int(dev.size)})

    iteration = 0
    for iteration in range(objective.max_iterations):
        minibatch = 0
        try:
            for minibatch in range(objective.minibatches_per_iteration):
                batch = sampler(ds, pool, objective.batch_size, sample_rng)
                X, y, a = ds.features[batch], ds.labels[batch], ds.groups[batch]
                fp = forward_pass(params, X, "train", dropout_rng)
                if is_dro:
                    if objective.dro_metric == "auc":
                        g_batch, g_last = _batch_g_auc(fp.probs, y, a, g_last)
                        lam = lambda_update_metric(lam, g_batch, objective.eta)
                    else:
                        adjustments = compute_adjustments(objective.adjustment, objective.C, train_counts, n_train,
                                                          a, y, adjustments)
                        losses = group_means(binary_cross_entropy(fp.probs, y), a, k)
                        lam = lambda_update_loss(lam, losses, adjustments, objective.eta)
                    weights = weighted_example_weights(lam, a)
                elif objective.sampler == "balanced":
                    weights = weighted_example_weights(uniform, a)
                else:
                    weights = np.full(batch.size, 1.0 / batch.size)
                _, grad = weighted_loss_grad(params, X, y, weights, cached=fp)
                params = optimizer_step(params, grad, objective.learning_rate)
        except NumericError as e:
            raise with_coordinates(e, iteration=iteration, minibatch=minibatch) from e

        metrics = dev_metrics(params, ds, dev)
        value = early_stop_value(objective.early_stop, metrics, lam)
        if not np.isfinite(metrics.pooled_loss):
            raise NumericError("non_finite_dev_loss", f"iteration={iteration}")
        improved = best_value is None or value < best_value
        if improved:
            best_params, best_value, best_iteration = params, value, iteration
            since_best = 0
        else:
            since_best += 1
        trajectory.append(lam.tolist())
        history.append(dict(metrics.to_dict(), iteration=iteration, criterion=value, lam=lam.tolist()))
        emit({"kind": "train_iteration", "fold": int(fold_id), "group": group_id, "variant": objective.variant,
              "iteration": iteration, "criterion": value, "improved": improved, "lam": lam.tolist()})
        if since_best >= objective.patience:
            break

    logger.debug("fold %s %s stopped after %d iterations (best %d, %.5f)",
                 fold_id, objective.variant, iteration + 1, best_iteration, best_value)
    emit({"kind": "train_end", "fold": int(fold_id), "group": group_id, "variant": objective.variant,
          "iterations": iteration + 1, "best_iteration": best_iteration, "best_value": best_value,
          "final_lam": lam.tolist(), "elapsed_sec": round(time.time() - t0, 3)})
    return TrainedModel(
        params=best_params,
        model_spec=model_spec,
        objective_spec=objective,
        fold_id=int(fold_id),
        seed=int(seed),
        best_iteration=best_iteration,
        best_value=float(best_value),
        history=history,
        lambda_trajectory=trajectory,
        group_id=group_id,
    )


def train(ds: Dataset, partition: Partition, fold_id: int, model_spec: ModelSpec,
          objective_spec: ObjectiveSpec, seed: int = 0) -> TrainedModel:
    """Train on the four folds other than `fold_id`, early-stopping on `fold_id`."""
    pool = partition.pool_idx(fold_id)
    dev = partition.dev_idx(fold_id)
    train_counts = ds.group_counts(partition.train_idx)
    return _run(ds, pool, dev, fold_id, model_spec, objective_spec, seed, train_counts)


def train_stratified(ds: Dataset, partition: Partition, fold_id: int, model_spec: ModelSpec, group_id: int,
                     objective_spec: Optional[ObjectiveSpec] = None, seed: int = 0) -> TrainedModel:
    """Pooled ERM on one group's rows, early-stopping on that group's dev loss."""
    if not 0 <= int(group_id) < ds.k:
        raise ConfigError("bad_group", f"group_id={group_id} not in [0,{ds.k})")
    name = ds.group_names[group_id]
    pool = ds.group_members(group_id, partition.pool_idx(fold_id))
    dev = ds.group_members(group_id, partition.dev_idx(fold_id))
    pool_pos = int(ds.labels[pool].sum())
    if pool_pos < 2 or pool.size - pool_pos < 2:
        raise DataError("class_degenerate_group", f"group={name} fold={fold_id} pool positives={pool_pos} negatives={pool.size - pool_pos}")
    dev_pos = int(ds.labels[dev].sum())
    if dev_pos < 1 or dev.size - dev_pos < 1:
        raise DataError("class_degenerate_group", f"group={name} fold={fold_id} dev positives={dev_pos} negatives={dev.size - dev_pos}")
    base = objective_spec or ObjectiveSpec()
    objective = ObjectiveSpec.from_dict(dict(base.to_dict(), family="erm", dro_metric="loss", adjustment="none",
                                             sampler="standard", early_stop="pooled_loss"))
    train_counts = np.array([ds.group_members(group_id, partition.train_idx).size])
    return _run(ds, pool, dev, fold_id, model_spec, objective, seed, train_counts, group_id=int(group_id))
