"""
Training objectives: ERM and the group DRO family.

DRO keeps a weight vector λ on the probability simplex over K groups. Each
minibatch first moves λ by an exponentiated-gradient (mirror ascent) step
towards groups with a high loss, optionally shifted by an additive adjustment
c_k, or towards groups with a high value of an arbitrary per-group score g
(here g = 1 − AUC). The model then takes a gradient step on Σ_k λ_k ℓ_k.
"""

from dataclasses import dataclass, replace
from typing import Any, Dict, Optional, Sequence

import numpy as np

from infra.errors import ConfigError, DataError, NumericError
from modules.metrics.metrics import auc

FAMILIES = ("erm", "dro")
DRO_METRICS = ("loss", "auc")
ADJUSTMENTS = ("none", "reciprocal", "proportional", "marginal_baseline")
SAMPLERS = ("standard", "balanced")
EARLY_STOP_RULES = ("pooled_loss", "weighted_objective", "worst_group_loss", "worst_group_auc")
SIMPLEX_TOL = 1e-9
RATE_CLIP = 1e-6
G_INITIAL = 0.5


@dataclass(frozen=True)
class GroupWeights:
    """λ: a point on the probability simplex over K groups."""
    values: np.ndarray

    def __post_init__(self):
        lam = np.array(self.values, dtype=np.float64)
        if lam.ndim != 1 or lam.size < 1:
            raise ConfigError("bad_group_weights", "λ must be a non-empty vector")
        if not np.all(np.isfinite(lam)) or np.any(lam < 0) or abs(lam.sum() - 1.0) > SIMPLEX_TOL:
            raise NumericError("lambda_degenerate", f"λ={lam.tolist()} is not on the simplex")
        lam.setflags(write=False)
        object.__setattr__(self, "values", lam)

    @classmethod
    def uniform(cls, k: int) -> "GroupWeights":
        return cls(np.full(int(k), 1.0 / int(k)))

    @property
    def k(self) -> int:
        return int(self.values.size)

    def tolist(self):
        return self.values.tolist()


@dataclass(frozen=True)
class ObjectiveSpec:
    """One training configuration: objective family, λ update, sampler and early stopping."""
    family: str = "erm"
    dro_metric: str = "loss"
    adjustment: str = "none"
    eta: float = 0.1
    C: float = 0.0
    sampler: str = "standard"
    early_stop: str = "pooled_loss"
    max_iterations: int = 150
    minibatches_per_iteration: int = 100
    batch_size: int = 512
    patience: int = 25
    learning_rate: float = 1e-4

    def __post_init__(self):
        checks = (("family", FAMILIES), ("dro_metric", DRO_METRICS), ("adjustment", ADJUSTMENTS),
                  ("sampler", SAMPLERS), ("early_stop", EARLY_STOP_RULES))
        for name, allowed in checks:
            if getattr(self, name) not in allowed:
                raise ConfigError("bad_objective_spec", f"{name}={getattr(self, name)!r} not in {allowed}")
        if self.adjustment != "none" and (self.family != "dro" or self.dro_metric != "loss"):
            raise ConfigError("bad_objective_spec", "adjustments apply only to loss-based DRO")
        if self.adjustment in ("reciprocal", "proportional") and self.C <= 0:
            raise ConfigError("bad_objective_spec", f"size adjustment needs C > 0, got {self.C}")
        if self.family == "dro" and self.eta < 0:
            raise ConfigError("bad_objective_spec", f"eta={self.eta} < 0")
        if self.family == "erm" and self.early_stop == "weighted_objective":
            raise ConfigError("bad_objective_spec", "weighted_objective early stopping needs a DRO objective")
        for name in ("max_iterations", "minibatches_per_iteration", "batch_size", "patience"):
            if int(getattr(self, name)) < 1:
                raise ConfigError("bad_objective_spec", f"{name} must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigError("bad_objective_spec", f"learning_rate={self.learning_rate} <= 0")

    @property
    def variant(self) -> str:
        """Short name: erm, dro_loss, dro_auc, dro_reciprocal, dro_proportional, dro_marginal_baseline."""
        if self.family == "erm":
            return "erm"
        if self.dro_metric == "auc":
            return "dro_auc"
        return "dro_loss" if self.adjustment == "none" else f"dro_{self.adjustment}"

    def to_dict(self) -> Dict[str, Any]:
        return {
            "family": self.family,
            "dro_metric": self.dro_metric,
            "adjustment": self.adjustment,
            "eta": float(self.eta),
            "C": float(self.C),
            "sampler": self.sampler,
            "early_stop": self.early_stop,
            "max_iterations": int(self.max_iterations),
            "minibatches_per_iteration": int(self.minibatches_per_iteration),
            "batch_size": int(self.batch_size),
            "patience": int(self.patience),
            "learning_rate": float(self.learning_rate),
        }

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "ObjectiveSpec":
        base = cls()
        return replace(base, **{k: v for k, v in d.items() if k in base.to_dict()})


def _normalized_exponential(lam: GroupWeights, exponents: np.ndarray, context: Dict[str, Any]) -> GroupWeights:
    """λ_k·exp(e_k) / Σ_j λ_j·exp(e_j) with max-subtraction; NaN exponents count as 0."""
    e = np.where(np.isnan(exponents), 0.0, exponents)
    if not np.all(np.isfinite(e)):
        raise NumericError("lambda_degenerate", f"non-finite exponent {context}")
    unnorm = lam.values * np.exp(e - e.max())
    total = unnorm.sum()
    if not np.isfinite(total) or total <= 0:
        raise NumericError("lambda_degenerate", f"normalizer={total} {context}")
    return GroupWeights(unnorm / total)


def lambda_update_loss(lam: GroupWeights, group_losses: Sequence[float], adjustments: Sequence[float],
                       eta: float) -> GroupWeights:
    """λ_k ← λ_k·exp(η(ℓ_k + c_k)) / Σ_j λ_j·exp(η(ℓ_j + c_j)).

    NaN losses mark groups absent from the batch; their exponent is 0.
    """
    losses = np.asarray(group_losses, dtype=np.float64)
    c = np.asarray(adjustments, dtype=np.float64)
    if losses.shape != (lam.k,) or c.shape != (lam.k,):
        raise ConfigError("bad_group_vector", f"expected {lam.k} entries")
    if float(eta) == 0.0:
        return lam
    exponents = float(eta) * (losses + c)
    return _normalized_exponential(lam, exponents, {"losses": losses.tolist(), "adjustments": c.tolist()})


def lambda_update_metric(lam: GroupWeights, g_values: Sequence[float], eta: float) -> GroupWeights:
    """λ_k ← λ_k·exp(η·g_k) / Σ_j λ_j·exp(η·g_j) for any per-group score g (higher is worse).

    NaN scores mark groups absent from the batch; their exponent is 0.
    """
    g = np.asarray(g_values, dtype=np.float64)
    if g.shape != (lam.k,):
        raise ConfigError("bad_group_vector", f"expected {lam.k} entries")
    if float(eta) == 0.0:
        return lam
    return _normalized_exponential(lam, float(eta) * g, {"g": g.tolist()})


def g_auc(scores: Sequence[float], labels: Sequence[int]) -> Optional[float]:
    """1 − AUC with half-credit ties; None if the sample lacks a class."""
    value = auc(scores, labels)
    return None if value is None else 1.0 - value


def compute_adjustments(kind: str, C: float, group_counts: Sequence[int], n_total: int,
                        batch_groups: Optional[np.ndarray] = None, batch_labels: Optional[np.ndarray] = None,
                        previous: Optional[np.ndarray] = None) -> np.ndarray:
    """Additive adjustments c_k for the loss-based λ update.

    reciprocal: C/p_k; proportional: C·√p_k, with p_k = n_k/N from the training
    split. marginal_baseline: p̂·log p̂ + (1−p̂)·log(1−p̂) with p̂ the group's label
    rate in the current batch; absent groups keep their previous value.
    """
    counts = np.asarray(group_counts, dtype=np.float64)
    k = counts.size
    if kind == "none":
        return np.zeros(k)
    if kind in ("reciprocal", "proportional"):
        p = counts / float(n_total)
        if np.any(p <= 0):
            raise DataError("empty_group", "size adjustments need every group in the training split")
        return C / p if kind == "reciprocal" else C * np.sqrt(p)
    if kind == "marginal_baseline":
        out = np.zeros(k) if previous is None else np.array(previous, dtype=np.float64)
        a = np.asarray(batch_groups)
        y = np.asarray(batch_labels, dtype=np.float64)
        n_batch = np.bincount(a, minlength=k)
        n_pos = np.bincount(a, weights=y, minlength=k)
        present = n_batch > 0
        rate = np.clip(n_pos[present] / n_batch[present], RATE_CLIP, 1.0 - RATE_CLIP)
        out[present] = rate * np.log(rate) + (1.0 - rate) * np.log(1.0 - rate)
        return out
    raise ConfigError("bad_adjustment", kind)


def weighted_example_weights(lam: GroupWeights, batch_groups: np.ndarray) -> np.ndarray:
    """Per-example weights λ_{a_i}/B_{a_i}, so that Σ_i w_i ℓ_i = Σ_k λ_k·mean_k(ℓ)."""
    a = np.asarray(batch_groups, dtype=np.int64)
    if a.size == 0:
        raise DataError("empty_batch")
    counts = np.bincount(a, minlength=lam.k)
    return lam.values[a] / counts[a]


def group_means(values: np.ndarray, batch_groups: np.ndarray, k: int) -> np.ndarray:
    """Per-group mean of values over the batch; NaN for absent groups."""
    a = np.asarray(batch_groups, dtype=np.int64)
    counts = np.bincount(a, minlength=k)
    sums = np.bincount(a, weights=values, minlength=k)
    out = np.full(k, np.nan)
    present = counts > 0
    out[present] = sums[present] / counts[present]
    return out
