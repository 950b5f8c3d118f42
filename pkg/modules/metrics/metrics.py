"""
Evaluation metrics: AUC, average cross-entropy and absolute calibration error,
reported overall, per group and in the worst case over groups.

ACE is the mean absolute gap between the model outputs and a logistic
recalibration curve fitted on the evaluation data itself, with the log-odds of
the outputs as the single input (the logistic form of the integrated
calibration index).
"""

from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit, logit, xlogy
from scipy.stats import rankdata

from infra.errors import ConfigError, DataError, NumericError

PROB_CLIP = 1e-12
RECAL_MAX_ITER = 100
RECAL_TOL = 1e-10
RECAL_MAX_HALVINGS = 40
RECAL_MIN_N = 10
RECAL_INPUTS = ("logit", "log")
METRICS = ("auc", "loss", "ace")


def clip_probs(p: np.ndarray) -> np.ndarray:
    return np.clip(np.asarray(p, dtype=np.float64), PROB_CLIP, 1.0 - PROB_CLIP)


def binary_cross_entropy(p: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Per-example −[y log p + (1−y) log(1−p)] with p clipped to [1e-12, 1−1e-12]."""
    pc = clip_probs(p)
    y = np.asarray(y, dtype=np.float64)
    return -(xlogy(y, pc) + xlogy(1.0 - y, 1.0 - pc))


def auc(scores: Sequence[float], labels: Sequence[int]) -> Optional[float]:
    """Mann–Whitney AUC with half credit for ties; None when a class is missing."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    pos = y == 1
    n_pos = int(pos.sum())
    n_neg = int(y.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = rankdata(s, method="average")
    u = float(ranks[pos].sum()) - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def mean_loss(scores: Sequence[float], labels: Sequence[int]) -> float:
    return float(np.mean(binary_cross_entropy(scores, labels)))


def _recal_input(scores: np.ndarray, transform: str) -> np.ndarray:
    if transform not in RECAL_INPUTS:
        raise ConfigError("bad_recalibration_input", transform)
    pc = clip_probs(scores)
    return logit(pc) if transform == "logit" else np.log(pc)


def _log_likelihood(eta: np.ndarray, y: np.ndarray) -> float:
    # Σ y·η − log(1 + e^η), stable in both tails
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


def fit_recalibration(scores: Sequence[float], labels: Sequence[int], transform: str = "logit") -> Tuple[float, float]:
    """Fit P(Y=1|p̂) = σ(a + b·t(p̂)) by damped Newton–Raphson; returns (a, b)."""
    y = np.asarray(labels, dtype=np.float64)
    n = y.size
    if n < RECAL_MIN_N:
        raise DataError("too_few_examples", f"n={n} < {RECAL_MIN_N}")
    if y.min() == y.max():
        raise DataError("single_class", "recalibration needs both classes")
    t = _recal_input(scores, transform)
    design = np.column_stack([np.ones(n), t])
    theta = np.array([0.0, 1.0])
    ll = _log_likelihood(design @ theta, y)
    for _ in range(RECAL_MAX_ITER):
        mu = expit(design @ theta)
        grad = design.T @ (y - mu)
        if np.max(np.abs(grad)) / n < RECAL_TOL:
            return float(theta[0]), float(theta[1])
        hess = design.T @ (design * (mu * (1.0 - mu))[:, None])
        # pinv keeps the step defined when the input column is constant
        step = np.linalg.pinv(hess) @ grad
        scale = 1.0
        for _ in range(RECAL_MAX_HALVINGS):
            candidate = theta + scale * step
            cand_ll = _log_likelihood(design @ candidate, y)
            if np.isfinite(cand_ll) and cand_ll >= ll:
                break
            scale *= 0.5
        else:
            if np.max(np.abs(grad)) / n < 1e-8:
                return float(theta[0]), float(theta[1])
            raise NumericError("recalibration_diverged", f"step halving exhausted, |grad|/n={np.max(np.abs(grad)) / n:.3g}")
        if np.array_equal(candidate, theta):
            return float(theta[0]), float(theta[1])
        theta, ll = candidate, cand_ll
    mu = expit(design @ theta)
    if np.max(np.abs(design.T @ (y - mu))) / n < 1e-8:
        return float(theta[0]), float(theta[1])
    raise NumericError("recalibration_diverged", f"no convergence after {RECAL_MAX_ITER} iterations")


def ace(scores: Sequence[float], labels: Sequence[int], transform: str = "logit") -> float:
    """Mean |σ(a + b·t(p̂)) − p̂| over the evaluation examples."""
    p = np.asarray(scores, dtype=np.float64)
    a, b = fit_recalibration(p, labels, transform)
    calibrated = expit(a + b * _recal_input(p, transform))
    return float(np.mean(np.abs(calibrated - p)))


def _safe_ace(scores: np.ndarray, labels: np.ndarray, transform: str) -> Optional[float]:
    try:
        return ace(scores, labels, transform)
    except (DataError, NumericError):
        return None


@dataclass(frozen=True)
class MetricRow:
    """AUC, loss and ACE of one scope; None marks an undefined value."""
    name: str
    n: int
    auc: Optional[float]
    loss: float
    ace: Optional[float]

    def get(self, metric: str) -> Optional[float]:
        return getattr(self, metric)

    def to_dict(self) -> Dict[str, Any]:
        return {"name": self.name, "n": self.n, "auc": self.auc, "loss": self.loss, "ace": self.ace}

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "MetricRow":
        return cls(d["name"], int(d["n"]), d.get("auc"), float(d["loss"]), d.get("ace"))


def _worst(values: List[Optional[float]], metric: str) -> Optional[float]:
    defined = [v for v in values if v is not None]
    if not defined:
        return None
    return min(defined) if metric == "auc" else max(defined)


@dataclass(frozen=True)
class GroupMetricTable:
    """Per-group, overall and worst-case AUC/loss/ACE."""
    groups: Tuple[MetricRow, ...]
    overall: MetricRow

    @property
    def worst_case(self) -> Dict[str, Optional[float]]:
        return {m: _worst([row.get(m) for row in self.groups], m) for m in METRICS}

    def group_values(self, metric: str) -> List[Optional[float]]:
        return [row.get(metric) for row in self.groups]

    def row(self, name: str) -> MetricRow:
        for r in self.groups:
            if r.name == name:
                return r
        raise KeyError(name)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "groups": [r.to_dict() for r in self.groups],
            "overall": self.overall.to_dict(),
            "worst_case": self.worst_case,
        }

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "GroupMetricTable":
        return cls(tuple(MetricRow.from_dict(r) for r in d["groups"]), MetricRow.from_dict(d["overall"]))

    def to_csv_rows(self) -> List[Dict[str, Any]]:
        """Flat rows: one per group plus "overall" and "worst_case" pseudo-groups."""
        rows = [dict(r.to_dict(), scope=r.name) for r in self.groups]
        rows.append(dict(self.overall.to_dict(), scope="overall"))
        rows.append(dict(self.worst_case, name="worst_case", n=self.overall.n, scope="worst_case"))
        return rows


def group_metric_table(scores: Sequence[float], labels: Sequence[int], groups: Sequence[int],
                       group_names: Sequence[str], transform: str = "logit",
                       require_all_groups: bool = True, with_ace: bool = True) -> GroupMetricTable:
    """Metrics for each group present, the pooled population and the worst case.

    Absent groups raise DataError unless require_all_groups is False, in which
    case they are left out of the table.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    a = np.asarray(groups)
    rows = []
    for g, name in enumerate(group_names):
        sel = a == g
        n = int(sel.sum())
        if n == 0:
            if require_all_groups:
                raise DataError("empty_group", f"group={name} has no evaluation examples")
            continue
        rows.append(MetricRow(
            name=str(name),
            n=n,
            auc=auc(s[sel], y[sel]),
            loss=mean_loss(s[sel], y[sel]),
            ace=_safe_ace(s[sel], y[sel], transform) if with_ace else None,
        ))
    overall = MetricRow(
        name="overall",
        n=int(s.size),
        auc=auc(s, y),
        loss=mean_loss(s, y),
        ace=_safe_ace(s, y, transform) if with_ace else None,
    )
    return GroupMetricTable(tuple(rows), overall)
