"""
Stratified percentile bootstrap over the test split.

Replicate r resamples with replacement inside every (outcome, group) stratum,
keeping stratum sizes, from its own stream default_rng([seed, r]). Two methods
evaluated with the same BootstrapSpec therefore see identical replicates,
which is what makes paired differences meaningful.
"""

import concurrent.futures
import time
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Protocol, Sequence, Tuple

import numpy as np

from infra.errors import ConfigError, DataError
from infra.observability import emit
from modules.metrics.metrics import METRICS, group_metric_table

WORST_CASE = "worst_case"
OVERALL = "overall"


class Predictor(Protocol):
    def predict(self, X: np.ndarray, groups: Optional[np.ndarray] = None) -> np.ndarray: ...


@dataclass(frozen=True)
class BootstrapSpec:
    replicates: int = 1000
    alpha: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if int(self.replicates) < 1:
            raise ConfigError("bad_bootstrap_spec", f"replicates={self.replicates} < 1")
        if not 0.0 < float(self.alpha) < 1.0:
            raise ConfigError("bad_bootstrap_spec", f"alpha={self.alpha} not in (0,1)")

    def to_dict(self) -> Dict[str, Any]:
        return {"replicates": int(self.replicates), "alpha": float(self.alpha), "seed": int(self.seed)}

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "BootstrapSpec":
        return cls(int(d.get("replicates", 1000)), float(d.get("alpha", 0.05)), int(d.get("seed", 0)))


def strata(labels: np.ndarray, groups: np.ndarray, group_names: Optional[Sequence[str]] = None) -> List[np.ndarray]:
    """Positions of each observed (group, outcome) cell, in (group, outcome) order.

    A named group with no rows at all is an error.
    """
    y = np.asarray(labels)
    a = np.asarray(groups)
    k = len(group_names) if group_names is not None else int(a.max()) + 1
    cells = []
    for g in range(k):
        in_group = a == g
        if not np.any(in_group):
            name = group_names[g] if group_names is not None else str(g)
            raise DataError("empty_stratum", f"group={name} has no rows")
        for outcome in (0, 1):
            pos = np.flatnonzero(in_group & (y == outcome))
            if pos.size:
                cells.append(pos)
    return cells


def replicate_indices(spec: BootstrapSpec, cells: Sequence[np.ndarray], replicate: int) -> np.ndarray:
    rng = np.random.default_rng([int(spec.seed), int(replicate)])
    return np.concatenate([c[rng.integers(0, c.size, size=c.size)] for c in cells])


def bootstrap_indices(spec: BootstrapSpec, labels: np.ndarray, groups: np.ndarray,
                      group_names: Optional[Sequence[str]] = None) -> List[np.ndarray]:
    """All replicate index lists (positions into labels/groups)."""
    cells = strata(labels, groups, group_names)
    return [replicate_indices(spec, cells, r) for r in range(int(spec.replicates))]


def _table_array(scores: np.ndarray, y: np.ndarray, a: np.ndarray, group_names: Sequence[str],
                 transform: str) -> np.ndarray:
    """(K+2)×3 array of metrics per scope: groups, overall, worst case; NaN if undefined."""
    table = group_metric_table(scores, y, a, group_names, transform=transform, require_all_groups=False)
    rows = {r.name: r for r in table.groups}
    k = len(group_names)
    out = np.full((k + 2, len(METRICS)), np.nan)
    for g, name in enumerate(group_names):
        if name in rows:
            out[g] = [np.nan if rows[name].get(m) is None else rows[name].get(m) for m in METRICS]
    out[k] = [np.nan if table.overall.get(m) is None else table.overall.get(m) for m in METRICS]
    out[k + 1] = worst_case_values(out[:k][None, :, :])[0]
    return out


def worst_case_values(group_values: np.ndarray) -> np.ndarray:
    """Worst case over the group axis of an (..., K, metrics) array.

    Min for AUC, max for loss and ACE; NaN entries are skipped and an
    all-NaN slice stays NaN.
    """
    v = np.asarray(group_values, dtype=np.float64)
    out = np.full(v.shape[:-2] + (v.shape[-1],), np.nan)
    for j, metric in enumerate(METRICS):
        col = v[..., j]
        defined = ~np.isnan(col)
        any_defined = defined.any(axis=-1)
        if metric == "auc":
            reduced = np.where(defined, col, np.inf).min(axis=-1)
        else:
            reduced = np.where(defined, col, -np.inf).max(axis=-1)
        out[..., j] = np.where(any_defined, reduced, np.nan)
    return out


@dataclass
class BootstrapDistribution:
    """Metric values per (replicate, model, scope, metric) plus full-test-set point values."""
    spec: BootstrapSpec
    scopes: Tuple[str, ...]
    values: np.ndarray
    point: np.ndarray
    n_test: int

    @property
    def n_models(self) -> int:
        return int(self.values.shape[1])

    def scope_index(self, scope: str) -> int:
        return self.scopes.index(scope)

    def pooled(self, scope: str, metric: str) -> np.ndarray:
        """Replicate×model values of one (scope, metric), flattened, missing entries dropped."""
        v = self.values[:, :, self.scope_index(scope), METRICS.index(metric)].ravel()
        return v[~np.isnan(v)]

    def n_missing(self, scope: str, metric: str) -> int:
        v = self.values[:, :, self.scope_index(scope), METRICS.index(metric)]
        return int(np.isnan(v).sum())

    def point_estimate(self, scope: str, metric: str) -> Optional[float]:
        v = self.point[:, self.scope_index(scope), METRICS.index(metric)]
        v = v[~np.isnan(v)]
        return float(v.mean()) if v.size else None

    def replicate_means(self, scope: str, metric: str) -> np.ndarray:
        """Per-replicate mean over models; NaN where every model is missing."""
        v = self.values[:, :, self.scope_index(scope), METRICS.index(metric)]
        count = (~np.isnan(v)).sum(axis=1)
        total = np.where(np.isnan(v), 0.0, v).sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(count > 0, total / np.maximum(count, 1), np.nan)


def bootstrap_distribution(models: Sequence[Predictor], features: np.ndarray, labels: np.ndarray,
                           groups: np.ndarray, group_names: Sequence[str], spec: BootstrapSpec,
                           transform: str = "logit", jobs: int = 1) -> BootstrapDistribution:
    """Metric tables of every model on every replicate of the test data."""
    t0 = time.time()
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels)
    a = np.asarray(groups)
    if not models:
        raise ConfigError("no_models", "bootstrap needs at least one model")
    cells = strata(y, a, group_names)
    scores = np.stack([np.asarray(m.predict(X, a), dtype=np.float64) for m in models])
    n_scopes = len(group_names) + 2
    point = np.stack([_table_array(s, y, a, group_names, transform) for s in scores])
    values = np.full((int(spec.replicates), len(models), n_scopes, len(METRICS)), np.nan)

    def one(r: int) -> Tuple[int, np.ndarray]:
        idx = replicate_indices(spec, cells, r)
        return r, np.stack([_table_array(s[idx], y[idx], a[idx], group_names, transform) for s in scores])

    with concurrent.futures.ThreadPoolExecutor(max_workers=max(1, int(jobs))) as ex:
        for r, tables in ex.map(one, range(int(spec.replicates))):
            values[r] = tables

    scopes = tuple(group_names) + (OVERALL, WORST_CASE)
    dist = BootstrapDistribution(spec, scopes, values, point, int(y.size))
    emit({"kind": "bootstrap_end", "replicates": int(spec.replicates), "models": len(models), "n_test": int(y.size),
          "missing": {f"{s}/{m}": dist.n_missing(s, m) for s in scopes for m in METRICS if dist.n_missing(s, m)},
          "elapsed_sec": round(time.time() - t0, 3)})
    return dist


def percentile_ci(dist: Sequence[float], alpha: float = 0.05) -> Tuple[float, float]:
    """Empirical (alpha/2, 1 − alpha/2) quantiles, linear interpolation between order statistics."""
    v = np.asarray(dist, dtype=np.float64)
    v = v[~np.isnan(v)]
    if v.size == 0:
        raise DataError("empty_distribution")
    lo, hi = np.quantile(v, [alpha / 2.0, 1.0 - alpha / 2.0])
    return float(lo), float(hi)


def absolute_ci(dist: BootstrapDistribution, scope: str, metric: str) -> Optional[Tuple[float, float]]:
    values = dist.pooled(scope, metric)
    return percentile_ci(values, dist.spec.alpha) if values.size else None


def worst_case_ci(dist: BootstrapDistribution, metric: str) -> Optional[Tuple[float, float]]:
    """CI of the per-(replicate, model) worst case over groups."""
    return absolute_ci(dist, WORST_CASE, metric)


def relative_differences(method: BootstrapDistribution, baseline: BootstrapDistribution,
                         scope: str, metric: str) -> np.ndarray:
    """Per replicate: mean-over-models(method) − mean-over-models(baseline)."""
    if method.spec.seed != baseline.spec.seed or method.spec.replicates != baseline.spec.replicates:
        raise ConfigError("unpaired_bootstrap", f"method {method.spec.to_dict()} vs baseline {baseline.spec.to_dict()}")
    if method.n_test != baseline.n_test or method.scopes != baseline.scopes:
        raise ConfigError("unpaired_bootstrap", "method and baseline were evaluated on different test data")
    return method.replicate_means(scope, metric) - baseline.replicate_means(scope, metric)


def relative_ci(method: BootstrapDistribution, baseline: BootstrapDistribution, scope: str,
                metric: str) -> Optional[Tuple[float, float]]:
    diffs = relative_differences(method, baseline, scope, metric)
    diffs = diffs[~np.isnan(diffs)]
    return percentile_ci(diffs, method.spec.alpha) if diffs.size else None
