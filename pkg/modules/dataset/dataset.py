"""
Dataset representation, CSV ingestion, synthetic generation and partitioning.

A Dataset holds features X (N×m), binary labels Y and a group attribute A with K
named groups. Group indices follow the lexicographic order of group names so that
the same file always yields the same index assignment.
"""

import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.special import expit

from infra.errors import ConfigError, DataError
from infra.observability import emit

N_FOLDS = 5
TRAIN_FRACTION = 0.625
VAL_FRACTION = 0.125
MIN_PARTITION_SIZE = 16
MAX_MEMBERSHIP_ATTEMPTS = 100


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class Dataset:
    """Immutable (X, Y, A) triple with group and feature names."""
    features: np.ndarray
    labels: np.ndarray
    groups: np.ndarray
    group_names: Tuple[str, ...]
    feature_names: Tuple[str, ...]

    def __post_init__(self):
        X = np.array(self.features, dtype=np.float64)
        if X.ndim != 2:
            raise DataError("bad_shape", f"features must be 2-d, got {X.ndim}-d")
        raw_labels = np.asarray(self.labels)
        if not np.all(np.isin(raw_labels, (0, 1))):
            raise DataError("non_binary_label")
        y = raw_labels.astype(np.int64)
        a = np.asarray(self.groups).astype(np.int64)
        n = X.shape[0]
        if n < 1:
            raise DataError("empty_dataset")
        if y.shape != (n,) or a.shape != (n,):
            raise DataError("length_mismatch", f"features={n} labels={y.shape} groups={a.shape}")
        if not np.all(np.isfinite(X)):
            raise DataError("non_finite_feature")
        k = len(self.group_names)
        if k < 1 or a.min() < 0 or a.max() >= k:
            raise DataError("bad_group_index", f"group indices must lie in [0,{k})")
        missing = [self.group_names[g] for g in range(k) if not np.any(a == g)]
        if missing:
            raise DataError("empty_group", ",".join(missing))
        if len(self.feature_names) != X.shape[1]:
            raise DataError("feature_names_mismatch", f"{len(self.feature_names)} names for {X.shape[1]} columns")
        object.__setattr__(self, "features", _frozen(X))
        object.__setattr__(self, "labels", _frozen(y))
        object.__setattr__(self, "groups", _frozen(a))
        object.__setattr__(self, "group_names", tuple(str(g) for g in self.group_names))
        object.__setattr__(self, "feature_names", tuple(str(f) for f in self.feature_names))

    @property
    def n(self) -> int:
        return int(self.features.shape[0])

    @property
    def m(self) -> int:
        return int(self.features.shape[1])

    @property
    def k(self) -> int:
        return len(self.group_names)

    def group_counts(self, indices: Optional[np.ndarray] = None) -> np.ndarray:
        a = self.groups if indices is None else self.groups[np.asarray(indices, dtype=np.int64)]
        return np.bincount(a, minlength=self.k)

    def proportions(self) -> np.ndarray:
        return self.group_counts() / float(self.n)

    def group_members(self, group: int, indices: Optional[np.ndarray] = None) -> np.ndarray:
        """Indices (drawn from `indices`, or all rows) whose group attribute equals `group`."""
        pool = np.arange(self.n) if indices is None else np.asarray(indices, dtype=np.int64)
        return pool[self.groups[pool] == group]

    def with_features(self, features: np.ndarray) -> "Dataset":
        return Dataset(features, self.labels, self.groups, self.group_names, self.feature_names)


@dataclass(frozen=True)
class Partition:
    """Disjoint train/validation/test index lists plus five training folds."""
    train_idx: np.ndarray
    val_idx: np.ndarray
    test_idx: np.ndarray
    folds: Tuple[np.ndarray, ...]
    seed: int

    def __post_init__(self):
        for name in ("train_idx", "val_idx", "test_idx"):
            object.__setattr__(self, name, _frozen(np.asarray(getattr(self, name), dtype=np.int64)))
        object.__setattr__(self, "folds", tuple(_frozen(np.asarray(f, dtype=np.int64)) for f in self.folds))
        if len(self.folds) != N_FOLDS:
            raise DataError("bad_partition", f"expected {N_FOLDS} folds, got {len(self.folds)}")

    def dev_idx(self, fold_id: int) -> np.ndarray:
        self._check_fold(fold_id)
        return self.folds[fold_id]

    def pool_idx(self, fold_id: int) -> np.ndarray:
        """Training pool for a fold: the other four folds, in fold order."""
        self._check_fold(fold_id)
        return np.concatenate([f for i, f in enumerate(self.folds) if i != fold_id])

    def _check_fold(self, fold_id: int) -> None:
        if not 0 <= int(fold_id) < N_FOLDS:
            raise ConfigError("bad_fold", f"fold_id={fold_id} not in [0,{N_FOLDS})")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "seed": int(self.seed),
            "train_idx": self.train_idx.tolist(),
            "val_idx": self.val_idx.tolist(),
            "test_idx": self.test_idx.tolist(),
            "folds": [f.tolist() for f in self.folds],
        }

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "Partition":
        return cls(
            train_idx=np.asarray(d["train_idx"]),
            val_idx=np.asarray(d["val_idx"]),
            test_idx=np.asarray(d["test_idx"]),
            folds=tuple(np.asarray(f) for f in d["folds"]),
            seed=int(d["seed"]),
        )


@dataclass(frozen=True)
class SyntheticSpec:
    """Group-conditional Gaussian features with per-group logistic ground truth."""
    group_proportions: Tuple[float, ...]
    means: Tuple[Tuple[float, ...], ...]
    coefficients: Tuple[Tuple[float, ...], ...]
    intercepts: Tuple[float, ...]
    n: int
    seed: int = 0
    covariance_scale: float = 1.0

    def __post_init__(self):
        props = np.asarray(self.group_proportions, dtype=np.float64)
        k = props.shape[0]
        if k < 1:
            raise ConfigError("bad_synthetic_spec", "at least one group required")
        if abs(props.sum() - 1.0) > 1e-12 or np.any(props <= 0):
            raise ConfigError("bad_synthetic_spec", "proportions must be positive and sum to 1")
        means = np.asarray(self.means, dtype=np.float64)
        coefs = np.asarray(self.coefficients, dtype=np.float64)
        if means.ndim != 2 or means.shape[0] != k or coefs.shape != means.shape:
            raise ConfigError("bad_synthetic_spec", "means and coefficients must be K×m")
        if len(self.intercepts) != k:
            raise ConfigError("bad_synthetic_spec", "one intercept per group required")
        if int(self.n) < 1 or self.covariance_scale <= 0:
            raise ConfigError("bad_synthetic_spec", "n and covariance_scale must be positive")

    @property
    def k(self) -> int:
        return len(self.group_proportions)

    @property
    def m(self) -> int:
        return len(self.means[0])

    def to_dict(self) -> Dict[str, Any]:
        return {
            "group_proportions": list(self.group_proportions),
            "means": [list(r) for r in self.means],
            "coefficients": [list(r) for r in self.coefficients],
            "intercepts": list(self.intercepts),
            "n": int(self.n),
            "seed": int(self.seed),
            "covariance_scale": float(self.covariance_scale),
        }

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "SyntheticSpec":
        return cls(
            group_proportions=tuple(float(p) for p in d["group_proportions"]),
            means=tuple(tuple(float(v) for v in r) for r in d["means"]),
            coefficients=tuple(tuple(float(v) for v in r) for r in d["coefficients"]),
            intercepts=tuple(float(b) for b in d["intercepts"]),
            n=int(d["n"]),
            seed=int(d.get("seed", 0)),
            covariance_scale=float(d.get("covariance_scale", 1.0)),
        )


def make_synthetic_spec(
    group_proportions: Sequence[float],
    n_features: int,
    n: int,
    seed: int = 0,
    negated_groups: Sequence[int] = (),
    mean_shift: float = 0.0,
    intercept: float = 0.0,
    coefficient_scale: float = 1.0,
) -> SyntheticSpec:
    """Build a SyntheticSpec sharing one coefficient vector across groups.

    Groups listed in `negated_groups` get the negated coefficients (a true
    conditional shift). Group k's feature mean is k·mean_shift in every coordinate.
    """
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 7919]))
    base = rng.normal(0.0, coefficient_scale, size=n_features)
    k = len(group_proportions)
    coefs = []
    for g in range(k):
        w = -base if g in set(negated_groups) else base
        coefs.append(tuple(float(v) for v in w))
    means = tuple(tuple(float(g * mean_shift) for _ in range(n_features)) for g in range(k))
    return SyntheticSpec(
        group_proportions=tuple(float(p) for p in group_proportions),
        means=means,
        coefficients=tuple(coefs),
        intercepts=tuple(float(intercept) for _ in range(k)),
        n=int(n),
        seed=int(seed),
    )


def synthesize(spec: SyntheticSpec) -> Dataset:
    """Draw a Dataset from a SyntheticSpec; deterministic given its seed."""
    t0 = time.time()
    k, n = spec.k, int(spec.n)
    props = np.asarray(spec.group_proportions, dtype=np.float64)
    groups = None
    attempt = 0
    for attempt in range(MAX_MEMBERSHIP_ATTEMPTS):
        rng = np.random.default_rng(np.random.SeedSequence([int(spec.seed), attempt]))
        draw = rng.choice(k, size=n, p=props)
        if np.all(np.bincount(draw, minlength=k) > 0):
            groups = draw
            break
    if groups is None:
        raise DataError("empty_synthetic_group", f"some group drew zero members after {MAX_MEMBERSHIP_ATTEMPTS} attempts")
    means = np.asarray(spec.means, dtype=np.float64)
    coefs = np.asarray(spec.coefficients, dtype=np.float64)
    intercepts = np.asarray(spec.intercepts, dtype=np.float64)
    noise = rng.standard_normal((n, spec.m)) * math.sqrt(spec.covariance_scale)
    X = means[groups] + noise
    logits = np.einsum("ij,ij->i", X, coefs[groups]) + intercepts[groups]
    y = (rng.random(n) < expit(logits)).astype(np.int64)
    width = max(2, len(str(k - 1)))
    ds = Dataset(
        features=X,
        labels=y,
        groups=groups,
        group_names=tuple(f"group_{g:0{width}d}" for g in range(k)),
        feature_names=tuple(f"x{j}" for j in range(spec.m)),
    )
    emit({"kind": "dataset_synthesized", "n": n, "k": k, "m": spec.m, "seed": int(spec.seed),
          "membership_attempts": attempt + 1, "elapsed_sec": round(time.time() - t0, 3)})
    return ds


def load_csv(path: str, label_col: str, group_col: str) -> Dataset:
    """Read a CSV with one label column, one group column and numeric features."""
    t0 = time.time()
    if not Path(path).exists():
        raise ConfigError("missing_file", str(path))
    frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    for col in (label_col, group_col):
        if col not in frame.columns:
            raise ConfigError("missing_column", col)
    feature_cols = [c for c in frame.columns if c not in (label_col, group_col)]
    if frame.shape[0] == 0:
        raise DataError("empty_dataset", str(path))

    X = np.empty((frame.shape[0], len(feature_cols)), dtype=np.float64)
    for j, col in enumerate(feature_cols):
        values = pd.to_numeric(frame[col].str.strip(), errors="coerce").to_numpy(dtype=np.float64)
        bad = np.flatnonzero(~np.isfinite(values))
        if bad.size:
            raise DataError("non_numeric_feature", f"row={int(bad[0]) + 1} column={col} value={frame[col].iloc[bad[0]]!r}")
        X[:, j] = values

    labels = pd.to_numeric(frame[label_col].str.strip(), errors="coerce").to_numpy(dtype=np.float64)
    bad = np.flatnonzero(~np.isin(labels, (0.0, 1.0)))
    if bad.size:
        raise DataError("non_binary_label", f"row={int(bad[0]) + 1} column={label_col} value={frame[label_col].iloc[bad[0]]!r}")

    raw_groups = frame[group_col].astype(str).to_numpy()
    names = sorted(set(raw_groups.tolist()))
    lookup = {name: i for i, name in enumerate(names)}
    groups = np.array([lookup[g] for g in raw_groups], dtype=np.int64)

    ds = Dataset(X, labels.astype(np.int64), groups, tuple(names), tuple(feature_cols))
    emit({"kind": "dataset_loaded", "path": str(path), "n": ds.n, "m": ds.m, "k": ds.k,
          "elapsed_sec": round(time.time() - t0, 3)})
    return ds


def write_csv(ds: Dataset, path: str, label_col: str = "label", group_col: str = "group") -> str:
    """Write features, label and group name columns; inverse of load_csv."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(ds.features, columns=list(ds.feature_names))
    frame[label_col] = ds.labels
    frame[group_col] = [ds.group_names[g] for g in ds.groups]
    frame.to_csv(path, index=False, float_format="%.17g")
    return str(path)


def partition(ds: Dataset, seed: int) -> Partition:
    """Random 62.5/12.5/25 split with five round-robin training folds."""
    n = ds.n
    if n < MIN_PARTITION_SIZE:
        raise DataError("dataset_too_small", f"N={n} < {MIN_PARTITION_SIZE}")
    n_train = round_half_up(TRAIN_FRACTION * n)
    n_val = round_half_up(VAL_FRACTION * n)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 1]))
    order = rng.permutation(n)
    train = order[:n_train]
    val = order[n_train:n_train + n_val]
    test = order[n_train + n_val:]
    folds = tuple(train[f::N_FOLDS] for f in range(N_FOLDS))
    part = Partition(train, val, test, folds, int(seed))
    emit({"kind": "partition_created", "seed": int(seed), "train": len(train), "val": len(val), "test": len(test)})
    return part


@dataclass
class Standardizer:
    """Per-feature zero-mean/unit-variance transform fitted on training rows."""
    mean: np.ndarray = field(default_factory=lambda: np.zeros(0))
    scale: np.ndarray = field(default_factory=lambda: np.ones(0))

    @classmethod
    def fit(cls, ds: Dataset, indices: np.ndarray) -> "Standardizer":
        X = ds.features[np.asarray(indices, dtype=np.int64)]
        mean = X.mean(axis=0)
        scale = X.std(axis=0)
        # constant columns stay centred but unscaled
        scale = np.where(scale > 0, scale, 1.0)
        return cls(mean=mean, scale=scale)

    def apply(self, ds: Dataset) -> Dataset:
        return ds.with_features((ds.features - self.mean) / self.scale)

    def to_dict(self) -> Dict[str, List[float]]:
        return {"mean": self.mean.tolist(), "scale": self.scale.tolist()}
