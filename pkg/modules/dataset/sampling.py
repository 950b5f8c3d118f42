"""Minibatch samplers over an index pool. Both draw with replacement."""
import numpy as np

from infra.errors import ConfigError, DataError

from .dataset import Dataset


def minibatch_standard(ds: Dataset, indices: np.ndarray, batch_size: int, rng: np.random.Generator) -> np.ndarray:
    """Draw batch_size indices uniformly from the pool, ignoring group membership."""
    pool = np.asarray(indices, dtype=np.int64)
    if batch_size < 1:
        raise ConfigError("bad_batch_size", str(batch_size))
    if pool.size == 0:
        raise DataError("empty_pool")
    return pool[rng.integers(0, pool.size, size=int(batch_size))]


def minibatch_balanced(ds: Dataset, indices: np.ndarray, batch_size: int, rng: np.random.Generator) -> np.ndarray:
    """Draw an equal share of the batch from every group.

    Each group gets floor(batch_size/K) draws; the batch_size mod K leftover
    slots go to distinct groups chosen uniformly at random.
    """
    pool = np.asarray(indices, dtype=np.int64)
    k = ds.k
    if batch_size < k:
        raise ConfigError("bad_batch_size", f"batch_size={batch_size} < K={k}")
    members = [pool[ds.groups[pool] == g] for g in range(k)]
    for g, m in enumerate(members):
        if m.size == 0:
            raise DataError("empty_group_pool", f"group={ds.group_names[g]}")
    per_group, remainder = divmod(int(batch_size), k)
    counts = np.full(k, per_group, dtype=np.int64)
    if remainder:
        counts[rng.choice(k, size=remainder, replace=False)] += 1
    parts = [m[rng.integers(0, m.size, size=c)] for m, c in zip(members, counts)]
    return np.concatenate(parts)


SAMPLERS = {
    "standard": minibatch_standard,
    "balanced": minibatch_balanced,
}
