"""
Cross-validated sweeps over a grid and the on-disk record store.

Every (config, fold[, group]) run trains one model with that fold as the
development set, then evaluates it on the validation split and on the
development fold. Records and models are written as JSON under the store root;
an existing successful record is never retrained, so an interrupted sweep can
simply be started again.
"""

import concurrent.futures
import logging
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from infra.observability import emit
from modules.dataset.dataset import N_FOLDS, Dataset, Partition
from modules.metrics.metrics import GroupMetricTable, group_metric_table
from modules.trainer.engine import TrainedModel, train, train_stratified
from tools.fs import ensure_dir, read_json, write_json

from .grid import GridPoint

logger = logging.getLogger(__name__)

STATUS_OK = "ok"
STATUS_FAILED = "failed"


def run_key(config_id: str, fold_id: int, group_id: Optional[int] = None) -> str:
    key = f"{config_id}__f{int(fold_id)}"
    return key if group_id is None else f"{key}__g{int(group_id)}"


def fold_seed(sweep_seed: int, fold_id: int) -> int:
    """Training seed shared by every config on one fold."""
    return int(np.random.SeedSequence([int(sweep_seed), int(fold_id)]).generate_state(1)[0])


@dataclass
class RunRecord:
    """Outcome of one training run."""
    config_id: str
    fold_id: int
    config: Dict[str, Any]
    status: str = STATUS_OK
    error: str = ""
    group_id: Optional[int] = None
    validation: Optional[GroupMetricTable] = None
    dev: Optional[GroupMetricTable] = None
    model_path: str = ""
    best_iteration: int = -1
    final_lambda: List[float] = field(default_factory=list)
    seed: int = 0

    @property
    def key(self) -> str:
        return run_key(self.config_id, self.fold_id, self.group_id)

    @property
    def ok(self) -> bool:
        return self.status == STATUS_OK

    @property
    def point(self) -> GridPoint:
        return GridPoint.from_dict(self.config)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "config_id": self.config_id,
            "fold_id": int(self.fold_id),
            "group_id": self.group_id,
            "config": self.config,
            "status": self.status,
            "error": self.error,
            "validation": self.validation.to_dict() if self.validation else None,
            "dev": self.dev.to_dict() if self.dev else None,
            "model_path": self.model_path,
            "best_iteration": int(self.best_iteration),
            "final_lambda": list(self.final_lambda),
            "seed": int(self.seed),
        }

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "RunRecord":
        return cls(
            config_id=d["config_id"],
            fold_id=int(d["fold_id"]),
            config=d["config"],
            status=d.get("status", STATUS_OK),
            error=d.get("error", ""),
            group_id=d.get("group_id"),
            validation=GroupMetricTable.from_dict(d["validation"]) if d.get("validation") else None,
            dev=GroupMetricTable.from_dict(d["dev"]) if d.get("dev") else None,
            model_path=d.get("model_path", ""),
            best_iteration=int(d.get("best_iteration", -1)),
            final_lambda=list(d.get("final_lambda", [])),
            seed=int(d.get("seed", 0)),
        )


class RecordStore:
    """Directory of run records (records/*.json), models (models/*.json) and an index."""

    def __init__(self, root: str):
        self.root = Path(root)
        self.records_dir = self.root / "records"
        self.models_dir = self.root / "models"
        self._lock = threading.RLock()
        ensure_dir(str(self.records_dir))
        ensure_dir(str(self.models_dir))

    def _record_path(self, key: str) -> Path:
        return self.records_dir / f"{key}.json"

    def model_path(self, key: str) -> Path:
        return self.models_dir / f"{key}.json"

    def get(self, key: str) -> Optional[RunRecord]:
        p = self._record_path(key)
        if not p.exists():
            return None
        return RunRecord.from_dict(read_json(str(p)))

    def has_ok(self, key: str) -> bool:
        rec = self.get(key)
        return rec is not None and rec.ok

    def put(self, record: RunRecord) -> None:
        with self._lock:
            write_json(str(self._record_path(record.key)), record.to_dict())
            write_json(str(self.root / "index.json"), sorted(p.stem for p in self.records_dir.glob("*.json")))

    def all(self) -> List[RunRecord]:
        return [RunRecord.from_dict(read_json(str(p))) for p in sorted(self.records_dir.glob("*.json"))]

    def load_model(self, record: RunRecord) -> TrainedModel:
        return TrainedModel.load(str(self.root / record.model_path))

    def __len__(self) -> int:
        return len(list(self.records_dir.glob("*.json")))


def _evaluate(model: TrainedModel, ds: Dataset, indices: np.ndarray, transform: str) -> GroupMetricTable:
    idx = np.asarray(indices, dtype=np.int64)
    if model.group_id is not None:
        idx = ds.group_members(model.group_id, idx)
    scores = model.predict(ds.features[idx])
    return group_metric_table(scores, ds.labels[idx], ds.groups[idx], ds.group_names,
                              transform=transform, require_all_groups=False)


def run_one(ds: Dataset, partition: Partition, point: GridPoint, fold_id: int, store: RecordStore,
            sweep_seed: int = 0, group_id: Optional[int] = None, transform: str = "logit") -> RunRecord:
    """Train and evaluate one (config, fold[, group]); failures become failed records."""
    t0 = time.time()
    seed = fold_seed(sweep_seed, fold_id)
    key = run_key(point.config_id, fold_id, group_id)
    record = RunRecord(point.config_id, int(fold_id), point.to_dict(), group_id=group_id, seed=seed)
    try:
        if group_id is None:
            model = train(ds, partition, fold_id, point.model_spec, point.objective_spec, seed=seed)
        else:
            model = train_stratified(ds, partition, fold_id, point.model_spec, group_id, point.objective_spec, seed=seed)
        model_file = store.model_path(key)
        model.save(str(model_file))
        record.model_path = str(model_file.relative_to(store.root))
        record.best_iteration = model.best_iteration
        record.final_lambda = model.final_lambda
        record.validation = _evaluate(model, ds, partition.val_idx, transform)
        record.dev = _evaluate(model, ds, partition.dev_idx(fold_id), transform)
    except Exception as e:
        record.status = STATUS_FAILED
        record.error = str(e)
        logger.warning("run %s failed: %s", key, e)
    store.put(record)
    emit({"kind": "sweep_run", "key": key, "status": record.status, "error": record.error,
          "variant": point.objective_spec.variant, "elapsed_sec": round(time.time() - t0, 3)})
    return record


def run_sweep(ds: Dataset, partition: Partition, points: Sequence[GridPoint], store: RecordStore,
              sweep_seed: int = 0, jobs: int = 1, groups: Optional[Sequence[int]] = None,
              transform: str = "logit") -> List[RunRecord]:
    """Run every (config, fold) task, or (config, fold, group) when `groups` is given.

    Returns the records of all requested tasks in task order, whether they were
    trained now or found in the store.
    """
    t0 = time.time()
    group_axis: Sequence[Optional[int]] = list(groups) if groups is not None else [None]
    tasks = [(p, f, g) for p in points for g in group_axis for f in range(N_FOLDS)]
    pending = [t for t in tasks if not store.has_ok(run_key(t[0].config_id, t[1], t[2]))]
    logger.info("sweep: %d tasks, %d already complete", len(tasks), len(tasks) - len(pending))
    if pending:
        with concurrent.futures.ThreadPoolExecutor(max_workers=max(1, int(jobs))) as ex:
            futs = [ex.submit(run_one, ds, partition, p, f, store, sweep_seed, g, transform) for p, f, g in pending]
            for fut in concurrent.futures.as_completed(futs):
                fut.result()
    records = [store.get(run_key(p.config_id, f, g)) for p, f, g in tasks]
    failed = [r.key for r in records if not r.ok]
    emit({"kind": "sweep_end", "tasks": len(tasks), "trained": len(pending), "failed": len(failed),
          "elapsed_sec": round(time.time() - t0, 3)})
    return records
