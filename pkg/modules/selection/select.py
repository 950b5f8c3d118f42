"""
Model selection over completed sweep records.

Per config, each per-group validation metric is first averaged over the five
fold-models; only then is the worst case over groups taken. Ties go to the
lower config id. Configs with a missing or failed fold are left out.
"""

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from infra.errors import ConfigError, DataError
from infra.observability import emit
from modules.dataset.dataset import N_FOLDS
from modules.trainer.engine import TrainedModel

from .sweep import RunRecord

logger = logging.getLogger(__name__)

CRITERIA = ("mean_loss", "mean_group_loss", "worst_group_loss", "worst_group_auc")
FAMILIES = ("erm_pooled", "erm_balanced", "erm", "dro", "dro_loss", "dro_reciprocal", "dro_proportional",
            "dro_marginal_baseline", "dro_auc", "erm_stratified")
BASELINE = ("erm_pooled", "mean_loss")


def family_filter(family: str) -> Callable[[RunRecord], bool]:
    """Predicate selecting the records of one method family."""
    if family not in FAMILIES:
        raise ConfigError("bad_family", family)

    def keep(rec: RunRecord) -> bool:
        obj = rec.config["objective_spec"]
        if family == "erm_stratified":
            return rec.group_id is not None
        if rec.group_id is not None:
            return False
        if family == "erm_pooled":
            return obj["family"] == "erm" and obj["sampler"] == "standard" and obj["early_stop"] == "pooled_loss"
        if family == "erm_balanced":
            return obj["family"] == "erm" and obj["sampler"] == "balanced" and obj["early_stop"] == "pooled_loss"
        if family in ("erm", "dro"):
            return obj["family"] == family
        variant = "dro_auc" if obj["dro_metric"] == "auc" else (
            "dro_loss" if obj["adjustment"] == "none" else f"dro_{obj['adjustment']}")
        return obj["family"] == "dro" and variant == family

    return keep


@dataclass
class ConfigSummary:
    """Fold-averaged validation metrics of one complete config."""
    config_id: str
    pooled_loss: float
    group_loss: Dict[str, float]
    group_auc: Dict[str, Optional[float]]

    def score(self, criterion: str) -> Tuple[float, float]:
        """(natural value, sort key with lower = better)."""
        if criterion == "mean_loss":
            return self.pooled_loss, self.pooled_loss
        if criterion == "mean_group_loss":
            v = float(np.mean(list(self.group_loss.values())))
            return v, v
        if criterion == "worst_group_loss":
            v = max(self.group_loss.values())
            return v, v
        if criterion == "worst_group_auc":
            defined = [v for v in self.group_auc.values() if v is not None]
            if not defined:
                return float("nan"), float("inf")
            v = min(defined)
            return v, -v
        raise ConfigError("bad_criterion", criterion)

    def to_dict(self) -> Dict[str, Any]:
        return {"config_id": self.config_id, "pooled_loss": self.pooled_loss,
                "group_loss": self.group_loss, "group_auc": self.group_auc}


@dataclass
class Selection:
    criterion: str
    family: str
    config_id: str
    value: float
    records: List[RunRecord]
    ranking: List[Dict[str, Any]] = field(default_factory=list)
    excluded: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "criterion": self.criterion,
            "family": self.family,
            "config_id": self.config_id,
            "value": self.value,
            "config": self.records[0].config if self.records else None,
            "model_paths": [r.model_path for r in self.records],
            "ranking": self.ranking,
            "excluded": self.excluded,
        }


def _mean_defined(values: Sequence[Optional[float]]) -> Optional[float]:
    defined = [v for v in values if v is not None]
    return float(np.mean(defined)) if defined else None


def complete_configs(records: Sequence[RunRecord]) -> Tuple[Dict[str, List[RunRecord]], List[str]]:
    """Group records by config; returns (configs with five ok folds, excluded ids)."""
    by_config: Dict[str, List[RunRecord]] = defaultdict(list)
    for r in records:
        by_config[r.config_id].append(r)
    complete, excluded = {}, []
    for cid in sorted(by_config):
        folds = {r.fold_id: r for r in by_config[cid] if r.ok}
        if len(folds) == N_FOLDS and all(f in folds for f in range(N_FOLDS)):
            complete[cid] = [folds[f] for f in range(N_FOLDS)]
        else:
            excluded.append(cid)
    return complete, excluded


def summarize(config_id: str, records: Sequence[RunRecord]) -> ConfigSummary:
    """Average each group's validation metrics over folds."""
    names: List[str] = []
    for r in records:
        for row in r.validation.groups:
            if row.name not in names:
                names.append(row.name)
    group_loss, group_auc = {}, {}
    for name in names:
        rows = [row for r in records for row in r.validation.groups if row.name == name]
        group_loss[name] = float(np.mean([row.loss for row in rows]))
        group_auc[name] = _mean_defined([row.auc for row in rows])
    pooled = float(np.mean([r.validation.overall.loss for r in records]))
    return ConfigSummary(config_id, pooled, group_loss, group_auc)


def select(records: Sequence[RunRecord], criterion: str, family: str = "erm") -> Selection:
    """Best complete config of `family` under `criterion`."""
    if criterion not in CRITERIA:
        raise ConfigError("bad_criterion", criterion)
    keep = family_filter(family)
    complete, excluded = complete_configs([r for r in records if keep(r)])
    if excluded:
        logger.warning("%s: %d incomplete configs excluded from selection", family, len(excluded))
    if not complete:
        raise DataError("no_complete_config", f"family={family}")
    ranked = []
    for cid, recs in complete.items():
        summary = summarize(cid, recs)
        value, sort_key = summary.score(criterion)
        ranked.append((sort_key, cid, value, summary))
    ranked.sort(key=lambda t: (t[0], t[1]))
    _, best_id, best_value, _ = ranked[0]
    emit({"kind": "selection", "family": family, "criterion": criterion, "config_id": best_id,
          "value": best_value, "candidates": len(ranked), "excluded": len(excluded)})
    return Selection(
        criterion=criterion,
        family=family,
        config_id=best_id,
        value=best_value,
        records=complete[best_id],
        ranking=[dict(s.to_dict(), value=v) for _, _, v, s in ranked],
        excluded=excluded,
    )


@dataclass
class StratifiedSelection:
    """Per-group winning config of stratified ERM."""
    group_names: Tuple[str, ...]
    config_ids: Dict[int, str]
    records: Dict[int, List[RunRecord]]
    values: Dict[int, float]

    @property
    def config_id(self) -> str:
        return "+".join(self.config_ids[g] for g in sorted(self.config_ids))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "criterion": "group_loss",
            "family": "erm_stratified",
            "config_id": self.config_id,
            "groups": [{"group": self.group_names[g], "config_id": self.config_ids[g], "value": self.values[g],
                        "model_paths": [r.model_path for r in self.records[g]]} for g in sorted(self.config_ids)],
        }


def select_stratified(records: Sequence[RunRecord], group_names: Sequence[str]) -> StratifiedSelection:
    """Per group, the config with the lowest fold-averaged validation loss on that group."""
    config_ids, chosen, values = {}, {}, {}
    for g, name in enumerate(group_names):
        complete, excluded = complete_configs([r for r in records if r.group_id == g])
        if excluded:
            logger.warning("group %s: %d incomplete configs excluded from selection", name, len(excluded))
        if not complete:
            raise DataError("no_complete_config", f"group={name}")
        ranked = sorted((summarize(cid, recs).group_loss.get(name, float("inf")), cid) for cid, recs in complete.items())
        values[g], config_ids[g] = ranked[0]
        chosen[g] = complete[config_ids[g]]
    emit({"kind": "selection", "family": "erm_stratified", "criterion": "group_loss", "config_ids": config_ids})
    return StratifiedSelection(tuple(group_names), config_ids, chosen, values)


class CompositePredictor:
    """Routes each row to the model trained on its group."""

    def __init__(self, models: Dict[int, TrainedModel]):
        if not models:
            raise ConfigError("empty_composite")
        self.models = dict(models)

    def predict(self, X: np.ndarray, groups: Optional[np.ndarray] = None) -> np.ndarray:
        if groups is None:
            raise ConfigError("missing_groups", "a composite predictor needs the group attribute")
        X = np.asarray(X, dtype=np.float64)
        a = np.asarray(groups)
        out = np.empty(a.shape[0], dtype=np.float64)
        for g in np.unique(a):
            if int(g) not in self.models:
                raise DataError("unrouted_group", f"group index {int(g)} has no model")
            sel = a == g
            out[sel] = self.models[int(g)].predict(X[sel])
        return out


def stratified_composites(selection: StratifiedSelection,
                          load: Callable[[RunRecord], TrainedModel]) -> List[CompositePredictor]:
    """One composite per fold, each built from every group's fold model."""
    return [CompositePredictor({g: load(recs[f]) for g, recs in selection.records.items()})
            for f in range(N_FOLDS)]
