"""
Hyperparameter grids.

A GridSpec holds model axes (learning rate, depth, width, dropout, weight
decay) and algorithm axes (objective variant, sampler, early stopping, η, C).
Expansion takes the Cartesian product, prunes axes that do not apply to a
combination, de-duplicates, and sorts by a canonical key. Config ids hash that
key, so they stay the same whenever the same combination is expanded again,
from any grid.
"""

import hashlib
import itertools
import json
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Tuple

from infra.errors import ConfigError
from modules.model.network import ModelSpec
from modules.trainer.objective import EARLY_STOP_RULES, SAMPLERS, ObjectiveSpec

VARIANTS = ("erm", "dro_loss", "dro_auc", "dro_marginal_baseline", "dro_reciprocal", "dro_proportional")
SIZE_ADJUSTED = ("dro_reciprocal", "dro_proportional")
ERM_EARLY_STOPS = ("pooled_loss", "worst_group_loss", "worst_group_auc")
DRO_EARLY_STOPS = ("weighted_objective", "worst_group_loss", "worst_group_auc")


def _variant_fields(variant: str) -> Dict[str, str]:
    if variant == "erm":
        return {"family": "erm", "dro_metric": "loss", "adjustment": "none"}
    if variant == "dro_loss":
        return {"family": "dro", "dro_metric": "loss", "adjustment": "none"}
    if variant == "dro_auc":
        return {"family": "dro", "dro_metric": "auc", "adjustment": "none"}
    return {"family": "dro", "dro_metric": "loss", "adjustment": variant[len("dro_"):]}


@dataclass(frozen=True)
class GridPoint:
    """One hyperparameter configuration."""
    config_id: str
    model_spec: ModelSpec
    objective_spec: ObjectiveSpec

    def to_dict(self) -> Dict[str, Any]:
        return {"config_id": self.config_id, "model_spec": self.model_spec.to_dict(),
                "objective_spec": self.objective_spec.to_dict()}

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "GridPoint":
        return cls(d["config_id"], ModelSpec.from_dict(d["model_spec"]), ObjectiveSpec.from_dict(d["objective_spec"]))


def canonical_key(model_spec: ModelSpec, objective_spec: ObjectiveSpec) -> str:
    return json.dumps({"model": model_spec.to_dict(), "objective": objective_spec.to_dict()}, sort_keys=True)


def config_id_for(model_spec: ModelSpec, objective_spec: ObjectiveSpec) -> str:
    digest = hashlib.sha256(canonical_key(model_spec, objective_spec).encode("utf-8")).hexdigest()
    return f"cfg-{digest[:12]}"


@dataclass(frozen=True)
class GridSpec:
    learning_rates: Tuple[float, ...] = (1e-4, 1e-5)
    depths: Tuple[int, ...] = (1, 3)
    widths: Tuple[int, ...] = (128, 256)
    dropouts: Tuple[float, ...] = (0.25, 0.75)
    weight_decays: Tuple[float, ...] = (0.0,)
    include_logistic: bool = False
    variants: Tuple[str, ...] = ("erm",)
    samplers: Tuple[str, ...] = SAMPLERS
    erm_early_stops: Tuple[str, ...] = ERM_EARLY_STOPS
    dro_early_stops: Tuple[str, ...] = DRO_EARLY_STOPS
    etas: Tuple[float, ...] = (1.0, 0.1, 0.01)
    Cs: Tuple[float, ...] = (1.0, 0.1, 0.01)
    max_iterations: int = 150
    minibatches_per_iteration: int = 100
    batch_size: int = 512
    patience: int = 25
    init_seed: int = 0

    def __post_init__(self):
        for name in ("learning_rates", "depths", "widths", "dropouts", "weight_decays", "variants", "samplers",
                     "erm_early_stops", "dro_early_stops", "etas", "Cs"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        for v in self.variants:
            if v not in VARIANTS:
                raise ConfigError("bad_grid", f"unknown variant {v!r}")
        for rule in self.erm_early_stops + self.dro_early_stops:
            if rule not in EARLY_STOP_RULES:
                raise ConfigError("bad_grid", f"unknown early stop rule {rule!r}")
        if "weighted_objective" in self.erm_early_stops:
            raise ConfigError("bad_grid", "weighted_objective early stopping needs a DRO objective")

    def to_dict(self) -> Dict[str, Any]:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "GridSpec":
        base = cls()
        known = {k: v for k, v in (d or {}).items() if k in base.__dict__}
        return replace(base, **known)

    def hidden_layouts(self) -> List[Tuple[int, ...]]:
        layouts = [tuple([w] * d) for d in self.depths for w in self.widths if d > 0]
        if self.include_logistic or 0 in self.depths:
            layouts.append(())
        return layouts

    def with_model_axes(self, model_spec: ModelSpec, learning_rate: float) -> "GridSpec":
        """Copy with every model axis pinned to one configuration."""
        hidden = model_spec.hidden_sizes
        return replace(
            self,
            learning_rates=(float(learning_rate),),
            depths=(len(hidden),),
            widths=(hidden[0],) if hidden else self.widths[:1],
            dropouts=(float(model_spec.dropout_p),),
            weight_decays=(float(model_spec.weight_decay),),
            include_logistic=not hidden,
        )


def _model_specs(spec: GridSpec) -> List[Tuple[ModelSpec, float]]:
    out = []
    for lr, hidden, p, wd in itertools.product(spec.learning_rates, spec.hidden_layouts(), spec.dropouts,
                                               spec.weight_decays):
        if hidden:
            # weight decay is swept for logistic models only
            if wd > 0:
                continue
        else:
            p = 0.0
        out.append((ModelSpec(hidden_sizes=hidden, dropout_p=p, weight_decay=wd, init_seed=spec.init_seed), lr))
    return out


def _objective_specs(spec: GridSpec, lr: float) -> List[ObjectiveSpec]:
    out = []
    common = dict(max_iterations=spec.max_iterations, minibatches_per_iteration=spec.minibatches_per_iteration,
                  batch_size=spec.batch_size, patience=spec.patience, learning_rate=lr)
    for variant in spec.variants:
        fields = _variant_fields(variant)
        is_dro = fields["family"] == "dro"
        etas = spec.etas if is_dro else (0.0,)
        Cs = spec.Cs if variant in SIZE_ADJUSTED else (0.0,)
        rules = spec.dro_early_stops if is_dro else spec.erm_early_stops
        for sampler, rule, eta, C in itertools.product(spec.samplers, rules, etas, Cs):
            out.append(ObjectiveSpec(sampler=sampler, early_stop=rule, eta=float(eta), C=float(C), **fields, **common))
    return out


def expand_grid(spec: GridSpec) -> List[GridPoint]:
    """Pruned Cartesian product in canonical-key order."""
    seen: Dict[str, GridPoint] = {}
    for model_spec, lr in _model_specs(spec):
        for objective in _objective_specs(spec, lr):
            key = canonical_key(model_spec, objective)
            if key not in seen:
                seen[key] = GridPoint(config_id_for(model_spec, objective), model_spec, objective)
    if not seen:
        raise ConfigError("empty_grid", "no configuration survives pruning")
    return [seen[k] for k in sorted(seen)]


def erm_grid(**overrides) -> GridSpec:
    """Pooled and balanced ERM over the full network grid."""
    return GridSpec(**dict({"variants": ("erm",)}, **overrides))


def dro_grid(**overrides) -> GridSpec:
    """Every DRO variant; model axes are normally pinned with with_model_axes."""
    dro = tuple(v for v in VARIANTS if v != "erm")
    return GridSpec(**dict({"variants": dro}, **overrides))


def stratified_grid(**overrides) -> GridSpec:
    """Per-group ERM: the network grid plus logistic regression with a weight-decay sweep."""
    defaults = {"variants": ("erm",), "samplers": ("standard",), "erm_early_stops": ("pooled_loss",),
                "weight_decays": (0.0, 0.01, 0.001), "include_logistic": True}
    return GridSpec(**dict(defaults, **overrides))
