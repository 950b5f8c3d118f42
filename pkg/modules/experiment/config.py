"""
Experiment configuration: one TOML or JSON file per experiment.

User values are merged over defaults.json, validated against schema.json and
turned into typed specs. The resolved document (defaults filled in, every
seed explicit) is what gets archived next to the results.
"""

import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from infra.errors import ConfigError
from infra.schema_contract import SchemaContract, deep_merge
from modules.dataset.dataset import SyntheticSpec, make_synthetic_spec
from modules.evaluation.bootstrap import BootstrapSpec
from modules.metrics.metrics import RECAL_INPUTS
from modules.selection.grid import GridSpec, dro_grid, erm_grid, stratified_grid
from modules.selection.select import CRITERIA, FAMILIES
from tools.fs import read_json

_HERE = Path(__file__).parent
SCHEMA_PATH = _HERE / "schema.json"
DEFAULTS_PATH = _HERE / "defaults.json"


def read_config_file(path: str) -> Dict[str, Any]:
    p = Path(path)
    if not p.exists():
        raise ConfigError("missing_file", str(path))
    try:
        if p.suffix.lower() == ".toml":
            with open(p, "rb") as f:
                return tomllib.load(f)
        return json.loads(p.read_text(encoding="utf-8"))
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as e:
        raise ConfigError("unparseable_config", f"{path}: {e}") from e


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    data: Dict[str, Any]
    partition_seed: int
    sweep_seed: int
    erm_grid: GridSpec
    dro_grid: GridSpec
    stratified_grid: GridSpec
    criteria: Tuple[str, ...]
    families: Tuple[str, ...]
    stratified: bool
    bootstrap: BootstrapSpec
    recalibration_input: str
    output_dir: Optional[str]
    resolved: Dict[str, Any] = field(default_factory=dict)

    @property
    def csv(self) -> Optional[Dict[str, str]]:
        return self.data.get("csv")

    @property
    def standardize(self) -> bool:
        return bool(self.data.get("standardize", True))

    def synthetic_spec(self) -> Optional[SyntheticSpec]:
        syn = self.data.get("synthetic")
        if syn is None:
            return None
        spec = make_synthetic_spec(
            group_proportions=syn["group_proportions"],
            n_features=int(syn["n_features"]),
            n=int(syn["n"]),
            seed=int(syn.get("seed", 0)),
            negated_groups=tuple(syn.get("negated_groups", ())),
            mean_shift=float(syn.get("mean_shift", 0.0)),
            intercept=float(syn.get("intercept", 0.0)),
            coefficient_scale=float(syn.get("coefficient_scale", 1.0)),
        )
        if "covariance_scale" in syn:
            spec = SyntheticSpec.from_dict(dict(spec.to_dict(), covariance_scale=float(syn["covariance_scale"])))
        return spec

    @property
    def wants_dro(self) -> bool:
        return any(f.startswith("dro") for f in self.families)

    @property
    def all_families(self) -> List[str]:
        return list(self.families) + (["erm_stratified"] if self.stratified else [])


def _check_choices(values: List[str], allowed: Tuple[str, ...], what: str) -> None:
    bad = [v for v in values if v not in allowed]
    if bad:
        raise ConfigError("bad_config", f"unknown {what}: {', '.join(bad)}")


def resolve(raw: Dict[str, Any]) -> ExperimentConfig:
    """Merge defaults, validate, and build the typed config."""
    merged = deep_merge(read_json(str(DEFAULTS_PATH)), raw or {})
    ok, errors = SchemaContract(str(SCHEMA_PATH)).validate(merged)
    if not ok:
        raise ConfigError("invalid_config", "; ".join(errors))
    data = merged["data"]
    if ("csv" in data) == ("synthetic" in data):
        raise ConfigError("invalid_config", "data needs exactly one of csv or synthetic")
    if "synthetic" in data:
        data["synthetic"].setdefault("seed", 0)
    _check_choices(merged["selection"]["criteria"], CRITERIA, "criteria")
    _check_choices(merged["selection"]["families"], FAMILIES, "families")
    if merged["metrics"]["recalibration_input"] not in RECAL_INPUTS:
        raise ConfigError("invalid_config", f"recalibration_input must be one of {RECAL_INPUTS}")
    if "erm_pooled" not in merged["selection"]["families"]:
        merged["selection"]["families"] = ["erm_pooled"] + list(merged["selection"]["families"])
    grid = merged.get("grid", {})
    return ExperimentConfig(
        name=str(merged.get("name") or "experiment"),
        data=data,
        partition_seed=int(merged["partition"]["seed"]),
        sweep_seed=int(merged["sweep"]["seed"]),
        erm_grid=erm_grid(**grid.get("erm", {})),
        dro_grid=dro_grid(**grid.get("dro", {})),
        stratified_grid=stratified_grid(**grid.get("stratified", {})),
        criteria=tuple(merged["selection"]["criteria"]),
        families=tuple(merged["selection"]["families"]),
        stratified=bool(merged["selection"]["stratified"]),
        bootstrap=BootstrapSpec.from_dict(merged["bootstrap"]),
        recalibration_input=merged["metrics"]["recalibration_input"],
        output_dir=merged["output"].get("dir"),
        resolved=merged,
    )


def load_config(path: str) -> ExperimentConfig:
    return resolve(read_config_file(path))
