"""MetricReport: point estimates, absolute CIs and paired CIs relative to a baseline."""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

import pandas as pd

from infra.errors import DataError
from infra.observability import emit
from modules.metrics.metrics import METRICS
from tools.fs import read_json, write_json

from .bootstrap import BootstrapDistribution, absolute_ci, relative_ci

CSV_COLUMNS = ("metric", "scope", "point", "lower", "upper", "relative_point", "relative_lower",
               "relative_upper", "n_missing")


@dataclass
class ReportRow:
    metric: str
    scope: str
    point: Optional[float]
    lower: Optional[float]
    upper: Optional[float]
    relative_point: Optional[float] = None
    relative_lower: Optional[float] = None
    relative_upper: Optional[float] = None
    n_missing: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return {c: getattr(self, c) for c in CSV_COLUMNS}


@dataclass
class MetricReport:
    family: str
    criterion: str
    config_id: str
    baseline: Optional[str]
    bootstrap: Dict[str, Any]
    rows: List[ReportRow] = field(default_factory=list)

    def row(self, metric: str, scope: str) -> ReportRow:
        for r in self.rows:
            if r.metric == metric and r.scope == scope:
                return r
        raise KeyError((metric, scope))

    @property
    def name(self) -> str:
        return f"{self.family}__{self.criterion}"

    def to_dict(self) -> Dict[str, Any]:
        return {"family": self.family, "criterion": self.criterion, "config_id": self.config_id,
                "baseline": self.baseline, "bootstrap": self.bootstrap, "rows": [r.to_dict() for r in self.rows]}

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "MetricReport":
        return cls(d["family"], d["criterion"], d["config_id"], d.get("baseline"), d.get("bootstrap", {}),
                   [ReportRow(**r) for r in d.get("rows", [])])

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([r.to_dict() for r in self.rows], columns=list(CSV_COLUMNS))

    def write(self, out_dir: str) -> Dict[str, str]:
        """Write <name>.json and <name>.csv under out_dir."""
        base = Path(out_dir) / self.name
        write_json(str(base.with_suffix(".json")), self.to_dict())
        self.to_frame().to_csv(base.with_suffix(".csv"), index=False, float_format="%.10g")
        emit({"kind": "report_written", "name": self.name, "rows": len(self.rows)})
        return {"json": str(base.with_suffix(".json")), "csv": str(base.with_suffix(".csv"))}

    @classmethod
    def load(cls, path: str) -> "MetricReport":
        return cls.from_dict(read_json(path))


def _ci(fn, *args):
    try:
        return fn(*args)
    except DataError:
        return None


def build_report(family: str, criterion: str, config_id: str, dist: BootstrapDistribution,
                 baseline: Optional[BootstrapDistribution] = None, baseline_name: Optional[str] = None) -> MetricReport:
    """One row per (metric, scope); relative columns filled when a baseline is given."""
    rows = []
    for metric in METRICS:
        for scope in dist.scopes:
            ci = _ci(absolute_ci, dist, scope, metric)
            row = ReportRow(metric, scope, dist.point_estimate(scope, metric),
                            ci[0] if ci else None, ci[1] if ci else None,
                            n_missing=dist.n_missing(scope, metric))
            if baseline is not None:
                mine, theirs = dist.point_estimate(scope, metric), baseline.point_estimate(scope, metric)
                row.relative_point = None if mine is None or theirs is None else mine - theirs
                rel = _ci(relative_ci, dist, baseline, scope, metric)
                row.relative_lower, row.relative_upper = (rel[0], rel[1]) if rel else (None, None)
            rows.append(row)
    return MetricReport(family, criterion, config_id, baseline_name, dist.spec.to_dict(), rows)
