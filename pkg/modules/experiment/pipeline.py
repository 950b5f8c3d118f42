"""
End-to-end experiment commands: synth, run, select, evaluate, report.

Layout of an output directory:
  config.resolved.json      resolved experiment config
  partition.json            train/validation/test indices and folds
  store/                    sweep records, models and index
  sweep_summary.json
  selection/<family>__<criterion>.json
  reports/<family>__<criterion>.{json,csv}
  report.html, report.pdf
  logs/trace.jsonl
"""

import logging
import time
from pathlib import Path
from typing import Any, Dict, List, Tuple

from infra.errors import ConfigError, DataError, SweepError
from infra.observability import emit
from modules.dataset.dataset import Dataset, Partition, Standardizer, load_csv, partition, synthesize, write_csv
from modules.evaluation.bootstrap import BootstrapDistribution, bootstrap_distribution
from modules.evaluation.report import MetricReport, build_report
from modules.selection.grid import expand_grid
from modules.selection.select import (
    BASELINE,
    StratifiedSelection,
    select,
    select_stratified,
    stratified_composites,
)
from modules.selection.sweep import RecordStore, run_sweep
from tools.fs import ensure_dir, read_json, write_json

from .config import ExperimentConfig

logger = logging.getLogger(__name__)


def write_resolved_config(cfg: ExperimentConfig, out: str) -> str:
    path = Path(out) / "config.resolved.json"
    write_json(str(path), cfg.resolved)
    return str(path)


def prepare_dataset(cfg: ExperimentConfig) -> Dataset:
    if cfg.csv is not None:
        return load_csv(cfg.csv["path"], cfg.csv["label_col"], cfg.csv["group_col"])
    return synthesize(cfg.synthetic_spec())


def load_experiment(cfg: ExperimentConfig, out: str) -> Tuple[Dataset, Partition]:
    """Dataset (standardized on the train split if configured) and the persisted partition."""
    ds = prepare_dataset(cfg)
    part_path = Path(out) / "partition.json"
    if part_path.exists():
        part = Partition.from_dict(read_json(str(part_path)))
        if part.seed != cfg.partition_seed or part.train_idx.size + part.val_idx.size + part.test_idx.size != ds.n:
            raise ConfigError("partition_mismatch", f"{part_path} does not match the configured data and seed")
    else:
        part = partition(ds, cfg.partition_seed)
        write_json(str(part_path), part.to_dict())
    if cfg.standardize:
        ds = Standardizer.fit(ds, part.train_idx).apply(ds)
    return ds, part


def cmd_synth(cfg: ExperimentConfig, out: str) -> str:
    """Write the synthetic dataset as CSV plus a provenance JSON."""
    spec = cfg.synthetic_spec()
    if spec is None:
        raise ConfigError("not_synthetic", "synth needs a data.synthetic section")
    ds = synthesize(spec)
    data_dir = ensure_dir(str(Path(out) / "data"))
    csv_path = write_csv(ds, str(Path(data_dir) / "dataset.csv"))
    write_json(str(Path(data_dir) / "dataset.provenance.json"),
               {"synthetic_spec": spec.to_dict(), "seed": int(spec.seed), "n": ds.n, "k": ds.k, "m": ds.m,
                "group_counts": ds.group_counts().tolist(), "positives": int(ds.labels.sum())})
    write_resolved_config(cfg, out)
    logger.info("wrote %s (n=%d, k=%d)", csv_path, ds.n, ds.k)
    return csv_path


def cmd_run(cfg: ExperimentConfig, out: str, resume: bool = False, jobs: int = 1) -> Dict[str, Any]:
    """Partition and sweep: pooled ERM grid, DRO grid on the ERM winner's model axes, stratified ERM."""
    t0 = time.time()
    store = RecordStore(str(Path(out) / "store"))
    if len(store) and not resume:
        raise ConfigError("output_exists", f"{out} already holds sweep records; pass --resume to continue")
    write_resolved_config(cfg, out)
    ds, part = load_experiment(cfg, out)
    transform = cfg.recalibration_input

    erm_points = expand_grid(cfg.erm_grid)
    logger.info("ERM stage: %d configs", len(erm_points))
    records = run_sweep(ds, part, erm_points, store, cfg.sweep_seed, jobs, transform=transform)
    stages = {"erm": len(erm_points)}

    if cfg.wants_dro:
        winner = select(records, "mean_loss", "erm_pooled").records[0].point
        pinned = cfg.dro_grid.with_model_axes(winner.model_spec, winner.objective_spec.learning_rate)
        dro_points = expand_grid(pinned)
        logger.info("DRO stage: %d configs on model axes of %s", len(dro_points), winner.config_id)
        records += run_sweep(ds, part, dro_points, store, cfg.sweep_seed, jobs, transform=transform)
        stages["dro"] = len(dro_points)

    if cfg.stratified:
        strat_points = expand_grid(cfg.stratified_grid)
        logger.info("stratified stage: %d configs x %d groups", len(strat_points), ds.k)
        records += run_sweep(ds, part, strat_points, store, cfg.sweep_seed, jobs, groups=range(ds.k),
                             transform=transform)
        stages["stratified"] = len(strat_points)

    failed = sorted(r.key for r in records if not r.ok)
    summary = {"stages": stages, "runs": len(records), "failed": failed}
    write_json(str(Path(out) / "sweep_summary.json"), summary)
    emit({"kind": "run_end", "runs": len(records), "failed": len(failed), "elapsed_sec": round(time.time() - t0, 3)})
    if failed:
        raise SweepError("partial_sweep", f"{len(failed)} of {len(records)} runs failed; first: {failed[0]}")
    return summary


def _selections(cfg: ExperimentConfig, store: RecordStore, group_names) -> List[Any]:
    """Baseline first, then every requested (family, criterion), then stratified ERM."""
    records = store.all()
    try:
        baseline = select(records, BASELINE[1], BASELINE[0])
    except DataError as e:
        raise ConfigError("missing_baseline", f"no complete {BASELINE[0]} config: {e.detail}") from e
    out: List[Any] = [baseline]
    for family in cfg.families:
        for criterion in cfg.criteria:
            if (family, criterion) == BASELINE:
                continue
            try:
                out.append(select(records, criterion, family))
            except DataError as e:
                logger.warning("no selection for %s/%s: %s", family, criterion, e)
    if cfg.stratified:
        out.append(select_stratified(records, group_names))
    return out


def _selection_name(sel) -> str:
    if isinstance(sel, StratifiedSelection):
        return "erm_stratified__group_loss"
    return f"{sel.family}__{sel.criterion}"


def cmd_select(cfg: ExperimentConfig, out: str) -> List[str]:
    """Write one selection JSON per (family, criterion) with the ranked table."""
    ds = prepare_dataset(cfg)
    store = RecordStore(str(Path(out) / "store"))
    sel_dir = Path(out) / "selection"
    paths = []
    for sel in _selections(cfg, store, ds.group_names):
        path = sel_dir / f"{_selection_name(sel)}.json"
        write_json(str(path), sel.to_dict())
        paths.append(str(path))
    write_resolved_config(cfg, out)
    return paths


def cmd_evaluate(cfg: ExperimentConfig, out: str, jobs: int = 1) -> List[str]:
    """Bootstrap every selected method on the test split and write MetricReports."""
    ds, part = load_experiment(cfg, out)
    store = RecordStore(str(Path(out) / "store"))
    test = part.test_idx
    X, y, a = ds.features[test], ds.labels[test], ds.groups[test]
    cache: Dict[str, BootstrapDistribution] = {}

    def distribution(sel) -> BootstrapDistribution:
        if sel.config_id not in cache:
            if isinstance(sel, StratifiedSelection):
                models = stratified_composites(sel, store.load_model)
            else:
                models = [store.load_model(r) for r in sel.records]
            cache[sel.config_id] = bootstrap_distribution(models, X, y, a, ds.group_names, cfg.bootstrap,
                                                          cfg.recalibration_input, jobs)
        return cache[sel.config_id]

    selections = _selections(cfg, store, ds.group_names)
    baseline_dist = distribution(selections[0])
    report_dir = Path(out) / "reports"
    paths = []
    for sel in selections:
        family, criterion = _selection_name(sel).split("__")
        report = build_report(family, criterion, sel.config_id, distribution(sel), baseline_dist,
                              "__".join(BASELINE))
        paths.append(report.write(str(report_dir))["csv"])
    write_resolved_config(cfg, out)
    return paths


def cmd_select_evaluate(cfg: ExperimentConfig, out: str, jobs: int = 1) -> List[str]:
    cmd_select(cfg, out)
    return cmd_evaluate(cfg, out, jobs)


def cmd_report(out: str) -> Dict[str, str]:
    """Render every MetricReport under <out>/reports to report.html and report.pdf."""
    from modules.output.render import render_html, render_pdf

    report_dir = Path(out) / "reports"
    paths = sorted(report_dir.glob("*.json"))
    if not paths:
        raise ConfigError("no_reports", f"{report_dir} has no reports; run evaluate first")
    reports = [MetricReport.load(str(p)) for p in paths]
    html_path = render_html(reports, out)
    pdf_path = render_pdf(reports, html_path)
    return {"html": html_path, "pdf": pdf_path}
