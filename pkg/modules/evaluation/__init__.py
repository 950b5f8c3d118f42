from .bootstrap import (
    BootstrapDistribution,
    BootstrapSpec,
    bootstrap_distribution,
    bootstrap_indices,
    percentile_ci,
    relative_ci,
    relative_differences,
    worst_case_ci,
    worst_case_values,
)
from .report import CSV_COLUMNS, MetricReport, ReportRow, build_report
