from .metrics import (
    METRICS,
    GroupMetricTable,
    MetricRow,
    ace,
    auc,
    binary_cross_entropy,
    fit_recalibration,
    group_metric_table,
    mean_loss,
)
