from .engine import DevMetrics, TrainedModel, dev_metrics, early_stop_value, train, train_stratified
from .objective import (
    GroupWeights,
    ObjectiveSpec,
    compute_adjustments,
    g_auc,
    lambda_update_loss,
    lambda_update_metric,
    weighted_example_weights,
)
