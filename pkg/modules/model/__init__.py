from .network import (
    ForwardPass,
    Gradient,
    ModelParams,
    ModelSpec,
    forward,
    forward_pass,
    init,
    optimizer_step,
    predict,
    weighted_loss_grad,
)
