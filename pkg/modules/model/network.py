"""
Feedforward binary classifiers with manual backpropagation.

Logistic regression is the network with no hidden layers. Hidden layers use
rectified-linear activations followed by inverted dropout in training mode.
The loss is a per-example weighted binary cross-entropy plus coupled weight
decay on weight matrices (never on biases); parameters are updated with Adam.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from scipy.special import expit

from infra.errors import ConfigError, DataError, NumericError
from modules.metrics.metrics import PROB_CLIP, binary_cross_entropy

FORMAT_VERSION = 1
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
MODES = ("train", "eval")


@dataclass(frozen=True)
class ModelSpec:
    """Architecture and regularization of one classifier."""
    hidden_sizes: Tuple[int, ...] = ()
    dropout_p: float = 0.0
    weight_decay: float = 0.0
    init_seed: int = 0
    activation: str = "relu"

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        if any(h <= 0 for h in self.hidden_sizes):
            raise ConfigError("bad_model_spec", f"hidden sizes must be positive: {self.hidden_sizes}")
        if not 0.0 <= float(self.dropout_p) < 1.0:
            raise ConfigError("bad_model_spec", f"dropout_p={self.dropout_p} not in [0,1)")
        if float(self.weight_decay) < 0:
            raise ConfigError("bad_model_spec", f"weight_decay={self.weight_decay} < 0")
        if self.activation != "relu":
            raise ConfigError("bad_model_spec", f"unsupported activation {self.activation}")

    @property
    def is_logistic(self) -> bool:
        return len(self.hidden_sizes) == 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "hidden_sizes": list(self.hidden_sizes),
            "dropout_p": float(self.dropout_p),
            "weight_decay": float(self.weight_decay),
            "init_seed": int(self.init_seed),
            "activation": self.activation,
        }

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "ModelSpec":
        return cls(
            hidden_sizes=tuple(d.get("hidden_sizes", ())),
            dropout_p=float(d.get("dropout_p", 0.0)),
            weight_decay=float(d.get("weight_decay", 0.0)),
            init_seed=int(d.get("init_seed", 0)),
            activation=str(d.get("activation", "relu")),
        )


@dataclass(frozen=True)
class Gradient:
    """Per-layer gradients with the same shapes as the parameters."""
    weights: Tuple[np.ndarray, ...]
    biases: Tuple[np.ndarray, ...]

    def flat(self) -> np.ndarray:
        return np.concatenate([t.ravel() for pair in zip(self.weights, self.biases) for t in pair])

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(t)) for t in self.weights + self.biases)


@dataclass(frozen=True)
class ModelParams:
    """Weights, biases and Adam moment accumulators of one classifier."""
    spec: ModelSpec
    weights: Tuple[np.ndarray, ...]
    biases: Tuple[np.ndarray, ...]
    m_weights: Tuple[np.ndarray, ...]
    m_biases: Tuple[np.ndarray, ...]
    v_weights: Tuple[np.ndarray, ...]
    v_biases: Tuple[np.ndarray, ...]
    step: int = 0

    @property
    def n_features(self) -> int:
        return int(self.weights[0].shape[0])

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def layer_shapes(self) -> List[Tuple[int, int]]:
        return [tuple(w.shape) for w in self.weights]

    def flat(self) -> np.ndarray:
        return np.concatenate([t.ravel() for pair in zip(self.weights, self.biases) for t in pair])

    def with_flat(self, vec: np.ndarray) -> "ModelParams":
        """Copy with weights and biases replaced from a flat vector (moments kept)."""
        vec = np.asarray(vec, dtype=np.float64)
        weights, biases, pos = [], [], 0
        for w, b in zip(self.weights, self.biases):
            weights.append(vec[pos:pos + w.size].reshape(w.shape))
            pos += w.size
            biases.append(vec[pos:pos + b.size].reshape(b.shape))
            pos += b.size
        return ModelParams(self.spec, tuple(weights), tuple(biases), self.m_weights, self.m_biases,
                           self.v_weights, self.v_biases, self.step)

    def to_dict(self) -> Dict[str, Any]:
        layers = []
        for i, w in enumerate(self.weights):
            layers.append({
                "shape": list(w.shape),
                "weight": w.ravel().tolist(),
                "bias": self.biases[i].tolist(),
                "m_weight": self.m_weights[i].ravel().tolist(),
                "m_bias": self.m_biases[i].tolist(),
                "v_weight": self.v_weights[i].ravel().tolist(),
                "v_bias": self.v_biases[i].tolist(),
            })
        return {"format_version": FORMAT_VERSION, "spec": self.spec.to_dict(), "step": int(self.step), "layers": layers}

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "ModelParams":
        if int(d.get("format_version", -1)) != FORMAT_VERSION:
            raise DataError("bad_params_document", f"format_version={d.get('format_version')}")
        cols: Dict[str, List[np.ndarray]] = {k: [] for k in ("weight", "bias", "m_weight", "m_bias", "v_weight", "v_bias")}
        for layer in d["layers"]:
            shape = tuple(layer["shape"])
            for key in cols:
                arr = np.asarray(layer[key], dtype=np.float64)
                cols[key].append(arr.reshape(shape) if key.endswith("weight") else arr)
        return cls(
            spec=ModelSpec.from_dict(d["spec"]),
            weights=tuple(cols["weight"]),
            biases=tuple(cols["bias"]),
            m_weights=tuple(cols["m_weight"]),
            m_biases=tuple(cols["m_bias"]),
            v_weights=tuple(cols["v_weight"]),
            v_biases=tuple(cols["v_bias"]),
            step=int(d["step"]),
        )


@dataclass
class ForwardPass:
    """Cached intermediate values of one forward pass, reused by backprop."""
    probs: np.ndarray
    logits: np.ndarray
    inputs: List[np.ndarray] = field(default_factory=list)
    pre_activations: List[np.ndarray] = field(default_factory=list)
    masks: List[Optional[np.ndarray]] = field(default_factory=list)


def init(spec: ModelSpec, n_features: int) -> ModelParams:
    """Glorot-uniform weights, zero biases and moments; deterministic in init_seed."""
    if n_features < 1:
        raise ConfigError("bad_model_spec", f"n_features={n_features}")
    rng = np.random.default_rng(int(spec.init_seed))
    sizes = [int(n_features)] + list(spec.hidden_sizes) + [1]
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    zeros_w = tuple(np.zeros_like(w) for w in weights)
    zeros_b = tuple(np.zeros_like(b) for b in biases)
    return ModelParams(spec, tuple(weights), tuple(biases), zeros_w, zeros_b, zeros_w, zeros_b, 0)


def forward_pass(params: ModelParams, X: np.ndarray, mode: str = "eval",
                 dropout_rng: Optional[np.random.Generator] = None) -> ForwardPass:
    if mode not in MODES:
        raise ConfigError("bad_mode", mode)
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != params.n_features:
        raise DataError("bad_batch_shape", f"expected (*, {params.n_features}), got {X.shape}")
    p = float(params.spec.dropout_p)
    use_dropout = mode == "train" and p > 0.0
    if use_dropout and dropout_rng is None:
        raise ConfigError("missing_dropout_rng")
    inputs, pre, masks = [], [], []
    a = X
    last = params.n_layers - 1
    z = None
    for layer, (W, b) in enumerate(zip(params.weights, params.biases)):
        inputs.append(a)
        z = a @ W + b
        if not np.all(np.isfinite(z)):
            raise NumericError("non_finite_activation", f"layer={layer}")
        if layer == last:
            break
        pre.append(z)
        h = np.maximum(z, 0.0)
        mask = None
        if use_dropout:
            mask = (dropout_rng.random(h.shape) >= p) / (1.0 - p)
            h = h * mask
        masks.append(mask)
        a = h
    logits = z[:, 0]
    return ForwardPass(probs=expit(logits), logits=logits, inputs=inputs, pre_activations=pre, masks=masks)


def forward(params: ModelParams, X: np.ndarray, mode: str = "eval",
            dropout_rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Predicted probabilities P(Y=1|x)."""
    return forward_pass(params, X, mode, dropout_rng).probs


def predict(params: ModelParams, X: np.ndarray) -> np.ndarray:
    return forward_pass(params, X, "eval").probs


def weighted_loss_grad(params: ModelParams, X: np.ndarray, y: np.ndarray, weights: np.ndarray,
                       dropout_rng: Optional[np.random.Generator] = None, mode: str = "train",
                       cached: Optional[ForwardPass] = None) -> Tuple[float, Gradient]:
    """Weighted cross-entropy plus ½·weight_decay·Σ‖W‖² and its exact gradient.

    `cached` reuses a forward pass computed on the same batch (and dropout mask).
    """
    y = np.asarray(y, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != y.shape:
        raise ConfigError("weights_length_mismatch", f"weights={w.shape} batch={y.shape}")
    if np.any(w < 0) or not np.any(w > 0):
        raise DataError("bad_example_weights", "weights must be nonnegative and not all zero")
    fp = cached if cached is not None else forward_pass(params, X, mode, dropout_rng)
    probs = fp.probs
    decay = float(params.spec.weight_decay)
    loss = float(w @ binary_cross_entropy(probs, y))
    if decay:
        loss += decay * 0.5 * sum(float(np.sum(W * W)) for W in params.weights)

    # clipped probabilities have zero derivative
    inside = (probs > PROB_CLIP) & (probs < 1.0 - PROB_CLIP)
    dz = (w * (probs - y) * inside)[:, None]
    grad_w: List[np.ndarray] = [None] * params.n_layers
    grad_b: List[np.ndarray] = [None] * params.n_layers
    for layer in range(params.n_layers - 1, -1, -1):
        W = params.weights[layer]
        grad_w[layer] = fp.inputs[layer].T @ dz + decay * W
        grad_b[layer] = dz.sum(axis=0)
        if layer == 0:
            break
        da = dz @ W.T
        mask = fp.masks[layer - 1]
        if mask is not None:
            da = da * mask
        dz = da * (fp.pre_activations[layer - 1] > 0.0)
    return loss, Gradient(tuple(grad_w), tuple(grad_b))


def optimizer_step(params: ModelParams, grad: Gradient, learning_rate: float) -> ModelParams:
    """One Adam step with bias-corrected moments; returns new params."""
    if len(grad.weights) != params.n_layers or any(g.shape != w.shape for g, w in zip(grad.weights, params.weights)):
        raise ConfigError("gradient_shape_mismatch")
    if not grad.is_finite():
        raise NumericError("non_finite_gradient", f"step={params.step + 1}")
    t = params.step + 1
    c1 = 1.0 - ADAM_BETA1 ** t
    c2 = 1.0 - ADAM_BETA2 ** t

    def update(theta, m, v, g):
        m = ADAM_BETA1 * m + (1.0 - ADAM_BETA1) * g
        v = ADAM_BETA2 * v + (1.0 - ADAM_BETA2) * g * g
        theta = theta - learning_rate * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS)
        return theta, m, v

    out = {"w": [], "b": [], "mw": [], "mb": [], "vw": [], "vb": []}
    for i in range(params.n_layers):
        w, mw, vw = update(params.weights[i], params.m_weights[i], params.v_weights[i], grad.weights[i])
        b, mb, vb = update(params.biases[i], params.m_biases[i], params.v_biases[i], grad.biases[i])
        for key, val in (("w", w), ("b", b), ("mw", mw), ("mb", mb), ("vw", vw), ("vb", vb)):
            out[key].append(val)
    return ModelParams(params.spec, tuple(out["w"]), tuple(out["b"]), tuple(out["mw"]), tuple(out["mb"]),
                       tuple(out["vw"]), tuple(out["vb"]), t)
