"""Minimal feedforward network engine.

Dense sigmoid hidden layers with a softmax output, inverted dropout,
cross-entropy loss, exact backpropagation, SGD/Adam optimizers, and a
finite-difference gradient checker. Everything is double precision and
deterministic given a seed. Single-sample entry points follow the
documented contracts; ``*_batch`` variants operate on (B, dim) arrays
and are what the training loops use.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConfigError,
    InvalidArchitectureError,
    LabelError,
    NumericError,
    ShapeError,
)

LOG_FLOOR = 1e-12
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class LayerParams:
    """One dense layer: weights (out_dim, in_dim) and bias (out_dim,)."""

    weights: np.ndarray
    bias: np.ndarray

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    def copy(self) -> "LayerParams":
        return LayerParams(self.weights.copy(), self.bias.copy())


@dataclass
class NetworkParams:
    """An ordered stack of dense layers; the last layer is the softmax output."""

    layers: list[LayerParams]
    hidden_activation: str = "sigmoid"
    output_activation: str = "softmax"

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def output_dim(self) -> int:
        return self.layers[-1].out_dim

    @property
    def layer_dims(self) -> list[int]:
        return [self.layers[0].in_dim] + [lp.out_dim for lp in self.layers]

    def copy(self) -> "NetworkParams":
        return NetworkParams(
            [lp.copy() for lp in self.layers],
            self.hidden_activation,
            self.output_activation,
        )


@dataclass
class Hyperparams:
    """Training hyperparameters; defaults follow the experiment setup."""

    n_hidden_layers: int = 4
    hidden_width: int = 256
    dropout_rate: float = 0.5
    learning_rate: float = 0.0005
    max_epochs: int = 600
    batch_size: int = 32
    optimizer: str = "adam"
    class_weighting: str = "none"  # "none" or "inverse_frequency"

    def validate(self) -> None:
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.learning_rate <= 0.0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.max_epochs < 1:
            raise ConfigError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.n_hidden_layers < 1 or self.hidden_width < 1:
            raise ConfigError("n_hidden_layers and hidden_width must be >= 1")
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.class_weighting not in ("none", "inverse_frequency"):
            raise ConfigError(f"unknown class_weighting {self.class_weighting!r}")


@dataclass
class ForwardTrace:
    """Caches from one forward pass, everything backprop needs.

    ``activations[k]`` is the output of layer k as consumed by layer k+1
    (post-dropout for hidden layers); the final entry equals
    ``output_probs``. ``hidden_sigmoid`` keeps the pre-dropout sigmoid
    outputs so the backward pass does not have to recompute them.
    """

    inputs: np.ndarray
    pre_activations: list[np.ndarray]
    activations: list[np.ndarray]
    dropout_masks: list[np.ndarray]
    output_probs: np.ndarray
    hidden_sigmoid: list[np.ndarray] = field(default_factory=list)


@dataclass
class Gradients:
    """Per-layer weight/bias gradients, shape-matched to NetworkParams."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]


@dataclass
class OptState:
    """Optimizer state; moment accumulators only exist for adam."""

    optimizer: str
    step: int = 0
    m_weights: list[np.ndarray] | None = None
    m_biases: list[np.ndarray] | None = None
    v_weights: list[np.ndarray] | None = None
    v_biases: list[np.ndarray] | None = None
    _scratch: list[np.ndarray] | None = None


def sigmoid(z: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    ez = np.exp(-np.abs(z))
    return np.where(z >= 0.0, 1.0 / (1.0 + ez), ez / (1.0 + ez))


def softmax(z: np.ndarray) -> np.ndarray:
    """Shift-invariant softmax along the last axis."""
    shifted = z - z.max(axis=-1, keepdims=True)
    np.exp(shifted, out=shifted)
    shifted /= shifted.sum(axis=-1, keepdims=True)
    return shifted


def init_network(layer_dims: list[int], seed: int) -> NetworkParams:
    """Build a network with Glorot-uniform weights and zero biases.

    ``layer_dims`` lists input, hidden, and output widths in order, e.g.
    [88, 256, 256, 256, 256, 4]. Identical seeds give bit-identical
    parameters.
    """
    if len(layer_dims) < 2:
        raise InvalidArchitectureError(
            f"need at least input and output dims, got {list(layer_dims)}"
        )
    if any(int(d) < 1 for d in layer_dims):
        raise InvalidArchitectureError(f"all layer dims must be >= 1, got {list(layer_dims)}")
    rng = np.random.default_rng(seed)
    layers = []
    for in_dim, out_dim in zip(layer_dims[:-1], layer_dims[1:]):
        limit = np.sqrt(6.0 / (in_dim + out_dim))
        weights = rng.uniform(-limit, limit, size=(out_dim, in_dim))
        layers.append(LayerParams(weights, np.zeros(out_dim)))
    return NetworkParams(layers)


def count_params(params: NetworkParams) -> int:
    return sum(lp.weights.size + lp.bias.size for lp in params.layers)


def forward_batch(
    params: NetworkParams,
    x: np.ndarray,
    mode: str = "eval",
    dropout_rate: float = 0.0,
    rng: np.random.Generator | None = None,
) -> ForwardTrace:
    """Forward pass over a (B, input_dim) batch.

    In train mode, inverted dropout (mask, then scale by 1/(1-p)) is
    applied to hidden activations only. Eval mode is deterministic and
    ignores the dropout rate.
    """
    if mode not in ("train", "eval"):
        raise ConfigError(f"mode must be 'train' or 'eval', got {mode!r}")
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"forward_batch expects a 2-D batch, got shape {x.shape}")
    if x.shape[1] != params.input_dim:
        raise ShapeError(
            f"input has {x.shape[1]} features but the network expects {params.input_dim}"
        )
    use_dropout = mode == "train" and dropout_rate > 0.0
    if use_dropout and rng is None:
        raise ConfigError("train-mode forward with dropout_rate > 0 requires an rng")

    pre_acts: list[np.ndarray] = []
    acts: list[np.ndarray] = []
    masks: list[np.ndarray] = []
    sigmoids: list[np.ndarray] = []
    a = x
    keep_scale = 1.0 / (1.0 - dropout_rate) if use_dropout else 1.0
    for lp in params.layers[:-1]:
        z = a @ lp.weights.T + lp.bias
        s = sigmoid(z)
        if use_dropout:
            mask = (rng.random(s.shape) >= dropout_rate) * keep_scale
            a = s * mask
        else:
            mask = np.ones_like(s)
            a = s
        pre_acts.append(z)
        sigmoids.append(s)
        masks.append(mask)
        acts.append(a)
    out_layer = params.layers[-1]
    z_out = a @ out_layer.weights.T + out_layer.bias
    probs = softmax(z_out)
    pre_acts.append(z_out)
    acts.append(probs)
    return ForwardTrace(x, pre_acts, acts, masks, probs, sigmoids)


def forward(
    params: NetworkParams,
    x: np.ndarray,
    mode: str = "eval",
    dropout_rate: float = 0.0,
    rng: np.random.Generator | None = None,
) -> ForwardTrace:
    """Forward pass for a single feature vector; trace fields are 1-D."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError(f"forward expects a 1-D vector, got shape {x.shape}")
    t = forward_batch(params, x[None, :], mode, dropout_rate, rng)
    return ForwardTrace(
        inputs=x,
        pre_activations=[z[0] for z in t.pre_activations],
        activations=[a[0] for a in t.activations],
        dropout_masks=[m[0] for m in t.dropout_masks],
        output_probs=t.output_probs[0],
        hidden_sigmoid=[s[0] for s in t.hidden_sigmoid],
    )


def cross_entropy(probs: np.ndarray, label: int) -> float:
    """Negative log-likelihood of ``label``, probability floored at 1e-12."""
    probs = np.asarray(probs)
    if not 0 <= label < probs.shape[-1]:
        raise LabelError(f"label {label} out of range for {probs.shape[-1]} classes")
    return float(-np.log(max(float(probs[label]), LOG_FLOOR)))


def cross_entropy_batch(
    probs: np.ndarray, labels: np.ndarray, sample_weights: np.ndarray | None = None
) -> float:
    """Mean (optionally weighted) cross-entropy over a batch."""
    labels = np.asarray(labels)
    if labels.max(initial=-1) >= probs.shape[1] or labels.min(initial=0) < 0:
        raise LabelError("a label is out of range for the class count")
    picked = np.maximum(probs[np.arange(len(labels)), labels], LOG_FLOOR)
    losses = -np.log(picked)
    if sample_weights is None:
        return float(losses.mean())
    return float((losses * sample_weights).sum() / sample_weights.sum())


def backward_batch(
    params: NetworkParams,
    trace: ForwardTrace,
    labels: np.ndarray,
    sample_weights: np.ndarray | None = None,
) -> Gradients:
    """Exact gradient of the mean batch cross-entropy w.r.t. all parameters.

    Dropout masks recorded in the trace are held fixed, so this is the
    gradient of the loss actually computed in that forward pass.
    """
    labels = np.asarray(labels)
    n_layers = len(params.layers)
    if len(trace.pre_activations) != n_layers:
        raise ShapeError("trace does not match the network depth")
    batch = trace.output_probs.shape[0]
    if sample_weights is None:
        coeff = np.full(batch, 1.0 / batch)
    else:
        coeff = np.asarray(sample_weights, dtype=np.float64)
        coeff = coeff / coeff.sum()

    # softmax + cross-entropy: dL/dz_out = probs - onehot, scaled per sample
    dz = trace.output_probs.copy()
    dz[np.arange(batch), labels] -= 1.0
    dz *= coeff[:, None]

    g_w: list[np.ndarray] = [np.empty(0)] * n_layers
    g_b: list[np.ndarray] = [np.empty(0)] * n_layers
    layer_inputs = [trace.inputs] + trace.activations[:-1]
    for k in range(n_layers - 1, -1, -1):
        inp = layer_inputs[k]
        if params.layers[k].weights.shape != (dz.shape[1], inp.shape[1]):
            raise ShapeError(f"trace/params shape mismatch at layer {k}")
        g_w[k] = dz.T @ inp
        g_b[k] = dz.sum(axis=0)
        if k > 0:
            dh = dz @ params.layers[k].weights
            s = trace.hidden_sigmoid[k - 1]
            dz = dh * trace.dropout_masks[k - 1]
            dz *= s
            dz *= 1.0 - s
    return Gradients(g_w, g_b)


def backward(params: NetworkParams, trace: ForwardTrace, label: int) -> Gradients:
    """Single-sample backprop; ``trace`` must come from ``forward``."""
    if not 0 <= label < params.output_dim:
        raise LabelError(f"label {label} out of range for {params.output_dim} classes")
    batch_trace = ForwardTrace(
        inputs=np.atleast_2d(trace.inputs),
        pre_activations=[np.atleast_2d(z) for z in trace.pre_activations],
        activations=[np.atleast_2d(a) for a in trace.activations],
        dropout_masks=[np.atleast_2d(m) for m in trace.dropout_masks],
        output_probs=np.atleast_2d(trace.output_probs),
        hidden_sigmoid=[np.atleast_2d(s) for s in trace.hidden_sigmoid],
    )
    return backward_batch(params, batch_trace, np.array([label]))


def init_opt_state(params: NetworkParams, optimizer: str) -> OptState:
    if optimizer == "sgd":
        return OptState("sgd")
    if optimizer == "adam":
        return OptState(
            "adam",
            step=0,
            m_weights=[np.zeros_like(lp.weights) for lp in params.layers],
            m_biases=[np.zeros_like(lp.bias) for lp in params.layers],
            v_weights=[np.zeros_like(lp.weights) for lp in params.layers],
            v_biases=[np.zeros_like(lp.bias) for lp in params.layers],
            _scratch=[np.empty_like(lp.weights) for lp in params.layers],
        )
    raise ConfigError(f"unknown optimizer {optimizer!r}")


def _adam_update(
    p: np.ndarray,
    g: np.ndarray,
    m: np.ndarray,
    v: np.ndarray,
    scratch: np.ndarray,
    lr: float,
    c1: float,
    c2: float,
) -> None:
    # in-place, one scratch buffer: minimizes allocations in the hot loop
    np.multiply(g, g, out=scratch)
    v *= ADAM_BETA2
    scratch *= 1.0 - ADAM_BETA2
    v += scratch
    m *= ADAM_BETA1
    np.multiply(g, 1.0 - ADAM_BETA1, out=scratch)
    m += scratch
    np.divide(v, c2, out=scratch)
    np.sqrt(scratch, out=scratch)
    scratch += ADAM_EPS
    np.divide(m, scratch, out=scratch)
    scratch *= lr / c1
    p -= scratch


def optimizer_step(
    params: NetworkParams, grads: Gradients, state: OptState, lr: float
) -> tuple[NetworkParams, OptState]:
    """Apply one optimizer update in place; returns the mutated pair.

    SGD: p <- p - lr*g. Adam: bias-corrected moments with beta1=0.9,
    beta2=0.999, eps=1e-8. Non-finite gradients raise NumericError and
    leave the parameters untouched.
    """
    n = len(params.layers)
    if len(grads.weights) != n or len(grads.biases) != n:
        raise ShapeError("gradient layer count does not match the network")
    for lp, gw, gb in zip(params.layers, grads.weights, grads.biases):
        if lp.weights.shape != gw.shape or lp.bias.shape != gb.shape:
            raise ShapeError("gradient shapes do not match the parameters")
    for gw, gb in zip(grads.weights, grads.biases):
        if not (np.isfinite(gw).all() and np.isfinite(gb).all()):
            raise NumericError("non-finite gradient; parameters left unchanged")

    if state.optimizer == "sgd":
        for lp, gw, gb in zip(params.layers, grads.weights, grads.biases):
            lp.weights -= lr * gw
            lp.bias -= lr * gb
        state.step += 1
        return params, state

    if state.optimizer != "adam":
        raise ConfigError(f"unknown optimizer {state.optimizer!r}")
    t = state.step + 1
    c1 = 1.0 - ADAM_BETA1**t
    c2 = 1.0 - ADAM_BETA2**t
    for k, lp in enumerate(params.layers):
        scratch = state._scratch[k]
        _adam_update(lp.weights, grads.weights[k], state.m_weights[k],
                     state.v_weights[k], scratch, lr, c1, c2)
        bias_scratch = scratch.reshape(-1)[: lp.bias.size]
        _adam_update(lp.bias, grads.biases[k], state.m_biases[k],
                     state.v_biases[k], bias_scratch, lr, c1, c2)
    state.step = t
    return params, state


def grad_check(params: NetworkParams, x: np.ndarray, label: int, eps: float = 1e-5) -> float:
    """Max relative error between backprop and central finite differences.

    Both sides use eval-mode forward passes (dropout disabled). The
    relative error is |analytic - numeric| / max(|analytic|, |numeric|,
    1e-8), maximized over every weight and bias.
    """
    if eps <= 0.0:
        raise ConfigError(f"finite-difference epsilon must be positive, got {eps}")
    x = np.asarray(x, dtype=np.float64)
    trace = forward(params, x, mode="eval")
    analytic = backward(params, trace, label)

    worst = 0.0
    for k, lp in enumerate(params.layers):
        for arr, grad in ((lp.weights, analytic.weights[k]), (lp.bias, analytic.biases[k])):
            flat = arr.reshape(-1)
            gflat = grad.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + eps
                up = cross_entropy(forward(params, x, mode="eval").output_probs, label)
                flat[i] = orig - eps
                down = cross_entropy(forward(params, x, mode="eval").output_probs, label)
                flat[i] = orig
                numeric = (up - down) / (2.0 * eps)
                denom = max(abs(gflat[i]), abs(numeric), 1e-8)
                worst = max(worst, abs(gflat[i] - numeric) / denom)
    return worst


def predict_batch(params: NetworkParams, x: np.ndarray) -> np.ndarray:
    """Eval-mode class predictions (argmax) for a (B, input_dim) batch."""
    return np.argmax(forward_batch(params, x, mode="eval").output_probs, axis=1)
