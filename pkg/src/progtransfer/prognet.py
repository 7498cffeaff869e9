"""Progressive networks: frozen source columns plus one trainable column.

A column is a complete dense network. When a new column is added, every
existing column is frozen and its layer-k hidden representation is fed,
by concatenation, into layer k+1 of the new column (and into its output
layer). The lateral weights live inside the new column's weight
matrices: layer k of the trainable column sees the input
``[own h_{k-1} | frozen h_{k-1} (per frozen column, in order)]``.
There are no adaptation layers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError, WiringError
from .nncore import (
    ForwardTrace,
    Gradients,
    LayerParams,
    NetworkParams,
    forward_batch,
    sigmoid,
    softmax,
)


@dataclass
class Column:
    """One complete network inside a progressive model."""

    params: NetworkParams
    frozen: bool
    task_name: str = ""

    @property
    def output_dim(self) -> int:
        return self.params.output_dim


@dataclass
class ProgNetModel:
    """Ordered columns; exactly the last one is trainable.

    ``lateral_to_output`` controls whether the frozen columns' last
    hidden representations also feed the trainable column's output
    layer (on by default). ``dropout_on_laterals`` optionally applies
    train-mode dropout to the incoming frozen activations as well as
    the trainable column's own activations (off by default).
    """

    columns: list[Column]
    lateral_to_output: bool = True
    dropout_on_laterals: bool = False

    @property
    def feature_dim(self) -> int:
        return self.columns[0].params.layers[0].in_dim

    @property
    def hidden_width(self) -> int:
        return self.columns[0].params.layers[0].out_dim

    @property
    def n_hidden_layers(self) -> int:
        return len(self.columns[0].params.layers) - 1

    @property
    def target_column(self) -> Column:
        return self.columns[-1]

    @property
    def n_frozen(self) -> int:
        return len(self.columns) - 1


@dataclass
class ProgTrace:
    """Forward caches for a progressive model.

    ``hidden[j][k]`` holds column j's layer-(k+1) hidden activation
    (post-dropout for the trainable column). ``target_inputs[k]`` is the
    concatenated input actually consumed by the trainable column's
    layer k, which is what the lateral-aware backward pass needs.
    """

    inputs: np.ndarray
    hidden: list[list[np.ndarray]]
    column_probs: list[np.ndarray]
    target_inputs: list[np.ndarray]
    target_sigmoid: list[np.ndarray]
    target_masks: list[np.ndarray]
    output_probs: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.output_probs is None:
            self.output_probs = self.column_probs[-1]


def _validate_column_net(params: NetworkParams) -> tuple[int, int, int]:
    """Return (feature_dim, hidden_width, n_hidden) or raise WiringError."""
    if len(params.layers) < 2:
        raise WiringError("a column needs at least one hidden layer plus the output layer")
    hidden = params.layers[:-1]
    width = hidden[0].out_dim
    if any(lp.out_dim != width for lp in hidden):
        widths = [lp.out_dim for lp in hidden]
        raise WiringError(f"hidden widths must be uniform across layers, got {widths}")
    return params.layers[0].in_dim, width, len(hidden)


def from_network(params: NetworkParams, task_name: str = "") -> ProgNetModel:
    """Wrap a standalone network as a single-column progressive model."""
    _validate_column_net(params)
    return ProgNetModel([Column(params, frozen=False, task_name=task_name)])


def add_column(
    model: ProgNetModel | NetworkParams,
    output_dim: int,
    seed: int,
    task_name: str = "",
    lateral_to_output: bool = True,
    dropout_on_laterals: bool = False,
) -> ProgNetModel:
    """Freeze all existing columns and attach a freshly initialized one.

    The new column's layers 2..L and its output layer take enlarged
    inputs: own width plus one hidden-width block per frozen column.
    Weights are Glorot-uniform over the enlarged fan-in, biases zero.
    """
    if isinstance(model, NetworkParams):
        model = from_network(model)
    if output_dim < 2:
        raise ConfigError(f"output_dim must be >= 2, got {output_dim}")
    dims = [_validate_column_net(col.params) for col in model.columns]
    if len(set(dims)) != 1:
        raise WiringError(f"columns disagree on architecture: {dims}")
    feature_dim, width, n_hidden = dims[0]

    # copy on freeze so later in-place training of the donor network
    # can never reach into this model
    frozen = [Column(col.params.copy(), True, col.task_name) for col in model.columns]
    n_lat = len(frozen)
    rng = np.random.default_rng(seed)
    layers = []
    in_dim = feature_dim
    for _ in range(n_hidden):
        limit = np.sqrt(6.0 / (in_dim + width))
        layers.append(LayerParams(rng.uniform(-limit, limit, (width, in_dim)), np.zeros(width)))
        in_dim = width * (1 + n_lat)
    out_in = in_dim if lateral_to_output else width
    limit = np.sqrt(6.0 / (out_in + output_dim))
    layers.append(LayerParams(rng.uniform(-limit, limit, (output_dim, out_in)), np.zeros(output_dim)))
    new_col = Column(NetworkParams(layers), frozen=False, task_name=task_name)
    return ProgNetModel(frozen + [new_col], lateral_to_output, dropout_on_laterals)


def trainable_param_count(model: ProgNetModel) -> int:
    return sum(lp.weights.size + lp.bias.size for lp in model.target_column.params.layers)


def _layer_input(x, own_prev, hidden, j, k):
    """Input to column j's layer k (0-based): features for k=0, else concat."""
    if k == 0:
        return x
    if j == 0:
        return own_prev
    return np.concatenate([own_prev] + [hidden[i][k - 1] for i in range(j)], axis=1)


def prog_forward_batch(
    model: ProgNetModel,
    x: np.ndarray,
    mode: str = "eval",
    dropout_rate: float = 0.0,
    rng: np.random.Generator | None = None,
) -> ProgTrace:
    """Forward pass through every column over a (B, feature_dim) batch.

    Frozen columns always run dropout-free; in train mode, dropout is
    applied to the trainable column's own hidden activations (and, only
    if ``dropout_on_laterals`` is set, to the incoming frozen blocks).
    """
    if mode not in ("train", "eval"):
        raise ConfigError(f"mode must be 'train' or 'eval', got {mode!r}")
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.feature_dim:
        raise ShapeError(
            f"expected input shape (B, {model.feature_dim}), got {x.shape}"
        )
    use_dropout = mode == "train" and dropout_rate > 0.0
    if use_dropout and rng is None:
        raise ConfigError("train-mode forward with dropout_rate > 0 requires an rng")
    keep_scale = 1.0 / (1.0 - dropout_rate) if use_dropout else 1.0

    last = len(model.columns) - 1
    hidden: list[list[np.ndarray]] = []
    probs: list[np.ndarray] = []
    target_inputs: list[np.ndarray] = []
    target_sigmoid: list[np.ndarray] = []
    target_masks: list[np.ndarray] = []
    for j, col in enumerate(model.columns):
        is_target = j == last and not col.frozen
        own_prev = x
        hs: list[np.ndarray] = []
        for k, lp in enumerate(col.params.layers[:-1]):
            inp = _layer_input(x, own_prev, hidden, j, k)
            if is_target and use_dropout and model.dropout_on_laterals and k > 0:
                lat = inp[:, own_prev.shape[1]:]
                lat_mask = (rng.random(lat.shape) >= dropout_rate) * keep_scale
                inp = np.concatenate([own_prev, lat * lat_mask], axis=1)
            if inp.shape[1] != lp.in_dim:
                raise ShapeError(
                    f"column {j} layer {k}: input width {inp.shape[1]} != {lp.in_dim}"
                )
            s = sigmoid(inp @ lp.weights.T + lp.bias)
            if is_target and use_dropout:
                mask = (rng.random(s.shape) >= dropout_rate) * keep_scale
                h = s * mask
            else:
                mask = np.ones_like(s)
                h = s
            if is_target:
                target_inputs.append(inp)
                target_sigmoid.append(s)
                target_masks.append(mask)
            hs.append(h)
            own_prev = h
        # each column's output head records its own wiring in its fan-in:
        # own width only, or own width plus one block per earlier column
        out_layer = col.params.layers[-1]
        if out_layer.in_dim == own_prev.shape[1]:
            out_in = own_prev
        else:
            out_in = _layer_input(x, own_prev, hidden, j, len(col.params.layers) - 1)
        if out_in.shape[1] != out_layer.in_dim:
            raise ShapeError(
                f"column {j} output layer: input width {out_in.shape[1]} != {out_layer.in_dim}"
            )
        p = softmax(out_in @ out_layer.weights.T + out_layer.bias)
        if is_target:
            target_inputs.append(out_in)
        hidden.append(hs)
        probs.append(p)
    return ProgTrace(x, hidden, probs, target_inputs, target_sigmoid, target_masks)


def prog_forward(
    model: ProgNetModel,
    x: np.ndarray,
    mode: str = "eval",
    dropout_rate: float = 0.0,
    rng: np.random.Generator | None = None,
) -> ProgTrace:
    """Single-sample forward; trace fields are 1-D."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError(f"prog_forward expects a 1-D vector, got shape {x.shape}")
    t = prog_forward_batch(model, x[None, :], mode, dropout_rate, rng)
    return ProgTrace(
        inputs=x,
        hidden=[[h[0] for h in hs] for hs in t.hidden],
        column_probs=[p[0] for p in t.column_probs],
        target_inputs=[a[0] for a in t.target_inputs],
        target_sigmoid=[s[0] for s in t.target_sigmoid],
        target_masks=[m[0] for m in t.target_masks],
    )


def prog_backward_batch(
    model: ProgNetModel,
    trace: ProgTrace,
    labels: np.ndarray,
    sample_weights: np.ndarray | None = None,
) -> Gradients:
    """Gradients of the mean batch cross-entropy for the trainable column only.

    Lateral sub-blocks of the trainable column's weight matrices get
    their exact gradients; frozen columns contribute activations but no
    gradient structures.
    """
    col = model.target_column
    if col.frozen:
        raise ConfigError("the last column is frozen; nothing to train")
    layers = col.params.layers
    if len(trace.target_inputs) != len(layers):
        raise ShapeError("trace does not match the trainable column's depth")
    labels = np.asarray(labels)
    probs = trace.column_probs[-1]
    batch = probs.shape[0]
    if sample_weights is None:
        coeff = np.full(batch, 1.0 / batch)
    else:
        coeff = np.asarray(sample_weights, dtype=np.float64)
        coeff = coeff / coeff.sum()

    width = model.hidden_width
    dz = probs.copy()
    dz[np.arange(batch), labels] -= 1.0
    dz *= coeff[:, None]

    n = len(layers)
    g_w: list[np.ndarray] = [np.empty(0)] * n
    g_b: list[np.ndarray] = [np.empty(0)] * n
    for k in range(n - 1, -1, -1):
        inp = trace.target_inputs[k]
        if layers[k].weights.shape != (dz.shape[1], inp.shape[1]):
            raise ShapeError(f"trace/params shape mismatch at target layer {k}")
        g_w[k] = dz.T @ inp
        g_b[k] = dz.sum(axis=0)
        if k > 0:
            # only the own-path block propagates back into this column
            dh = dz @ layers[k].weights[:, :width]
            s = trace.target_sigmoid[k - 1]
            dz = dh * trace.target_masks[k - 1]
            dz *= s
            dz *= 1.0 - s
    return Gradients(g_w, g_b)


def prog_backward(model: ProgNetModel, trace: ProgTrace, label: int) -> Gradients:
    """Single-sample variant of prog_backward_batch."""
    batch_trace = ProgTrace(
        inputs=np.atleast_2d(trace.inputs),
        hidden=[[np.atleast_2d(h) for h in hs] for hs in trace.hidden],
        column_probs=[np.atleast_2d(p) for p in trace.column_probs],
        target_inputs=[np.atleast_2d(a) for a in trace.target_inputs],
        target_sigmoid=[np.atleast_2d(s) for s in trace.target_sigmoid],
        target_masks=[np.atleast_2d(m) for m in trace.target_masks],
    )
    return prog_backward_batch(model, batch_trace, np.array([label]))


def source_task_output(model: ProgNetModel, column_index: int, x: np.ndarray) -> np.ndarray:
    """Eval-mode class distribution of the indexed column for input x.

    Frozen columns are unaffected by target training, so this exposes
    the preserved source-task behaviour.
    """
    if not 0 <= column_index < len(model.columns):
        raise IndexError(
            f"column index {column_index} out of range for {len(model.columns)} columns"
        )
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    trace = prog_forward_batch(model, x[None, :] if single else x, mode="eval")
    p = trace.column_probs[column_index]
    return p[0] if single else p


def prog_grad_check(
    model: ProgNetModel, x: np.ndarray, label: int, eps: float = 1e-5
) -> float:
    """Finite-difference check of prog_backward over the trainable column."""
    if eps <= 0.0:
        raise ConfigError(f"finite-difference epsilon must be positive, got {eps}")
    from .nncore import cross_entropy  # local import to keep module deps one-way

    x = np.asarray(x, dtype=np.float64)
    trace = prog_forward(model, x, mode="eval")
    analytic = prog_backward(model, trace, label)

    def loss() -> float:
        return cross_entropy(prog_forward(model, x, mode="eval").output_probs, label)

    worst = 0.0
    for k, lp in enumerate(model.target_column.params.layers):
        for arr, grad in ((lp.weights, analytic.weights[k]), (lp.bias, analytic.biases[k])):
            flat = arr.reshape(-1)
            gflat = grad.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + eps
                up = loss()
                flat[i] = orig - eps
                down = loss()
                flat[i] = orig
                numeric = (up - down) / (2.0 * eps)
                denom = max(abs(gflat[i]), abs(numeric), 1e-8)
                worst = max(worst, abs(gflat[i] - numeric) / denom)
    return worst


def own_path_network(model: ProgNetModel) -> NetworkParams:
    """The trainable column's own-path sub-network as a standalone net.

    Slices away the lateral sub-blocks; with all lateral weights zero,
    this network is function-identical to the progressive forward pass.
    """
    width = model.hidden_width
    col = model.target_column
    layers = [col.params.layers[0].copy()]
    for lp in col.params.layers[1:-1]:
        layers.append(LayerParams(lp.weights[:, :width].copy(), lp.bias.copy()))
    out = col.params.layers[-1]
    layers.append(LayerParams(out.weights[:, :width].copy(), out.bias.copy()))
    return NetworkParams(layers)
