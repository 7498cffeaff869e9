"""The three training strategies: baseline DNN, pre-train/fine-tune,
and progressive transfer, sharing one epoch loop.

Early stopping is checkpoint-based: training runs the full epoch budget
(or until patience runs out) and the returned model carries the weights
of the epoch with the best validation UAR, earliest epoch on ties.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Dataset, NormStats, features_matrix, task_labels
from .errors import (
    ConfigError,
    DegenerateSplitError,
    EmptyInputError,
    IncompatibleDomainError,
    LabelError,
    ParseError,
    ShapeError,
)
from .evaluation import confusion_matrix, uar
from .nncore import (
    Gradients,
    Hyperparams,
    LayerParams,
    NetworkParams,
    backward_batch,
    cross_entropy_batch,
    forward_batch,
    init_network,
    init_opt_state,
    optimizer_step,
    predict_batch,
)
from .prognet import (
    ProgNetModel,
    add_column,
    prog_backward_batch,
    prog_forward_batch,
)
from .seeding import derive_int, derive_rng, derive_seed

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    hyper: Hyperparams = field(default_factory=Hyperparams)
    patience: int | None = None

    def validate(self) -> None:
        self.hyper.validate()
        if self.patience is not None and self.patience < 1:
            raise ConfigError(f"patience must be >= 1 when set, got {self.patience}")


@dataclass
class TrainLog:
    """Per-epoch training loss/UAR and validation UAR.

    selected_epoch is the 1-based epoch whose weights the trained model
    carries: the earliest epoch attaining the maximum validation UAR.
    """

    epochs: list[int]
    train_loss: list[float]
    train_uar: list[float]
    val_uar: list[float]
    selected_epoch: int


def write_train_log(log: TrainLog, path: str | Path) -> None:
    """Columnar text: epoch, train_loss, train_uar, val_uar."""
    lines = ["epoch,train_loss,train_uar,val_uar"]
    for i, epoch in enumerate(log.epochs):
        lines.append(
            f"{epoch},{log.train_loss[i]!r},{log.train_uar[i]!r},{log.val_uar[i]!r}"
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_train_log(path: str | Path) -> TrainLog:
    """Inverse of write_train_log. selected_epoch is not stored in the
    file; it is recomputed with the checkpoint rule (earliest max val UAR)."""
    text = Path(path).read_text(encoding="utf-8")
    lines = [ln for ln in text.splitlines() if ln]
    if not lines or lines[0] != "epoch,train_loss,train_uar,val_uar":
        raise ParseError(f"{path}: not a training log")
    epochs, loss, tuar, vuar = [], [], [], []
    for i, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != 4:
            raise ParseError(f"{path}:{i}: expected 4 columns, got {len(cells)}")
        try:
            epochs.append(int(cells[0]))
            loss.append(float(cells[1]))
            tuar.append(float(cells[2]))
            vuar.append(float(cells[3]))
        except ValueError as exc:
            raise ParseError(f"{path}:{i}: {exc}") from exc
    if not epochs:
        raise ParseError(f"{path}: training log has no rows")
    best = max(range(len(vuar)), key=lambda j: (vuar[j], -j))
    return TrainLog(epochs, loss, tuar, vuar, selected_epoch=epochs[best])


@dataclass
class TrainedModel:
    strategy: str
    model: NetworkParams | ProgNetModel
    classes: list[str]
    normalization: NormStats | None = None
    source_head: LayerParams | None = None
    source_classes: list[str] | None = None


def _task_arrays(ds: Dataset, task: str) -> tuple[np.ndarray, np.ndarray, list[str]]:
    """Canonically ordered (features, int labels, class names) for a slice.

    Sorting by utterance id first makes every downstream seeded shuffle,
    and therefore training itself, independent of input row order.
    """
    order = sorted(range(len(ds.utterances)), key=lambda i: ds.utterances[i].utt_id)
    ordered = Dataset([ds.utterances[i] for i in order], ds.feature_dim, ds.normalization)
    labels, classes = task_labels(ordered, task)
    return features_matrix(ordered), labels, classes


def _map_labels(ds: Dataset, task: str, classes: list[str]) -> np.ndarray:
    """Integer labels for a slice under an externally fixed vocabulary."""
    if task == "emotion":
        names = [u.emotion for u in ds.utterances]
    elif task == "gender":
        names = [u.gender for u in ds.utterances]
    elif task == "speaker":
        names = [u.speaker_id for u in ds.utterances]
    else:
        raise ConfigError(f"unknown task {task!r}")
    index = {c: i for i, c in enumerate(classes)}
    try:
        return np.array([index[n] for n in names], dtype=np.intp)
    except KeyError as exc:
        raise LabelError(f"class {exc.args[0]!r} is not in the model's vocabulary") from None


def _sample_weights(y: np.ndarray, n_classes: int, scheme: str) -> np.ndarray | None:
    if scheme == "none":
        return None
    counts = np.bincount(y, minlength=n_classes).astype(np.float64)
    weights = np.zeros(n_classes)
    weights[counts > 0] = 1.0 / counts[counts > 0]
    return weights[y]


def _epoch_loop(
    model: NetworkParams | ProgNetModel,
    x_train: np.ndarray,
    y_train: np.ndarray,
    x_val: np.ndarray,
    y_val: np.ndarray,
    n_classes: int,
    config: TrainConfig,
    seed: int,
) -> tuple[NetworkParams, TrainLog]:
    """Mini-batch training with best-validation-UAR checkpointing.

    Works for a plain network or for the trainable column of a
    progressive model; returns the checkpointed trainable parameters.
    """
    progressive = isinstance(model, ProgNetModel)
    params = model.target_column.params if progressive else model
    hyper = config.hyper
    state = init_opt_state(params, hyper.optimizer)
    weights_all = _sample_weights(y_train, n_classes, hyper.class_weighting)

    n = len(y_train)
    best_uar = -1.0
    best_epoch = 0
    best_params = params.copy()
    log = TrainLog([], [], [], [], selected_epoch=0)
    for epoch in range(1, hyper.max_epochs + 1):
        perm = derive_rng(seed, "shuffle", epoch).permutation(n)
        dropout_rng = derive_rng(seed, "dropout", epoch)
        loss_sum = 0.0
        epoch_cm = np.zeros((n_classes, n_classes), dtype=np.int64)
        for start in range(0, n, hyper.batch_size):
            idx = perm[start:start + hyper.batch_size]
            xb, yb = x_train[idx], y_train[idx]
            wb = None if weights_all is None else weights_all[idx]
            if progressive:
                trace = prog_forward_batch(model, xb, "train",
                                           hyper.dropout_rate, dropout_rng)
                grads = prog_backward_batch(model, trace, yb, wb)
            else:
                trace = forward_batch(params, xb, "train",
                                      hyper.dropout_rate, dropout_rng)
                grads = backward_batch(params, trace, yb, wb)
            loss_sum += cross_entropy_batch(trace.output_probs, yb, wb) * len(idx)
            epoch_cm += confusion_matrix(yb, trace.output_probs.argmax(axis=1), n_classes)
            optimizer_step(params, grads, state, hyper.learning_rate)

        if progressive:
            val_probs = prog_forward_batch(model, x_val).output_probs
        else:
            val_probs = forward_batch(params, x_val).output_probs
        val_uar = uar(confusion_matrix(y_val, val_probs.argmax(axis=1), n_classes),
                      log_exclusions=False)
        log.epochs.append(epoch)
        log.train_loss.append(loss_sum / n)
        log.train_uar.append(uar(epoch_cm, log_exclusions=False))
        log.val_uar.append(val_uar)
        if val_uar > best_uar:
            best_uar = val_uar
            best_epoch = epoch
            best_params = params.copy()
        elif config.patience is not None and epoch - best_epoch >= config.patience:
            break
    log.selected_epoch = best_epoch
    return best_params, log


def _check_slices(train: Dataset, val: Dataset) -> None:
    if not train.utterances or not val.utterances:
        raise EmptyInputError("train and validation slices must be nonempty")
    if train.feature_dim != val.feature_dim:
        raise IncompatibleDomainError(
            f"train feature dim {train.feature_dim} != val {val.feature_dim}"
        )
    overlap = {u.utt_id for u in train.utterances} & {u.utt_id for u in val.utterances}
    if overlap:
        raise DegenerateSplitError(
            f"train and validation slices share {len(overlap)} utterance(s)"
        )


def _prepare(train: Dataset, val: Dataset, task: str):
    _check_slices(train, val)
    x_train, y_train, classes = _task_arrays(train, task)
    missing = np.flatnonzero(np.bincount(y_train, minlength=len(classes)) == 0)
    if missing.size:
        names = [classes[i] for i in missing]
        raise DegenerateSplitError(f"classes missing from training data: {names}")
    x_val = features_matrix(val)
    y_val = _map_labels(val, task, classes)
    return x_train, y_train, x_val, y_val, classes


def train_dnn(
    train: Dataset,
    val: Dataset,
    task: str,
    config: TrainConfig,
    seed: int,
) -> tuple[TrainedModel, TrainLog]:
    """Train a dense network from scratch on one task."""
    config.validate()
    x_train, y_train, x_val, y_val, classes = _prepare(train, val, task)
    hyper = config.hyper
    dims = [train.feature_dim] + [hyper.hidden_width] * hyper.n_hidden_layers + [len(classes)]
    params = init_network(dims, derive_seed(seed, "init"))
    best, log = _epoch_loop(params, x_train, y_train, x_val, y_val,
                            len(classes), config, seed)
    return TrainedModel("baseline", best, classes, train.normalization), log


def reset_output_layer(
    params: NetworkParams, n_classes: int, rng: np.random.Generator
) -> tuple[NetworkParams, LayerParams]:
    """Copy of the network with a fresh Glorot output head; also returns
    the replaced head so source-task behaviour can be restored later."""
    new = params.copy()
    saved = new.layers[-1]
    in_dim = saved.in_dim
    limit = np.sqrt(6.0 / (in_dim + n_classes))
    new.layers[-1] = LayerParams(
        rng.uniform(-limit, limit, (n_classes, in_dim)), np.zeros(n_classes)
    )
    return new, saved


def finetune(
    source_model: TrainedModel,
    train: Dataset,
    val: Dataset,
    task: str,
    config: TrainConfig,
    seed: int,
) -> tuple[TrainedModel, TrainLog]:
    """Fine-tune a trained source network on a new task (all layers).

    The source output layer is replaced by a freshly initialized one of
    target width; the discarded head travels on the result for
    forgetting measurements.
    """
    config.validate()
    if not isinstance(source_model.model, NetworkParams):
        raise ConfigError("fine-tuning requires a plain-network source model")
    if source_model.model.input_dim != train.feature_dim:
        raise IncompatibleDomainError(
            f"source expects {source_model.model.input_dim} features, "
            f"target has {train.feature_dim}"
        )
    x_train, y_train, x_val, y_val, classes = _prepare(train, val, task)
    params, saved_head = reset_output_layer(
        source_model.model, len(classes), derive_rng(seed, "head"))
    best, log = _epoch_loop(params, x_train, y_train, x_val, y_val,
                            len(classes), config, seed)
    return TrainedModel("ptft", best, classes, train.normalization,
                        source_head=saved_head,
                        source_classes=list(source_model.classes)), log


def pretrain_finetune(
    source_train: Dataset,
    source_val: Dataset,
    source_task: str,
    target_train: Dataset,
    target_val: Dataset,
    target_task: str,
    config: TrainConfig,
    seed: int,
) -> tuple[TrainedModel, TrainLog]:
    """Pre-train on the source task, then fine-tune on the target task.

    The returned log covers the fine-tuning phase.
    """
    if source_train.feature_dim != target_train.feature_dim:
        raise IncompatibleDomainError(
            f"source feature dim {source_train.feature_dim} != "
            f"target {target_train.feature_dim}"
        )
    source_model, _ = train_dnn(source_train, source_val, source_task, config,
                                derive_int(seed, "pretrain"))
    return finetune(source_model, target_train, target_val, target_task, config,
                    derive_int(seed, "finetune"))


def train_prognet(
    source_model: TrainedModel,
    train: Dataset,
    val: Dataset,
    task: str,
    config: TrainConfig,
    seed: int,
    lateral_to_output: bool = True,
    dropout_on_laterals: bool = False,
) -> tuple[TrainedModel, TrainLog]:
    """Freeze the source model as a column and train a fresh lateral
    column on the target task; frozen parameters never change."""
    config.validate()
    if not isinstance(source_model.model, (NetworkParams, ProgNetModel)):
        raise ConfigError("progressive training needs a network or progressive source")
    x_train, y_train, x_val, y_val, classes = _prepare(train, val, task)
    model = add_column(
        source_model.model, len(classes), derive_int(seed, "column"),
        task_name=task, lateral_to_output=lateral_to_output,
        dropout_on_laterals=dropout_on_laterals,
    )
    if model.feature_dim != train.feature_dim:
        raise IncompatibleDomainError(
            f"source expects {model.feature_dim} features, target has {train.feature_dim}"
        )
    best, log = _epoch_loop(model, x_train, y_train, x_val, y_val,
                            len(classes), config, seed)
    model.columns[-1].params = best
    return TrainedModel("prognet", model, classes, train.normalization,
                        source_classes=list(source_model.classes)), log


def predict_labels(trained: TrainedModel, x: np.ndarray) -> np.ndarray:
    if isinstance(trained.model, ProgNetModel):
        return prog_forward_batch(trained.model, x).output_probs.argmax(axis=1)
    return predict_batch(trained.model, x)


def evaluate(trained: TrainedModel, ds: Dataset, task: str) -> float:
    """Test UAR of a trained model on a dataset slice."""
    if not ds.utterances:
        raise EmptyInputError("cannot evaluate on an empty slice")
    y = _map_labels(ds, task, trained.classes)
    preds = predict_labels(trained, features_matrix(ds))
    return uar(confusion_matrix(y, preds, len(trained.classes)))


def measure_forgetting(
    trunk_after: NetworkParams,
    saved_source_head: LayerParams,
    source_test: Dataset,
    source_task: str,
    source_uar_before: float,
) -> float:
    """Source-task UAR drop after target training (positive = forgot).

    Re-attaches the saved source output layer over the (possibly
    fine-tuned) hidden trunk and re-evaluates on source data.
    """
    hidden = trunk_after.layers[:-1]
    if saved_source_head.in_dim != hidden[-1].out_dim:
        raise ShapeError(
            f"source head expects {saved_source_head.in_dim} inputs, trunk "
            f"produces {hidden[-1].out_dim}"
        )
    composed = NetworkParams([lp.copy() for lp in hidden] + [saved_source_head.copy()],
                             trunk_after.hidden_activation,
                             trunk_after.output_activation)
    y, classes = task_labels(source_test, source_task)
    if len(classes) != saved_source_head.out_dim:
        raise ShapeError(
            f"source head has {saved_source_head.out_dim} outputs but the "
            f"task has {len(classes)} classes"
        )
    after = uar(confusion_matrix(y, predict_batch(composed, features_matrix(source_test)),
                                 len(classes)))
    return source_uar_before - after


def forgetting_delta(
    trained: TrainedModel,
    source_test: Dataset,
    source_task: str,
    source_uar_before: float,
) -> float:
    """measure_forgetting specialized per strategy.

    For a progressive model the frozen first column IS the source
    network, so the delta is exactly zero by construction.
    """
    if isinstance(trained.model, ProgNetModel):
        source_net = trained.model.columns[0].params
        return measure_forgetting(source_net, source_net.layers[-1],
                                  source_test, source_task, source_uar_before)
    if trained.source_head is None:
        raise ConfigError(f"strategy {trained.strategy!r} keeps no source head")
    return measure_forgetting(trained.model, trained.source_head,
                              source_test, source_task, source_uar_before)
