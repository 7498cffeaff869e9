"""UAR, repeated cross-validation, the corrected paired t-test, curves.

The protocol: for each of `iterations` repetitions, build a fresh
speaker-stratified k-fold plan, and for every test fold train each
strategy on the remaining folds (one reserved for early stopping),
yielding an iterations x k matrix of test UARs per strategy. Strategies
inside one run share fold plans, train-fold subsets, and the
per-iteration source model, so their results are paired by
construction.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
from scipy import stats as scipy_stats

from .data import (
    Dataset,
    fold_indices,
    make_folds,
    split_roles,
    subset_train_folds,
    znormalize,
)
from .errors import (
    ConfigError,
    EmptyEvaluationError,
    EmptyInputError,
    LabelError,
    PairingError,
    ProgTransferError,
)
from .seeding import derive_int

if TYPE_CHECKING:
    from .transfer import TrainConfig, TrainLog

logger = logging.getLogger(__name__)

STRATEGIES = ("baseline", "ptft", "prognet")
NORMALIZATION_MODES = ("global", "train_only")


def confusion_matrix(y_true, y_pred, n_classes: int) -> np.ndarray:
    """Counts matrix with rows = true class, columns = predicted class."""
    t = np.asarray(y_true, dtype=np.intp)
    p = np.asarray(y_pred, dtype=np.intp)
    if t.shape != p.shape or t.ndim != 1:
        raise LabelError(f"label arrays must be 1-D and equal length, got {t.shape} vs {p.shape}")
    if t.size and (t.min() < 0 or t.max() >= n_classes or p.min() < 0 or p.max() >= n_classes):
        raise LabelError(f"labels outside 0..{n_classes - 1}")
    return np.bincount(t * n_classes + p, minlength=n_classes * n_classes).reshape(
        n_classes, n_classes
    )


def uar(cm: np.ndarray, log_exclusions: bool = True) -> float:
    """Mean per-class recall; classes with no true instances are excluded.

    Exclusions are logged (suppress with log_exclusions=False inside
    tight loops). An all-zero matrix has no evaluable class at all.
    """
    cm = np.asarray(cm)
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1]:
        raise ConfigError(f"confusion matrix must be square, got shape {cm.shape}")
    if (cm < 0).any():
        raise ConfigError("confusion matrix entries must be non-negative")
    row_sums = cm.sum(axis=1)
    present = row_sums > 0
    if not present.any():
        raise EmptyEvaluationError("all-zero confusion matrix: nothing to evaluate")
    if log_exclusions and not present.all():
        absent = np.flatnonzero(~present).tolist()
        logger.warning("excluding %d class(es) with no true instances from UAR: %s",
                       len(absent), absent)
    recalls = np.diag(cm)[present] / row_sums[present]
    return float(recalls.mean())


def _spread(values: np.ndarray) -> float:
    """Sample standard deviation; 0 for fewer than two values."""
    values = np.asarray(values, dtype=np.float64)
    return float(values.std(ddof=1)) if values.size > 1 else 0.0


@dataclass
class CVResult:
    """Per-(iteration, fold) test UARs for one strategy and task."""

    strategy: str
    task: str
    uars: np.ndarray
    base_seed: int

    @property
    def iterations(self) -> int:
        return self.uars.shape[0]

    @property
    def k(self) -> int:
        return self.uars.shape[1]

    @property
    def iteration_means(self) -> np.ndarray:
        return self.uars.mean(axis=1)

    @property
    def iteration_stds(self) -> np.ndarray:
        return np.array([_spread(row) for row in self.uars])

    @property
    def mean_uar(self) -> float:
        return float(self.iteration_means.mean())

    @property
    def mean_within_std(self) -> float:
        """Mean over iterations of the within-iteration std (the +/- stat)."""
        return float(self.iteration_stds.mean())

    @property
    def overall_std(self) -> float:
        return _spread(self.uars.ravel())


@dataclass
class TTestResult:
    t: float
    df: int
    p: float
    significant: bool
    train_test_ratio: float
    n: int
    degenerate_variance: bool = False


def corrected_paired_ttest(
    a: "CVResult | np.ndarray",
    b: "CVResult | np.ndarray",
    train_test_ratio: float = 0.125,
    df: int = 10,
) -> TTestResult:
    """Variance-corrected paired t-test over per-fold metric differences.

    t = mean(d) / sqrt((1/n + train_test_ratio) * var(d)) with sample
    variance; two-sided p against Student's t with the given df. With
    train_test_ratio 0 and df n-1 this is the classical paired t-test.
    Zero-variance differences short-circuit: t=0, p=1 when the means
    agree, t=+/-inf, p=0 otherwise, with the degenerate flag set.
    """
    if train_test_ratio < 0:
        raise ConfigError(f"train_test_ratio must be >= 0, got {train_test_ratio}")
    if df < 1:
        raise ConfigError(f"df must be >= 1, got {df}")
    if isinstance(a, CVResult) != isinstance(b, CVResult):
        raise PairingError("cannot pair a CVResult with a bare array")
    if isinstance(a, CVResult):
        if a.uars.shape != b.uars.shape:
            raise PairingError(
                f"results have different shapes: {a.uars.shape} vs {b.uars.shape}"
            )
        if a.base_seed != b.base_seed:
            raise PairingError(
                f"results come from different base seeds ({a.base_seed} vs "
                f"{b.base_seed}); fold plans are not paired"
            )
        if a.task != b.task:
            raise PairingError(f"results are for different tasks: {a.task} vs {b.task}")
        x, y = a.uars, b.uars
    else:
        x, y = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
        if x.shape != y.shape:
            raise PairingError(f"arrays have different shapes: {x.shape} vs {y.shape}")
    d = (x - y).ravel()
    n = d.size
    if n < 2:
        raise PairingError(f"need at least 2 paired differences, got {n}")
    mean = float(d.mean())
    var = float(d.var(ddof=1))
    if var == 0.0:
        if mean == 0.0:
            return TTestResult(0.0, df, 1.0, False, train_test_ratio, n, True)
        t = math.inf if mean > 0 else -math.inf
        return TTestResult(t, df, 0.0, True, train_test_ratio, n, True)
    t = mean / math.sqrt((1.0 / n + train_test_ratio) * var)
    p = float(2.0 * scipy_stats.t.sf(abs(t), df))
    return TTestResult(t, df, p, p < 0.05, train_test_ratio, n)


@dataclass
class LearningCurve:
    """Per-epoch mean/std of validation UAR (folds within iteration,
    then averaged across iterations)."""

    epochs: np.ndarray
    mean_val_uar: np.ndarray
    std_val_uar: np.ndarray


def build_learning_curve(
    logs: "list[TrainLog]",
    groups: list | None = None,
    pad: bool = True,
    max_epochs: int | None = None,
) -> LearningCurve:
    """Aggregate validation-UAR series from training logs.

    groups labels each log with its iteration; std is computed across
    logs within a group and averaged across groups. Shorter series are
    right-padded with their last value when pad is set (the default),
    otherwise dropped.
    """
    if not logs:
        raise EmptyInputError("no training logs to aggregate")
    if groups is not None and len(groups) != len(logs):
        raise ConfigError(f"{len(groups)} group labels for {len(logs)} logs")
    if groups is None:
        groups = [0] * len(logs)
    length = max_epochs if max_epochs is not None else max(len(g.val_uar) for g in logs)
    if length < 1:
        raise ConfigError(f"curve length must be >= 1, got {length}")

    series: dict[object, list[np.ndarray]] = {}
    for log, group in zip(logs, groups):
        vals = np.asarray(log.val_uar, dtype=np.float64)[:length]
        if len(vals) < length:
            if not pad:
                continue
            vals = np.concatenate([vals, np.full(length - len(vals), vals[-1])])
        series.setdefault(group, []).append(vals)
    if not series:
        raise EmptyInputError("no training log reaches the requested epoch count")

    group_means, group_stds = [], []
    for arrs in series.values():
        stack = np.stack(arrs)
        group_means.append(stack.mean(axis=0))
        group_stds.append(np.array([_spread(stack[:, e]) for e in range(length)]))
    return LearningCurve(
        epochs=np.arange(1, length + 1),
        mean_val_uar=np.stack(group_means).mean(axis=0),
        std_val_uar=np.stack(group_stds).mean(axis=0),
    )


@dataclass
class FoldLog:
    """One training log with its (iteration, fold, strategy) coordinates."""

    iteration: int
    fold: int
    strategy: str
    log: "TrainLog"


@dataclass
class _CvSpec:
    target: Dataset
    source: Dataset | None
    strategies: list[str]
    config: "TrainConfig"
    k: int
    base_seed: int
    task: str
    source_task: str
    train_fold_subset: int | None
    speaker_disjoint: bool
    normalization: str


def _subset(ds: Dataset, idx: np.ndarray) -> Dataset:
    return Dataset([ds.utterances[i] for i in idx], ds.feature_dim, ds.normalization)


def _gather(ds: Dataset, per_fold: list[np.ndarray], folds) -> Dataset:
    return _subset(ds, np.concatenate([per_fold[f] for f in sorted(folds)]))


def _train_only_norm(train: Dataset, others: list[Dataset]) -> tuple[Dataset, list[Dataset]]:
    from .data import apply_normalization

    normed_train, stats = znormalize(train)
    return normed_train, [apply_normalization(ds, stats) for ds in others]


def _run_iteration(args: tuple[_CvSpec, int]):
    """One full iteration: fold plan, per-iteration source model, all
    folds x strategies. Returns (iteration, {strategy: k UARs}, logs)."""
    from . import transfer

    spec, iteration = args
    plan = make_folds(
        spec.target, spec.k,
        derive_int(spec.base_seed, "iteration", iteration, "plan"),
        spec.speaker_disjoint,
    )
    per_fold = fold_indices(plan, spec.target)

    source_model = None
    if spec.source is not None:
        src_plan = make_folds(
            spec.source, spec.k,
            derive_int(spec.base_seed, "iteration", iteration, "source-plan"),
            spec.speaker_disjoint,
        )
        src_folds = fold_indices(src_plan, spec.source)
        # the source model always sees the full source data apart from
        # one fold reserved for its own early stopping
        src_val = _subset(spec.source, src_folds[0])
        src_train = _gather(spec.source, src_folds, range(1, spec.k))
        if spec.normalization == "train_only":
            src_train, (src_val,) = _train_only_norm(src_train, [src_val])
        source_model, _ = transfer.train_dnn(
            src_train, src_val, spec.source_task, spec.config,
            derive_int(spec.base_seed, "iteration", iteration, "source"),
        )

    rows = {s: np.zeros(spec.k) for s in spec.strategies}
    logs: list[FoldLog] = []
    for fold in range(spec.k):
        roles = split_roles(plan, fold)
        train_folds = roles.train_folds
        if spec.train_fold_subset is not None:
            train_folds = subset_train_folds(
                train_folds, spec.train_fold_subset,
                derive_int(spec.base_seed, "iteration", iteration, "fold", fold, "subset"),
            )
        train_ds = _gather(spec.target, per_fold, train_folds)
        val_ds = _subset(spec.target, per_fold[roles.early_stop_fold])
        test_ds = _subset(spec.target, per_fold[fold])
        if spec.normalization == "train_only":
            train_ds, (val_ds, test_ds) = _train_only_norm(train_ds, [val_ds, test_ds])
        for strategy in spec.strategies:
            seed = derive_int(spec.base_seed, "iteration", iteration,
                              "fold", fold, strategy)
            try:
                if strategy == "baseline":
                    trained, log = transfer.train_dnn(
                        train_ds, val_ds, spec.task, spec.config, seed)
                elif strategy == "ptft":
                    trained, log = transfer.finetune(
                        source_model, train_ds, val_ds, spec.task, spec.config, seed)
                else:
                    trained, log = transfer.train_prognet(
                        source_model, train_ds, val_ds, spec.task, spec.config, seed)
                rows[strategy][fold] = transfer.evaluate(trained, test_ds, spec.task)
            except ProgTransferError as exc:
                raise type(exc)(
                    f"iteration {iteration}, fold {fold}, strategy {strategy}: {exc}"
                ) from exc
            logs.append(FoldLog(iteration, fold, strategy, log))
    return iteration, rows, logs


def run_repeated_cv_multi(
    target: Dataset,
    strategies: list[str],
    config: "TrainConfig",
    *,
    iterations: int = 10,
    k: int = 10,
    base_seed: int = 0,
    task: str = "emotion",
    source: Dataset | None = None,
    source_task: str = "emotion",
    train_fold_subset: int | None = None,
    workers: int = 1,
    speaker_disjoint: bool = False,
    normalization: str = "global",
) -> tuple[dict[str, CVResult], list[FoldLog]]:
    """Repeated k-fold CV over several strategies with shared fold plans.

    Every random stream is derived from (base_seed, iteration, fold,
    strategy) paths, so the numbers for one strategy are identical
    whether it runs alone or alongside others, sequentially or across
    any number of workers.
    """
    if not strategies:
        raise ConfigError("strategy list is empty")
    if len(set(strategies)) != len(strategies):
        raise ConfigError(f"duplicate strategies in {strategies}")
    unknown = [s for s in strategies if s not in STRATEGIES]
    if unknown:
        raise ConfigError(f"unknown strategies {unknown}, expected among {STRATEGIES}")
    if iterations < 1:
        raise ConfigError(f"iterations must be >= 1, got {iterations}")
    if workers < 1:
        raise ConfigError(f"workers must be >= 1, got {workers}")
    if normalization not in NORMALIZATION_MODES:
        raise ConfigError(
            f"normalization must be one of {NORMALIZATION_MODES}, got {normalization!r}"
        )
    needs_source = any(s != "baseline" for s in strategies)
    if needs_source and source is None:
        raise ConfigError("strategies ptft/prognet require a source dataset")
    config.validate()

    if normalization == "global":
        target, _ = znormalize(target)
        if needs_source:
            source, _ = znormalize(source)
    spec = _CvSpec(
        target=target, source=source if needs_source else None,
        strategies=list(strategies), config=config, k=k, base_seed=base_seed,
        task=task, source_task=source_task, train_fold_subset=train_fold_subset,
        speaker_disjoint=speaker_disjoint, normalization=normalization,
    )
    jobs = [(spec, i) for i in range(iterations)]
    if workers == 1 or iterations == 1:
        outcomes = [_run_iteration(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, iterations)) as pool:
            outcomes = list(pool.map(_run_iteration, jobs))

    outcomes.sort(key=lambda item: item[0])
    uars = {s: np.zeros((iterations, k)) for s in strategies}
    all_logs: list[FoldLog] = []
    for iteration, rows, logs in outcomes:
        for s in strategies:
            uars[s][iteration] = rows[s]
        all_logs.extend(logs)
    all_logs.sort(key=lambda fl: (fl.iteration, fl.fold, strategies.index(fl.strategy)))
    results = {
        s: CVResult(strategy=s, task=task, uars=uars[s], base_seed=base_seed)
        for s in strategies
    }
    return results, all_logs


def run_repeated_cv(
    target: Dataset,
    strategy: str,
    config: "TrainConfig",
    **kwargs,
) -> tuple[CVResult, list[FoldLog]]:
    """Single-strategy convenience wrapper around run_repeated_cv_multi."""
    results, logs = run_repeated_cv_multi(target, [strategy], config, **kwargs)
    return results[strategy], logs
