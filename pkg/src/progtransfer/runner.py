"""Experiment orchestration: resolve a config into datasets, run the
repeated-CV protocol per strategy, and persist the full artifact set
(report.json, table.txt, config.echo, curves/, logs/, timing.txt).

Elapsed time lives in timing.txt rather than inside report.json so that
reports stay byte-identical across repeat runs of the same config.
"""

from __future__ import annotations

import itertools
import logging
import re
import time
from pathlib import Path

from . import __version__
from .config import ExperimentConfig, SynthSpec, echo_config
from .data import Dataset, gen_synthetic, load_csv, save_csv
from .errors import ConfigError, DataError
from .evaluation import (
    CVResult,
    FoldLog,
    LearningCurve,
    TTestResult,
    build_learning_curve,
    corrected_paired_ttest,
)
from .reporting import (
    build_report,
    render_table,
    write_curve_csv,
    write_report,
)
from .transfer import TrainConfig, read_train_log, write_train_log

logger = logging.getLogger(__name__)

_LOG_NAME = re.compile(r"^(\d+)_(\d+)_([a-z]+)\.csv$")


def resolve_datasets(cfg: ExperimentConfig) -> tuple[Dataset | None, Dataset, str]:
    """Returns (source or None, target, source_task)."""
    if cfg.synth is not None:
        source, target = gen_synthetic(cfg.synth.build(), seed=cfg.synth.seed)
        return source, target, cfg.source_task
    assert cfg.target is not None
    target_path = Path(cfg.target.path)
    if not target_path.exists():
        raise DataError(f"target dataset not found: {target_path}")
    target = load_csv(target_path)
    source = None
    source_task = cfg.source_task
    if cfg.source is not None:
        source_path = Path(cfg.source.path)
        if not source_path.exists():
            raise DataError(f"source dataset not found: {source_path}")
        source = load_csv(source_path)
        source_task = cfg.source.task
    return source, target, source_task


def n_train_folds(cfg: ExperimentConfig) -> int:
    # one test fold, one early-stopping fold, the rest train
    return cfg.train_fold_subset if cfg.train_fold_subset is not None else cfg.k - 2


def run_pairwise_ttests(
    cfg: ExperimentConfig, results: dict[str, CVResult]
) -> list[tuple[tuple[str, str], TTestResult]]:
    ratio = cfg.ttest.train_test_ratio
    if ratio is None:
        ratio = 1.0 / n_train_folds(cfg)
    out = []
    for a, b in itertools.combinations(cfg.strategies, 2):
        out.append(((a, b), corrected_paired_ttest(
            results[a], results[b], train_test_ratio=ratio, df=cfg.ttest.df)))
    return out


def strategy_curves(
    logs: list[FoldLog], strategies: list[str],
    pad: bool = True, max_epochs: int | None = None,
) -> dict[str, LearningCurve]:
    curves = {}
    for strategy in strategies:
        mine = [fl for fl in logs if fl.strategy == strategy]
        if not mine:
            continue
        curves[strategy] = build_learning_curve(
            [fl.log for fl in mine], groups=[fl.iteration for fl in mine],
            pad=pad, max_epochs=max_epochs)
    return curves


def execute_run(cfg: ExperimentConfig, out_dir: str | Path | None = None,
                workers: int | None = None) -> tuple[dict, Path]:
    """Runs the configured experiment and writes the artifact set.

    out_dir picks the physical destination (default: cfg.out_dir); it is
    deliberately not folded back into the config echo, so reports from
    different destinations stay byte-identical.
    """
    from .evaluation import run_repeated_cv_multi

    if cfg.kind == "synth_generate":
        raise ConfigError("kind synth_generate is handled by the synth command")
    cfg.check()
    started = time.monotonic()
    dest = Path(out_dir) if out_dir is not None else Path(cfg.out_dir)
    dest.mkdir(parents=True, exist_ok=True)
    (dest / "curves").mkdir(exist_ok=True)
    (dest / "logs").mkdir(exist_ok=True)

    source, target, source_task = resolve_datasets(cfg)
    train_config = TrainConfig(hyper=cfg.hyperparams.build(), patience=cfg.patience)
    results, logs = run_repeated_cv_multi(
        target,
        list(cfg.strategies),
        train_config,
        iterations=cfg.iterations,
        k=cfg.k,
        base_seed=cfg.seed,
        task=cfg.task,
        source=source,
        source_task=source_task,
        train_fold_subset=cfg.train_fold_subset,
        workers=workers if workers is not None else (cfg.workers or 1),
        speaker_disjoint=cfg.speaker_disjoint,
        normalization=cfg.normalization,
    )
    ttests = run_pairwise_ttests(cfg, results)

    echo = echo_config(cfg)
    (dest / "config.echo").write_text(echo, encoding="utf-8")
    report = build_report(cfg.model_dump(mode="json"), results, ttests)
    report["tool"] = {"name": "progtransfer", "version": __version__}
    write_report(dest / "report.json", report)

    source_name = "none"
    if source is not None and len(source):
        source_name = source.utterances[0].dataset_id
    (dest / "table.txt").write_text(
        render_table(results, ttests, source_name=source_name), encoding="utf-8")

    for strategy, curve in strategy_curves(logs, list(cfg.strategies)).items():
        write_curve_csv(dest / "curves" / f"{strategy}.csv",
                        curve.epochs, curve.mean_val_uar, curve.std_val_uar)
    for fl in logs:
        write_train_log(
            fl.log, dest / "logs" / f"{fl.iteration}_{fl.fold}_{fl.strategy}.csv")

    elapsed = time.monotonic() - started
    (dest / "timing.txt").write_text(
        f"elapsed_seconds: {elapsed:.3f}\n", encoding="utf-8")
    logger.info("run complete: %s (%.1fs)", dest, elapsed)
    return report, dest


def execute_synth(spec: SynthSpec, out_dir: str | Path,
                  seed: int | None = None) -> dict:
    """Writes the synthetic source/target CSV pair plus a provenance file."""
    synth_cfg = spec.build()
    used_seed = seed if seed is not None else spec.seed
    source, target = gen_synthetic(synth_cfg, seed=used_seed)
    dest = Path(out_dir)
    try:
        dest.mkdir(parents=True, exist_ok=True)
        files = {}
        for ds, name in ((source, synth_cfg.source_name),
                         (target, synth_cfg.target_name)):
            path = dest / f"{name}.csv"
            save_csv(ds, path)
            files[name] = {"path": str(path), "rows": len(ds)}
        resolved = spec.model_copy(update={"seed": used_seed})
        (dest / "provenance.yaml").write_text(
            echo_synth_provenance(resolved), encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot write to {dest}: {exc}") from exc
    return {"out_dir": str(dest), "seed": used_seed, "files": files}


def echo_synth_provenance(spec: SynthSpec) -> str:
    import yaml

    return yaml.safe_dump({"synth": spec.model_dump(mode="json")},
                          sort_keys=True, default_flow_style=False)


def aggregate_curves(run_dir: str | Path, strategy: str | None = None,
                     pad: bool = True, max_epochs: int | None = None,
                     ) -> dict[str, LearningCurve]:
    """Rebuilds curves/<strategy>.csv from the per-fold logs of a past run."""
    run_dir = Path(run_dir)
    logs_dir = run_dir / "logs"
    if not logs_dir.is_dir():
        raise DataError(f"no logs directory under {run_dir}")
    logs: list[FoldLog] = []
    for path in sorted(logs_dir.iterdir()):
        match = _LOG_NAME.match(path.name)
        if not match:
            logger.warning("skipping unrecognized log file %s", path.name)
            continue
        logs.append(FoldLog(int(match.group(1)), int(match.group(2)),
                            match.group(3), read_train_log(path)))
    if not logs:
        raise DataError(f"no training logs found in {logs_dir}")
    strategies = sorted({fl.strategy for fl in logs})
    if strategy is not None:
        if strategy not in strategies:
            raise ConfigError(
                f"strategy {strategy} has no logs in {logs_dir}; "
                f"present: {', '.join(strategies)}")
        strategies = [strategy]
    curves = strategy_curves(logs, strategies, pad=pad, max_epochs=max_epochs)
    out_dir = run_dir / "curves"
    out_dir.mkdir(exist_ok=True)
    for name, curve in curves.items():
        write_curve_csv(out_dir / f"{name}.csv",
                        curve.epochs, curve.mean_val_uar, curve.std_val_uar)
    return curves
