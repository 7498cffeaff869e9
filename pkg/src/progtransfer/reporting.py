"""Deterministic result files: report.json, table.txt, curves, train logs.

The JSON emitter is hand-rolled for one reason: floats must serialize
with fixed, locale-free formatting (17 significant digits) so that two
runs of the same config produce byte-identical reports.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError, NumericError
from .evaluation import CVResult, TTestResult

REPORT_SCHEMA_VERSION = 1


def format_float(x: float) -> str:
    if math.isnan(x) or math.isinf(x):
        # JSON has no literals for these; the only report field that can
        # legitimately overflow is a degenerate t statistic.
        return '"%s"' % repr(x)
    return format(x, ".17e")


def emit_json(obj, indent: int = 0) -> str:
    pad = "  " * indent
    inner = "  " * (indent + 1)
    if isinstance(obj, Mapping):
        if not obj:
            return "{}"
        parts = []
        for key in sorted(obj):
            if not isinstance(key, str):
                raise NumericError(f"report keys must be strings, got {key!r}")
            parts.append(f'{inner}"{key}": {emit_json(obj[key], indent + 1)}')
        return "{\n" + ",\n".join(parts) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if not len(obj):
            return "[]"
        parts = [f"{inner}{emit_json(v, indent + 1)}" for v in obj]
        return "[\n" + ",\n".join(parts) + "\n" + pad + "]"
    if isinstance(obj, bool) or isinstance(obj, np.bool_):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return format_float(float(obj))
    if isinstance(obj, str):
        return '"' + obj.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if obj is None:
        return "null"
    raise NumericError(f"cannot serialize {type(obj).__name__} into a report")


def cv_result_dict(res: CVResult) -> dict:
    return {
        "strategy": res.strategy,
        "task": res.task,
        "base_seed": res.base_seed,
        "iterations": res.iterations,
        "k": res.k,
        "mean_uar": res.mean_uar,
        "mean_within_std": res.mean_within_std,
        "overall_std": res.overall_std,
        "iteration_means": [float(v) for v in res.iteration_means],
        "iteration_stds": [float(v) for v in res.iteration_stds],
        "uars": [[float(v) for v in row] for row in res.uars],
    }


def ttest_dict(pair: tuple[str, str], res: TTestResult) -> dict:
    return {
        "a": pair[0],
        "b": pair[1],
        "t": res.t,
        "df": res.df,
        "p": res.p,
        "significant": res.significant,
        "train_test_ratio": res.train_test_ratio,
        "n": res.n,
        "degenerate_variance": res.degenerate_variance,
    }


def build_report(config_echo: dict, results: Mapping[str, CVResult],
                 ttests: Sequence[tuple[tuple[str, str], TTestResult]]) -> dict:
    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "config": config_echo,
        "results": {name: cv_result_dict(res) for name, res in results.items()},
        "ttests": [ttest_dict(pair, res) for pair, res in ttests],
    }


def write_report(path: str | Path, report: dict) -> None:
    Path(path).write_text(emit_json(report) + "\n", encoding="utf-8")


def load_report(path: str | Path) -> dict:
    import json

    from .errors import DataError, ParseError

    path = Path(path)
    if not path.exists():
        raise DataError(f"report not found: {path}")
    try:
        report = json.loads(path.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ParseError(f"{path}: not a valid report: {exc}") from exc
    if not isinstance(report, dict) or "results" not in report:
        raise ParseError(f"{path}: not a run report (missing results)")
    return report


def cv_result_from_dict(d: Mapping) -> CVResult:
    from .errors import ParseError

    try:
        return CVResult(
            strategy=d["strategy"],
            task=d["task"],
            uars=np.asarray(d["uars"], dtype=np.float64),
            base_seed=int(d["base_seed"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed CV result in report: {exc}") from exc


def report_cv_result(report: dict, strategy: str) -> CVResult:
    results = report.get("results", {})
    if strategy not in results:
        raise ConfigError(
            f"strategy {strategy} not in report; present: "
            f"{', '.join(sorted(results)) or 'none'}")
    return cv_result_from_dict(results[strategy])


def render_table(results: Mapping[str, CVResult],
                 ttests: Sequence[tuple[tuple[str, str], TTestResult]],
                 source_name: str = "none") -> str:
    """Small fixed-layout summary: one row per strategy, mean +- std UAR,
    with a * marker on strategies significantly different from baseline."""
    marked = {
        pair[0] if pair[1] == "baseline" else pair[1]
        for pair, res in ttests
        if "baseline" in pair and res.significant
    }
    rows = []
    for name, res in results.items():
        star = " *" if name in marked and name != "baseline" else ""
        rows.append((name, source_name if name != "baseline" else "none",
                     f"{res.mean_uar:.3f} +- {res.mean_within_std:.3f}{star}"))
    width_m = max(len("method"), *(len(r[0]) for r in rows))
    width_s = max(len("source"), *(len(r[1]) for r in rows))
    lines = [f"{'method':<{width_m}}  {'source':<{width_s}}  uar"]
    lines += [f"{m:<{width_m}}  {s:<{width_s}}  {u}" for m, s, u in rows]
    lines.append("")
    lines.append("* p < 0.05 vs baseline (variance-corrected paired t-test)")
    return "\n".join(lines) + "\n"


def write_curve_csv(path: str | Path, epochs: Sequence[int],
                    mean_val_uar: Sequence[float],
                    std_val_uar: Sequence[float]) -> None:
    if not (len(epochs) == len(mean_val_uar) == len(std_val_uar)):
        raise ConfigError("curve columns must have equal length")
    lines = ["epoch,mean_val_uar,std_val_uar"]
    for e, m, s in zip(epochs, mean_val_uar, std_val_uar):
        lines.append(f"{int(e)},{repr(float(m))},{repr(float(s))}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_curve_csv(path: str | Path):
    from .errors import ParseError

    text = Path(path).read_text(encoding="utf-8")
    lines = [ln for ln in text.splitlines() if ln]
    if not lines or lines[0] != "epoch,mean_val_uar,std_val_uar":
        raise ParseError(f"{path}: not a curve file")
    epochs, means, stds = [], [], []
    for i, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != 3:
            raise ParseError(f"{path}:{i}: expected 3 columns, got {len(cells)}")
        try:
            epochs.append(int(cells[0]))
            means.append(float(cells[1]))
            stds.append(float(cells[2]))
        except ValueError as exc:
            raise ParseError(f"{path}:{i}: {exc}") from exc
    return epochs, means, stds
