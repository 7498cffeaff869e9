"""Command-line client for the experiment service.

Commands execute in-process against the ASGI app by default, so no
server process is needed; --server http://host:port points the same
commands at a remote instance. Exit codes: 0 success, 2 config error,
3 data error, 4 internal numeric error.
"""

from __future__ import annotations

import asyncio
import os
import sys

import click
import httpx

from . import __version__
from .config import load_config, parse_config
from .errors import ConfigError, DataError, ProgTransferError
from .service.app import create_app

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4
_KIND_EXIT = {"config": EXIT_CONFIG, "data": EXIT_DATA, "numeric": EXIT_NUMERIC}
WORKERS_ENV = "PROGTRANSFER_WORKERS"


def _exit_code(exc: ProgTransferError) -> int:
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, DataError):
        return EXIT_DATA
    return EXIT_NUMERIC


def _fail(message: str, code: int) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _post(server: str | None, path: str, payload: dict) -> httpx.Response:
    if server is None:
        async def go() -> httpx.Response:
            transport = httpx.ASGITransport(app=create_app())
            async with httpx.AsyncClient(
                transport=transport, base_url="http://progtransfer",
                timeout=None,
            ) as client:
                return await client.post(path, json=payload)

        return asyncio.run(go())
    with httpx.Client(base_url=server, timeout=None) as client:
        return client.post(path, json=payload)


def _handle(resp: httpx.Response) -> dict:
    if resp.status_code == 200:
        return resp.json()
    if resp.status_code == 400:
        err = resp.json().get("error", {})
        _fail(err.get("message", "unknown error"),
              _KIND_EXIT.get(err.get("kind"), EXIT_NUMERIC))
    if resp.status_code == 422:
        _fail(f"invalid request: {resp.text}", EXIT_CONFIG)
    _fail(f"server failure {resp.status_code}: {resp.text[:500]}", EXIT_NUMERIC)
    raise AssertionError("unreachable")


def _resolve_workers(flag: int | None) -> int | None:
    if flag is not None:
        return flag
    env = os.environ.get(WORKERS_ENV)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            _fail(f"{WORKERS_ENV} must be an integer, got {env!r}", EXIT_CONFIG)
    return None


@click.group()
@click.version_option(__version__, prog_name="progtransfer")
def main() -> None:
    """Transfer-learning experiment toolkit."""


@main.command()
@click.option("--config", "config_path", required=True,
              type=click.Path(), help="Experiment config (YAML).")
@click.option("--seed", type=int, default=None, help="Override base seed.")
@click.option("--out", "out_dir", type=click.Path(), default=None,
              help="Output directory (default: config out_dir).")
@click.option("--workers", type=int, default=None,
              help="Worker pool size (default: number of processors).")
@click.option("--train-folds", type=click.Choice(["1", "2", "4", "8"]),
              default=None, help="Train on a subset of the training folds.")
@click.option("--epochs", type=int, default=None, help="Override max epochs.")
@click.option("--strategy", "strategies", multiple=True,
              help="Strategy to run (repeatable; overrides config list).")
@click.option("--server", default=None, help="Remote service URL.")
def run(config_path, seed, out_dir, workers, train_folds, epochs,
        strategies, server) -> None:
    """Run the configured experiment and write its report."""
    try:
        cfg = load_config(config_path)
        raw = cfg.model_dump(mode="json")
        if seed is not None:
            raw["seed"] = seed
        if train_folds is not None:
            raw["train_fold_subset"] = int(train_folds)
        if epochs is not None:
            raw["hyperparams"]["max_epochs"] = epochs
        if strategies:
            raw["strategies"] = list(strategies)
        cfg = parse_config(raw)
    except ProgTransferError as exc:
        _fail(str(exc), _exit_code(exc))

    if cfg.kind == "synth_generate":
        payload = {
            "synth": cfg.synth.model_dump(mode="json"),
            "out_dir": out_dir or cfg.out_dir,
        }
        body = _handle(_post(server, "/synth", payload))
        _print_synth(body)
        return

    payload = {
        "config": cfg.model_dump(mode="json"),
        "out_dir": out_dir,
        "workers": _resolve_workers(workers),
    }
    body = _handle(_post(server, "/run", payload))
    dest = body["out_dir"]
    results = body["report"]["results"]
    for name in cfg.strategies:
        res = results[name]
        click.echo(f"{name}: UAR {res['mean_uar']:.3f} "
                   f"+- {res['mean_within_std']:.3f}")
    for tt in body["report"]["ttests"]:
        verdict = "significant" if tt["significant"] else "not significant"
        click.echo(f"{tt['a']} vs {tt['b']}: t={tt['t']:.3f} "
                   f"p={tt['p']:.4f} ({verdict})")
    click.echo(f"report: {dest}/report.json")


def _print_synth(body: dict) -> None:
    for name, info in sorted(body["files"].items()):
        click.echo(f"{name}: {info['path']} ({info['rows']} rows)")
    click.echo(f"seed: {body['seed']}")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(),
              help="Config file with a synth section.")
@click.option("--seed", type=int, default=None, help="Override generator seed.")
@click.option("--out", "out_dir", type=click.Path(), default=None,
              help="Output directory (default: config out_dir).")
@click.option("--server", default=None, help="Remote service URL.")
def synth(config_path, seed, out_dir, server) -> None:
    """Generate the synthetic source/target CSV pair."""
    try:
        cfg = load_config(config_path)
        if cfg.synth is None:
            raise ConfigError(f"{config_path} has no synth section")
    except ProgTransferError as exc:
        _fail(str(exc), _exit_code(exc))
    payload = {
        "synth": cfg.synth.model_dump(mode="json"),
        "out_dir": out_dir or cfg.out_dir,
    }
    if seed is not None:
        payload["seed"] = seed
    _print_synth(_handle(_post(server, "/synth", payload)))


@main.command()
@click.argument("report_a", type=click.Path())
@click.argument("report_b", type=click.Path(), required=False)
@click.option("--a", "strategy_a", default="prognet",
              help="Strategy from the first report.")
@click.option("--b", "strategy_b", default="baseline",
              help="Strategy from the second (or same) report.")
@click.option("--df", type=int, default=None, help="Degrees of freedom.")
@click.option("--ratio", type=float, default=None,
              help="Train/test ratio correction term.")
@click.option("--server", default=None, help="Remote service URL.")
def ttest(report_a, report_b, strategy_a, strategy_b, df, ratio, server) -> None:
    """Corrected paired t-test between two strategies' CV results."""
    payload = {
        "report_a": report_a,
        "report_b": report_b,
        "a": strategy_a,
        "b": strategy_b,
        "df": df,
        "train_test_ratio": ratio,
    }
    body = _handle(_post(server, "/ttest", payload))
    verdict = "significant" if body["significant"] else "not significant"
    click.echo(f"t = {body['t']:.6f}")
    click.echo(f"df = {body['df']}")
    click.echo(f"p = {body['p']:.6f}")
    click.echo(f"verdict: {verdict} at p < 0.05 "
               f"(ratio {body['train_test_ratio']}, n {body['n']})")
    if body["degenerate_variance"]:
        click.echo("note: zero variance between paired results")


@main.command()
@click.argument("run_dir", type=click.Path())
@click.option("--strategy", default=None, help="Only this strategy.")
@click.option("--max-epochs", type=int, default=None,
              help="Truncate curves at this epoch.")
@click.option("--no-pad", is_flag=True,
              help="Drop logs shorter than the longest instead of padding.")
@click.option("--server", default=None, help="Remote service URL.")
def curve(run_dir, strategy, max_epochs, no_pad, server) -> None:
    """Re-aggregate learning curves from a run's training logs."""
    payload = {
        "run_dir": run_dir,
        "strategy": strategy,
        "pad": not no_pad,
        "max_epochs": max_epochs,
    }
    body = _handle(_post(server, "/curve", payload))
    for name in sorted(body["curves"]):
        n = len(body["curves"][name]["epochs"])
        click.echo(f"{name}: {n} epochs -> {run_dir}/curves/{name}.csv")


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
def serve(host, port) -> None:
    """Start the HTTP service."""
    import uvicorn

    uvicorn.run(create_app(), host=host, port=port)


if __name__ == "__main__":
    main()
