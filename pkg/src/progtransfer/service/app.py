"""FastAPI service over the experiment runner.

Domain failures surface as HTTP 400 with a kind tag the CLI maps onto
its exit codes: config -> 2, data -> 3, numeric (or any other internal
failure) -> 4.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..config import parse_config
from ..errors import ConfigError, DataError, ProgTransferError
from ..evaluation import corrected_paired_ttest
from ..reporting import load_report, report_cv_result
from ..runner import aggregate_curves, execute_run, execute_synth, n_train_folds
from .models import (
    CurvePoints,
    CurveRequest,
    CurveResponse,
    HealthResponse,
    RunRequest,
    RunResponse,
    SynthFile,
    SynthRequest,
    SynthResponse,
    TTestRequest,
    TTestResponse,
)


def error_kind(exc: ProgTransferError) -> str:
    if isinstance(exc, ConfigError):
        return "config"
    if isinstance(exc, DataError):
        return "data"
    return "numeric"


def _resolve_ttest_params(req: TTestRequest, report: dict) -> tuple[int, float]:
    df, ratio = req.df, req.train_test_ratio
    if df is None or ratio is None:
        cfg = parse_config(report.get("config", {}))
        if df is None:
            df = cfg.ttest.df
        if ratio is None:
            ratio = cfg.ttest.train_test_ratio
            if ratio is None:
                ratio = 1.0 / n_train_folds(cfg)
    return df, ratio


def create_app() -> FastAPI:
    app = FastAPI(title="progtransfer", version=__version__)

    @app.exception_handler(ProgTransferError)
    async def domain_error(request: Request, exc: ProgTransferError):
        return JSONResponse(
            status_code=400,
            content={"error": {"kind": error_kind(exc), "message": str(exc)}},
        )

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", version=__version__)

    @app.post("/run", response_model=RunResponse)
    def run(req: RunRequest) -> RunResponse:
        report, dest = execute_run(req.config, out_dir=req.out_dir,
                                   workers=req.workers)
        return RunResponse(report=report, out_dir=str(dest))

    @app.post("/synth", response_model=SynthResponse)
    def synth(req: SynthRequest) -> SynthResponse:
        result = execute_synth(req.synth, out_dir=req.out_dir, seed=req.seed)
        return SynthResponse(
            out_dir=result["out_dir"],
            seed=result["seed"],
            files={k: SynthFile(**v) for k, v in result["files"].items()},
        )

    @app.post("/ttest", response_model=TTestResponse)
    def ttest(req: TTestRequest) -> TTestResponse:
        report_a = load_report(req.report_a)
        report_b = load_report(req.report_b) if req.report_b else report_a
        res_a = report_cv_result(report_a, req.a)
        res_b = report_cv_result(report_b, req.b)
        df, ratio = _resolve_ttest_params(req, report_a)
        res = corrected_paired_ttest(res_a, res_b, train_test_ratio=ratio, df=df)
        return TTestResponse(
            a=req.a, b=req.b, t=res.t, df=res.df, p=res.p,
            significant=res.significant, train_test_ratio=res.train_test_ratio,
            n=res.n, degenerate_variance=res.degenerate_variance,
        )

    @app.post("/curve", response_model=CurveResponse)
    def curve(req: CurveRequest) -> CurveResponse:
        curves = aggregate_curves(req.run_dir, strategy=req.strategy,
                                  pad=req.pad, max_epochs=req.max_epochs)
        return CurveResponse(
            curves={
                name: CurvePoints(
                    epochs=[int(e) for e in c.epochs],
                    mean_val_uar=[float(v) for v in c.mean_val_uar],
                    std_val_uar=[float(v) for v in c.std_val_uar],
                )
                for name, c in curves.items()
            },
            files=[f"curves/{name}.csv" for name in sorted(curves)],
        )

    return app
