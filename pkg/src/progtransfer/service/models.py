"""Request/response schemas for the HTTP service."""

from __future__ import annotations

from pydantic import BaseModel, ConfigDict

from ..config import ExperimentConfig, SynthSpec


class RunRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    config: ExperimentConfig
    # physical destination override; not folded into the config echo
    out_dir: str | None = None
    workers: int | None = None


class RunResponse(BaseModel):
    report: dict
    out_dir: str


class SynthRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    synth: SynthSpec
    out_dir: str
    seed: int | None = None


class SynthFile(BaseModel):
    path: str
    rows: int


class SynthResponse(BaseModel):
    out_dir: str
    seed: int
    files: dict[str, SynthFile]


class TTestRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    report_a: str
    # omitted: compare two strategies inside report_a
    report_b: str | None = None
    a: str = "prognet"
    b: str = "baseline"
    # None: taken from report_a's echoed config
    df: int | None = None
    train_test_ratio: float | None = None


class TTestResponse(BaseModel):
    a: str
    b: str
    t: float
    df: int
    p: float
    significant: bool
    train_test_ratio: float
    n: int
    degenerate_variance: bool


class CurveRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    run_dir: str
    strategy: str | None = None
    pad: bool = True
    max_epochs: int | None = None


class CurvePoints(BaseModel):
    epochs: list[int]
    mean_val_uar: list[float]
    std_val_uar: list[float]


class CurveResponse(BaseModel):
    curves: dict[str, CurvePoints]
    files: list[str]


class ErrorInfo(BaseModel):
    kind: str
    message: str


class ErrorResponse(BaseModel):
    error: ErrorInfo


class HealthResponse(BaseModel):
    status: str
    version: str
