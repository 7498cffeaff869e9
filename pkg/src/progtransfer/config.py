"""Declarative experiment configuration (YAML, versioned schema).

Every field has a default and the fully resolved config is echoed next
to the results, so a report is always sufficient to re-run itself.
"""

from __future__ import annotations

from pathlib import Path
from typing import Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .data import SynthConfig
from .errors import ConfigError
from .nncore import Hyperparams

SCHEMA_VERSION = 1

ExperimentKind = Literal[
    "paralinguistic_transfer", "cross_dataset", "learning_curve", "synth_generate"
]


class HyperparamsSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n_hidden_layers: int = 4
    hidden_width: int = 256
    dropout_rate: float = 0.5
    learning_rate: float = 0.0005
    max_epochs: int = 600
    batch_size: int = 32
    optimizer: Literal["sgd", "adam"] = "adam"
    class_weighting: Literal["none", "inverse_frequency"] = "none"

    def build(self) -> Hyperparams:
        hyper = Hyperparams(**self.model_dump())
        hyper.validate()
        return hyper


class SynthSpec(BaseModel):
    """Generates a (source, target) dataset pair in place of CSV paths."""

    model_config = ConfigDict(extra="forbid")

    n_speakers: int = 10
    utterances_per_speaker: int = 100
    feature_dim: int = 88
    tau: float = 1.0
    noise_std: float = 1.0
    class_priors: tuple[float, float, float, float] = (0.25, 0.25, 0.25, 0.25)
    speaker_scale: float = 1.0
    gender_scale: float = 1.0
    emotion_scale: float = 2.0
    seed: int = 0

    def build(self) -> SynthConfig:
        cfg = SynthConfig(**self.model_dump(exclude={"seed"}))
        cfg.validate()
        return cfg


class DataSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    path: str
    task: Literal["emotion", "speaker", "gender"] = "emotion"


class TTestSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    df: int = 10
    # None: 1 / (number of training folds actually used)
    train_test_ratio: float | None = None


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    schema_version: int = SCHEMA_VERSION
    kind: ExperimentKind = "paralinguistic_transfer"
    seed: int = 0
    iterations: int = 10
    k: int = 10
    strategies: list[Literal["baseline", "ptft", "prognet"]] = Field(
        default_factory=lambda: ["baseline", "ptft", "prognet"]
    )
    task: Literal["emotion", "speaker", "gender"] = "emotion"
    # source-task label set when the source pair comes from synth
    # (a source DataSpec carries its own task field, which wins)
    source_task: Literal["emotion", "speaker", "gender"] = "emotion"
    train_fold_subset: int | None = None
    normalization: Literal["global", "train_only"] = "global"
    speaker_disjoint: bool = False
    workers: int | None = None
    out_dir: str = "runs/out"
    target: DataSpec | None = None
    source: DataSpec | None = None
    synth: SynthSpec | None = None
    hyperparams: HyperparamsSpec = Field(default_factory=HyperparamsSpec)
    patience: int | None = None
    ttest: TTestSpec = Field(default_factory=TTestSpec)

    @field_validator("train_fold_subset")
    @classmethod
    def _subset_values(cls, v):
        if v is not None and v not in (1, 2, 4, 8):
            raise ValueError(f"train_fold_subset must be one of 1, 2, 4, 8, got {v}")
        return v

    @field_validator("strategies")
    @classmethod
    def _nonempty_unique(cls, v):
        if not v:
            raise ValueError("strategy list must be nonempty")
        if len(set(v)) != len(v):
            raise ValueError(f"duplicate strategies in {v}")
        return v

    def check(self) -> None:
        """Cross-field validation beyond what field types can express."""
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(
                f"unsupported schema_version {self.schema_version}, "
                f"this build reads version {SCHEMA_VERSION}"
            )
        if self.kind == "synth_generate":
            if self.synth is None:
                raise ConfigError("kind synth_generate requires a synth section")
            return
        if self.synth is None and self.target is None:
            raise ConfigError("a target dataset is required: set target.path or synth")
        if self.synth is not None and (self.target is not None or self.source is not None):
            raise ConfigError("synth replaces target/source paths; configure one or the other")
        needs_source = any(s != "baseline" for s in self.strategies)
        if needs_source and self.synth is None and self.source is None:
            raise ConfigError("strategies ptft/prognet require a source dataset")
        if self.synth is not None:
            self.synth.build()
        self.hyperparams.build()


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return parse_config(raw)


def parse_config(raw: dict) -> ExperimentConfig:
    try:
        cfg = ExperimentConfig(**raw)
    except ValidationError as exc:
        issues = "; ".join(
            f"{'.'.join(str(p) for p in e['loc'])}: {e['msg']}" for e in exc.errors()
        )
        raise ConfigError(f"invalid config: {issues}") from exc
    cfg.check()
    return cfg


def echo_config(cfg: ExperimentConfig) -> str:
    """Canonical YAML with every default materialized."""
    return yaml.safe_dump(cfg.model_dump(mode="json"), sort_keys=True,
                          default_flow_style=False)
