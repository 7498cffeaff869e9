"""Corpus ingestion, normalization, fold planning, and synthetic data.

CSV schema: ``id,dataset,speaker,gender,emotion,f1,...,fD`` with gender
in {M, F} and emotion in {angry, neutral, sad, happy}. In-memory gender
is spelled out (male/female). Feature dimension defaults to 88 and is
inferred from the header.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import (
    ConfigError,
    DegenerateSplitError,
    EmptyInputError,
    InvalidFoldError,
    ParseError,
)
from .seeding import derive_rng

logger = logging.getLogger(__name__)

EMOTIONS = ("angry", "happy", "neutral", "sad")
GENDERS = ("female", "male")
TASKS = ("emotion", "speaker", "gender")

_GENDER_FROM_CSV = {"M": "male", "F": "female"}
_GENDER_TO_CSV = {"male": "M", "female": "F"}
_FIXED_COLUMNS = ("id", "dataset", "speaker", "gender", "emotion")


@dataclass(frozen=True)
class Utterance:
    utt_id: str
    dataset_id: str
    speaker_id: str
    gender: str
    emotion: str
    features: np.ndarray


@dataclass
class NormStats:
    """Per-feature mean and population standard deviation."""

    mean: np.ndarray
    std: np.ndarray


@dataclass
class Dataset:
    utterances: list[Utterance]
    feature_dim: int = 88
    normalization: NormStats | None = None

    def __len__(self) -> int:
        return len(self.utterances)

    @property
    def speaker_ids(self) -> list[str]:
        return sorted({u.speaker_id for u in self.utterances})


def features_matrix(ds: Dataset) -> np.ndarray:
    if not ds.utterances:
        return np.empty((0, ds.feature_dim))
    return np.stack([u.features for u in ds.utterances])


def task_labels(ds: Dataset, task: str = "emotion") -> tuple[np.ndarray, list[str]]:
    """Integer labels plus class-name vocabulary for one of the three tasks.

    Emotion and gender use their fixed vocabularies; speaker classes
    are the dataset's own sorted speaker ids.
    """
    if task == "emotion":
        classes = list(EMOTIONS)
        values = [u.emotion for u in ds.utterances]
    elif task == "gender":
        classes = list(GENDERS)
        values = [u.gender for u in ds.utterances]
    elif task == "speaker":
        classes = ds.speaker_ids
        values = [u.speaker_id for u in ds.utterances]
    else:
        raise ConfigError(f"unknown task {task!r}, expected one of {TASKS}")
    index = {name: i for i, name in enumerate(classes)}
    return np.array([index[v] for v in values], dtype=np.intp), classes


def _expected_header(feature_dim: int) -> list[str]:
    return list(_FIXED_COLUMNS) + [f"f{i}" for i in range(1, feature_dim + 1)]


def load_csv(path: str | Path) -> Dataset:
    """Parse a feature CSV, preserving row order, without normalizing.

    Raises a parse error naming the offending line and column for wrong
    column counts, non-finite or malformed features, unknown labels,
    and duplicate ids.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError(f"{path}: empty file, header required")
    header = rows[0]
    feature_dim = len(header) - len(_FIXED_COLUMNS)
    if feature_dim < 1 or header != _expected_header(feature_dim):
        raise ParseError(
            f"{path}, line 1: malformed header, expected "
            f"id,dataset,speaker,gender,emotion,f1,...,fD"
        )
    n_cols = len(header)
    utterances: list[Utterance] = []
    seen: set[str] = set()
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != n_cols:
            raise ParseError(
                f"{path}, line {lineno}: expected {n_cols} columns, found {len(row)}"
            )
        utt_id, dataset_id, speaker_id, gender_code, emotion = row[:5]
        if utt_id in seen:
            raise ParseError(f"{path}, line {lineno}, column id: duplicate id {utt_id!r}")
        seen.add(utt_id)
        if gender_code not in _GENDER_FROM_CSV:
            raise ParseError(
                f"{path}, line {lineno}, column gender: expected M or F, got {gender_code!r}"
            )
        if emotion not in EMOTIONS:
            raise ParseError(
                f"{path}, line {lineno}, column emotion: unknown label {emotion!r}"
            )
        feats = np.empty(feature_dim)
        for i, cell in enumerate(row[5:]):
            try:
                value = float(cell)
            except ValueError:
                raise ParseError(
                    f"{path}, line {lineno}, column f{i + 1}: "
                    f"could not parse {cell!r} as a number"
                ) from None
            if not math.isfinite(value):
                raise ParseError(
                    f"{path}, line {lineno}, column f{i + 1}: non-finite value {cell!r}"
                )
            feats[i] = value
        utterances.append(
            Utterance(utt_id, dataset_id, speaker_id,
                      _GENDER_FROM_CSV[gender_code], emotion, feats)
        )
    return Dataset(utterances, feature_dim)


def save_csv(ds: Dataset, path: str | Path) -> None:
    """Write the CSV schema; floats via repr for lossless round-trips."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_expected_header(ds.feature_dim))
        for u in ds.utterances:
            writer.writerow(
                [u.utt_id, u.dataset_id, u.speaker_id,
                 _GENDER_TO_CSV[u.gender], u.emotion]
                + [repr(float(v)) for v in u.features]
            )


def _with_features(ds: Dataset, x: np.ndarray, stats: NormStats) -> Dataset:
    utts = [replace(u, features=x[i]) for i, u in enumerate(ds.utterances)]
    return Dataset(utts, ds.feature_dim, stats)


def znormalize(ds: Dataset) -> tuple[Dataset, NormStats]:
    """Per-feature z-normalization with population standard deviation.

    Constant features (std below 1e-12) map to exactly 0. The returned
    stats can normalize held-out data via apply_normalization.
    """
    if len(ds) < 2:
        raise EmptyInputError(
            f"z-normalization needs at least 2 utterances, got {len(ds)}"
        )
    x = features_matrix(ds)
    stats = NormStats(x.mean(axis=0), x.std(axis=0))
    return apply_normalization(ds, stats), stats


def apply_normalization(ds: Dataset, stats: NormStats) -> Dataset:
    if stats.mean.shape != (ds.feature_dim,) or stats.std.shape != (ds.feature_dim,):
        raise ConfigError(
            f"normalization stats of dim {stats.mean.shape} do not match "
            f"feature_dim {ds.feature_dim}"
        )
    x = features_matrix(ds)
    safe = np.where(stats.std < 1e-12, 1.0, stats.std)
    xn = (x - stats.mean) / safe
    xn[:, stats.std < 1e-12] = 0.0
    return _with_features(ds, xn, stats)


@dataclass(frozen=True)
class FoldPlan:
    k: int
    assignment: dict[str, int]
    seed: int


@dataclass(frozen=True)
class RoleSplit:
    test_fold: int
    early_stop_fold: int
    train_folds: tuple[int, ...]


def make_folds(ds: Dataset, k: int, seed: int, speaker_disjoint: bool = False) -> FoldPlan:
    """Assign every utterance to one of k folds, stratified by speaker.

    Default mode deals each speaker's (seed-shuffled) utterances
    round-robin across folds, so every speaker with >= k utterances
    appears in every fold with per-fold counts differing by at most 1.
    Speakers with fewer utterances skip some folds (warned). The
    speaker_disjoint mode instead assigns whole speakers to folds.
    """
    if k < 3:
        raise InvalidFoldError(
            f"k must be >= 3 (test, early-stop, and train roles), got {k}"
        )
    if not ds.utterances:
        raise EmptyInputError("cannot plan folds for an empty dataset")
    by_speaker: dict[str, list[str]] = {}
    for u in ds.utterances:
        by_speaker.setdefault(u.speaker_id, []).append(u.utt_id)
    speakers = sorted(by_speaker)

    assignment: dict[str, int] = {}
    if speaker_disjoint:
        if len(speakers) < k:
            raise DegenerateSplitError(
                f"speaker-disjoint folds need >= {k} speakers, got {len(speakers)}"
            )
        order = list(speakers)
        derive_rng(seed, "folds", "speakers").shuffle(order)
        for i, spk in enumerate(order):
            for utt_id in by_speaker[spk]:
                assignment[utt_id] = i % k
    else:
        short = [s for s in speakers if len(by_speaker[s]) < k]
        if short:
            logger.warning(
                "%d of %d speakers have fewer than %d utterances and will "
                "skip some folds", len(short), len(speakers), k
            )
        for s_idx, spk in enumerate(speakers):
            ids = sorted(by_speaker[spk])
            derive_rng(seed, "folds", spk).shuffle(ids)
            start = s_idx % k
            for j, utt_id in enumerate(ids):
                assignment[utt_id] = (start + j) % k
    counts = np.bincount(list(assignment.values()), minlength=k)
    if (counts == 0).any():
        empty = int(np.flatnonzero(counts == 0)[0])
        raise DegenerateSplitError(
            f"fold {empty} is empty; dataset too small for k={k}"
        )
    return FoldPlan(k, assignment, seed)


def fold_indices(plan: FoldPlan, ds: Dataset) -> list[np.ndarray]:
    """Positional indices into ds.utterances for each fold."""
    out: list[list[int]] = [[] for _ in range(plan.k)]
    for i, u in enumerate(ds.utterances):
        out[plan.assignment[u.utt_id]].append(i)
    return [np.array(ix, dtype=np.intp) for ix in out]


def split_roles(plan: FoldPlan, test_fold: int) -> RoleSplit:
    """Test fold, the next fold for early stopping, the rest for training."""
    if not 0 <= test_fold < plan.k:
        raise IndexError(f"test_fold {test_fold} out of range for k={plan.k}")
    early = (test_fold + 1) % plan.k
    train = tuple(f for f in range(plan.k) if f not in (test_fold, early))
    return RoleSplit(test_fold, early, train)


def subset_train_folds(train_folds: tuple[int, ...], n: int, seed: int) -> tuple[int, ...]:
    """Sample n of the train folds uniformly without replacement."""
    if not 1 <= n <= len(train_folds):
        raise InvalidFoldError(
            f"subset size must be in 1..{len(train_folds)}, got {n}"
        )
    ordered = sorted(train_folds)
    chosen = derive_rng(seed, "subset").choice(len(ordered), size=n, replace=False)
    return tuple(sorted(ordered[i] for i in chosen))


@dataclass
class SynthConfig:
    """Latent-factor synthetic corpus settings.

    A feature vector is speaker latent + gender offset + emotion
    prototype + Gaussian noise. Source and target share emotion
    prototypes with mixing weight tau: target prototypes are
    tau * source + sqrt(1 - tau^2) * independent, which preserves
    variance and makes the prototype correlation approximately tau.
    class_priors align with the sorted emotion vocabulary.
    """

    n_speakers: int = 10
    utterances_per_speaker: int = 100
    feature_dim: int = 88
    tau: float = 1.0
    noise_std: float = 1.0
    class_priors: tuple[float, ...] = field(
        default_factory=lambda: (0.25, 0.25, 0.25, 0.25)
    )
    speaker_scale: float = 1.0
    gender_scale: float = 1.0
    emotion_scale: float = 2.0
    source_name: str = "synth_source"
    target_name: str = "synth_target"

    def validate(self) -> None:
        if self.n_speakers < 1:
            raise ConfigError(f"n_speakers must be >= 1, got {self.n_speakers}")
        if self.utterances_per_speaker < 1:
            raise ConfigError(
                f"utterances_per_speaker must be >= 1, got {self.utterances_per_speaker}"
            )
        if self.feature_dim < 1:
            raise ConfigError(f"feature_dim must be >= 1, got {self.feature_dim}")
        if not 0.0 <= self.tau <= 1.0:
            raise ConfigError(f"tau must be in [0, 1], got {self.tau}")
        if self.noise_std <= 0.0:
            raise ConfigError(f"noise_std must be > 0, got {self.noise_std}")
        if len(self.class_priors) != len(EMOTIONS):
            raise ConfigError(
                f"class_priors needs {len(EMOTIONS)} entries, got {len(self.class_priors)}"
            )
        if any(p < 0 for p in self.class_priors):
            raise ConfigError("class_priors must be non-negative")
        if abs(sum(self.class_priors) - 1.0) > 1e-9:
            raise ConfigError(
                f"class_priors must sum to 1, got {sum(self.class_priors)}"
            )
        for name in ("speaker_scale", "gender_scale", "emotion_scale"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0, got {getattr(self, name)}")


def _gen_one(cfg: SynthConfig, seed: int, name: str, protos: np.ndarray,
             gender_offset: np.ndarray) -> Dataset:
    spk_rng = derive_rng(seed, "speakers", name)
    label_rng = derive_rng(seed, "labels", name)
    noise_rng = derive_rng(seed, "noise", name)
    priors = np.asarray(cfg.class_priors, dtype=np.float64)
    priors = priors / priors.sum()
    utterances: list[Utterance] = []
    for s in range(cfg.n_speakers):
        latent = spk_rng.standard_normal(cfg.feature_dim) * cfg.speaker_scale
        gender = GENDERS[s % 2]
        g_sign = 1.0 if gender == "male" else -1.0
        spk_id = f"spk{s:03d}"
        emos = label_rng.choice(len(EMOTIONS), size=cfg.utterances_per_speaker, p=priors)
        noise = noise_rng.standard_normal(
            (cfg.utterances_per_speaker, cfg.feature_dim)) * cfg.noise_std
        for j in range(cfg.utterances_per_speaker):
            feats = latent + g_sign * gender_offset + protos[emos[j]] + noise[j]
            utterances.append(
                Utterance(f"{name}-{spk_id}-u{j:04d}", name, spk_id,
                          gender, EMOTIONS[emos[j]], feats)
            )
    return Dataset(utterances, cfg.feature_dim)


def gen_synthetic(cfg: SynthConfig, seed: int) -> tuple[Dataset, Dataset]:
    """Deterministically generate a (source, target) dataset pair.

    Only the target's emotion prototypes depend on tau, so sweeping tau
    under a fixed seed leaves the source dataset (and everything else
    about the target) unchanged.
    """
    cfg.validate()
    shape = (len(EMOTIONS), cfg.feature_dim)
    p_src = derive_rng(seed, "proto", "source").standard_normal(shape) * cfg.emotion_scale
    q = derive_rng(seed, "proto", "target").standard_normal(shape) * cfg.emotion_scale
    p_tgt = cfg.tau * p_src + np.sqrt(1.0 - cfg.tau ** 2) * q
    gender_offset = derive_rng(seed, "gender").standard_normal(cfg.feature_dim)
    gender_offset *= cfg.gender_scale
    source = _gen_one(cfg, seed, cfg.source_name, p_src, gender_offset)
    target = _gen_one(cfg, seed, cfg.target_name, p_tgt, gender_offset)
    return source, target
