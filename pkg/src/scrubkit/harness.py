"""Prompt-wise 8-fold cross-validation over dataset variants.

Each fold holds one prompt out as the test set; prompt 8 serves as the
dev set except in fold 8, where prompt 7 takes over. The dev prompt is
excluded from training (it is reserved for predictor hyperparameters;
the shipped closed-form baseline does not consume it). Training always
uses the pair's train variant and scoring always uses its eval variant,
so training on cleaned text while evaluating on the original is one
flag away.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Mapping, Protocol, Sequence

import numpy as np

from .corpus import EssayRecord, segment_sentences
from .errors import NumericalError, ValidationError
from .metrics import EvalReport, evaluate_predictions
from .noise import DETACHED_PUNCTUATION, detect_noise

RIDGE_LAMBDA = 1e-3
PROMPTS = tuple(range(1, 9))
FEATURE_NAMES = (
    "token_count",
    "mean_sentence_length",
    "type_token_ratio",
    "noise_span_count",
    "punctuation_count",
)


class Variant(Enum):
    ORIGINAL = "original"
    ENCODING_FIXED = "encoding_fixed"
    CLEANED = "cleaned"


@dataclass(frozen=True)
class VariantPair:
    train_variant: Variant
    eval_variant: Variant

    @property
    def label(self) -> str:
        return _PAIR_LABELS.get(
            (self.train_variant, self.eval_variant),
            f"{self.train_variant.value}->{self.eval_variant.value}",
        )


_PAIR_LABELS = {
    (Variant.ORIGINAL, Variant.ORIGINAL): "Original",
    (Variant.ENCODING_FIXED, Variant.ORIGINAL): "Encoding fixed",
    (Variant.CLEANED, Variant.CLEANED): "Cleaned'",
    (Variant.CLEANED, Variant.ORIGINAL): "Cleaned",
}


@dataclass(frozen=True)
class FoldSpec:
    test_prompt: int
    dev_prompt: int
    train_prompts: frozenset[int]

    def __post_init__(self) -> None:
        members = {self.test_prompt, self.dev_prompt, *self.train_prompts}
        if (
            members != set(PROMPTS)
            or self.test_prompt == self.dev_prompt
            or self.test_prompt in self.train_prompts
            or self.dev_prompt in self.train_prompts
        ):
            raise ValidationError(f"fold is not a disjoint cover of prompts: {self}")


def make_folds() -> list[FoldSpec]:
    folds = []
    for test in PROMPTS:
        dev = 8 if test != 8 else 7
        train = frozenset(PROMPTS) - {test, dev}
        folds.append(FoldSpec(test_prompt=test, dev_prompt=dev, train_prompts=train))
    return folds


def essay_features(record: EssayRecord) -> np.ndarray:
    """Shallow per-essay features: token count, mean sentence length,
    type-token ratio, noise-span count, punctuation count."""
    sentences = segment_sentences(record)
    tokens = [t for s in sentences for t in s.tokens]
    n = len(tokens)
    mean_len = n / len(sentences)
    ttr = len({t.lower() for t in tokens}) / n if n else 0.0
    noise_count = sum(len(detect_noise(s.tokens)) for s in sentences)
    punct = sum(
        1 for t in tokens if t and all(c in DETACHED_PUNCTUATION for c in t)
    )
    return np.array([n, mean_len, ttr, noise_count, punct], dtype=float)


class Predictor(Protocol):
    def predict(self, features: np.ndarray) -> float: ...


@dataclass(frozen=True)
class BaselinePredictor:
    """Closed-form ridge regression over z-normalized features; the
    intercept is coef[0]."""

    coef: np.ndarray
    feature_mean: np.ndarray
    feature_scale: np.ndarray

    def predict(self, features: np.ndarray) -> float:
        return predict(self, features)


def fit_baseline(
    train: Sequence[tuple[np.ndarray, float]],
    ridge_lambda: float = RIDGE_LAMBDA,
) -> BaselinePredictor:
    """Solve (X'X + lambda*I) beta = X'y on the z-normalized, intercept-
    augmented design."""
    if len(train) < 2:
        raise ValidationError(f"need at least 2 training rows, got {len(train)}")
    X = np.array([np.asarray(f, dtype=float) for f, _ in train])
    y = np.array([score for _, score in train], dtype=float)
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale = np.where(scale == 0.0, 1.0, scale)
    design = np.hstack([np.ones((len(X), 1)), (X - mean) / scale])
    gram = design.T @ design + ridge_lambda * np.eye(design.shape[1])
    try:
        coef = np.linalg.solve(gram, design.T @ y)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"singular normal equations: {exc}") from exc
    return BaselinePredictor(coef=coef, feature_mean=mean, feature_scale=scale)


def predict(model: BaselinePredictor, features: np.ndarray) -> float:
    """Linear evaluation clamped to [0, 1]."""
    f = np.asarray(features, dtype=float)
    if f.shape != model.feature_mean.shape:
        raise ValidationError(
            f"feature count mismatch: got {f.shape}, expected {model.feature_mean.shape}"
        )
    z = (f - model.feature_mean) / model.feature_scale
    value = float(model.coef[0] + z @ model.coef[1:])
    return min(1.0, max(0.0, value))


@dataclass(frozen=True)
class RunReport:
    pair: VariantPair
    per_fold: Mapping[int, EvalReport]
    average: EvalReport

    def to_dict(self) -> dict:
        return {
            "pair": {
                "train": self.pair.train_variant.value,
                "eval": self.pair.eval_variant.value,
                "label": self.pair.label,
            },
            "per_fold": {str(k): v.to_dict() for k, v in sorted(self.per_fold.items())},
            "average": self.average.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _mean_or_none(values: Sequence[float | None]) -> float | None:
    if any(v is None for v in values):
        return None
    return float(sum(values)) / len(values)


def _average_reports(reports: Sequence[EvalReport]) -> EvalReport:
    mse = _mean_or_none([r.mse for r in reports])
    return EvalReport(
        qwk=_mean_or_none([r.qwk for r in reports]),
        krc=_mean_or_none([r.krc for r in reports]),
        src=_mean_or_none([r.src for r in reports]),
        pcc=_mean_or_none([r.pcc for r in reports]),
        mse=mse,
        rmsd=_mean_or_none([r.rmsd for r in reports]),
    )


def _check_variants(variants: Mapping[Variant, Sequence[EssayRecord]]) -> None:
    items = sorted(variants.items(), key=lambda kv: kv[0].value)
    base_name, base_records = items[0]
    base = {r.essay_id: (r.essay_set, r.raw_score) for r in base_records}
    if len(base) != len(base_records):
        raise ValidationError(f"variant {base_name.value} has duplicate essay ids")
    for name, records in items[1:]:
        other = {r.essay_id: (r.essay_set, r.raw_score) for r in records}
        if other != base:
            raise ValidationError(
                f"variant {name.value} disagrees with {base_name.value} on "
                "essay ids, sets, or scores"
            )


def run_experiment(
    variants: Mapping[Variant, Sequence[EssayRecord]],
    pair: VariantPair,
    predictor_factory: Callable[[Sequence[tuple[np.ndarray, float]]], Predictor] = fit_baseline,
    folds: Sequence[FoldSpec] | None = None,
) -> RunReport:
    """Fit on the train variant of each fold's train prompts, score the
    eval variant of its test prompt, and average the reports."""
    for needed in (pair.train_variant, pair.eval_variant):
        if needed not in variants:
            raise ValidationError(f"missing records for variant {needed.value}")
    _check_variants(variants)

    feature_cache: dict[tuple[Variant, int], np.ndarray] = {}

    def features_of(variant: Variant, record: EssayRecord) -> np.ndarray:
        key = (variant, record.essay_id)
        if key not in feature_cache:
            feature_cache[key] = essay_features(record)
        return feature_cache[key]

    per_fold: dict[int, EvalReport] = {}
    for fold in folds if folds is not None else make_folds():
        train_rows = [
            (features_of(pair.train_variant, r), r.normalized_score)
            for r in variants[pair.train_variant]
            if r.essay_set in fold.train_prompts
        ]
        test_records = [
            r
            for r in variants[pair.eval_variant]
            if r.essay_set == fold.test_prompt
        ]
        if len(train_rows) < 2:
            raise ValidationError(
                f"fold {fold.test_prompt}: fewer than 2 training essays"
            )
        if not test_records:
            raise ValidationError(f"fold {fold.test_prompt}: no test essays")
        model = predictor_factory(train_rows)
        preds = [
            model.predict(features_of(pair.eval_variant, r)) for r in test_records
        ]
        gold = [r.normalized_score for r in test_records]
        per_fold[fold.test_prompt] = evaluate_predictions(preds, gold)

    return RunReport(
        pair=pair,
        per_fold=per_fold,
        average=_average_reports([per_fold[k] for k in sorted(per_fold)]),
    )


def format_table(report: RunReport) -> str:
    """Aligned-column text table: one row per metric, one column per
    test prompt plus the cross-fold average."""
    fold_keys = sorted(report.per_fold)
    headers = [""] + [f"Prompt {k}" for k in fold_keys] + ["Average"]

    def fmt(value: float | None) -> str:
        return "n/a" if value is None else f"{value:.4f}"

    rows = []
    for metric in ("qwk", "krc", "src", "pcc", "mse", "rmsd"):
        cells = [metric.upper()]
        cells.extend(fmt(getattr(report.per_fold[k], metric)) for k in fold_keys)
        cells.append(fmt(getattr(report.average, metric)))
        rows.append(cells)

    widths = [
        max(len(row[i]) for row in [headers] + rows) for i in range(len(headers))
    ]
    lines = [report.pair.label]
    lines.append("  ".join(h.rjust(w) for h, w in zip(headers, widths)))
    for row in rows:
        lines.append("  ".join(c.rjust(w) for c, w in zip(row, widths)))
    return "\n".join(lines) + "\n"
