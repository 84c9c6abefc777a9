"""Evaluation metrics for score prediction, plus perplexity aggregation.

Six metrics make up a report: quadratic weighted kappa on integer
ratings, Kendall tau-b, Spearman and Pearson correlations, mean squared
error in normalized-score units, and its square root. Normalized values
are mapped to integer ratings by multiplying by 100 and rounding half
away from zero, giving QWK a fixed [0, 100] rating range.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Sequence, Union

import numpy as np
from scipy import stats as _scipy_stats

from .errors import FormatError, ValidationError

QWK_RATING_MIN = 0
QWK_RATING_MAX = 100


@dataclass(frozen=True)
class EvalReport:
    """One row of results. Correlations are None when undefined
    (constant input), never a silent zero.

    A freshly computed report satisfies rmsd == sqrt(mse); a cross-fold
    average report does not, because every field is averaged
    independently.
    """

    qwk: float | None
    krc: float | None
    src: float | None
    pcc: float | None
    mse: float
    rmsd: float

    def __post_init__(self) -> None:
        for name in ("qwk", "krc", "src", "pcc"):
            value = getattr(self, name)
            if value is not None and not -1.0 <= value <= 1.0:
                raise ValidationError(f"{name}={value} outside [-1, 1]")

    def to_dict(self) -> dict:
        return {
            "qwk": self.qwk,
            "krc": self.krc,
            "src": self.src,
            "pcc": self.pcc,
            "mse": self.mse,
            "rmsd": self.rmsd,
        }


@dataclass(frozen=True)
class PerplexityReport:
    sentence_ppl: float
    token_ppl: float


def qwk(
    rater_a: Sequence[int],
    rater_b: Sequence[int],
    min_rating: int,
    max_rating: int,
) -> float:
    """Quadratic weighted kappa: 1 - sum(w*O) / sum(w*E).

    O is the observed confusion matrix, E the outer product of the
    marginal histograms normalized to O's total, and
    w[i][j] = (i - j)^2 / (k - 1)^2. Two identical constant vectors
    return 1.0 by convention.
    """
    if len(rater_a) != len(rater_b):
        raise ValidationError(
            f"rating vectors differ in length: {len(rater_a)} vs {len(rater_b)}"
        )
    if not rater_a:
        raise ValidationError("empty rating vectors")
    if max_rating < min_rating:
        raise ValidationError("max_rating < min_rating")
    a = np.asarray(rater_a)
    b = np.asarray(rater_b)
    if not (
        np.issubdtype(a.dtype, np.integer) and np.issubdtype(b.dtype, np.integer)
    ):
        raise ValidationError("ratings must be integers")
    for name, values in (("rater_a", a), ("rater_b", b)):
        if values.min() < min_rating or values.max() > max_rating:
            raise ValidationError(f"{name} has values outside [{min_rating}, {max_rating}]")

    k = max_rating - min_rating + 1
    if k == 1:
        return 1.0
    n = len(a)
    observed = np.zeros((k, k))
    np.add.at(observed, (a - min_rating, b - min_rating), 1)
    idx = np.arange(k)
    weights = (idx[:, None] - idx[None, :]) ** 2 / (k - 1) ** 2
    hist_a = np.bincount(a - min_rating, minlength=k)
    hist_b = np.bincount(b - min_rating, minlength=k)
    expected = np.outer(hist_a, hist_b) / n
    denominator = float((weights * expected).sum())
    if denominator == 0.0:
        return 1.0
    return 1.0 - float((weights * observed).sum()) / denominator


class RankLinearStats(NamedTuple):
    krc: float | None
    src: float | None
    pcc: float | None
    mse: float
    rmsd: float


def _clip_corr(value: float) -> float:
    return min(1.0, max(-1.0, float(value)))


def rank_and_linear_stats(
    pred: Sequence[float], gold: Sequence[float]
) -> RankLinearStats:
    """Kendall tau-b (tie-corrected), Spearman, Pearson, MSE and RMSD.

    With a constant input on either side the correlations are undefined
    and reported as None; MSE and RMSD are always computed.
    """
    p = np.asarray(pred, dtype=float)
    g = np.asarray(gold, dtype=float)
    if p.shape != g.shape or p.ndim != 1:
        raise ValidationError("pred and gold must be equal-length vectors")
    if len(p) < 2:
        raise ValidationError("need at least 2 observations")
    mse = float(np.mean((p - g) ** 2))
    rmsd = math.sqrt(mse)
    if np.all(p == p[0]) or np.all(g == g[0]):
        return RankLinearStats(None, None, None, mse, rmsd)
    krc = _clip_corr(_scipy_stats.kendalltau(p, g).statistic)
    src = _clip_corr(_scipy_stats.spearmanr(p, g).statistic)
    pcc = _clip_corr(_scipy_stats.pearsonr(p, g).statistic)
    return RankLinearStats(krc, src, pcc, mse, rmsd)


def perplexity(token_logprobs: Sequence[Sequence[float]]) -> PerplexityReport:
    """Aggregate natural-log token probabilities.

    token_ppl exponentiates the corpus-average negative log probability;
    sentence_ppl is the arithmetic mean of per-sentence perplexities.
    """
    if not token_logprobs:
        raise ValidationError("empty corpus")
    sentence_ppls = []
    total = 0.0
    count = 0
    for i, logprobs in enumerate(token_logprobs):
        if not len(logprobs):
            raise ValidationError(f"sentence {i} has no scored tokens")
        s = float(sum(logprobs))
        sentence_ppls.append(math.exp(-s / len(logprobs)))
        total += s
        count += len(logprobs)
    return PerplexityReport(
        sentence_ppl=sum(sentence_ppls) / len(sentence_ppls),
        token_ppl=math.exp(-total / count),
    )


def load_token_logprobs(path: Union[str, Path]) -> list[list[float]]:
    """Read per-sentence token log-probabilities from a JSON-lines file:
    one object per sentence with essay_id, sentence_index and logprobs."""
    rows: list[list[float]] = []
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"line {lineno}: invalid JSON: {exc}") from exc
            if not isinstance(obj, dict):
                raise FormatError(f"line {lineno}: expected an object")
            for field_name in ("essay_id", "sentence_index", "logprobs"):
                if field_name not in obj:
                    raise FormatError(f"line {lineno}: missing field {field_name!r}")
            logprobs = obj["logprobs"]
            if not isinstance(logprobs, list) or not all(
                isinstance(v, (int, float)) for v in logprobs
            ):
                raise FormatError(f"line {lineno}: logprobs must be a list of numbers")
            rows.append([float(v) for v in logprobs])
    return rows


def round_half_away(x: float) -> int:
    """Round with ties going away from zero (0.5 -> 1, -0.5 -> -1)."""
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


def to_rating(value: float) -> int:
    """Clamp a normalized value to [0, 1] and scale to a 0..100 rating."""
    return round_half_away(100.0 * min(1.0, max(0.0, value)))


def evaluate_predictions(
    pred: Sequence[float], gold: Sequence[float]
) -> EvalReport:
    """Full report over normalized predictions and gold scores."""
    if len(pred) != len(gold):
        raise ValidationError(
            f"prediction/gold length mismatch: {len(pred)} vs {len(gold)}"
        )
    rank_stats = rank_and_linear_stats(pred, gold)
    ratings_pred = [to_rating(v) for v in pred]
    ratings_gold = [to_rating(v) for v in gold]
    kappa = _clip_corr(qwk(ratings_pred, ratings_gold, QWK_RATING_MIN, QWK_RATING_MAX))
    return EvalReport(
        qwk=kappa,
        krc=rank_stats.krc,
        src=rank_stats.src,
        pcc=rank_stats.pcc,
        mse=rank_stats.mse,
        rmsd=rank_stats.rmsd,
    )
