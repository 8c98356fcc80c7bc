"""Accuracy and uncertainty metrics for evidential regressors."""

from dataclasses import asdict, dataclass
import json

import numpy as np

from .losses import nll_loss
from .nig import EvidentialOutput, marginal_cdf

ECE_LEVELS = np.round(np.arange(1, 101) / 100.0, 2)


@dataclass(frozen=True)
class MetricsReport:
    rmse: float
    mean_nll: float
    ci: float | None
    ece: float
    count: int

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True)


def _nonempty(*arrays):
    arrays = [np.atleast_1d(np.asarray(a, dtype=float)) for a in arrays]
    if any(a.size == 0 for a in arrays):
        raise ValueError("metric requires a nonempty input")
    if len({a.shape for a in arrays}) > 1:
        raise ValueError("metric inputs must have equal lengths")
    return arrays


def rmse(ys, preds):
    ys, preds = _nonempty(ys, preds)
    return float(np.sqrt(np.mean((ys - preds) ** 2)))


def mean_nll(ys, ms: EvidentialOutput):
    (ys,) = _nonempty(ys)
    return float(np.mean(nll_loss(ys, ms)))


def concordance_index(ys, preds):
    """Fraction of strictly ordered target pairs whose predictions agree.

    Prediction ties count one half. Returns ``None`` when no pair has
    ``y_i > y_j``.
    """
    ys, preds = _nonempty(ys, preds)
    if ys.size < 2:
        raise ValueError("concordance index needs at least two samples")
    ordered = ys[:, None] > ys[None, :]
    n_pairs = int(ordered.sum())
    if n_pairs == 0:
        return None
    diff = preds[:, None] - preds[None, :]
    h = np.where(diff > 0, 1.0, np.where(diff == 0, 0.5, 0.0))
    return float(h[ordered].sum() / n_pairs)


def central_coverage(ys, ms: EvidentialOutput):
    """Smallest central-interval probability that contains each target.

    A target ``y`` lies in the closed central ``P`` interval of its
    symmetric marginal iff ``2 * cdf(|y - loc| + loc) - 1 <= P``.
    """
    ys = np.atleast_1d(np.asarray(ys, dtype=float))
    loc = np.atleast_1d(np.asarray(ms.gamma, dtype=float))
    upper = marginal_cdf(loc + np.abs(ys - loc), ms)
    return 2.0 * np.asarray(upper) - 1.0


def coverage_curve(ys, ms: EvidentialOutput, levels=ECE_LEVELS):
    """Empirical coverage ``acc(P)`` for each probability level ``P``."""
    (ys,) = _nonempty(ys)
    needed = central_coverage(ys, ms)
    levels = np.asarray(levels, dtype=float)
    return (needed[None, :] <= levels[:, None]).mean(axis=1)


def ece(ys, ms: EvidentialOutput, levels=ECE_LEVELS):
    """Mean absolute gap between coverage and nominal level over the level grid."""
    acc = coverage_curve(ys, ms, levels)
    return float(np.mean(np.abs(acc - np.asarray(levels))))


def auroc(scores_id, scores_ood):
    """Probability an OOD score exceeds an ID score, ties counting one half."""
    neg, pos = (np.atleast_1d(np.asarray(s, dtype=float)) for s in (scores_id, scores_ood))
    if neg.size == 0 or pos.size == 0:
        raise ValueError("auroc needs nonempty score lists on both sides")
    scores = np.concatenate([neg, pos])
    # average ranks handle ties exactly (Mann-Whitney U)
    order = np.argsort(scores, kind="mergesort")
    sorted_scores = scores[order]
    ranks = np.empty(scores.size)
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    u = ranks[neg.size:].sum() - pos.size * (pos.size + 1) / 2.0
    return float(u / (pos.size * neg.size))


def report(ys, ms: EvidentialOutput) -> MetricsReport:
    ys = np.atleast_1d(np.asarray(ys, dtype=float))
    gammas = np.atleast_1d(np.asarray(ms.gamma, dtype=float))
    return MetricsReport(
        rmse=rmse(ys, gammas),
        mean_nll=mean_nll(ys, ms),
        ci=concordance_index(ys, gammas) if ys.size >= 2 else None,
        ece=ece(ys, ms),
        count=int(ys.size),
    )
