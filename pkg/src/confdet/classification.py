"""Conformal prediction sets for the class label.

Scores follow the adaptive family: the score of a class is the total
probability mass of all classes ranked at or above it, optionally plus a
rank penalty that discourages deep sets (the regularized variant).  A
conformal quantile of the calibration scores then thresholds the running
total at assembly time.  Everything is deterministic: no tie-breaking or
set-membership randomization, ties in probability are broken by ascending
class id.
"""

from __future__ import annotations

import math

import numpy as np

from .core import PredictionSet, RAPSConfig
from .errors import InvalidClass, OutOfRange
from .regression import conformal_quantile

__all__ = [
    "aps_score",
    "raps_score",
    "true_class_scores",
    "classification_quantile",
    "build_prediction_set",
    "prediction_set_matrix",
]


def class_order(class_probs: np.ndarray) -> np.ndarray:
    """Class ids sorted by descending probability, ties by ascending id."""
    p = np.asarray(class_probs, dtype=float)
    return np.argsort(-p, axis=-1, kind="stable")


def _check_class(class_probs, true_class) -> None:
    k = len(class_probs)
    if isinstance(true_class, bool) or not isinstance(true_class, (int, np.integer)):
        raise InvalidClass(f"true_class must be an integer, got {true_class!r}")
    if not 0 <= true_class < k:
        raise InvalidClass(f"true_class {true_class} outside [0, {k})")


def aps_score(class_probs, true_class: int) -> float:
    """Adaptive score: probability mass from the top class down to the truth.

    Sorts the probabilities in descending order and sums them through the
    rank of the true class (inclusive).  Low scores mean the true class
    sits near the top of the ranking.
    """
    _check_class(class_probs, true_class)
    p = np.asarray(class_probs, dtype=float)
    order = class_order(p)
    rank = int(np.nonzero(order == true_class)[0][0])  # 0-based
    return float(p[order[: rank + 1]].sum())


def raps_score(class_probs, true_class: int, config: RAPSConfig) -> float:
    """Regularized adaptive score.

    Equal to :func:`aps_score` plus ``penalty_a * max(0, rank - threshold_b)``
    where ``rank`` is the 1-based rank of the true class.  The penalty
    grows with depth, so deep tail classes become expensive and the fitted
    threshold stops admitting them.
    """
    base = aps_score(class_probs, true_class)
    p = np.asarray(class_probs, dtype=float)
    rank = int(np.nonzero(class_order(p) == true_class)[0][0]) + 1
    return base + config.penalty_a * max(0, rank - config.threshold_b)


def true_class_scores(probs: np.ndarray, labels: np.ndarray, config: RAPSConfig | None = None) -> np.ndarray:
    """Vectorized scores of the true class for an ``(n, K)`` batch.

    ``config=None`` gives plain adaptive scores (no penalty).
    """
    p = np.asarray(probs, dtype=float)
    labels = np.asarray(labels, dtype=int)
    n, k = p.shape
    if np.any((labels < 0) | (labels >= k)):
        raise InvalidClass("labels must lie in [0, K)")
    order = class_order(p)
    sorted_p = np.take_along_axis(p, order, axis=1)
    csum = np.cumsum(sorted_p, axis=1)
    ranks = np.empty((n, k), dtype=int)
    np.put_along_axis(ranks, order, np.arange(k)[None, :], axis=1)
    rank_true = ranks[np.arange(n), labels]  # 0-based
    scores = csum[np.arange(n), rank_true]
    if config is not None and config.penalty_a > 0:
        scores = scores + config.penalty_a * np.maximum(0, rank_true + 1 - config.threshold_b)
    return scores


def classification_quantile(scores, alpha: float) -> float:
    """Conformal quantile of classification scores.

    Same order statistic as the regression quantile: the
    ``ceil((n + 1) (1 - alpha))``-th smallest score, ``+inf`` when the
    calibration set is too small for the level.
    """
    return conformal_quantile(scores, alpha)


def _running_totals(sorted_p: np.ndarray, config: RAPSConfig) -> np.ndarray:
    """Cumulative totals used by the set rule, penalty included if configured."""
    csum = np.cumsum(sorted_p, axis=-1)
    if config.penalty_a > 0 and config.penalty_at_inference:
        k = sorted_p.shape[-1]
        penalty = config.penalty_a * np.maximum(0, np.arange(1, k + 1) - config.threshold_b)
        csum = csum + penalty
    return csum


def build_prediction_set(class_probs, qhat: float, config: RAPSConfig) -> PredictionSet:
    """Assemble the prediction set for one probability vector.

    With ``allow_empty=False`` (default) classes are added in descending
    probability order while the running total stays below ``qhat``, then
    the class that crosses the threshold is added too, capped at ``K``; a
    threshold of zero would yield nothing, in which case the single
    top-probability class is returned.  With ``allow_empty=True`` the set
    keeps exactly the classes whose running total is within ``qhat``,
    which can be empty; this exact rule is the one whose coverage matches
    the calibration guarantee, while the crossing rule is slightly
    conservative.

    A ``qhat`` of ``+inf`` (vacuous calibration) returns all classes.
    """
    p = np.asarray(class_probs, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise OutOfRange("class_probs must be a non-empty vector")
    if math.isnan(qhat) or qhat < 0:
        raise OutOfRange(f"qhat must be >= 0, got {qhat!r}")
    order = class_order(p)
    k_total = p.size
    if math.isinf(qhat):
        return PredictionSet(classes=tuple(int(c) for c in order), qhat_class=qhat)
    totals = _running_totals(p[order], config)
    if config.allow_empty:
        size = int(np.count_nonzero(totals <= qhat))
    elif qhat > 0:
        # the running total before admitting rank r is totals[r-2], zero for r=1
        size = min(1 + int(np.count_nonzero(totals[:-1] < qhat)), k_total)
    else:
        size = 1  # a zero threshold admits nothing; keep the top class
    return PredictionSet(classes=tuple(int(c) for c in order[:size]), qhat_class=float(qhat))


def prediction_set_matrix(probs: np.ndarray, qhat: float, config: RAPSConfig):
    """Vectorized set assembly for an ``(n, K)`` probability batch.

    Returns
    -------
    member : ndarray of bool, shape (n, K)
        ``member[i, c]`` is True when class ``c`` is in record ``i``'s set.
    sizes : ndarray of int, shape (n,)
    """
    p = np.asarray(probs, dtype=float)
    n, k_total = p.shape
    if math.isnan(qhat) or qhat < 0:
        raise OutOfRange(f"qhat must be >= 0, got {qhat!r}")
    if math.isinf(qhat):
        member = np.ones((n, k_total), dtype=bool)
        return member, np.full(n, k_total, dtype=int)
    order = class_order(p)
    totals = _running_totals(np.take_along_axis(p, order, axis=1), config)
    if config.allow_empty:
        sizes = (totals <= qhat).sum(axis=1)
    else:
        if qhat > 0:
            sizes = np.minimum(1 + (totals[:, :-1] < qhat).sum(axis=1), k_total)
        else:
            sizes = np.ones(n, dtype=int)  # forced non-empty
    in_prefix = np.arange(k_total)[None, :] < sizes[:, None]
    member = np.zeros((n, k_total), dtype=bool)
    np.put_along_axis(member, order, in_prefix, axis=1)
    return member, sizes.astype(int)
