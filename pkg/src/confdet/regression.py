"""Split conformal prediction for box corners.

The residual of each corner is conformalized independently: a
nonconformity score per corner, a finite-sample quantile of the
calibration scores, and a symmetric interval around the prediction.  The
four intervals assemble into a :class:`~confdet.core.ConformalBox`.
Everything here is distribution-free; the only randomness assumption is
exchangeability between calibration and test records.
"""

from __future__ import annotations

import logging
import math
from decimal import Decimal
from fractions import Fraction

import numpy as np

from .core import (
    AGNOSTIC,
    DEFAULT_IMAGE_BOUNDS,
    SCOPE_CLASS_AGNOSTIC,
    SCOPE_CLASS_WISE,
    BoundingBox,
    ConformalBox,
    QuantileTable,
    records_to_arrays,
)
from .errors import EmptyCalibration, MissingClass, NonPositiveSigma, OutOfRange

logger = logging.getLogger(__name__)

#: Default number of calibration records per class below which a
#: class-wise fit flags the class as unreliable (it still fits).
MIN_PER_CLASS = 20


def score_unscaled(pred_box: BoundingBox, gt_box: BoundingBox) -> np.ndarray:
    """Absolute corner residuals ``|pred - gt|`` as a length-4 array."""
    return np.abs(pred_box.as_array() - gt_box.as_array())


def score_scaled(pred_box: BoundingBox, gt_box: BoundingBox, sigma) -> np.ndarray:
    """Absolute corner residuals divided by the predicted sigma.

    Scaling by a per-corner uncertainty estimate lets a single quantile
    produce locally adaptive interval widths.

    Raises
    ------
    NonPositiveSigma
        If any sigma entry is not strictly positive.
    """
    s = np.asarray(sigma, dtype=float)
    if s.shape != (4,):
        raise NonPositiveSigma(f"sigma must have 4 entries, got shape {s.shape}")
    if not np.all(np.isfinite(s) & (s > 0)):
        raise NonPositiveSigma(f"sigma entries must be > 0, got {sigma!r}")
    return np.abs(pred_box.as_array() - gt_box.as_array()) / s


def residual_scores(pred: np.ndarray, gt: np.ndarray, sigma: np.ndarray | None = None) -> np.ndarray:
    """Vectorized corner scores for ``(n, 4)`` coordinate arrays.

    With ``sigma=None`` this is the unscaled score, otherwise the scaled
    one.  Used by the experiment pipeline; the record-level functions
    above are the convenient single-pair entry points.
    """
    resid = np.abs(np.asarray(pred, dtype=float) - np.asarray(gt, dtype=float))
    if sigma is None:
        return resid
    s = np.asarray(sigma, dtype=float)
    if not np.all(np.isfinite(s) & (s > 0)):
        raise NonPositiveSigma("all sigma entries must be > 0 for scaled scores")
    return resid / s


def conformal_quantile(scores, alpha: float) -> float:
    """Finite-sample calibration quantile of a score sample.

    Returns the ``ceil((n + 1) * (1 - alpha))``-th smallest score, which
    inflates the empirical ``1 - alpha`` quantile just enough to account
    for the test point.  When that rank exceeds ``n`` (calibration set too
    small for the requested level) the quantile is ``+inf`` and downstream
    intervals become vacuous.  The rank is computed in exact arithmetic
    with ``alpha`` read at its shortest round-trip decimal, so typed
    levels like 0.3 sit on the integer boundaries they describe.

    Parameters
    ----------
    scores : array-like
        Calibration scores, any order, ties allowed.
    alpha : float
        Miscoverage level in ``(0, 1)``.

    Returns
    -------
    float
        The calibrated quantile, possibly ``+inf``.
    """
    if not 0.0 < alpha < 1.0:
        raise OutOfRange(f"alpha must lie in (0, 1), got {alpha!r}")
    s = np.asarray(scores, dtype=float).ravel()
    n = s.size
    if n == 0:
        raise EmptyCalibration("conformal_quantile needs at least one score")
    rank = _order_rank(n, alpha)
    if rank > n:
        return math.inf
    return float(np.partition(s, rank - 1)[rank - 1])


def bonferroni_corner_alpha(alpha_bbox: float) -> float:
    """Per-corner miscoverage that guarantees box-level ``1 - alpha_bbox``.

    Splitting the budget evenly over the four corners needs no assumption
    on the dependence between corner residuals (union bound).
    """
    if not 0.0 < alpha_bbox < 1.0:
        raise OutOfRange(f"alpha_bbox must lie in (0, 1), got {alpha_bbox!r}")
    return alpha_bbox / 4.0


def _corner_quantiles(scores: np.ndarray, alpha: float) -> tuple[float, float, float, float]:
    return tuple(conformal_quantile(scores[:, c], alpha) for c in range(4))


def _order_rank(n: int, alpha: float) -> int:
    # alpha is taken at its shortest round-trip decimal and the ceil is
    # exact: the float product grazes integers at levels like 0.3 with
    # n = 9, where ceil(10 * 0.7) must be 7, not 8
    exact = Fraction(Decimal(repr(float(alpha))))
    return math.ceil((n + 1) * (1 - exact))


def _order_level(n: int, alpha: float) -> float:
    return _order_rank(n, alpha) / n


def fit_quantiles_from_scores(
    scores: np.ndarray,
    alpha_corner: float,
    groups: np.ndarray | None = None,
    n_classes: int | None = None,
    min_per_class: int = MIN_PER_CLASS,
) -> QuantileTable:
    """Fit a quantile table directly from a ``(n, 4)`` score matrix.

    ``groups=None`` fits a single class-agnostic group; otherwise
    ``groups`` holds the class id of each row and every id in
    ``[0, n_classes)`` must be present.
    """
    scores = np.asarray(scores, dtype=float)
    if scores.ndim != 2 or scores.shape[1] != 4:
        raise OutOfRange(f"scores must have shape (n, 4), got {scores.shape}")
    if scores.shape[0] == 0:
        raise EmptyCalibration("no calibration scores")

    if groups is None:
        n = scores.shape[0]
        return QuantileTable(
            scope=SCOPE_CLASS_AGNOSTIC,
            quantiles={AGNOSTIC: _corner_quantiles(scores, alpha_corner)},
            level={AGNOSTIC: _order_level(n, alpha_corner)},
            n_per_group={AGNOSTIC: n},
            alpha_corner=alpha_corner,
        )

    groups = np.asarray(groups, dtype=int)
    if n_classes is None:
        n_classes = int(groups.max()) + 1
    quantiles: dict = {}
    level: dict = {}
    n_per_group: dict = {}
    flagged = []
    for k in range(n_classes):
        mask = groups == k
        n_k = int(mask.sum())
        if n_k == 0:
            raise MissingClass(
                f"class {k} has no calibration records; a class-wise fit "
                "needs every class represented"
            )
        if n_k < min_per_class:
            flagged.append(k)
        quantiles[k] = _corner_quantiles(scores[mask], alpha_corner)
        level[k] = _order_level(n_k, alpha_corner)
        n_per_group[k] = n_k
    if flagged:
        logger.warning(
            "class-wise fit: classes %s have fewer than %d calibration records; "
            "their quantiles may be unstable or vacuous",
            flagged,
            min_per_class,
        )
    return QuantileTable(
        scope=SCOPE_CLASS_WISE,
        quantiles=quantiles,
        level=level,
        n_per_group=n_per_group,
        alpha_corner=alpha_corner,
        flagged=tuple(flagged),
    )


def fit_class_agnostic(records, alpha_corner: float, scaling: str = "unscaled") -> QuantileTable:
    """Fit one quantile per corner from all records pooled together.

    Parameters
    ----------
    records : iterable of DetectionRecord
        Calibration records.
    alpha_corner : float
        Per-corner miscoverage level.
    scaling : {"unscaled", "scaled"}
        Score family; ``"scaled"`` divides residuals by the record sigma.
    """
    pred, gt, sigma, _, _ = records_to_arrays(records)
    if pred.shape[0] == 0:
        raise EmptyCalibration("fit_class_agnostic needs at least one record")
    scores = residual_scores(pred, gt, sigma if scaling == "scaled" else None)
    return fit_quantiles_from_scores(scores, alpha_corner)


def fit_class_wise(
    records,
    alpha_corner: float,
    scaling: str = "unscaled",
    min_per_class: int = MIN_PER_CLASS,
) -> QuantileTable:
    """Fit per-class corner quantiles from ground-truth classes.

    Stratifying by class restores the coverage guarantee within each
    class instead of only on average over the class mix.  Classes with
    fewer than ``min_per_class`` records are fitted anyway but flagged in
    the returned table (their quantiles may be unstable or infinite).

    Raises
    ------
    MissingClass
        If any class id in ``[0, K)`` has zero calibration records.
    """
    records = list(records)
    if not records:
        raise EmptyCalibration("fit_class_wise needs at least one record")
    pred, gt, sigma, gt_class, probs = records_to_arrays(records)
    scores = residual_scores(pred, gt, sigma if scaling == "scaled" else None)
    return fit_quantiles_from_scores(
        scores,
        alpha_corner,
        groups=gt_class,
        n_classes=probs.shape[1],
        min_per_class=min_per_class,
    )


def corner_intervals(
    pred: np.ndarray,
    quantiles: np.ndarray,
    sigma: np.ndarray | None = None,
    image_bounds: BoundingBox | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-corner intervals ``pred +- q * sigma`` with vacuous clamping.

    Broadcasts over leading dimensions, so ``pred`` may be one corner
    vector ``(4,)`` or a batch ``(n, 4)``.  Corners whose quantile is
    ``+inf`` get the full image extent on their axis (``image_bounds``,
    defaulting to :data:`~confdet.core.DEFAULT_IMAGE_BOUNDS`) so that
    downstream geometry stays finite.

    Returns
    -------
    (lows, highs) : pair of ndarray
        Interval bounds, same shape as the broadcast inputs.
    """
    pred = np.asarray(pred, dtype=float)
    q = np.asarray(quantiles, dtype=float)
    if np.any(q < 0):
        raise OutOfRange("corner quantiles must be >= 0")
    if sigma is None:
        half = np.broadcast_to(q, np.broadcast_shapes(pred.shape, q.shape)).copy()
    else:
        s = np.asarray(sigma, dtype=float)
        if not np.all(np.isfinite(s) & (s > 0)):
            raise NonPositiveSigma("all sigma entries must be > 0")
        half = q * s
    bounds = DEFAULT_IMAGE_BOUNDS if image_bounds is None else image_bounds
    axis_lo = np.array([bounds.x0, bounds.y0, bounds.x0, bounds.y0])
    axis_hi = np.array([bounds.x1, bounds.y1, bounds.x1, bounds.y1])
    vacuous = np.isinf(half)
    lows = np.where(vacuous, axis_lo, pred - half)
    highs = np.where(vacuous, axis_hi, pred + half)
    return lows, highs


def outer_inner_boxes(lows: np.ndarray, highs: np.ndarray):
    """Assemble outer and inner box corners from interval bounds.

    The outer box takes the extreme interval ends per axis (smallest low,
    largest high); the inner box takes the opposite extremes and is marked
    invalid where it inverts.

    Returns
    -------
    outer : ndarray, shape (..., 4)
    inner : ndarray, shape (..., 4)
        Meaningful only where ``inner_ok`` is True.
    inner_ok : ndarray of bool, shape (...)
    """
    l0, l1, l2, l3 = (lows[..., i] for i in range(4))
    h0, h1, h2, h3 = (highs[..., i] for i in range(4))
    outer = np.stack(
        [np.minimum(l0, l2), np.minimum(l1, l3), np.maximum(h0, h2), np.maximum(h1, h3)],
        axis=-1,
    )
    inner = np.stack(
        [np.minimum(h0, h2), np.minimum(h1, h3), np.maximum(l0, l2), np.maximum(l1, l3)],
        axis=-1,
    )
    inner_ok = (inner[..., 0] <= inner[..., 2]) & (inner[..., 1] <= inner[..., 3])
    return outer, inner, inner_ok


def build_conformal_box(
    pred_box: BoundingBox,
    sigma,
    quantiles,
    image_bounds: BoundingBox | None = None,
) -> ConformalBox:
    """Assemble the conformal box region for one prediction.

    Parameters
    ----------
    pred_box : BoundingBox
        Predicted box.
    sigma : length-4 array-like or None
        Corner sigmas for scaled intervals; None for unscaled.
    quantiles : length-4 array-like
        Per-corner conformal quantiles, ``+inf`` allowed.
    image_bounds : BoundingBox, optional
        Clamp target for vacuous corners.  No other clipping is applied;
        outer boxes may extend beyond the image, which keeps coverage
        statements exact.  Clip for rendering only.
    """
    lows, highs = corner_intervals(
        pred_box.as_array(), np.asarray(quantiles, dtype=float), sigma=None if sigma is None else np.asarray(sigma, dtype=float), image_bounds=image_bounds
    )
    outer, inner, inner_ok = outer_inner_boxes(lows, highs)
    return ConformalBox(
        lows=tuple(float(v) for v in lows),
        highs=tuple(float(v) for v in highs),
        outer=BoundingBox.from_array(outer),
        inner=BoundingBox.from_array(inner) if bool(inner_ok) else None,
    )
