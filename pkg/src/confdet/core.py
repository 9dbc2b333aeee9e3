"""Core data types for conformalized object detection.

Every box is an axis-aligned corner pair in pixel coordinates and every
length-4 vector in the package (sigma, scores, quantiles, intervals)
follows the fixed corner order ``(x0, y0, x1, y1)``.  All types are
immutable, comparable, and safe to share across worker processes.

Construction never validates: a ``DetectionRecord`` built from garbage is
still a value. :func:`validate_record` reports every violation instead so
that loaders can decide whether to reject a line or abort.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .errors import OutOfRange, ValidationError

#: Index of the group key used by class-agnostic quantile tables.
AGNOSTIC = "agnostic"

#: Corner indices that live on the x axis / y axis.
X_CORNERS = (0, 2)
Y_CORNERS = (1, 3)

CORNER_NAMES = ("x0", "y0", "x1", "y1")

#: Absolute tolerance for the class-probability sum check.
PROB_SUM_TOL = 1e-6

SCOPE_CLASS_AGNOSTIC = "class_agnostic"
SCOPE_CLASS_WISE = "class_wise"


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box given by its top-left and bottom-right corners.

    The intended invariants are ``x0 <= x1`` and ``y0 <= y1``; degenerate
    (zero width or height) boxes are legal.  Violations are reported by
    :func:`validate_record`, not enforced here.
    """

    x0: float
    y0: float
    x1: float
    y1: float

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    def as_array(self) -> np.ndarray:
        return np.array([self.x0, self.y0, self.x1, self.y1], dtype=float)

    @classmethod
    def from_array(cls, arr) -> "BoundingBox":
        x0, y0, x1, y1 = (float(v) for v in arr)
        return cls(x0, y0, x1, y1)

    def contains(self, other: "BoundingBox") -> bool:
        """True when ``other`` lies fully inside this box (bounds inclusive)."""
        return (
            self.x0 <= other.x0
            and self.y0 <= other.y0
            and other.x1 <= self.x1
            and other.y1 <= self.y1
        )


#: Clamp target for vacuous (infinite) intervals when no image size is known.
DEFAULT_IMAGE_BOUNDS = BoundingBox(0.0, 0.0, 10000.0, 10000.0)


@dataclass(frozen=True)
class DetectionRecord:
    """One matched prediction/ground-truth pair from a detector.

    Parameters
    ----------
    image_id : str
        Opaque identifier of the source image.
    pred_box, gt_box : BoundingBox
        Predicted and ground-truth boxes.  Matching predictions to ground
        truths is the caller's problem; records arrive already paired.
    gt_class : int
        Ground-truth class id in ``[0, K)``.
    class_probs : tuple of float
        Per-class probability vector of length ``K`` (sums to one).
    sigma : tuple of float
        Predicted corner standard deviations, order ``(x0, y0, x1, y1)``,
        all strictly positive.
    """

    image_id: str
    pred_box: BoundingBox
    gt_box: BoundingBox
    gt_class: int
    class_probs: tuple[float, ...]
    sigma: tuple[float, float, float, float]


def validate_record(record: DetectionRecord) -> list[str]:
    """Check a record against the data contract.

    Returns a list with one message per violated rule, empty for a valid
    record.  The check is total: it inspects every rule and never raises,
    so loaders can report all problems on a line at once.
    """
    problems: list[str] = []
    for name, box in (("pred_box", record.pred_box), ("gt_box", record.gt_box)):
        if not all(math.isfinite(v) for v in (box.x0, box.y0, box.x1, box.y1)):
            problems.append(f"{name} has non-finite coordinates")
            continue
        if box.x0 > box.x1:
            problems.append(f"{name}: x0 > x1")
        if box.y0 > box.y1:
            problems.append(f"{name}: y0 > y1")

    sigma = tuple(record.sigma)
    if len(sigma) != 4:
        problems.append(f"sigma has {len(sigma)} entries, expected 4")
    else:
        for i, s in enumerate(sigma):
            if not (math.isfinite(s) and s > 0):
                problems.append(f"sigma[{i}] not > 0")

    probs = tuple(record.class_probs)
    if len(probs) == 0:
        problems.append("class_probs is empty")
    else:
        for i, p in enumerate(probs):
            if not (math.isfinite(p) and p >= 0):
                problems.append(f"class_probs[{i}] not >= 0")
        total = math.fsum(probs)
        if not abs(total - 1.0) <= PROB_SUM_TOL:
            problems.append(
                f"class_probs sum {total:.8g} differs from 1 by more than {PROB_SUM_TOL:g}"
            )
        if not (isinstance(record.gt_class, (int, np.integer)) and not isinstance(record.gt_class, bool)):
            problems.append(f"gt_class {record.gt_class!r} is not an integer")
        elif not 0 <= record.gt_class < len(probs):
            problems.append(f"gt_class {record.gt_class} outside [0, {len(probs)})")
    return problems


@dataclass(frozen=True)
class MiscoverageConfig:
    """Target miscoverage levels.

    ``alpha_corner`` is the per-corner miscoverage of the box intervals,
    so the nominal box-level guarantee is ``1 - 4 * alpha_corner`` and the
    value must stay below 0.25.  ``alpha_class`` is the miscoverage of the
    label prediction sets.
    """

    alpha_corner: float
    alpha_class: float = 0.01

    def __post_init__(self):
        if not 0.0 < self.alpha_corner < 0.25:
            raise OutOfRange(
                f"alpha_corner must lie in (0, 0.25), got {self.alpha_corner!r}"
            )
        if not 0.0 < self.alpha_class < 1.0:
            raise OutOfRange(
                f"alpha_class must lie in (0, 1), got {self.alpha_class!r}"
            )

    @property
    def alpha_bbox(self) -> float:
        """Box-level miscoverage budget implied by the per-corner level."""
        return 4.0 * self.alpha_corner


@dataclass(frozen=True)
class RAPSConfig:
    """Settings for regularized adaptive prediction sets.

    ``penalty_a`` is the per-rank regularization weight and ``threshold_b``
    the rank past which it applies; ``penalty_a = 0`` recovers plain
    adaptive sets.  ``allow_empty`` selects the set rule: when False the
    assembly includes the class that crosses the threshold (and falls back
    to the top class if even that yields nothing), when True it keeps only
    classes whose running total stays within the threshold and may return
    an empty set.  ``penalty_at_inference`` keeps the rank penalty in the
    running total at assembly time, symmetric with scoring; set it to
    False to regularize calibration scores only.
    """

    penalty_a: float = 0.01
    threshold_b: int = 5
    allow_empty: bool = False
    penalty_at_inference: bool = True

    def __post_init__(self):
        if not (math.isfinite(self.penalty_a) and self.penalty_a >= 0):
            raise OutOfRange(f"penalty_a must be >= 0, got {self.penalty_a!r}")
        if not (isinstance(self.threshold_b, (int, np.integer)) and self.threshold_b >= 0):
            raise OutOfRange(f"threshold_b must be an integer >= 0, got {self.threshold_b!r}")


@dataclass(frozen=True)
class QuantileTable:
    """Fitted conformal quantiles, one 4-vector of corners per group.

    ``scope`` is either :data:`SCOPE_CLASS_AGNOSTIC` (single group keyed
    :data:`AGNOSTIC`) or :data:`SCOPE_CLASS_WISE` (one group per class id).
    ``level`` records the realized order-statistic level
    ``ceil((n + 1) (1 - alpha)) / n`` per group; values above 1 mark
    vacuous (infinite) quantiles.  ``flagged`` lists groups whose
    calibration count fell below the configured minimum.
    """

    scope: str
    quantiles: Mapping[object, tuple[float, float, float, float]]
    level: Mapping[object, float]
    n_per_group: Mapping[object, int]
    alpha_corner: float
    flagged: tuple = ()

    def groups(self) -> list:
        return list(self.quantiles)

    def corners(self, group) -> np.ndarray:
        """Corner quantiles for one group as a length-4 array."""
        return np.array(self.quantiles[group], dtype=float)

    def by_class(self, n_classes: int) -> np.ndarray:
        """Stack class-wise corner quantiles into a ``(K, 4)`` array."""
        if self.scope != SCOPE_CLASS_WISE:
            raise KeyError("by_class is only defined for class-wise tables")
        return np.stack([self.corners(k) for k in range(n_classes)])


@dataclass(frozen=True)
class ConformalBox:
    """Conformalized box region built from four corner intervals.

    ``lows``/``highs`` hold the per-corner interval bounds in corner
    order.  ``outer`` is the largest box compatible with the intervals
    (region hull); ``inner`` is the smallest guaranteed-inside box and is
    None when the corner intervals overlap enough to invert it.
    """

    lows: tuple[float, float, float, float]
    highs: tuple[float, float, float, float]
    outer: BoundingBox
    inner: BoundingBox | None

    def corner_interval(self, corner: int) -> tuple[float, float]:
        return self.lows[corner], self.highs[corner]


@dataclass(frozen=True)
class PredictionSet:
    """Set-valued class prediction.

    ``classes`` is ordered by descending probability (ties broken by
    ascending class id) and ``qhat_class`` echoes the threshold used to
    assemble the set.
    """

    classes: tuple[int, ...]
    qhat_class: float

    def __contains__(self, class_id) -> bool:
        return class_id in self.classes

    def __len__(self) -> int:
        return len(self.classes)


@dataclass(frozen=True)
class CalibrationMap:
    """Monotone step function from a weighted isotonic fit.

    ``breakpoints`` are strictly ascending block boundaries and ``values``
    the non-decreasing fitted block values.  Evaluation is left-constant:
    an input maps to the value of the greatest breakpoint not above it,
    with flat extrapolation on both sides.  ``scope_key`` names what the
    map calibrates: the string ``"global"`` or a ``(class_id, corner)``
    pair.
    """

    breakpoints: tuple[float, ...]
    values: tuple[float, ...]
    scope_key: object = "global"


@dataclass(frozen=True)
class Dataset:
    """An immutable collection of records with a fixed class count."""

    records: tuple[DetectionRecord, ...]
    n_classes: int

    def __len__(self) -> int:
        return len(self.records)

    @classmethod
    def from_records(cls, records: Iterable[DetectionRecord]) -> "Dataset":
        """Build a dataset, inferring the class count from the records.

        Raises
        ------
        ValidationError
            If the records disagree on the length of ``class_probs``.
        """
        recs = tuple(records)
        if not recs:
            raise ValidationError("cannot build a dataset from zero records")
        n_classes = len(recs[0].class_probs)
        for i, rec in enumerate(recs):
            if len(rec.class_probs) != n_classes:
                raise ValidationError(
                    f"class_probs length {len(rec.class_probs)} differs from "
                    f"{n_classes} inferred from the first record",
                    line=i + 1,
                )
        return cls(records=recs, n_classes=n_classes)


def records_to_arrays(records: Iterable[DetectionRecord]):
    """Unpack records into dense arrays for vectorized work.

    Returns ``(pred, gt, sigma, gt_class, class_probs)`` with shapes
    ``(n, 4)``, ``(n, 4)``, ``(n, 4)``, ``(n,)`` and ``(n, K)``.
    """
    recs = list(records)
    pred = np.array([[r.pred_box.x0, r.pred_box.y0, r.pred_box.x1, r.pred_box.y1] for r in recs], dtype=float)
    gt = np.array([[r.gt_box.x0, r.gt_box.y0, r.gt_box.x1, r.gt_box.y1] for r in recs], dtype=float)
    sigma = np.array([r.sigma for r in recs], dtype=float)
    gt_class = np.array([r.gt_class for r in recs], dtype=int)
    probs = np.array([r.class_probs for r in recs], dtype=float)
    return pred, gt, sigma, gt_class, probs
