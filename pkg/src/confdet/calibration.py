"""Isotonic recalibration of predicted corner sigmas.

Detectors trained with loss attenuation emit a sigma per corner, but the
raw values are usually miscalibrated in scale or shape.  This module fits
a monotone map from normalized sigma to normalized absolute residual
(pool-adjacent-violators on the calibration split) and replaces each
sigma by the map's value.  Normalization divides x-corner quantities by
the predicted box width and y-corner ones by its height, so one map can
serve boxes of very different sizes.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np

from .core import X_CORNERS, CalibrationMap, DetectionRecord, records_to_arrays
from .errors import DegenerateBox, EmptyFit, OutOfRange

logger = logging.getLogger(__name__)

#: Box dimensions at or below this are too degenerate to normalize by.
DIMENSION_EPS = 1e-6

#: Calibrated sigmas are floored here to stay strictly positive.
SIGMA_FLOOR = 1e-9

#: Minimum number of records for a dedicated per-class map.
MIN_CLASS_FIT = 2

SCOPE_RAW = "raw"
SCOPE_GLOBAL = "global_relative"
SCOPE_PER_CLASS = "per_coordinate_per_class_relative"
SCOPES = (SCOPE_RAW, SCOPE_GLOBAL, SCOPE_PER_CLASS)


def pava_fit(pairs, scope_key="global") -> CalibrationMap:
    """Weighted least-squares monotone fit (pool adjacent violators).

    Parameters
    ----------
    pairs : iterable of (x, y, w)
        Sample points with positive weights.  Duplicate x values are
        merged into one point by weighted mean before fitting, since a
        function of x must give them a single value.
    scope_key : str or tuple
        Stored on the returned map, identifying what it calibrates.

    Returns
    -------
    CalibrationMap
        Step function with strictly ascending breakpoints (the left edge
        of each pooled block) and non-decreasing values.
    """
    pts = [(float(x), float(y), float(w)) for x, y, w in pairs]
    if not pts:
        raise EmptyFit("pava_fit needs at least one pair")
    if any(w <= 0 for _, _, w in pts):
        raise OutOfRange("pava_fit weights must be > 0")
    pts.sort(key=lambda t: t[0])

    # merge duplicate x by weighted mean
    xs: list[float] = []
    ys: list[float] = []
    ws: list[float] = []
    for x, y, w in pts:
        if xs and x == xs[-1]:
            tot = ws[-1] + w
            ys[-1] = (ys[-1] * ws[-1] + y * w) / tot
            ws[-1] = tot
        else:
            xs.append(x)
            ys.append(y)
            ws.append(w)

    # classic stack of blocks: merge while the monotonicity is violated
    val: list[float] = []
    wgt: list[float] = []
    start: list[int] = []  # index into xs of each block's first point
    for i, (y, w) in enumerate(zip(ys, ws)):
        val.append(y)
        wgt.append(w)
        start.append(i)
        while len(val) > 1 and val[-2] > val[-1]:
            merged_w = wgt[-2] + wgt[-1]
            merged_v = (val[-2] * wgt[-2] + val[-1] * wgt[-1]) / merged_w
            val[-2:] = [merged_v]
            wgt[-2:] = [merged_w]
            start[-2:] = [start[-2]]
    return CalibrationMap(
        breakpoints=tuple(xs[i] for i in start),
        values=tuple(val),
        scope_key=scope_key,
    )


def evaluate_map(cmap: CalibrationMap, x):
    """Evaluate the step function, scalar or array in, same shape out.

    Left-constant steps: the value of the greatest breakpoint at or below
    ``x``, the first value below the first breakpoint, the last value
    above the last.
    """
    bp = np.asarray(cmap.breakpoints, dtype=float)
    vals = np.asarray(cmap.values, dtype=float)
    idx = np.clip(np.searchsorted(bp, np.asarray(x, dtype=float), side="right") - 1, 0, len(bp) - 1)
    out = vals[idx]
    return float(out) if np.isscalar(x) or np.ndim(x) == 0 else out


def _dims_for_corners(width, height):
    """Normalizing dimension per corner: width for x corners, height for y."""
    return np.stack([width, height, width, height], axis=-1)


def normalize_sigma(record: DetectionRecord, corner: int) -> float:
    """Sigma of one corner divided by the matching predicted-box dimension.

    Raises
    ------
    DegenerateBox
        If the relevant dimension is at or below ``DIMENSION_EPS``.
    """
    if corner not in range(4):
        raise OutOfRange(f"corner must be in 0..3, got {corner!r}")
    dim = record.pred_box.width if corner in X_CORNERS else record.pred_box.height
    if dim <= DIMENSION_EPS:
        raise DegenerateBox(
            f"predicted box dimension {dim!r} too small to normalize corner {corner}"
        )
    return float(record.sigma[corner]) / dim


@dataclass(frozen=True)
class SigmaCalibrator:
    """Fitted sigma-recalibration maps.

    ``scope`` is one of :data:`SCOPE_RAW` (identity), :data:`SCOPE_GLOBAL`
    (one map pooled over all corners), or :data:`SCOPE_PER_CLASS` (one map
    per ``(class, corner)``, falling back to the global map where a class
    had too few records).  ``n_excluded`` counts records skipped during
    fitting because their predicted box was degenerate.
    """

    scope: str
    global_map: CalibrationMap | None = None
    maps: dict | None = None
    fallback_keys: tuple = ()
    n_excluded: int = 0


def fit_calibrator(
    records,
    scope: str = SCOPE_GLOBAL,
    min_class_fit: int = MIN_CLASS_FIT,
) -> SigmaCalibrator:
    """Fit sigma-recalibration maps from matched records.

    The regression target is the normalized absolute corner residual,
    the input the normalized sigma; isotonic regression then estimates
    the monotone link between claimed and realized uncertainty.  Records
    with a degenerate predicted box are excluded from fitting (counted
    and logged).  For the per-class scope, any class with fewer than
    ``min_class_fit`` usable records falls back to the global map.
    """
    records = list(records)
    pred, gt, sigma, gt_class, _ = records_to_arrays(records)
    return fit_calibrator_arrays(pred, gt, sigma, gt_class, scope, min_class_fit)


def fit_calibrator_arrays(
    pred: np.ndarray,
    gt: np.ndarray,
    sigma: np.ndarray,
    gt_class: np.ndarray,
    scope: str = SCOPE_GLOBAL,
    min_class_fit: int = MIN_CLASS_FIT,
) -> SigmaCalibrator:
    """Array-level twin of :func:`fit_calibrator` for ``(n, 4)`` inputs."""
    if scope not in SCOPES:
        raise OutOfRange(f"unknown calibration scope {scope!r}")
    if scope == SCOPE_RAW:
        return SigmaCalibrator(scope=SCOPE_RAW)

    pred = np.asarray(pred, dtype=float)
    gt = np.asarray(gt, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    gt_class = np.asarray(gt_class, dtype=int)
    if pred.shape[0] == 0:
        raise EmptyFit("fit_calibrator needs at least one record")
    width = pred[:, 2] - pred[:, 0]
    height = pred[:, 3] - pred[:, 1]
    usable = (width > DIMENSION_EPS) & (height > DIMENSION_EPS)
    n_excluded = int((~usable).sum())
    if n_excluded:
        logger.warning(
            "fit_calibrator: excluded %d record(s) with degenerate predicted boxes",
            n_excluded,
        )
    if not usable.any():
        raise EmptyFit("no records with non-degenerate predicted boxes")

    dims = _dims_for_corners(width[usable], height[usable])
    x = sigma[usable] / dims
    y = np.abs(pred[usable] - gt[usable]) / dims
    cls = gt_class[usable]

    global_map = pava_fit(zip(x.ravel(), y.ravel(), np.ones(x.size)), scope_key="global")
    if scope == SCOPE_GLOBAL:
        return SigmaCalibrator(scope=scope, global_map=global_map, maps={}, n_excluded=n_excluded)

    maps: dict = {}
    fallback = []
    for k in np.unique(cls):
        sel = cls == k
        if int(sel.sum()) < min_class_fit:
            fallback.append(int(k))
            continue
        for corner in range(4):
            maps[(int(k), corner)] = pava_fit(
                zip(x[sel, corner], y[sel, corner], np.ones(int(sel.sum()))),
                scope_key=(int(k), corner),
            )
    if fallback:
        logger.warning(
            "fit_calibrator: classes %s have fewer than %d usable records; "
            "using the global map for them",
            fallback,
            min_class_fit,
        )
    return SigmaCalibrator(
        scope=scope,
        global_map=global_map,
        maps=maps,
        fallback_keys=tuple(fallback),
        n_excluded=n_excluded,
    )


def calibrated_sigma_array(
    calibrator: SigmaCalibrator,
    pred: np.ndarray,
    sigma: np.ndarray,
    gt_class: np.ndarray,
) -> np.ndarray:
    """Vectorized sigma recalibration for ``(n, 4)`` arrays.

    Records with a degenerate predicted box keep their raw sigma (the
    normalization is undefined there); everything else is normalized,
    mapped, denormalized, and floored at ``SIGMA_FLOOR``.
    """
    sigma = np.asarray(sigma, dtype=float)
    if calibrator.scope == SCOPE_RAW:
        return sigma.copy()
    pred = np.asarray(pred, dtype=float)
    width = pred[:, 2] - pred[:, 0]
    height = pred[:, 3] - pred[:, 1]
    usable = (width > DIMENSION_EPS) & (height > DIMENSION_EPS)
    if not usable.all():
        logger.debug(
            "calibrated_sigma_array: %d record(s) with degenerate boxes keep raw sigma",
            int((~usable).sum()),
        )
    out = sigma.copy()
    if not usable.any():
        return out
    dims = _dims_for_corners(width[usable], height[usable])
    x = sigma[usable] / dims
    if calibrator.scope == SCOPE_GLOBAL:
        mapped = evaluate_map(calibrator.global_map, x)
    else:
        mapped = np.empty_like(x)
        cls = np.asarray(gt_class, dtype=int)[usable]
        for corner in range(4):
            col = np.empty(x.shape[0])
            for k in np.unique(cls):
                sel = cls == k
                cmap = calibrator.maps.get((int(k), corner), calibrator.global_map)
                col[sel] = evaluate_map(cmap, x[sel, corner])
            mapped[:, corner] = col
    out[usable] = np.maximum(mapped * dims, SIGMA_FLOOR)
    return out


def apply_calibrated_sigma(calibrator: SigmaCalibrator, record: DetectionRecord) -> tuple[float, float, float, float]:
    """Recalibrated sigma vector for a single record."""
    pred, _, sigma, gt_class, _ = records_to_arrays([record])
    out = calibrated_sigma_array(calibrator, pred, sigma, gt_class)
    return tuple(float(v) for v in out[0])


def _map_to_dict(cmap: CalibrationMap) -> dict:
    return {"breakpoints": list(cmap.breakpoints), "values": list(cmap.values)}


def _map_from_dict(d: dict, scope_key) -> CalibrationMap:
    return CalibrationMap(
        breakpoints=tuple(float(v) for v in d["breakpoints"]),
        values=tuple(float(v) for v in d["values"]),
        scope_key=scope_key,
    )


def save_calibrator(calibrator: SigmaCalibrator, path) -> None:
    """Serialize a calibrator to a JSON file."""
    doc = {
        "scope": calibrator.scope,
        "global": None if calibrator.global_map is None else _map_to_dict(calibrator.global_map),
        "maps": [
            {"class": key[0], "corner": key[1], **_map_to_dict(cmap)}
            for key, cmap in sorted((calibrator.maps or {}).items())
        ],
        "fallback_classes": list(calibrator.fallback_keys),
        "n_excluded": calibrator.n_excluded,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_calibrator(path) -> SigmaCalibrator:
    """Load a calibrator previously written by :func:`save_calibrator`."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    maps = {
        (int(entry["class"]), int(entry["corner"])): _map_from_dict(
            entry, (int(entry["class"]), int(entry["corner"]))
        )
        for entry in doc.get("maps", [])
    }
    return SigmaCalibrator(
        scope=doc["scope"],
        global_map=None if doc.get("global") is None else _map_from_dict(doc["global"], "global"),
        maps=maps,
        fallback_keys=tuple(int(k) for k in doc.get("fallback_classes", [])),
        n_excluded=int(doc.get("n_excluded", 0)),
    )
