"""Conformal prediction intervals for object detectors.

Split-conformal corner intervals around predicted bounding boxes (with
optional uncertainty scaling and isotonic sigma recalibration), label
prediction sets for the classification head, and the combined two-step
procedure that feeds the label set into class-conditional box quantiles.
"""

from .calibration import (
    SCOPE_GLOBAL,
    SCOPE_PER_CLASS,
    SCOPE_RAW,
    SCOPES,
    SigmaCalibrator,
    apply_calibrated_sigma,
    evaluate_map,
    fit_calibrator,
    load_calibrator,
    normalize_sigma,
    pava_fit,
    save_calibrator,
)
from .classification import (
    aps_score,
    build_prediction_set,
    classification_quantile,
    raps_score,
    true_class_scores,
)
from .core import (
    AGNOSTIC,
    DEFAULT_IMAGE_BOUNDS,
    BoundingBox,
    ConformalBox,
    Dataset,
    DetectionRecord,
    MiscoverageConfig,
    PredictionSet,
    QuantileTable,
    RAPSConfig,
    validate_record,
)
from .errors import (
    ConfdetError,
    ConfigError,
    DataError,
    EmptyCalibration,
    EmptySetConfig,
    OutOfRange,
    ParseError,
    StratificationImpossible,
    ValidationError,
)
from .io import (
    LoadReport,
    emit_report,
    load_dataset,
    load_report,
    save_dataset,
    save_oracle_info,
)
from .metrics import (
    MetricRow,
    box_interval_scores,
    classwise_aggregate,
    corner_coverage_event,
    interval_score,
    iou,
    paired_t_test,
    recovery_rate,
)
from .oracle import OracleInfo, OracleSpec, generate
from .pipeline import (
    REGIMES,
    SCALINGS,
    RunConfig,
    RunReport,
    RunResult,
    compare_reports,
    random_split,
    recovery_sweep,
    run_class_agnostic,
    run_class_wise,
    run_experiment,
    run_naive_worst_case,
    run_two_step,
)
from .regression import (
    bonferroni_corner_alpha,
    build_conformal_box,
    conformal_quantile,
    fit_class_agnostic,
    fit_class_wise,
    score_scaled,
    score_unscaled,
)

__version__ = "0.1.0"

__all__ = [
    "AGNOSTIC",
    "BoundingBox",
    "ConfdetError",
    "ConfigError",
    "ConformalBox",
    "DEFAULT_IMAGE_BOUNDS",
    "DataError",
    "Dataset",
    "DetectionRecord",
    "EmptyCalibration",
    "EmptySetConfig",
    "LoadReport",
    "MetricRow",
    "MiscoverageConfig",
    "OracleInfo",
    "OracleSpec",
    "OutOfRange",
    "ParseError",
    "PredictionSet",
    "QuantileTable",
    "RAPSConfig",
    "REGIMES",
    "RunConfig",
    "RunReport",
    "RunResult",
    "SCALINGS",
    "SCOPE_GLOBAL",
    "SCOPE_PER_CLASS",
    "SCOPE_RAW",
    "SCOPES",
    "SigmaCalibrator",
    "StratificationImpossible",
    "ValidationError",
    "aps_score",
    "apply_calibrated_sigma",
    "bonferroni_corner_alpha",
    "box_interval_scores",
    "build_conformal_box",
    "build_prediction_set",
    "classification_quantile",
    "classwise_aggregate",
    "compare_reports",
    "conformal_quantile",
    "corner_coverage_event",
    "emit_report",
    "evaluate_map",
    "fit_calibrator",
    "fit_class_agnostic",
    "fit_class_wise",
    "generate",
    "interval_score",
    "iou",
    "load_calibrator",
    "load_dataset",
    "load_report",
    "normalize_sigma",
    "paired_t_test",
    "pava_fit",
    "random_split",
    "raps_score",
    "recovery_rate",
    "recovery_sweep",
    "run_class_agnostic",
    "run_class_wise",
    "run_experiment",
    "run_naive_worst_case",
    "run_two_step",
    "save_calibrator",
    "save_dataset",
    "save_oracle_info",
    "score_scaled",
    "score_unscaled",
    "true_class_scores",
    "validate_record",
]
