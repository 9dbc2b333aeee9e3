"""Seeded multi-run experiments over a detection dataset.

One experiment repeats the same recipe ``n_runs`` times: split the data
into calibration and evaluation parts, optionally recalibrate sigma on
the calibration part, fit conformal quantiles there, build boxes (and
prediction sets) for the evaluation part, and score them.  Every run
draws its randomness from a generator seeded by ``(master_seed, run
index)``, so reports are reproducible bit for bit regardless of how many
worker processes execute the runs, and two experiments with the same
master seed are paired run by run for significance testing.
"""

from __future__ import annotations

import dataclasses
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import calibration as _cal
from .classification import (
    classification_quantile,
    prediction_set_matrix,
    true_class_scores,
)
from .core import (
    AGNOSTIC,
    SCOPE_CLASS_WISE,
    BoundingBox,
    Dataset,
    MiscoverageConfig,
    QuantileTable,
    RAPSConfig,
    records_to_arrays,
)
from .errors import (
    EmptyCalibration,
    EmptySetConfig,
    OutOfRange,
    SeedMismatch,
    StratificationImpossible,
)
from .metrics import (
    MetricRow,
    box_interval_scores,
    classwise_aggregate,
    coverage_events,
    iou_xyxy,
    paired_t_test,
)
from .regression import (
    conformal_quantile,
    corner_intervals,
    fit_quantiles_from_scores,
    outer_inner_boxes,
    residual_scores,
)

REGIME_CLASS_AGNOSTIC = "class_agnostic"
REGIME_CLASS_WISE = "class_wise"
REGIME_TWO_STEP = "two_step"
REGIME_NAIVE_WORST_CASE = "naive_worst_case"
REGIMES = (
    REGIME_CLASS_AGNOSTIC,
    REGIME_CLASS_WISE,
    REGIME_TWO_STEP,
    REGIME_NAIVE_WORST_CASE,
)

SCALINGS = ("unscaled", "scaled")


@dataclass(frozen=True)
class RunConfig:
    """Settings for one experiment.

    ``regime`` selects how class information enters the box intervals:
    pooled quantiles (``class_agnostic``), per ground-truth class
    (``class_wise``), worst case over a conformal prediction set
    (``two_step``), or worst case over all classes
    (``naive_worst_case``).  ``stratified=None`` resolves to True for the
    class-aware regimes and False otherwise.
    ``calibrator_fit_fraction`` carves a disjoint part out of the
    calibration split for sigma recalibration; by default the calibrator
    and the quantiles share the full calibration split.
    ``two_step_disjoint`` fits the class threshold and the box quantiles
    on disjoint halves of the calibration split instead of sharing it.
    """

    miscoverage: MiscoverageConfig
    n_runs: int = 100
    calib_fraction: float = 0.8
    scaling: str = "unscaled"
    calibration_scope: str = _cal.SCOPE_RAW
    regime: str = REGIME_CLASS_AGNOSTIC
    raps: RAPSConfig = RAPSConfig()
    master_seed: int = 0
    image_bounds: BoundingBox | None = None
    min_per_class: int = 20
    stratified: bool | None = None
    calibrator_fit_fraction: float | None = None
    two_step_disjoint: bool = False

    def __post_init__(self):
        if self.n_runs < 1:
            raise OutOfRange(f"n_runs must be >= 1, got {self.n_runs}")
        if not 0.0 < self.calib_fraction < 1.0:
            raise OutOfRange(f"calib_fraction must lie in (0, 1), got {self.calib_fraction}")
        if self.scaling not in SCALINGS:
            raise OutOfRange(f"scaling must be one of {SCALINGS}, got {self.scaling!r}")
        if self.calibration_scope not in _cal.SCOPES:
            raise OutOfRange(
                f"calibration_scope must be one of {_cal.SCOPES}, got {self.calibration_scope!r}"
            )
        if self.regime not in REGIMES:
            raise OutOfRange(f"regime must be one of {REGIMES}, got {self.regime!r}")
        if self.min_per_class < 0:
            raise OutOfRange(f"min_per_class must be >= 0, got {self.min_per_class}")
        if self.calibrator_fit_fraction is not None and not 0.0 < self.calibrator_fit_fraction < 1.0:
            raise OutOfRange(
                f"calibrator_fit_fraction must lie in (0, 1), got {self.calibrator_fit_fraction}"
            )

    @property
    def resolved_stratified(self) -> bool:
        if self.stratified is not None:
            return self.stratified
        return self.regime != REGIME_CLASS_AGNOSTIC


@dataclass(frozen=True)
class DatasetSplit:
    """Index split of a dataset into calibration and evaluation parts."""

    calib_idx: np.ndarray
    eval_idx: np.ndarray
    missing_eval_classes: tuple[int, ...] = ()
    forced_calibration_classes: tuple[int, ...] = ()


@dataclass(frozen=True)
class RunResult:
    """Outcome of a single run: metrics plus provenance."""

    run_index: int
    seed: tuple[int, int]
    metrics: MetricRow
    quantile_summary: dict
    warnings: tuple[str, ...] = ()


@dataclass(frozen=True)
class RunReport:
    """Per-run results plus aggregate statistics for one experiment."""

    regime: str
    config: dict
    per_run: tuple[RunResult, ...]
    aggregate: dict
    significance: dict | None = None


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _split_sizes(n: int, fraction: float) -> int:
    """Calibration size for ``n`` records: rounded, clipped to [1, n-1] when possible."""
    n_cal = _round_half_up(n * fraction)
    if n >= 2:
        n_cal = min(max(n_cal, 1), n - 1)
    else:
        n_cal = 1
    return n_cal


def random_split(
    dataset: Dataset,
    calib_fraction: float,
    seed,
    stratified: bool = False,
) -> DatasetSplit:
    """Deterministic, exhaustive, disjoint calibration/evaluation split.

    With ``stratified=True`` each class is split at ``calib_fraction``
    separately and every class keeps at least one calibration record;
    classes whose few records all land in calibration are flagged as
    missing from evaluation rather than dropped.

    Raises
    ------
    StratificationImpossible
        If some class id in ``[0, K)`` has no records at all.
    """
    if not 0.0 < calib_fraction < 1.0:
        raise OutOfRange(f"calib_fraction must lie in (0, 1), got {calib_fraction}")
    n = len(dataset)
    if n == 0:
        raise EmptyCalibration("cannot split an empty dataset")
    classes = np.array([r.gt_class for r in dataset.records], dtype=int)
    return _split_indices(n, classes, dataset.n_classes, calib_fraction, seed, stratified)


def _split_indices(
    n: int,
    classes: np.ndarray,
    n_classes: int,
    calib_fraction: float,
    seed,
    stratified: bool,
) -> DatasetSplit:
    rng = np.random.default_rng(seed)
    if not stratified:
        perm = rng.permutation(n)
        n_cal = _split_sizes(n, calib_fraction)
        return DatasetSplit(
            calib_idx=np.sort(perm[:n_cal]),
            eval_idx=np.sort(perm[n_cal:]),
        )
    calib_parts = []
    eval_parts = []
    missing_eval = []
    forced = []
    for k in range(n_classes):
        members = np.flatnonzero(classes == k)
        if members.size == 0:
            raise StratificationImpossible(
                f"class {k} has no records; a stratified split cannot represent it"
            )
        perm = members[rng.permutation(members.size)]
        n_cal = _split_sizes(members.size, calib_fraction)
        calib_parts.append(perm[:n_cal])
        eval_parts.append(perm[n_cal:])
        if n_cal == members.size:
            forced.append(k)
            missing_eval.append(k)
    return DatasetSplit(
        calib_idx=np.sort(np.concatenate(calib_parts)),
        eval_idx=np.sort(np.concatenate(eval_parts)) if any(p.size for p in eval_parts) else np.array([], dtype=int),
        missing_eval_classes=tuple(missing_eval),
        forced_calibration_classes=tuple(forced),
    )


@dataclass(frozen=True, eq=False)
class _Arrays:
    pred: np.ndarray
    gt: np.ndarray
    sigma: np.ndarray
    classes: np.ndarray
    probs: np.ndarray

    @property
    def n(self) -> int:
        return self.pred.shape[0]

    def take(self, idx: np.ndarray) -> "_Arrays":
        return _Arrays(
            pred=self.pred[idx],
            gt=self.gt[idx],
            sigma=self.sigma[idx],
            classes=self.classes[idx],
            probs=self.probs[idx],
        )


def _dataset_arrays(dataset: Dataset) -> _Arrays:
    pred, gt, sigma, classes, probs = records_to_arrays(dataset.records)
    return _Arrays(pred, gt, sigma, classes, probs)


@dataclass(frozen=True, eq=False)
class _Context:
    arrays: _Arrays
    n_classes: int
    config: RunConfig
    eval_arrays: _Arrays | None = None


def _effective_sigma(ctx: _Context, cal: _Arrays, ev: _Arrays, rng_key) -> tuple:
    """Sigma arrays for scoring, after optional recalibration.

    Returns ``(sig_ev, cal_for_quantiles, warnings)``: the evaluation-side
    sigma (None when unscaled) and the calibration part to fit quantiles
    on, carrying its own (possibly recalibrated) sigma.  With a disjoint
    calibrator fit fraction the quantile part is a subset of ``cal``.
    """
    cfg = ctx.config
    warnings: list[str] = []
    if cfg.scaling != "scaled":
        return None, cal, warnings
    if cfg.calibration_scope == _cal.SCOPE_RAW:
        return ev.sigma, cal, warnings

    fit_part = cal
    quant_part = cal
    if cfg.calibrator_fit_fraction is not None and cal.n >= 2:
        rng = np.random.default_rng(rng_key)
        perm = rng.permutation(cal.n)
        n_fit = min(max(_round_half_up(cal.n * cfg.calibrator_fit_fraction), 1), cal.n - 1)
        fit_part = cal.take(np.sort(perm[:n_fit]))
        quant_part = cal.take(np.sort(perm[n_fit:]))
    calibrator = _cal.fit_calibrator_arrays(
        fit_part.pred,
        fit_part.gt,
        fit_part.sigma,
        fit_part.classes,
        scope=cfg.calibration_scope,
        min_class_fit=_cal.MIN_CLASS_FIT,
    )
    if calibrator.n_excluded:
        warnings.append(f"calibrator skipped {calibrator.n_excluded} degenerate box(es)")
    if calibrator.fallback_keys:
        warnings.append(
            "calibrator fell back to the global map for classes "
            + ",".join(str(k) for k in calibrator.fallback_keys)
        )
    sig_q = _cal.calibrated_sigma_array(calibrator, quant_part.pred, quant_part.sigma, quant_part.classes)
    sig_ev = _cal.calibrated_sigma_array(calibrator, ev.pred, ev.sigma, ev.classes)
    quant_part = dataclasses.replace(quant_part, sigma=sig_q)
    return sig_ev, quant_part, warnings


def _quantile_summary(values: np.ndarray, n_groups: int) -> dict:
    return {
        "n_groups": int(n_groups),
        "n_vacuous": int(np.isinf(values).sum()),
        "min": float(values.min()) if values.size else 0.0,
        "max": float(values.max()) if values.size else 0.0,
    }


def _empty_metrics(extra: bool) -> MetricRow:
    # vacuous-evaluation convention: nothing to miss, nothing to score
    return MetricRow(
        coverage=1.0,
        mean_iou=0.0,
        interval_score=0.0,
        n_eval=0,
        mean_set_size=0.0 if extra else None,
        class_coverage=1.0 if extra else None,
        joint_coverage=1.0 if extra else None,
    )


def _run_once(ctx: _Context, run_index: int) -> RunResult:
    cfg = ctx.config
    seed = (cfg.master_seed, run_index)
    warnings: list[str] = []
    stratified = cfg.resolved_stratified

    if ctx.eval_arrays is None:
        split = _split_indices(
            ctx.arrays.n, ctx.arrays.classes, ctx.n_classes, cfg.calib_fraction, seed, stratified
        )
        cal = ctx.arrays.take(split.calib_idx)
        ev = ctx.arrays.take(split.eval_idx)
        missing_eval = split.missing_eval_classes
    else:
        split_a = _split_indices(
            ctx.arrays.n, ctx.arrays.classes, ctx.n_classes, cfg.calib_fraction,
            (cfg.master_seed, run_index, 0), stratified,
        )
        split_b = _split_indices(
            ctx.eval_arrays.n, ctx.eval_arrays.classes, ctx.n_classes, cfg.calib_fraction,
            (cfg.master_seed, run_index, 1), stratified,
        )
        cal = ctx.arrays.take(split_a.calib_idx)
        ev = ctx.eval_arrays.take(split_b.eval_idx)
        missing_eval = split_b.missing_eval_classes
    if missing_eval:
        warnings.append(
            "classes absent from evaluation: " + ",".join(str(k) for k in missing_eval)
        )

    sig_ev, quant_part, sigma_warnings = _effective_sigma(
        ctx, cal, ev, (cfg.master_seed, run_index, 7)
    )
    warnings.extend(sigma_warnings)

    alpha = cfg.miscoverage.alpha_corner
    scaled = cfg.scaling == "scaled"
    extra = cfg.regime in (REGIME_TWO_STEP, REGIME_NAIVE_WORST_CASE)

    cls_part = quant_part
    box_part = quant_part
    if cfg.regime == REGIME_TWO_STEP and cfg.two_step_disjoint and quant_part.n >= 2:
        # stratified halves: the box half must keep every class represented
        rng = np.random.default_rng((cfg.master_seed, run_index, 9))
        cls_sel = []
        for k in range(ctx.n_classes):
            members = np.flatnonzero(quant_part.classes == k)
            perm = members[rng.permutation(members.size)]
            cls_sel.append(perm[: members.size // 2])
        cls_idx = np.sort(np.concatenate(cls_sel)) if cls_sel else np.array([], dtype=int)
        box_mask = np.ones(quant_part.n, dtype=bool)
        box_mask[cls_idx] = False
        cls_part = quant_part.take(cls_idx) if cls_idx.size else quant_part
        box_part = quant_part.take(np.flatnonzero(box_mask))

    if cfg.regime == REGIME_CLASS_AGNOSTIC:
        table = fit_quantiles_from_scores(
            residual_scores(box_part.pred, box_part.gt, box_part.sigma if scaled else None),
            alpha,
        )
        q_values = table.corners(AGNOSTIC)
        q_eval = q_values
    else:
        table = fit_quantiles_from_scores(
            residual_scores(box_part.pred, box_part.gt, box_part.sigma if scaled else None),
            alpha,
            groups=box_part.classes,
            n_classes=ctx.n_classes,
            min_per_class=cfg.min_per_class,
        )
        q_by_class = table.by_class(ctx.n_classes)
        q_values = q_by_class.ravel()
        if table.flagged:
            warnings.append(
                "classes below min_per_class: " + ",".join(str(k) for k in table.flagged)
            )
        if cfg.regime == REGIME_CLASS_WISE:
            q_eval = q_by_class[ev.classes] if ev.n else np.zeros((0, 4))
        elif cfg.regime == REGIME_NAIVE_WORST_CASE:
            q_eval = q_by_class.max(axis=0)
            member = np.ones((ev.n, ctx.n_classes), dtype=bool)
            sizes = np.full(ev.n, ctx.n_classes, dtype=int)
        else:  # two_step
            if cfg.raps.allow_empty:
                raise EmptySetConfig(
                    "two_step needs non-empty prediction sets; set allow_empty=False"
                )
            cls_scores = true_class_scores(cls_part.probs, cls_part.classes, cfg.raps)
            qhat_class = classification_quantile(cls_scores, cfg.miscoverage.alpha_class)
            member, sizes = prediction_set_matrix(ev.probs, qhat_class, cfg.raps)
            masked = np.where(member[:, :, None], q_by_class[None, :, :], -np.inf)
            q_eval = masked.max(axis=1) if ev.n else np.zeros((0, 4))

    if ev.n == 0:
        metrics = _empty_metrics(extra)
    else:
        lows, highs = corner_intervals(
            ev.pred, q_eval, sigma=sig_ev, image_bounds=cfg.image_bounds
        )
        _, box_hits = coverage_events(ev.gt, lows, highs)
        outer, _, _ = outer_inner_boxes(lows, highs)
        ious = iou_xyxy(ev.gt, outer)
        iscores = box_interval_scores(lows, highs, ev.gt, alpha)

        if cfg.regime == REGIME_CLASS_WISE:
            rows: dict = {}
            counts: dict = {}
            for k in np.unique(ev.classes):
                sel = ev.classes == k
                counts[int(k)] = int(sel.sum())
                rows[int(k)] = MetricRow(
                    coverage=float(box_hits[sel].mean()),
                    mean_iou=float(ious[sel].mean()),
                    interval_score=float(iscores[sel].sum()),
                    n_eval=int(sel.sum()),
                )
            metrics = classwise_aggregate(rows, counts)
        elif extra:
            class_hits = member[np.arange(ev.n), ev.classes]
            metrics = MetricRow(
                coverage=float(box_hits.mean()),
                mean_iou=float(ious.mean()),
                interval_score=float(iscores.sum()),
                n_eval=int(ev.n),
                mean_set_size=float(sizes.mean()),
                class_coverage=float(class_hits.mean()),
                joint_coverage=float((class_hits & box_hits).mean()),
            )
        else:
            metrics = MetricRow(
                coverage=float(box_hits.mean()),
                mean_iou=float(ious.mean()),
                interval_score=float(iscores.sum()),
                n_eval=int(ev.n),
            )

    return RunResult(
        run_index=run_index,
        seed=seed,
        metrics=metrics,
        quantile_summary=_quantile_summary(np.asarray(q_values, dtype=float), len(table.quantiles)),
        warnings=tuple(warnings),
    )


_WORKER_CTX: _Context | None = None


def _init_worker(ctx: _Context) -> None:
    global _WORKER_CTX
    _WORKER_CTX = ctx


def _worker_run(run_index: int) -> RunResult:
    assert _WORKER_CTX is not None
    return _run_once(_WORKER_CTX, run_index)


OPTIONAL_METRICS = ("mean_set_size", "class_coverage", "joint_coverage")


def _aggregate(results: list[RunResult], cfg: RunConfig) -> dict:
    n = len(results)

    def stats(values: list[float]) -> dict:
        arr = np.asarray(values, dtype=float)
        mean = float(arr.mean())
        sd = float(arr.std(ddof=1)) if n > 1 else 0.0
        return {"mean": mean, "std": sd}

    agg: dict = {}
    for name in ("coverage", "mean_iou", "interval_score"):
        agg[name] = stats([getattr(r.metrics, name) for r in results])
    for name in OPTIONAL_METRICS:
        values = [getattr(r.metrics, name) for r in results]
        if all(v is not None for v in values):
            agg[name] = stats(values)
    agg["n_eval_total"] = int(sum(r.metrics.n_eval for r in results))

    nominal = 1.0 - cfg.miscoverage.alpha_bbox
    se = agg["coverage"]["std"] / math.sqrt(n) if n > 1 else 0.0
    agg["nominal_box_coverage"] = nominal
    agg["coverage_mc_se"] = se
    agg["coverage_below_nominal"] = bool(agg["coverage"]["mean"] < nominal - 3.0 * se)
    if "joint_coverage" in agg:
        nominal_joint = (1.0 - cfg.miscoverage.alpha_class) * nominal
        se_j = agg["joint_coverage"]["std"] / math.sqrt(n) if n > 1 else 0.0
        agg["nominal_class_coverage"] = 1.0 - cfg.miscoverage.alpha_class
        agg["nominal_joint_coverage"] = nominal_joint
        agg["joint_below_nominal"] = bool(
            agg["joint_coverage"]["mean"] < nominal_joint - 3.0 * se_j
        )
    return agg


def _config_echo(cfg: RunConfig, transfer: bool) -> dict:
    bounds = cfg.image_bounds
    return {
        "regime": cfg.regime,
        "alpha_corner": cfg.miscoverage.alpha_corner,
        "alpha_class": cfg.miscoverage.alpha_class,
        "scaling": cfg.scaling,
        "calibration_scope": cfg.calibration_scope,
        "n_runs": cfg.n_runs,
        "calib_fraction": cfg.calib_fraction,
        "master_seed": cfg.master_seed,
        "min_per_class": cfg.min_per_class,
        "stratified": cfg.resolved_stratified,
        "calibrator_fit_fraction": cfg.calibrator_fit_fraction,
        "two_step_disjoint": cfg.two_step_disjoint,
        "raps": {
            "penalty_a": cfg.raps.penalty_a,
            "threshold_b": cfg.raps.threshold_b,
            "allow_empty": cfg.raps.allow_empty,
            "penalty_at_inference": cfg.raps.penalty_at_inference,
        },
        "image_bounds": None if bounds is None else [bounds.x0, bounds.y0, bounds.x1, bounds.y1],
        "transfer_evaluation": transfer,
    }


def run_experiment(
    dataset: Dataset,
    config: RunConfig,
    eval_dataset: Dataset | None = None,
    workers: int = 1,
) -> RunReport:
    """Execute all runs of an experiment and assemble the report.

    ``eval_dataset`` switches to transfer mode: calibration records come
    from ``dataset`` and evaluation records from ``eval_dataset`` (each
    run subsamples both), which is how a domain-shift study is expressed.
    ``workers`` only parallelizes execution; results are assembled in run
    order and are identical for any worker count.
    """
    if len(dataset) == 0:
        raise EmptyCalibration("run_experiment needs a non-empty dataset")
    if config.regime == REGIME_TWO_STEP and config.raps.allow_empty:
        raise EmptySetConfig("two_step needs non-empty prediction sets; set allow_empty=False")
    if eval_dataset is not None and eval_dataset.n_classes != dataset.n_classes:
        raise SeedMismatch(
            f"evaluation dataset has {eval_dataset.n_classes} classes, expected {dataset.n_classes}"
        )
    ctx = _Context(
        arrays=_dataset_arrays(dataset),
        n_classes=dataset.n_classes,
        config=config,
        eval_arrays=None if eval_dataset is None else _dataset_arrays(eval_dataset),
    )
    if workers > 1 and config.n_runs > 1:
        with ProcessPoolExecutor(
            max_workers=workers, initializer=_init_worker, initargs=(ctx,)
        ) as pool:
            results = list(pool.map(_worker_run, range(config.n_runs)))
    else:
        results = [_run_once(ctx, i) for i in range(config.n_runs)]
    return RunReport(
        regime=config.regime,
        config=_config_echo(config, transfer=eval_dataset is not None),
        per_run=tuple(results),
        aggregate=_aggregate(results, config),
    )


def _with_regime(config: RunConfig, regime: str) -> RunConfig:
    return config if config.regime == regime else dataclasses.replace(config, regime=regime)


def run_class_agnostic(dataset, config, eval_dataset=None, workers: int = 1) -> RunReport:
    """Experiment with pooled (class-agnostic) quantiles."""
    return run_experiment(dataset, _with_regime(config, REGIME_CLASS_AGNOSTIC), eval_dataset, workers)


def run_class_wise(dataset, config, eval_dataset=None, workers: int = 1) -> RunReport:
    """Experiment with per-class quantiles looked up by ground-truth class."""
    return run_experiment(dataset, _with_regime(config, REGIME_CLASS_WISE), eval_dataset, workers)


def run_two_step(dataset, config, eval_dataset=None, workers: int = 1) -> RunReport:
    """Experiment taking the worst case over a conformal label set.

    The prediction set must not be empty, so ``config.raps.allow_empty``
    has to be False (EmptySetConfig otherwise).
    """
    if config.raps.allow_empty:
        raise EmptySetConfig("two_step needs non-empty prediction sets; set allow_empty=False")
    return run_experiment(dataset, _with_regime(config, REGIME_TWO_STEP), eval_dataset, workers)


def run_naive_worst_case(dataset, config, eval_dataset=None, workers: int = 1) -> RunReport:
    """Experiment taking the worst case over every class."""
    return run_experiment(dataset, _with_regime(config, REGIME_NAIVE_WORST_CASE), eval_dataset, workers)


def recovery_sweep(
    dataset: Dataset,
    alphas,
    thresholds,
    calib_fraction: float = 0.8,
    seed: int = 0,
    image_bounds: BoundingBox | None = None,
) -> list[dict]:
    """Recovery rates over an IoU-threshold grid, per scaling and alpha.

    One deterministic split per call: class-agnostic quantiles are fitted
    on the calibration part and, for each evaluation record whose
    predicted box has IoU below a threshold, the ground truth counts as
    recovered when it lies fully inside the outer conformal box.  Returns
    one row dict per ``(scaling, alpha, threshold)``; the rate is None
    when no record falls below the threshold.
    """
    arrays = _dataset_arrays(dataset)
    split = _split_indices(
        arrays.n, arrays.classes, dataset.n_classes, calib_fraction, seed, stratified=False
    )
    cal = arrays.take(split.calib_idx)
    ev = arrays.take(split.eval_idx)
    pred_iou = iou_xyxy(ev.pred, ev.gt)
    rows = []
    for scaling in SCALINGS:
        sig_cal = cal.sigma if scaling == "scaled" else None
        sig_ev = ev.sigma if scaling == "scaled" else None
        scores = residual_scores(cal.pred, cal.gt, sig_cal)
        for alpha in alphas:
            q = np.array([conformal_quantile(scores[:, c], alpha) for c in range(4)])
            lows, highs = corner_intervals(ev.pred, q, sigma=sig_ev, image_bounds=image_bounds)
            outer, _, _ = outer_inner_boxes(lows, highs)
            contained = (
                (outer[:, 0] <= ev.gt[:, 0])
                & (outer[:, 1] <= ev.gt[:, 1])
                & (ev.gt[:, 2] <= outer[:, 2])
                & (ev.gt[:, 3] <= outer[:, 3])
            )
            for thr in thresholds:
                below = pred_iou < thr
                n_below = int(below.sum())
                rate = float(contained[below].mean()) if n_below else None
                rows.append(
                    {
                        "scaling": scaling,
                        "alpha_corner": float(alpha),
                        "iou_threshold": float(thr),
                        "recovery_rate": rate,
                        "n_below": n_below,
                    }
                )
    return rows


def compare_reports(report_a: RunReport, report_b: RunReport) -> dict:
    """Paired significance tests between two experiments, run by run.

    Both reports must come from identical split sequences (same number of
    runs and identical per-run seeds), otherwise pairing would be
    meaningless and SeedMismatch is raised.  Each shared metric gets a
    two-sided paired t-test; ``t > 0`` means the first report's mean is
    higher.
    """
    runs_a, runs_b = report_a.per_run, report_b.per_run
    if len(runs_a) != len(runs_b):
        raise SeedMismatch(f"run counts differ: {len(runs_a)} vs {len(runs_b)}")
    seeds_a = [tuple(r.seed) for r in runs_a]
    seeds_b = [tuple(r.seed) for r in runs_b]
    if seeds_a != seeds_b:
        raise SeedMismatch("per-run seeds differ; reports are not paired")

    table: dict = {"n_runs": len(runs_a), "metrics": {}}
    for name in ("coverage", "mean_iou", "interval_score") + OPTIONAL_METRICS:
        a = [getattr(r.metrics, name) for r in runs_a]
        b = [getattr(r.metrics, name) for r in runs_b]
        if any(v is None for v in a) or any(v is None for v in b):
            continue
        t, p = paired_t_test(a, b)
        table["metrics"][name] = {
            "mean_a": float(np.mean(a)),
            "mean_b": float(np.mean(b)),
            "t": t,
            "p": p,
            "significant_5pct": bool(p < 0.05),
            "significant_1pct": bool(p < 0.01),
        }
    return table
