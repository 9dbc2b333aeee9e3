import numpy as np
import pytest
from numpy.testing import assert_allclose

from confdet.calibration import (
    SCOPE_GLOBAL,
    SCOPE_PER_CLASS,
    SCOPE_RAW,
    SIGMA_FLOOR,
    apply_calibrated_sigma,
    calibrated_sigma_array,
    evaluate_map,
    fit_calibrator,
    load_calibrator,
    normalize_sigma,
    pava_fit,
    save_calibrator,
)
from confdet.core import CalibrationMap
from confdet.errors import DegenerateBox, EmptyFit, OutOfRange

from conftest import make_record


def unit_pairs(xs, ys):
    return [(x, y, 1.0) for x, y in zip(xs, ys)]


# ---------------------------------------------------------------- pava


def test_pava_reproduces_monotone_input():
    xs = [1.0, 2.0, 3.0, 4.0]
    ys = [0.5, 0.5, 1.0, 2.0]
    cmap = pava_fit(unit_pairs(xs, ys))
    for x, y in zip(xs, ys):
        assert evaluate_map(cmap, x) == pytest.approx(y)


def test_pava_pools_single_violation():
    cmap = pava_fit(unit_pairs([1.0, 2.0], [2.0, 1.0]))
    assert cmap.breakpoints == (1.0,)
    assert cmap.values == (1.5,)


def test_pava_three_point_example():
    cmap = pava_fit(unit_pairs([1.0, 2.0, 3.0], [1.0, 3.0, 2.0]))
    assert evaluate_map(cmap, 1.0) == pytest.approx(1.0)
    assert evaluate_map(cmap, 2.0) == pytest.approx(2.5)
    assert evaluate_map(cmap, 3.0) == pytest.approx(2.5)


def test_pava_weighted_pooling():
    # weights tilt the pooled mean toward the heavier point
    cmap = pava_fit([(1.0, 2.0, 3.0), (2.0, 1.0, 1.0)])
    assert cmap.values == ((2.0 * 3.0 + 1.0 * 1.0) / 4.0,)


def test_pava_merges_duplicate_x():
    cmap = pava_fit([(1.0, 0.0, 1.0), (1.0, 2.0, 1.0), (2.0, 3.0, 1.0)])
    assert cmap.breakpoints == (1.0, 2.0)
    assert cmap.values == (1.0, 3.0)


def test_pava_output_always_monotone():
    rng = np.random.default_rng(4)
    for _ in range(200):
        n = int(rng.integers(1, 30))
        xs = rng.uniform(0, 10, size=n)
        ys = rng.normal(size=n)
        ws = rng.uniform(0.1, 5.0, size=n)
        cmap = pava_fit(zip(xs, ys, ws))
        assert all(b1 < b2 for b1, b2 in zip(cmap.breakpoints, cmap.breakpoints[1:]))
        assert all(v1 <= v2 for v1, v2 in zip(cmap.values, cmap.values[1:]))


def test_pava_idempotent():
    rng = np.random.default_rng(5)
    for _ in range(100):
        n = int(rng.integers(2, 20))
        xs = np.sort(rng.uniform(0, 10, size=n))
        ys = rng.normal(size=n)
        first = pava_fit(unit_pairs(xs, ys))
        fitted = [evaluate_map(first, x) for x in xs]
        second = pava_fit(unit_pairs(xs, fitted))
        refit = [evaluate_map(second, x) for x in xs]
        assert_allclose(refit, fitted, rtol=1e-12, atol=1e-12)


def test_pava_input_validation():
    with pytest.raises(EmptyFit):
        pava_fit([])
    with pytest.raises(OutOfRange):
        pava_fit([(1.0, 1.0, 0.0)])


# ---------------------------------------------------------------- evaluation


def test_evaluate_map_step_semantics():
    cmap = CalibrationMap(breakpoints=(1.0, 2.0, 4.0), values=(0.1, 0.5, 0.9))
    assert evaluate_map(cmap, 0.5) == 0.1  # below first breakpoint
    assert evaluate_map(cmap, 1.0) == 0.1
    assert evaluate_map(cmap, 1.9) == 0.1  # left-constant
    assert evaluate_map(cmap, 2.0) == 0.5
    assert evaluate_map(cmap, 3.9) == 0.5
    assert evaluate_map(cmap, 100.0) == 0.9  # flat extrapolation
    assert_allclose(evaluate_map(cmap, np.array([0.0, 2.5, 5.0])), [0.1, 0.5, 0.9])


# ---------------------------------------------------------------- normalization


def test_normalize_sigma_by_dimension():
    rec = make_record(pred=(0.0, 0.0, 100.0, 50.0), sigma=(5.0, 5.0, 5.0, 0.5))
    assert normalize_sigma(rec, 0) == pytest.approx(0.05)  # x: width 100
    assert normalize_sigma(rec, 1) == pytest.approx(0.1)  # y: height 50
    assert normalize_sigma(rec, 3) == pytest.approx(0.01)


def test_normalize_sigma_equal_numerator_denominator():
    rec = make_record(pred=(0.0, 0.0, 10.0, 0.5), sigma=(1.0, 0.5, 1.0, 0.5))
    assert normalize_sigma(rec, 1) == pytest.approx(1.0)


def test_normalize_sigma_degenerate_box():
    rec = make_record(pred=(5.0, 0.0, 5.0, 10.0))
    with pytest.raises(DegenerateBox):
        normalize_sigma(rec, 0)
    with pytest.raises(OutOfRange):
        normalize_sigma(rec, 4)


# ---------------------------------------------------------------- calibrator


def doubling_records(n, seed=0, n_classes=1):
    """Sigma understates the uncertainty by 2x in normalized terms.

    The predicted box is drawn first so its dimensions (the normalization
    denominators) are independent of the noise; the ground truth is the
    prediction displaced by 2 * sigma * u with u averaging one.  The isotonic
    fit should therefore recover the doubling map.
    """
    rng = np.random.default_rng(seed)
    records = []
    for i in range(n):
        w = rng.uniform(100, 200)
        h = rng.uniform(100, 200)
        x0, y0 = rng.uniform(0, 500, size=2)
        pred = np.array([x0, y0, x0 + w, y0 + h])
        sigma = rng.uniform(1.0, 10.0, size=4)
        u = rng.uniform(0.5, 1.5, size=4)  # mean 1
        resid = 2.0 * sigma * u * rng.choice([-1.0, 1.0], size=4)
        gt = pred - resid  # |pred - gt| = 2 sigma u, gt stays a valid box
        records.append(
            make_record(
                pred=tuple(pred),
                gt=tuple(gt),
                gt_class=i % n_classes,
                class_probs=tuple(1.0 if k == i % n_classes else 0.0 for k in range(n_classes)),
                sigma=tuple(sigma),
                image_id=f"cal-{i}",
            )
        )
    return records


def test_fit_calibrator_raw_scope_is_identity():
    records = doubling_records(20)
    calibrator = fit_calibrator(records, scope=SCOPE_RAW)
    for rec in records[:5]:
        assert apply_calibrated_sigma(calibrator, rec) == rec.sigma


def test_fit_calibrator_recovers_known_doubling():
    records = doubling_records(10_000, seed=1)
    calibrator = fit_calibrator(records, scope=SCOPE_GLOBAL)
    cmap = calibrator.global_map
    # normalized sigma lives in roughly [0.005, 0.1]; probe the interior
    for x in np.linspace(0.02, 0.08, 25):
        assert abs(evaluate_map(cmap, x) - 2.0 * x) < 0.05


def test_calibrated_sigma_positive_and_floored():
    records = doubling_records(200, seed=2)
    calibrator = fit_calibrator(records, scope=SCOPE_GLOBAL)
    rec = make_record(pred=(0.0, 0.0, 100.0, 100.0), sigma=(1e-12, 1.0, 1.0, 1.0))
    out = apply_calibrated_sigma(calibrator, rec)
    assert all(v >= SIGMA_FLOOR for v in out)


def test_sigma_floor_binds_on_zero_residual_block():
    # low-sigma records predict perfectly, so the first isotonic block is 0
    records = [
        make_record(sigma=(1.0, 1.0, 1.0, 1.0), image_id=f"z-{i}") for i in range(30)
    ]
    records += [
        make_record(
            pred=(2.0, 2.0, 102.0, 102.0),
            gt=(0.0, 0.0, 100.0, 100.0),
            sigma=(5.0, 5.0, 5.0, 5.0),
            image_id=f"n-{i}",
        )
        for i in range(30)
    ]
    calibrator = fit_calibrator(records, scope=SCOPE_GLOBAL)
    rec = make_record(sigma=(0.5, 0.5, 0.5, 0.5))
    assert apply_calibrated_sigma(calibrator, rec) == (SIGMA_FLOOR,) * 4


def test_apply_calibrated_sigma_degenerate_box_keeps_raw():
    records = doubling_records(50, seed=3)
    calibrator = fit_calibrator(records, scope=SCOPE_GLOBAL)
    rec = make_record(pred=(5.0, 0.0, 5.0, 10.0), sigma=(2.0, 2.0, 2.0, 2.0))
    assert apply_calibrated_sigma(calibrator, rec) == (2.0, 2.0, 2.0, 2.0)


def test_fit_calibrator_excludes_degenerate_boxes():
    records = doubling_records(50, seed=4) + [make_record(pred=(5.0, 0.0, 5.0, 10.0))]
    calibrator = fit_calibrator(records, scope=SCOPE_GLOBAL)
    assert calibrator.n_excluded == 1
    with pytest.raises(EmptyFit):
        fit_calibrator([make_record(pred=(5.0, 0.0, 5.0, 10.0))], scope=SCOPE_GLOBAL)


def test_per_class_fallback_for_small_classes():
    # class 1 has one usable record: it must fall back to the global map
    records = doubling_records(40, seed=5, n_classes=2)
    records = [r for r in records if r.gt_class == 0][:30]
    records.append(
        make_record(gt_class=1, class_probs=(0.0, 1.0), sigma=(2.0, 2.0, 2.0, 2.0))
    )
    calibrator = fit_calibrator(records, scope=SCOPE_PER_CLASS)
    assert calibrator.fallback_keys == (1,)
    assert (1, 0) not in calibrator.maps
    assert (0, 0) in calibrator.maps
    rec = make_record(gt_class=1, class_probs=(0.0, 1.0), sigma=(3.0, 3.0, 3.0, 3.0))
    fallback = apply_calibrated_sigma(calibrator, rec)
    global_only = apply_calibrated_sigma(
        fit_calibrator(records, scope=SCOPE_GLOBAL), rec
    )
    assert fallback == global_only


def test_per_class_scope_uses_class_specific_maps():
    records = doubling_records(400, seed=6, n_classes=2)
    calibrator = fit_calibrator(records, scope=SCOPE_PER_CLASS)
    assert set(calibrator.maps) == {(k, c) for k in (0, 1) for c in range(4)}


def test_calibrated_sigma_array_matches_record_level():
    records = doubling_records(100, seed=7, n_classes=2)
    calibrator = fit_calibrator(records, scope=SCOPE_PER_CLASS)
    from confdet.core import records_to_arrays

    pred, _, sigma, gt_class, _ = records_to_arrays(records)
    batch = calibrated_sigma_array(calibrator, pred, sigma, gt_class)
    for i in (0, 17, 55, 99):
        assert_allclose(batch[i], apply_calibrated_sigma(calibrator, records[i]))


def test_save_load_round_trip(tmp_path):
    records = doubling_records(300, seed=8, n_classes=2)
    calibrator = fit_calibrator(records, scope=SCOPE_PER_CLASS)
    path = tmp_path / "maps.json"
    save_calibrator(calibrator, path)
    loaded = load_calibrator(path)
    assert loaded.scope == calibrator.scope
    assert loaded.fallback_keys == calibrator.fallback_keys
    assert loaded.global_map.breakpoints == calibrator.global_map.breakpoints
    assert loaded.global_map.values == calibrator.global_map.values
    assert set(loaded.maps) == set(calibrator.maps)
    key = (0, 2)
    assert loaded.maps[key].breakpoints == calibrator.maps[key].breakpoints
    assert loaded.maps[key].values == calibrator.maps[key].values
