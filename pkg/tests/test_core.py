import numpy as np
import pytest
from numpy.testing import assert_allclose

from confdet.core import (
    AGNOSTIC,
    BoundingBox,
    Dataset,
    MiscoverageConfig,
    QuantileTable,
    RAPSConfig,
    records_to_arrays,
    validate_record,
)
from confdet.errors import OutOfRange, ValidationError

from conftest import make_record


def test_bounding_box_dimensions():
    box = BoundingBox(1.0, 2.0, 4.0, 10.0)
    assert box.width == 3.0
    assert box.height == 8.0
    assert_allclose(box.as_array(), [1.0, 2.0, 4.0, 10.0])
    assert BoundingBox.from_array(box.as_array()) == box


def test_bounding_box_contains_inclusive():
    outer = BoundingBox(0.0, 0.0, 10.0, 10.0)
    assert outer.contains(BoundingBox(0.0, 0.0, 10.0, 10.0))
    assert outer.contains(BoundingBox(2.0, 2.0, 8.0, 8.0))
    assert not outer.contains(BoundingBox(-0.1, 0.0, 10.0, 10.0))
    assert not outer.contains(BoundingBox(0.0, 0.0, 10.1, 10.0))


def test_validate_record_well_formed():
    assert validate_record(make_record()) == []


def test_validate_record_zero_sigma():
    rec = make_record(sigma=(0.0, 1.0, 1.0, 1.0))
    problems = validate_record(rec)
    assert problems == ["sigma[0] not > 0"]


def test_validate_record_prob_sum():
    rec = make_record(class_probs=(0.5, 0.4), gt_class=0)
    problems = validate_record(rec)
    assert len(problems) == 1
    assert "0.9" in problems[0]
    # within tolerance is fine
    rec = make_record(class_probs=(0.5, 0.5 + 5e-7), gt_class=0)
    assert validate_record(rec) == []


def test_validate_record_inverted_box_and_bad_class():
    rec = make_record(pred=(10.0, 0.0, 5.0, 10.0), gt_class=3, class_probs=(1.0,))
    problems = validate_record(rec)
    assert "pred_box: x0 > x1" in problems
    assert any("gt_class 3 outside [0, 1)" in p for p in problems)


def test_validate_record_never_raises():
    rec = make_record(
        pred=(float("nan"), 0.0, 1.0, 1.0),
        sigma=(1.0, -2.0, float("inf"), 1.0),
        class_probs=(0.2, 0.2),
        gt_class=7,
    )
    problems = validate_record(rec)
    assert isinstance(problems, list)
    assert len(problems) >= 3


def test_miscoverage_config_bounds():
    cfg = MiscoverageConfig(alpha_corner=0.025)
    assert cfg.alpha_bbox == 0.1
    with pytest.raises(OutOfRange):
        MiscoverageConfig(alpha_corner=0.25)
    with pytest.raises(OutOfRange):
        MiscoverageConfig(alpha_corner=0.0)
    with pytest.raises(OutOfRange):
        MiscoverageConfig(alpha_corner=0.1, alpha_class=1.0)


def test_raps_config_validation():
    RAPSConfig(penalty_a=0.0, threshold_b=0)
    with pytest.raises(OutOfRange):
        RAPSConfig(penalty_a=-0.1)
    with pytest.raises(OutOfRange):
        RAPSConfig(threshold_b=-1)


def test_quantile_table_accessors():
    table = QuantileTable(
        scope="class_wise",
        quantiles={0: (1.0, 2.0, 3.0, 4.0), 1: (5.0, 6.0, 7.0, 8.0)},
        level={0: 0.95, 1: 0.95},
        n_per_group={0: 20, 1: 20},
        alpha_corner=0.05,
    )
    assert_allclose(table.corners(1), [5.0, 6.0, 7.0, 8.0])
    assert table.by_class(2).shape == (2, 4)
    assert_allclose(table.by_class(2)[0], [1.0, 2.0, 3.0, 4.0])

    agnostic = QuantileTable(
        scope="class_agnostic",
        quantiles={AGNOSTIC: (1.0, 1.0, 1.0, 1.0)},
        level={AGNOSTIC: 0.9},
        n_per_group={AGNOSTIC: 9},
        alpha_corner=0.1,
    )
    with pytest.raises(KeyError):
        agnostic.by_class(1)


def test_dataset_from_records_infers_k():
    recs = [make_record(class_probs=(0.5, 0.5), gt_class=1) for _ in range(3)]
    ds = Dataset.from_records(recs)
    assert ds.n_classes == 2
    assert len(ds) == 3


def test_dataset_from_records_rejects_k_mismatch():
    recs = [
        make_record(class_probs=(0.5, 0.5), gt_class=0),
        make_record(class_probs=(1.0,), gt_class=0),
    ]
    with pytest.raises(ValidationError) as exc_info:
        Dataset.from_records(recs)
    assert exc_info.value.line == 2


def test_records_to_arrays_shapes():
    recs = [make_record(class_probs=(0.3, 0.7), gt_class=1) for _ in range(5)]
    pred, gt, sigma, gt_class, probs = records_to_arrays(recs)
    assert pred.shape == (5, 4)
    assert gt.shape == (5, 4)
    assert sigma.shape == (5, 4)
    assert gt_class.shape == (5,)
    assert probs.shape == (5, 2)
    assert gt_class.dtype.kind == "i"
    assert np.all(gt_class == 1)
