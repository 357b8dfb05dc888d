import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from detaildepth import DepthGrid, evaluate
from detaildepth.errors import DimensionMismatchError, EmptyInputError
from detaildepth.metrics import CDF_SAMPLES, DEFAULT_THRESHOLDS_CM, compare_reports


def test_identical_row():
    g = DepthGrid(np.random.default_rng(0).uniform(1, 3, (8, 8)))
    r = evaluate(g, g)
    assert r.row() == "100.00 100.00 100.00 0.000"
    assert r.header() == "acc@1.25cm acc@2.5cm acc@5cm mae_cm"
    assert DEFAULT_THRESHOLDS_CM == (1.25, 2.5, 5.0)


def test_half_exact_half_two_cm():
    gt = DepthGrid(np.zeros((4, 4)))
    pred = np.zeros((4, 4))
    pred[:2] = 0.02
    r = evaluate(DepthGrid(pred), gt)
    assert r.accuracy == (50.0, 100.0, 100.0)
    assert r.mae == 1.0


def test_threshold_is_strict():
    gt = DepthGrid(np.zeros((1, 2)))
    pred = DepthGrid(np.array([[0.0125, 0.0]]))
    r = evaluate(pred, gt)
    assert abs(0.0125 * 100 - 0.0) == 1.25
    assert r.accuracy[0] == 50.0


def test_masked_pixels_ignored():
    gt = DepthGrid(np.zeros((2, 2)))
    pred = DepthGrid(np.array([[0.0, 9.0], [0.0, 0.0]]), np.array([[True, False], [True, True]]))
    r = evaluate(pred, gt)
    assert r.count == 3 and r.mae == 0.0


def test_errors():
    with pytest.raises(DimensionMismatchError):
        evaluate(DepthGrid(np.zeros((2, 2))), DepthGrid(np.zeros((3, 2))))
    with pytest.raises(EmptyInputError):
        evaluate(DepthGrid(np.zeros((1, 1)), np.zeros((1, 1), bool)), DepthGrid(np.zeros((1, 1))))


def test_record_is_json():
    r = evaluate(DepthGrid(np.array([[0.0, 0.01]])), DepthGrid(np.zeros((1, 2))))
    rec = json.loads(json.dumps(r.as_record()))
    assert rec["accuracy_percent"] == [100.0, 100.0, 100.0]
    assert len(rec["cdf"]) == CDF_SAMPLES
    assert r.table().splitlines()[1] == r.row()


def test_compare_reports():
    gt = DepthGrid(np.zeros((2, 2)))
    a = evaluate(DepthGrid(np.full((2, 2), 0.01)), gt)
    b = evaluate(DepthGrid(np.array([[0.01, 0.03], [0.04, 0.06]])), gt)
    same = compare_reports(a, a)
    assert same.accuracy_delta == (0.0, 0.0, 0.0) and same.mae_delta == 0.0
    assert not any(same.accuracy_a_better) and not same.mae_a_better
    c = compare_reports(a, b)
    assert c.accuracy_delta == pytest.approx((75.0, 75.0, 25.0))
    assert c.mae_delta == pytest.approx(1.0 - 3.5)
    assert all(c.accuracy_a_better) and c.mae_a_better
    assert c.row() == "+75.00* +75.00* +25.00* -2.500*"
    with pytest.raises(ValueError):
        compare_reports(a, evaluate(gt, gt, thresholds=(1.0,)))


@given(st.integers(0, 10_000), st.lists(st.floats(0.1, 20.0), min_size=1, max_size=6, unique=True))
def test_monotone_accuracy_and_cdf(seed, thresholds):
    r_ = np.random.default_rng(seed)
    gt = DepthGrid(r_.uniform(1, 3, (9, 9)))
    pred = DepthGrid(gt.values + r_.normal(0, 0.03, (9, 9)), r_.random((9, 9)) < 0.8)
    if not (pred.mask & gt.mask).any():
        return
    ts = sorted(thresholds)
    r = evaluate(pred, gt, ts)
    assert all(a <= b for a, b in zip(r.accuracy, r.accuracy[1:]))
    assert all(0.0 <= a <= 100.0 for a in r.accuracy)
    assert r.cdf_fraction[0] >= 0.0 and r.cdf_fraction[-1] == 1.0
    assert np.all(np.diff(r.cdf_fraction) >= 0)
    assert r.cdf_error[0] == 0.0
