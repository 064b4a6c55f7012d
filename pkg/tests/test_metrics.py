import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import ap_reference, greedy_reference
from urbanseg.metrics import (AP_RANGES, AP_THRESHOLDS, EvalReport, MatchTable, ap_summary, average_precision,
                              category_iou, evaluate, instance_iou, iou_matrix, miou_by_category)
from urbanseg.taxonomy import BuildingCategory, InvalidInputError


def test_thresholds():
    assert len(AP_THRESHOLDS) == 15 and AP_THRESHOLDS[0] == 0.25 and AP_THRESHOLDS[-1] == 0.95
    assert len(AP_RANGES["50-95"]) == 10


def test_instance_iou_examples():
    assert instance_iou([1, 2, 3], [1, 2, 3]) == 1.0
    assert instance_iou([1, 2], [3, 4]) == 0.0
    assert instance_iou(range(60), range(100)) == 0.6
    with pytest.raises(InvalidInputError):
        instance_iou([], [])


@given(st.sets(st.integers(0, 30)), st.sets(st.integers(0, 30)))
def test_instance_iou_symmetric(a, b):
    if a or b:
        assert instance_iou(list(a), list(b)) == instance_iou(list(b), list(a))


def test_iou_matrix_overlapping_gts_fallback():
    m = iou_matrix([[0, 1], [2]], [[0, 1, 2], [1, 2]])
    np.testing.assert_allclose(m, [[2 / 3, 1 / 3], [1 / 3, 1 / 2]])


GT = [list(range(100))]
PRED_06 = [list(range(60))]


def test_ap_single_match():
    assert average_precision(PRED_06, [0.9], GT, 0.5) == 1.0
    assert average_precision(PRED_06, [0.9], GT, 0.65) == 0.0


def test_ap_two_preds_two_gts():
    gts = [[0, 1, 2, 3], [4, 5, 6, 7]]
    preds = [[0, 1, 2, 3], [8, 9]]
    assert average_precision(preds, [0.9, 0.8], gts, 0.5) == 0.5


def test_ap_conventions():
    assert average_precision([], [], [], 0.5) == 1.0
    assert average_precision([[1]], [0.3], [], 0.5) == 0.0
    assert average_precision([], [], [[1]], 0.5) == 0.0
    with pytest.raises(InvalidInputError):
        average_precision([], [], [], 0.0)


def test_ap_summary_fixtures():
    ap, ap50, ap25 = ap_summary(PRED_06, [0.7], GT)
    assert ap == 8 / 15 and ap50 == 1.0 and ap25 == 1.0
    gts = [[0, 1], [2, 3, 4], [5]]
    assert ap_summary(gts, [0.1, 0.9, 0.5], gts) == (1.0, 1.0, 1.0)
    assert ap_summary([], [], gts) == (0.0, 0.0, 0.0)


def random_case(rng, n_points=16, max_sets=4):
    labels = rng.integers(-1, rng.integers(1, max_sets + 1), size=n_points)
    gts = [np.flatnonzero(labels == g).tolist() for g in range(labels.max() + 1)]
    gts = [g for g in gts if g]
    preds = []
    for _ in range(rng.integers(0, max_sets + 1)):
        mask = rng.random(n_points) < rng.uniform(0.1, 0.6)
        if mask.any():
            preds.append(np.flatnonzero(mask).tolist())
    scores = rng.random(len(preds)).round(2).tolist()
    return preds, scores, gts


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 10**9))
def test_ap_matches_reference(seed):
    rng = np.random.default_rng(seed)
    preds, scores, gts = random_case(rng)
    t = AP_THRESHOLDS[rng.integers(len(AP_THRESHOLDS))]
    tp = greedy_reference(preds, scores, gts, t)
    assert abs(average_precision(preds, scores, gts, t) - ap_reference(scores, tp, len(gts))) < 1e-12


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 10**9))
def test_ap_invariant_under_monotone_score_transform(seed):
    rng = np.random.default_rng(seed)
    preds, scores, gts = random_case(rng)
    s = np.array(scores)
    for transformed in (np.exp(3 * s), 5 * s + 2, s ** 3, np.arctan(s)):
        assert ap_summary(preds, transformed, gts) == ap_summary(preds, s, gts)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**9))
def test_ap_non_increasing_in_threshold(seed):
    preds, scores, gts = random_case(np.random.default_rng(seed))
    values = [average_precision(preds, scores, gts, t) for t in AP_THRESHOLDS]
    assert all(a >= b - 1e-15 for a, b in zip(values, values[1:]))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**9))
def test_extra_lowest_zero_iou_prediction_never_helps(seed):
    preds, scores, gts = random_case(np.random.default_rng(seed))
    extra = preds + [[1000]]
    lowest = scores + [min(scores, default=1.0) - 1.0]
    for t in (0.25, 0.5, 0.75):
        assert average_precision(extra, lowest, gts, t) <= average_precision(preds, scores, gts, t)


def test_match_table_merge_is_associative():
    rng = np.random.default_rng(3)
    tables = []
    for _ in range(3):
        preds, scores, gts = random_case(rng)
        tables.append(MatchTable.from_ious(iou_matrix(preds, gts), scores))
    a, b, c = tables
    left, right = a.merge(b).merge(c), a.merge(b.merge(c))
    assert all(left.ap(t) == right.ap(t) for t in AP_THRESHOLDS)


def brute_category_iou(pred, gt, c):
    inter = union = 0
    for p, g in zip(pred, gt):
        inter += p == c and g == c
        union += p == c or g == c
    return inter / union if union else None


def test_category_iou_identical_and_absent():
    labels = [0, 0, 1, 6, 7]
    per, mean = miou_by_category(labels, labels)
    assert per[BuildingCategory.COMMERCIAL] == 1.0 and per[BuildingCategory.TEMPORARY] == 1.0
    assert per[BuildingCategory.OFFICE] is None
    assert mean == 1.0


def test_category_iou_half_flipped_matches_bruteforce():
    rng = np.random.default_rng(0)
    gt = rng.integers(0, 8, size=400)
    pred = gt.copy()
    office = np.flatnonzero(gt == BuildingCategory.OFFICE)
    pred[office[: office.size // 2]] = BuildingCategory.CULTURAL
    per = category_iou(pred, gt)
    for c in BuildingCategory.labeled():
        assert per[c] == brute_category_iou(pred.tolist(), gt.tolist(), int(c))
    assert per[BuildingCategory.OFFICE] == (office.size - office.size // 2) / office.size


def test_category_iou_length_mismatch():
    with pytest.raises(InvalidInputError):
        category_iou([0, 1], [0])


def test_evaluate_perfect_and_report_round_trip():
    gt_inst = np.array([-1, 3, 3, 5, 5, 5, -1])
    gt_cat = np.array([7, 1, 1, 4, 4, 4, 7])
    pred = np.array([-1, 0, 0, 1, 1, 1, -1])
    report = evaluate(pred, {0: 0.9, 1: 0.4}, {0: 1, 1: 4}, gt_inst, gt_cat, with_curves=True)
    assert (report.ap, report.ap50, report.ap25, report.miou) == (1.0, 1.0, 1.0, 1.0)
    assert report.category_iou["Re"] == 1.0 and report.category_iou["Co"] is None
    assert EvalReport.from_json(report.to_json()) == report
    assert "AP50" in report.table() and "-" in report.table()


def test_evaluate_groups_split_ground_truth():
    gt_inst = np.array([1, 1, 1, 1])
    gt_cat = np.zeros(4)
    pred = np.array([0, 0, 1, 1])
    whole = evaluate(pred, {0: 1.0, 1: 0.5}, {}, gt_inst, gt_cat)
    split = evaluate(pred, {0: 1.0, 1: 0.5}, {}, gt_inst, gt_cat, groups=[0, 0, 1, 1])
    assert split.ap == 1.0 and whole.ap50 == 1.0 and whole.ap < 1.0 and split.n_gt == 2


def test_evaluate_rejects_mismatched_universe():
    with pytest.raises(InvalidInputError):
        evaluate(np.zeros(3), {0: 1.0}, {}, np.zeros(4), np.zeros(4))
