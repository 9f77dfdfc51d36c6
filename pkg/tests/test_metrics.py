import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ppewatch.geometry import Category, Detection, GroundTruthBox
from ppewatch.metrics import (
    CurveSeries,
    EvaluationError,
    ap50,
    best_f1_threshold,
    build_report,
    confidence_sweep,
    map50,
    match_image,
    pool_matches,
    precision_recall_f1_at,
    precision_recall_curve,
)

import oracles
from conftest import corners, random_instance

H = Category.HARDHAT
BOX = corners(0.1, 0.1, 0.3, 0.3)


def det(box, conf, cat=H):
    return Detection(cat, box, conf)


def gt(box, cat=H):
    return GroundTruthBox(cat, box)


# -- match_image ---------------------------------------------------------------

def test_match_exact_overlap_is_tp():
    out = match_image([det(BOX, 0.9)], [gt(BOX)], 0.5)
    assert out.tp.tolist() == [True]
    assert out.gt_matched.tolist() == [True]


def test_match_below_threshold_is_fp():
    # iou = 0.01 / (0.04 + 0.04 - 0.01) ~ 0.14 < 0.5
    out = match_image([det(corners(0.0, 0.0, 0.2, 0.2), 0.9)], [gt(BOX)], 0.5)
    assert out.tp.tolist() == [False]
    assert out.gt_matched.tolist() == [False]


def test_match_two_preds_one_gt():
    near = corners(0.11, 0.1, 0.31, 0.3)
    preds = [det(near, 0.8), det(BOX, 0.9)]
    out = match_image(preds, [gt(BOX)], 0.5)
    # Exhaustive check: only one prediction may claim the GT, and the
    # greedy rule gives it to the higher-confidence one.
    assert out.tp.tolist() == [False, True]
    assert out.pred_gt.tolist() == [-1, 0]


def test_match_prefers_highest_iou_gt():
    g_far = gt(corners(0.12, 0.1, 0.32, 0.3))
    g_exact = gt(BOX)
    out = match_image([det(BOX, 0.9)], [g_far, g_exact], 0.5)
    assert out.pred_gt.tolist() == [1]


def test_match_never_crosses_categories():
    out = match_image([det(BOX, 0.9, Category.NO_HARDHAT)], [gt(BOX, H)], 0.5)
    assert out.tp.tolist() == [False]


@pytest.mark.parametrize("bad", [0.0, 1.0, -0.1, 1.5])
def test_match_rejects_bad_threshold(bad):
    with pytest.raises(ValueError):
        match_image([], [], bad)


def test_match_empty_predictions():
    out = match_image([], [gt(BOX)], 0.5)
    assert out.tp.size == 0 and out.gt_matched.tolist() == [False]


# -- precision / recall / F1 ---------------------------------------------------

def _three_pred_instance():
    gts = [gt(corners(0.1 * k, 0.1, 0.1 * k + 0.08, 0.2)) for k in range(4)]
    preds = [
        det(gts[0].box, 0.9),
        det(gts[1].box, 0.8),
        det(corners(0.6, 0.6, 0.7, 0.7), 0.7),
    ]
    return pool_matches([(preds, gts)])


def test_prf_hand_counted():
    p, r, f = precision_recall_f1_at(_three_pred_instance(), 0.1)
    assert p == pytest.approx(2 / 3)
    assert r == pytest.approx(0.5)
    assert f == pytest.approx(4 / 7)


def test_prf_perfect_and_empty_conventions():
    gts = [gt(BOX), gt(corners(0.5, 0.5, 0.7, 0.7))]
    pooled = pool_matches([([det(g.box, 0.6) for g in gts], gts)])
    assert precision_recall_f1_at(pooled, 0.5) == (1.0, 1.0, 1.0)
    assert precision_recall_f1_at(pooled, 0.61) == (1.0, 0.0, 0.0)


# -- confidence sweep ----------------------------------------------------------

def test_sweep_single_tp_recall_step():
    pooled = pool_matches([([det(BOX, 0.7)], [gt(BOX)])])
    rec = confidence_sweep(pooled).recall
    assert rec.x.tolist() == [0.0, 0.7, 1.0]
    assert rec.per_category[H].tolist() == [1.0, 1.0, 0.0]


def test_sweep_perfect_detector_f1_is_one_up_to_min_conf():
    gts = [gt(BOX), gt(corners(0.5, 0.5, 0.7, 0.7))]
    pooled = pool_matches([([det(gts[0].box, 0.6), det(gts[1].box, 0.8)], gts)])
    f1 = confidence_sweep(pooled).f1
    on = f1.x <= 0.6
    assert np.all(f1.aggregate[on] == 1.0)
    assert np.all(np.diff(f1.x) > 0)


def test_sweep_matches_pointwise_recomputation(rng):
    images, cats = random_instance(rng, n_categories=2, max_images=3, max_boxes=10)
    # trim to a 20-prediction instance
    preds = [p for ps, _ in images for p in ps][:20]
    gts = [g for _, gs in images for g in gs]
    pooled = pool_matches([(preds, gts)])
    curves = confidence_sweep(pooled)
    for i, x in enumerate(curves.f1.x):
        per = []
        for cat in curves.f1.per_category:
            p, r, f = precision_recall_f1_at(pooled, x, cat)
            assert curves.precision.per_category[cat][i] == pytest.approx(p, abs=1e-12)
            assert curves.recall.per_category[cat][i] == pytest.approx(r, abs=1e-12)
            assert curves.f1.per_category[cat][i] == pytest.approx(f, abs=1e-12)
            if pooled.n_gt[int(cat)] > 0:
                per.append(f)
        assert curves.f1.aggregate[i] == pytest.approx(np.mean(per), abs=1e-12)


def test_sweep_empty_predictions_marker():
    pooled = pool_matches([([], [gt(BOX)])])
    curves = confidence_sweep(pooled)
    assert curves.recall.empty
    assert curves.recall.x.tolist() == [0.0, 1.0]
    assert np.all(curves.recall.aggregate == 0.0)
    assert np.all(curves.precision.aggregate == 1.0)
    with pytest.raises(EvaluationError):
        best_f1_threshold(curves.f1)


def test_recall_curve_non_increasing_and_starts_at_total_recall(rng):
    for _ in range(20):
        images, cats = random_instance(rng)
        pooled = pool_matches(images)
        rec = confidence_sweep(pooled).recall
        for cat, y in rec.per_category.items():
            assert np.all(np.diff(y) <= 1e-15)
            conf, tp, n_gt = pooled.select(cat)
            if n_gt:
                assert y[0] == pytest.approx(tp.sum() / n_gt)


# -- AP50 ----------------------------------------------------------------------

def test_ap_perfect_and_zero():
    gts = [gt(BOX), gt(corners(0.5, 0.5, 0.7, 0.7))]
    perfect = pool_matches([([det(g.box, 0.9) for g in gts], gts)])
    assert ap50(perfect, H) == 1.0
    none = pool_matches([([det(corners(0.8, 0.8, 0.9, 0.9), 0.9)], gts)])
    assert ap50(none, H) == 0.0
    assert ap50(pool_matches([([], gts)]), H) == 0.0


def test_ap_undefined_without_ground_truth():
    pooled = pool_matches([([det(BOX, 0.9)], [gt(BOX, Category.PERSON)])])
    assert ap50(pooled, H) is None


def test_ap_three_pred_instance():
    g1, g2 = gt(BOX), gt(corners(0.5, 0.5, 0.7, 0.7))
    preds = [det(g1.box, 0.9), det(corners(0.8, 0.8, 0.9, 0.9), 0.8), det(g2.box, 0.7)]
    pooled = pool_matches([(preds, [g1, g2])])
    records = [(0.9, True), (0.8, False), (0.7, True)]
    # envelope: 1 on recall [0, 0.5], 2/3 on (0.5, 1]; 51 + 50 grid points
    frozen = (51 * 1.0 + 50 * (2 / 3)) / 101
    assert oracles.ap_sampled(records, 2) == pytest.approx(frozen, abs=1e-12)
    assert ap50(pooled, H) == pytest.approx(frozen, abs=1e-12)
    assert abs(ap50(pooled, H) - oracles.ap_exact(records, 2)) < 0.01


def test_interpolated_precision_is_monotone(rng):
    for _ in range(20):
        images, _ = random_instance(rng)
        pr = precision_recall_curve(pool_matches(images))
        for y in pr.per_category.values():
            assert np.all(np.diff(y) <= 1e-15)


def test_low_confidence_fp_never_increases_ap(rng):
    for _ in range(30):
        images, cats = random_instance(rng)
        pooled = pool_matches(images)
        for cat in cats:
            base = ap50(pooled, cat)
            if base is None:
                continue
            low = 0.01
            extra = Detection(cat, corners(0.0, 0.0, 0.01, 0.01), low)
            more = pool_matches(images + [([extra], [])])
            assert ap50(more, cat) <= base + 1e-12


def test_metrics_invariant_under_prediction_permutation(rng):
    for _ in range(20):
        images, cats = random_instance(rng, conf_decimals=1)
        shuffled = [([ps[i] for i in rng.permutation(len(ps))], gs) for ps, gs in images]
        a, b = build_report(pool_matches(images)), build_report(pool_matches(shuffled))
        assert a.ap == b.ap
        assert a.map50 == b.map50
        assert a.best_f1_confidence == b.best_f1_confidence


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_ap_matches_sampled_oracle(seed):
    images, cats = random_instance(np.random.default_rng(seed))
    pooled = pool_matches(images)
    for cat in cats:
        sampled, exact, _, _ = oracles.dataset_ap(images, cat)
        got = ap50(pooled, cat)
        if sampled is None:
            assert got is None
            continue
        assert got == pytest.approx(sampled, abs=1e-9)
        assert abs(got - exact) <= 0.01 + 1e-12


# -- mAP and report -------------------------------------------------------------

def test_map50_examples():
    assert map50({H: 1.0}) == 1.0
    assert map50({H: 0.4, Category.MASK: 0.6, Category.PERSON: None}) == pytest.approx(0.5)
    with pytest.raises(EvaluationError):
        map50({H: None})


def test_map50_yolov5s_fixture():
    values = {
        Category.HARDHAT: 0.897, Category.NO_HARDHAT: 0.717, Category.NO_MASK: 0.672,
        Category.NO_SAFETY_VEST: 0.685, Category.PERSON: 0.832, Category.SAFETY_CONE: 0.862,
        Category.SAFETY_VEST: 0.869, Category.MASK: 0.956, Category.MACHINERY: 0.953,
        Category.VEHICLE: 0.627,
    }
    assert sum(values.values()) == pytest.approx(8.070)
    assert map50(values) == pytest.approx(0.807, abs=1e-9)


def test_report_requires_ground_truth():
    with pytest.raises(EvaluationError):
        build_report(pool_matches([([det(BOX, 0.5)], [])]))


def test_report_taxonomy_order_and_counts():
    gts = [gt(BOX, Category.PERSON), gt(corners(0.5, 0.5, 0.7, 0.7), H)]
    rep = build_report(pool_matches([([det(g.box, 0.9, g.category) for g in gts], gts)]))
    assert list(rep.ap) == list(Category)
    assert rep.instances[Category.PERSON] == 1 and rep.instances[Category.MASK] == 0
    assert rep.map50 == 1.0
    assert rep.to_dict()["aggregate"] == "macro"


# -- best F1 --------------------------------------------------------------------

def _series(x, y):
    x, y = np.asarray(x, float), np.asarray(y, float)
    return CurveSeries("f1_conf", "confidence", "f1", x, {H: y}, y)


def test_best_f1_tie_breaks_high():
    assert best_f1_threshold(_series([0.0, 0.3, 0.9, 1.0], [1, 1, 1, 1])) == (1.0, 1.0)


def test_best_f1_single_peak():
    assert best_f1_threshold(_series([0.0, 0.2, 0.4, 0.6], [0.1, 0.5, 0.8, 0.3])) == (0.4, 0.8)


def test_best_f1_matches_linear_scan(rng):
    for _ in range(50):
        n = int(rng.integers(1, 30))
        x = np.sort(rng.choice(np.arange(100) / 100, size=n, replace=False))
        y = np.round(rng.uniform(0, 1, size=n), 1)
        top = max(y)
        expect = max(i for i in range(n) if y[i] == top)
        assert best_f1_threshold(_series(x, y)) == (x[expect], y[expect])
