"""Detection-vs-ground-truth matching and the metric suite.

Matching is greedy by descending confidence, same category only, each
ground-truth box used at most once. Average precision is the 101-point
interpolated area under the precision envelope (COCO style) at whatever
IoU threshold the matches were pooled with (0.5 for AP50).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from . import kernels
from .geometry import Category, Detection, GroundTruthBox

N_CATEGORIES = len(Category)


class EvaluationError(ValueError):
    pass


def _check_iou_thresh(iou_thresh: float) -> None:
    if not 0.0 < iou_thresh < 1.0:
        raise ValueError(f"iou threshold must lie in (0, 1), got {iou_thresh}")


def _corners(boxes) -> np.ndarray:
    if not boxes:
        return np.zeros((0, 4), dtype=np.float64)
    return np.array([b.box.corners() for b in boxes], dtype=np.float64)


def prediction_order(preds: Sequence[Detection]) -> np.ndarray:
    """Indices of ``preds`` by descending confidence.

    Ties are broken on box content rather than input position, so any
    permutation of the same predictions yields the same matching.
    """
    if not preds:
        return np.zeros(0, dtype=np.int64)
    keys = np.array(
        [(-p.confidence, int(p.category), p.box.cx, p.box.cy, p.box.w, p.box.h) for p in preds],
        dtype=np.float64,
    )
    # lexsort treats the last key as primary.
    return np.lexsort(keys.T[::-1]).astype(np.int64)


@dataclass(frozen=True)
class MatchOutcome:
    """Result of matching one image. Indices refer to the input orders."""

    pred_gt: np.ndarray
    gt_matched: np.ndarray

    @property
    def tp(self) -> np.ndarray:
        return self.pred_gt >= 0

    @property
    def n_tp(self) -> int:
        return int(np.count_nonzero(self.pred_gt >= 0))


def match_image(
    preds: Sequence[Detection], gts: Sequence[GroundTruthBox], iou_thresh: float = 0.5
) -> MatchOutcome:
    _check_iou_thresh(iou_thresh)
    preds = list(preds)
    gts = list(gts)
    ious = kernels.iou_matrix(_corners(preds), _corners(gts))
    pred_cls = np.array([int(p.category) for p in preds], dtype=np.int64)
    gt_cls = np.array([int(g.category) for g in gts], dtype=np.int64)
    pred_gt = kernels.greedy_match(ious, pred_cls, gt_cls, prediction_order(preds), float(iou_thresh))
    gt_matched = np.zeros(len(gts), dtype=bool)
    gt_matched[pred_gt[pred_gt >= 0]] = True
    return MatchOutcome(pred_gt=pred_gt, gt_matched=gt_matched)


@dataclass(frozen=True)
class PooledMatches:
    """Per-prediction (confidence, category, TP flag) records pooled over a dataset."""

    confidence: np.ndarray
    category: np.ndarray
    tp: np.ndarray
    n_gt: np.ndarray
    n_images: int = 0
    iou_threshold: float = 0.5

    @property
    def n_predictions(self) -> int:
        return int(self.confidence.shape[0])

    def select(self, category: Optional[Category]) -> tuple[np.ndarray, np.ndarray, int]:
        """(confidence, tp, n_gt) restricted to one category, or everything for None."""
        if category is None:
            return self.confidence, self.tp, int(self.n_gt.sum())
        mask = self.category == int(category)
        return self.confidence[mask], self.tp[mask], int(self.n_gt[int(category)])

    def categories(self) -> list[Category]:
        """Categories seen in ground truth or predictions, in taxonomy order."""
        present = set(np.flatnonzero(self.n_gt).tolist()) | set(np.unique(self.category).tolist())
        return [Category(c) for c in sorted(present)]


def pool_matches(
    images: Iterable[tuple[Sequence[Detection], Sequence[GroundTruthBox]]],
    iou_thresh: float = 0.5,
) -> PooledMatches:
    """Match every (predictions, ground truth) pair and pool the outcomes."""
    _check_iou_thresh(iou_thresh)
    confs, cats, tps = [], [], []
    n_gt = np.zeros(N_CATEGORIES, dtype=np.int64)
    n_images = 0
    for preds, gts in images:
        preds = list(preds)
        outcome = match_image(preds, gts, iou_thresh)
        confs.extend(p.confidence for p in preds)
        cats.extend(int(p.category) for p in preds)
        tps.append(outcome.tp)
        for g in gts:
            n_gt[int(g.category)] += 1
        n_images += 1
    return PooledMatches(
        confidence=np.array(confs, dtype=np.float64),
        category=np.array(cats, dtype=np.int64),
        tp=np.concatenate(tps).astype(bool) if tps else np.zeros(0, dtype=bool),
        n_gt=n_gt,
        n_images=n_images,
        iou_threshold=iou_thresh,
    )


def _prf(n_tp: int, n_pred: int, n_gt: int) -> tuple[float, float, float]:
    precision = n_tp / n_pred if n_pred else 1.0
    recall = n_tp / n_gt if n_gt else 0.0
    f1 = 2.0 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return precision, recall, f1


def precision_recall_f1_at(
    pooled: PooledMatches, conf_thresh: float, category: Optional[Category] = None
) -> tuple[float, float, float]:
    """Precision, recall and F1 over predictions with confidence >= ``conf_thresh``.

    With ``category=None`` all categories are pooled (micro average).
    Precision is 1.0 when no prediction survives; F1 is 0.0 when p + r = 0.
    """
    conf, tp, n_gt = pooled.select(category)
    keep = conf >= conf_thresh
    return _prf(int(np.count_nonzero(tp & keep)), int(np.count_nonzero(keep)), n_gt)


@dataclass(frozen=True)
class CurveSeries:
    """One metric traced over a shared x grid, per category plus an aggregate.

    ``aggregate`` is the macro average over categories with ground truth.
    ``empty`` marks a sweep over zero predictions; the endpoints then carry
    the empty-prediction conventions.
    """

    name: str
    x_label: str
    y_label: str
    x: np.ndarray
    per_category: dict[Category, np.ndarray]
    aggregate: np.ndarray
    aggregate_mode: str = "macro"
    empty: bool = False

    def rows(self) -> list[list[float]]:
        cats = list(self.per_category)
        return [
            [float(self.x[i]), float(self.aggregate[i])] + [float(self.per_category[c][i]) for c in cats]
            for i in range(len(self.x))
        ]


@dataclass(frozen=True)
class SweepCurves:
    precision: CurveSeries
    recall: CurveSeries
    f1: CurveSeries


def _macro(per_category: Mapping[Category, np.ndarray], weights_from: PooledMatches, size: int) -> np.ndarray:
    with_gt = [c for c in per_category if weights_from.n_gt[int(c)] > 0]
    use = with_gt or list(per_category)
    if not use:
        return np.zeros(size, dtype=np.float64)
    return np.mean([per_category[c] for c in use], axis=0)


def confidence_sweep(pooled: PooledMatches) -> SweepCurves:
    """Precision, recall and F1 as functions of the confidence threshold.

    One point per distinct prediction confidence plus the endpoints 0 and 1.
    Every point equals ``precision_recall_f1_at`` at that threshold.
    """
    empty = pooled.n_predictions == 0
    grid = np.unique(np.concatenate([[0.0, 1.0], pooled.confidence]))
    p_cat, r_cat, f_cat = {}, {}, {}
    for cat in pooled.categories():
        conf, tp, n_gt = pooled.select(cat)
        order = np.argsort(conf, kind="stable")
        conf_sorted = conf[order]
        # Predictions at or above each threshold are a suffix of the ascending sort.
        tp_suffix = np.concatenate([np.cumsum(tp[order][::-1])[::-1], [0]])
        start = np.searchsorted(conf_sorted, grid, side="left")
        n_pred = conf.shape[0] - start
        n_tp = tp_suffix[start]
        with np.errstate(invalid="ignore", divide="ignore"):
            precision = np.where(n_pred > 0, n_tp / np.maximum(n_pred, 1), 1.0)
            recall = n_tp / n_gt if n_gt else np.zeros_like(grid)
            denom = precision + recall
            f1 = np.where(denom > 0, 2.0 * precision * recall / np.where(denom > 0, denom, 1.0), 0.0)
        p_cat[cat], r_cat[cat], f_cat[cat] = precision, recall, f1

    def series(name, y_label, per_cat):
        return CurveSeries(
            name=name,
            x_label="confidence",
            y_label=y_label,
            x=grid,
            per_category=per_cat,
            aggregate=_macro(per_cat, pooled, grid.shape[0]) if per_cat else _empty_aggregate(name, grid),
            empty=empty,
        )

    return SweepCurves(
        precision=series("precision_conf", "precision", p_cat),
        recall=series("recall_conf", "recall", r_cat),
        f1=series("f1_conf", "f1", f_cat),
    )


def _empty_aggregate(name: str, grid: np.ndarray) -> np.ndarray:
    fill = 1.0 if name == "precision_conf" else 0.0
    return np.full(grid.shape[0], fill)


def _staircase(pooled: PooledMatches, category: Category):
    conf, tp, n_gt = pooled.select(category)
    order = np.lexsort((~tp, -conf))
    return kernels.pr_staircase(conf[order], tp[order], n_gt)


def ap50(pooled: PooledMatches, category: Category) -> Optional[float]:
    """101-point interpolated AP for one category; None if it has no ground truth."""
    n_gt = int(pooled.n_gt[int(category)])
    if n_gt == 0:
        return None
    _, recall, precision = _staircase(pooled, category)
    if recall.shape[0] == 0:
        return 0.0
    return float(np.mean(kernels.interp_precision(recall, precision, kernels.RECALL_GRID)))


def precision_recall_curve(pooled: PooledMatches) -> CurveSeries:
    """Interpolated precision sampled on the 101-point recall grid."""
    per_cat = {}
    for cat in pooled.categories():
        n_gt = int(pooled.n_gt[int(cat)])
        if n_gt == 0:
            per_cat[cat] = np.zeros(kernels.RECALL_GRID.shape[0])
            continue
        _, recall, precision = _staircase(pooled, cat)
        per_cat[cat] = kernels.interp_precision(recall, precision, kernels.RECALL_GRID)
    return CurveSeries(
        name="precision_recall",
        x_label="recall",
        y_label="precision",
        x=kernels.RECALL_GRID.copy(),
        per_category=per_cat,
        aggregate=_macro(per_cat, pooled, kernels.RECALL_GRID.shape[0]),
        empty=pooled.n_predictions == 0,
    )


def map50(per_category_ap: Mapping[Category, Optional[float]]) -> float:
    """Arithmetic mean of the defined per-category APs."""
    values = [v for v in per_category_ap.values() if v is not None]
    if not values:
        raise EvaluationError("no category has ground truth; mAP is undefined")
    return float(sum(values) / len(values))


def best_f1_threshold(series: CurveSeries, category: Optional[Category] = None) -> tuple[float, float]:
    """Confidence maximizing F1, ties broken toward the higher confidence."""
    y = series.aggregate if category is None else series.per_category[category]
    if series.empty or len(series.x) == 0:
        raise EvaluationError("cannot pick a threshold from an empty series")
    best = 0
    for i in range(len(y)):
        if y[i] >= y[best]:
            best = i
    return float(series.x[best]), float(y[best])


@dataclass(frozen=True)
class EvalReport:
    ap: dict[Category, Optional[float]]
    map50: float
    best_f1_confidence: Optional[float]
    best_f1: Optional[float]
    n_images: int
    instances: dict[Category, int]
    iou_threshold: float = 0.5
    aggregate_mode: str = "macro"
    curves: Optional[SweepCurves] = field(default=None, compare=False, repr=False)
    pr_curve: Optional[CurveSeries] = field(default=None, compare=False, repr=False)

    def to_dict(self) -> dict:
        return {
            "iou_threshold": self.iou_threshold,
            "n_images": self.n_images,
            "instances": {c.label: n for c, n in self.instances.items()},
            "ap50": {c.label: v for c, v in self.ap.items()},
            "map50": self.map50,
            "best_f1": {"confidence": self.best_f1_confidence, "f1": self.best_f1},
            "aggregate": self.aggregate_mode,
        }


def build_report(pooled: PooledMatches) -> EvalReport:
    if int(pooled.n_gt.sum()) == 0:
        raise EvaluationError("no ground truth boxes; nothing to evaluate")
    aps = {cat: ap50(pooled, cat) for cat in Category}
    curves = confidence_sweep(pooled)
    if curves.f1.empty:
        best_conf = best_f1 = None
    else:
        best_conf, best_f1 = best_f1_threshold(curves.f1)
    return EvalReport(
        ap=aps,
        map50=map50(aps),
        best_f1_confidence=best_conf,
        best_f1=best_f1,
        n_images=pooled.n_images,
        instances={cat: int(pooled.n_gt[int(cat)]) for cat in Category},
        iou_threshold=pooled.iou_threshold,
        curves=curves,
        pr_curve=precision_recall_curve(pooled),
    )
