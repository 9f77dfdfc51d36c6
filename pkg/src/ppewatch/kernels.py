"""Hot numeric kernels behind the evaluation metrics.

Each kernel exists twice: a loop form compiled by numba (``*_nb``) and a
vectorized numpy form (``*_np``). The public names dispatch on
``ppewatch._accel.USE_NUMBA``; both forms are importable so they can be
cross-checked and benchmarked against each other.
"""

from __future__ import annotations

import numpy as np

from ._accel import USE_NUMBA, njit

# Recall sample grid for 101-point interpolated AP. Recall values that land
# exactly on a grid point must count as reaching it despite rounding.
RECALL_GRID = np.arange(101, dtype=np.float64) / 100.0
_GRID_EPS = 1e-12


# -- pairwise IoU -----------------------------------------------------------

@njit
def iou_matrix_nb(a, b):
    n, m = a.shape[0], b.shape[0]
    out = np.zeros((n, m), dtype=np.float64)
    for i in range(n):
        area_a = (a[i, 2] - a[i, 0]) * (a[i, 3] - a[i, 1])
        for j in range(m):
            iw = min(a[i, 2], b[j, 2]) - max(a[i, 0], b[j, 0])
            if iw <= 0.0:
                continue
            ih = min(a[i, 3], b[j, 3]) - max(a[i, 1], b[j, 1])
            if ih <= 0.0:
                continue
            inter = iw * ih
            area_b = (b[j, 2] - b[j, 0]) * (b[j, 3] - b[j, 1])
            out[i, j] = inter / (area_a + area_b - inter)
    return out


def iou_matrix_np(a, b):
    a = np.asarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 4)
    iw = np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0])
    ih = np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1])
    inter = np.where((iw > 0) & (ih > 0), iw * ih, 0.0)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(inter > 0, inter / union, 0.0)


# -- greedy matching ----------------------------------------------------------

@njit
def greedy_match_nb(ious, pred_cls, gt_cls, order, thresh):
    n, m = ious.shape
    pred_gt = np.full(n, -1, dtype=np.int64)
    taken = np.zeros(m, dtype=np.bool_)
    for k in range(order.shape[0]):
        i = order[k]
        best = -1
        best_iou = thresh
        for j in range(m):
            if taken[j] or gt_cls[j] != pred_cls[i]:
                continue
            v = ious[i, j]
            if v >= best_iou and (best < 0 or v > best_iou):
                best = j
                best_iou = v
        if best >= 0:
            taken[best] = True
            pred_gt[i] = best
    return pred_gt


def greedy_match_np(ious, pred_cls, gt_cls, order, thresh):
    n, m = ious.shape
    pred_gt = np.full(n, -1, dtype=np.int64)
    if n == 0 or m == 0:
        return pred_gt
    # Mask cross-category pairs and sub-threshold overlaps once up front.
    cand = np.where((pred_cls[:, None] == gt_cls[None, :]) & (ious >= thresh), ious, -1.0)
    for i in order:
        row = cand[i]
        j = int(np.argmax(row))
        if row[j] >= 0.0:
            pred_gt[i] = j
            cand[:, j] = -1.0
    return pred_gt


# -- PR staircase at distinct confidence thresholds ---------------------------

@njit
def pr_staircase_nb(conf_desc, tp_desc, n_gt):
    n = conf_desc.shape[0]
    recall = np.empty(n, dtype=np.float64)
    precision = np.empty(n, dtype=np.float64)
    thresholds = np.empty(n, dtype=np.float64)
    k = 0
    ctp = 0
    for i in range(n):
        if tp_desc[i]:
            ctp += 1
        # Emit one point per tie group, after its last member.
        if i == n - 1 or conf_desc[i + 1] != conf_desc[i]:
            thresholds[k] = conf_desc[i]
            recall[k] = ctp / n_gt
            precision[k] = ctp / (i + 1)
            k += 1
    return thresholds[:k], recall[:k], precision[:k]


def pr_staircase_np(conf_desc, tp_desc, n_gt):
    conf_desc = np.asarray(conf_desc, dtype=np.float64)
    n = conf_desc.shape[0]
    if n == 0:
        empty = np.empty(0, dtype=np.float64)
        return empty, empty.copy(), empty.copy()
    ctp = np.cumsum(np.asarray(tp_desc, dtype=np.int64))
    last = np.ones(n, dtype=bool)
    last[:-1] = conf_desc[1:] != conf_desc[:-1]
    idx = np.flatnonzero(last)
    return conf_desc[idx], ctp[idx] / n_gt, ctp[idx] / (idx + 1.0)


# -- 101-point interpolated AP -------------------------------------------------

@njit
def interp_precision_nb(recall, precision, grid):
    n = recall.shape[0]
    env = np.empty(n, dtype=np.float64)
    running = 0.0
    for i in range(n - 1, -1, -1):
        if precision[i] > running:
            running = precision[i]
        env[i] = running
    out = np.zeros(grid.shape[0], dtype=np.float64)
    j = 0
    for k in range(grid.shape[0]):
        r = grid[k] - 1e-12
        while j < n and recall[j] < r:
            j += 1
        if j < n:
            out[k] = env[j]
    return out


def interp_precision_np(recall, precision, grid):
    recall = np.asarray(recall, dtype=np.float64)
    if recall.shape[0] == 0:
        return np.zeros(len(grid), dtype=np.float64)
    env = np.maximum.accumulate(np.asarray(precision, dtype=np.float64)[::-1])[::-1]
    idx = np.searchsorted(recall, np.asarray(grid) - _GRID_EPS, side="left")
    out = np.zeros(len(grid), dtype=np.float64)
    ok = idx < recall.shape[0]
    out[ok] = env[idx[ok]]
    return out


if USE_NUMBA:
    iou_matrix = iou_matrix_nb
    greedy_match = greedy_match_nb
    pr_staircase = pr_staircase_nb
    interp_precision = interp_precision_nb
else:
    iou_matrix = iou_matrix_np
    greedy_match = greedy_match_np
    pr_staircase = pr_staircase_np
    interp_precision = interp_precision_np
