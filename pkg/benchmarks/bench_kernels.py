"""Compare the numba and numpy metric kernels.

Times each kernel pair on synthetic inputs, then runs a full evaluation
(matching, sweep, AP) once per backend in a fresh interpreter so the
``PPEWATCH_NUMBA`` flag takes effect at import.

    python3 benchmarks/bench_kernels.py --repeat 200
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from ppewatch import kernels


def _boxes(rng, n):
    xy = rng.uniform(0.0, 0.8, size=(n, 2))
    wh = rng.uniform(0.02, 0.2, size=(n, 2))
    return np.hstack([xy, xy + wh])


def kernel_cases(rng, n_pred, n_gt, n_curve):
    a, b = _boxes(rng, n_pred), _boxes(rng, n_gt)
    ious = kernels.iou_matrix_np(a, b)
    pred_cls = rng.integers(0, 3, n_pred).astype(np.int64)
    gt_cls = rng.integers(0, 3, n_gt).astype(np.int64)
    order = np.argsort(-rng.uniform(size=n_pred), kind="stable").astype(np.int64)
    conf = np.sort(np.round(rng.uniform(size=n_curve), 2))[::-1].copy()
    tp = rng.uniform(size=n_curve) < 0.6
    _, recall, precision = kernels.pr_staircase_np(conf, tp, int(tp.sum()) + 5)
    grid = kernels.RECALL_GRID
    return {
        "iou_matrix": (a, b),
        "greedy_match": (ious, pred_cls, gt_cls, order, 0.5),
        "pr_staircase": (conf, tp, int(tp.sum()) + 5),
        "interp_precision": (recall, precision, grid),
    }


def bench_kernels(repeat, n_pred, n_gt, n_curve, seed):
    cases = kernel_cases(np.random.default_rng(seed), n_pred, n_gt, n_curve)
    rows = []
    for name, args in cases.items():
        nb = getattr(kernels, f"{name}_nb")
        np_ = getattr(kernels, f"{name}_np")
        nb(*args)  # compile
        t_nb = min(timeit.repeat(lambda: nb(*args), number=repeat, repeat=3)) / repeat
        t_np = min(timeit.repeat(lambda: np_(*args), number=repeat, repeat=3)) / repeat
        rows.append((name, t_nb, t_np))
    return rows


_END_TO_END = """
import time, numpy as np
from ppewatch._accel import backend_name
from ppewatch.geometry import BBox, Category, Detection, GroundTruthBox
from ppewatch.metrics import build_report, pool_matches
rng = np.random.default_rng({seed})
images = []
for _ in range({images}):
    gts, preds = [], []
    for _ in range(15):
        c = Category(int(rng.integers(0, 10)))
        cx, cy = rng.uniform(0.1, 0.9, 2); w, h = rng.uniform(0.05, 0.3, 2)
        gts.append(GroundTruthBox(c, BBox(cx, cy, w, h)))
        if rng.random() < 0.8:
            preds.append(Detection(c, BBox(min(1, cx + rng.normal(0, 0.02)), cy, w, h), float(rng.uniform())))
    images.append((preds, gts))
build_report(pool_matches(images[:2]))
t = time.perf_counter()
rep = build_report(pool_matches(images))
print(backend_name(), time.perf_counter() - t, rep.map50)
"""


def bench_end_to_end(n_images, seed):
    out = []
    for flag in ("1", "0"):
        env = dict(os.environ, PPEWATCH_NUMBA=flag)
        proc = subprocess.run(
            [sys.executable, "-c", _END_TO_END.format(seed=seed, images=n_images)],
            env=env, capture_output=True, text=True, check=True,
        )
        backend, seconds, map50 = proc.stdout.split()
        out.append((backend, float(seconds), float(map50)))
    return out


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=200)
    p.add_argument("--preds", type=int, default=200)
    p.add_argument("--gts", type=int, default=150)
    p.add_argument("--curve", type=int, default=5000)
    p.add_argument("--images", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)

    print(f"kernels ({args.preds} preds x {args.gts} gts, {args.curve}-point curve)")
    print(f"{'kernel':<18}{'numba us':>12}{'numpy us':>12}{'speedup':>10}")
    for name, t_nb, t_np in bench_kernels(args.repeat, args.preds, args.gts, args.curve, args.seed):
        print(f"{name:<18}{t_nb * 1e6:>12.1f}{t_np * 1e6:>12.1f}{t_np / t_nb:>9.1f}x")

    print(f"\nend-to-end evaluation ({args.images} images)")
    results = bench_end_to_end(args.images, args.seed)
    for backend, seconds, map50 in results:
        print(f"{backend:<8}{seconds:>8.3f}s  mAP50={map50:.6f}")
    if results[0][2] != results[1][2]:
        print("warning: backends disagree on mAP50", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
