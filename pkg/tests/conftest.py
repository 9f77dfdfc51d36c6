import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ppewatch.geometry import BBox, Category, Detection, GroundTruthBox  # noqa: E402


def corners(x1, y1, x2, y2):
    return BBox.from_corners(x1, y1, x2, y2)


def random_instance(rng: np.random.Generator, n_categories=3, max_images=10, max_boxes=20, conf_decimals=2):
    """Random (preds, gts) images: jittered copies of GT plus clutter."""
    cats = [Category(int(c)) for c in rng.choice(10, size=n_categories, replace=False)]
    images = []
    for _ in range(int(rng.integers(1, max_images + 1))):
        gts, preds = [], []
        for _ in range(int(rng.integers(0, max_boxes // 2 + 1))):
            c = cats[int(rng.integers(len(cats)))]
            w, h = rng.uniform(0.05, 0.3, size=2)
            cx, cy = rng.uniform(0.1, 0.9, size=2)
            box = BBox(float(cx), float(cy), float(w), float(h))
            gts.append(GroundTruthBox(c, box))
            if rng.random() < 0.75:
                jx, jy = rng.normal(0, 0.03, size=2)
                pb = BBox(float(np.clip(cx + jx, 0, 1)), float(np.clip(cy + jy, 0, 1)), float(w), float(h))
                preds.append(Detection(c, pb, float(np.round(rng.uniform(0.05, 1.0), conf_decimals))))
        while len(preds) < max_boxes and rng.random() < 0.4:
            c = cats[int(rng.integers(len(cats)))]
            w, h = rng.uniform(0.05, 0.3, size=2)
            cx, cy = rng.uniform(0.1, 0.9, size=2)
            preds.append(Detection(c, BBox(float(cx), float(cy), float(w), float(h)),
                                   float(np.round(rng.uniform(0.05, 1.0), conf_decimals))))
        images.append((preds, gts))
    return images, cats


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[ACCEPTANCE] = {}


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for key in sorted(lines):
            terminalreporter.write_line(lines[key])
