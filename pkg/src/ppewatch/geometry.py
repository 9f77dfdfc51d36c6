"""Detection taxonomy and bounding-box geometry.

Boxes live in normalized image coordinates in the YOLO convention
(center x, center y, width, height, all fractions of the image size).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional


class Category(enum.IntEnum):
    HARDHAT = 0
    MASK = 1
    NO_HARDHAT = 2
    NO_MASK = 3
    NO_SAFETY_VEST = 4
    PERSON = 5
    SAFETY_CONE = 6
    SAFETY_VEST = 7
    MACHINERY = 8
    VEHICLE = 9

    @property
    def label(self) -> str:
        return _LABELS[self]

    @property
    def is_violation(self) -> bool:
        return self in (Category.NO_HARDHAT, Category.NO_MASK, Category.NO_SAFETY_VEST)

    @classmethod
    def from_label(cls, label: str) -> "Category":
        try:
            return _BY_LABEL[label.strip().lower()]
        except KeyError:
            raise ValueError(f"unknown category label {label!r}") from None

    @classmethod
    def from_index(cls, index: int) -> "Category":
        if not 0 <= index < len(cls):
            raise ValueError(f"category index out of range: {index}")
        return cls(index)


_LABELS = {
    Category.HARDHAT: "Hardhat",
    Category.MASK: "Mask",
    Category.NO_HARDHAT: "NO-Hardhat",
    Category.NO_MASK: "NO-Mask",
    Category.NO_SAFETY_VEST: "NO-Safety Vest",
    Category.PERSON: "Person",
    Category.SAFETY_CONE: "Safety Cone",
    Category.SAFETY_VEST: "Safety Vest",
    Category.MACHINERY: "Machinery",
    Category.VEHICLE: "Vehicle",
}
_BY_LABEL = {label.lower(): cat for cat, label in _LABELS.items()}

_COMPLEMENT = {
    Category.HARDHAT: Category.NO_HARDHAT,
    Category.MASK: Category.NO_MASK,
    Category.SAFETY_VEST: Category.NO_SAFETY_VEST,
}
_COMPLEMENT.update({v: k for k, v in list(_COMPLEMENT.items())})


def violation_complement(category: Category) -> Optional[Category]:
    """Return the paired equipment/violation label, or None for unpaired categories."""
    return _COMPLEMENT.get(Category(category))


class GeometryError(ValueError):
    """Raised for boxes that are malformed or degenerate."""


def _clip01(v: float) -> float:
    return 0.0 if v < 0.0 else 1.0 if v > 1.0 else v


@dataclass(frozen=True)
class BBox:
    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise GeometryError(f"box must have positive size, got w={self.w}, h={self.h}")
        if not (0.0 <= self.cx <= 1.0 and 0.0 <= self.cy <= 1.0):
            raise GeometryError(f"box center outside the image: ({self.cx}, {self.cy})")
        x1, y1, x2, y2 = self.corners()
        if not (x1 < x2 and y1 < y2):
            raise GeometryError("box is degenerate after clipping")

    def corners(self) -> tuple[float, float, float, float]:
        """Corner form (x1, y1, x2, y2), clipped to the unit square."""
        hw, hh = self.w / 2.0, self.h / 2.0
        return (
            _clip01(self.cx - hw),
            _clip01(self.cy - hh),
            _clip01(self.cx + hw),
            _clip01(self.cy + hh),
        )

    @classmethod
    def from_corners(cls, x1: float, y1: float, x2: float, y2: float) -> "BBox":
        return cls((x1 + x2) / 2.0, (y1 + y2) / 2.0, x2 - x1, y2 - y1)

    @property
    def area(self) -> float:
        x1, y1, x2, y2 = self.corners()
        return (x2 - x1) * (y2 - y1)

    @property
    def center(self) -> tuple[float, float]:
        return self.cx, self.cy


@dataclass(frozen=True)
class Detection:
    category: Category
    box: BBox
    confidence: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "category", Category(self.category))
        if not 0.0 <= self.confidence <= 1.0:
            raise GeometryError(f"confidence must lie in [0, 1], got {self.confidence}")


@dataclass(frozen=True)
class GroundTruthBox:
    category: Category
    box: BBox

    def __post_init__(self):
        object.__setattr__(self, "category", Category(self.category))


def intersection_area(a: BBox, b: BBox) -> float:
    ax1, ay1, ax2, ay2 = a.corners()
    bx1, by1, bx2, by2 = b.corners()
    iw = min(ax2, bx2) - max(ax1, bx1)
    ih = min(ay2, by2) - max(ay1, by1)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    return iw * ih


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two boxes; 0.0 when they are disjoint."""
    if a == b:
        return 1.0
    inter = intersection_area(a, b)
    if inter == 0.0:
        return 0.0
    return inter / (a.area + b.area - inter)


def overlap_over_smaller(a: BBox, b: BBox) -> float:
    """Intersection area divided by the smaller of the two box areas."""
    inter = intersection_area(a, b)
    if inter == 0.0:
        return 0.0
    return min(1.0, inter / min(a.area, b.area))
