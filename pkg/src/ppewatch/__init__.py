"""PPE risk monitoring: detection metrics, risk rules, robot behavior and scenario simulation."""

from .geometry import BBox, Category, Detection, GroundTruthBox, iou, overlap_over_smaller, violation_complement

__all__ = [
    "BBox",
    "Category",
    "Detection",
    "GroundTruthBox",
    "iou",
    "overlap_over_smaller",
    "violation_complement",
]
__version__ = "0.1.0"
