"""Axis-aligned box arithmetic and the two overlap ratios used by suppression.

Boxes use a continuous corner-pair convention (x_min, y_min, x_max, y_max) in
pixel units; area is width * height with no pixel "+1" correction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class BBox:
    """Axis-aligned rectangle. Degenerate (zero-area) boxes are allowed."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        for v in (self.x_min, self.y_min, self.x_max, self.y_max):
            if not math.isfinite(v):
                raise ValueError(f"non-finite box coordinate: {v!r}")
        if self.x_max < self.x_min or self.y_max < self.y_min:
            raise ValueError(
                f"negative extent: ({self.x_min}, {self.y_min}, "
                f"{self.x_max}, {self.y_max})"
            )

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    def translate(self, dx: float, dy: float) -> "BBox":
        return BBox(self.x_min + dx, self.y_min + dy, self.x_max + dx, self.y_max + dy)

    def contains(self, other: "BBox") -> bool:
        """True if `other` lies entirely within this box (borders included)."""
        return (
            self.x_min <= other.x_min
            and self.y_min <= other.y_min
            and other.x_max <= self.x_max
            and other.y_max <= self.y_max
        )


@dataclass(frozen=True)
class ScoredBox:
    """A box with a confidence score and an integer category label."""

    bbox: BBox
    score: float
    category_id: int = 1

    def __post_init__(self):
        if not math.isfinite(self.score) or not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score outside [0, 1]: {self.score!r}")


def area(b: BBox) -> float:
    """Box area in square pixels."""
    return (b.x_max - b.x_min) * (b.y_max - b.y_min)


def intersection_area(a: BBox, b: BBox) -> float:
    """Area of the overlap rectangle, 0 for disjoint boxes."""
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    if iw <= 0.0:
        return 0.0
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if ih <= 0.0:
        return 0.0
    return iw * ih


def iou_union(a: BBox, b: BBox) -> float:
    """Intersection over union. Returns 0 if both boxes have zero area."""
    inter = intersection_area(a, b)
    union = area(a) + area(b) - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def iou_min(a: BBox, b: BBox) -> float:
    """Intersection over the smaller of the two areas.

    This is the overlap ratio used to suppress boxes sitting completely
    inside a larger box: containment gives 1 regardless of the size gap.
    Returns 0 if either box has zero area.
    """
    inter = intersection_area(a, b)
    denom = min(area(a), area(b))
    if denom <= 0.0:
        return 0.0
    return inter / denom
