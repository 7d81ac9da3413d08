"""Confidence filtering and greedy non-maximum suppression.

Two overlap kinds are supported: the usual intersection-over-union, and
intersection-over-minimum-area ("nms-inter"), which removes lower-scored
boxes predicted completely inside a larger box. `nms` is the plain O(n^2)
reference; `nms_fast` is a grid-indexed implementation with bit-identical
output, intended for dense scenes.

Suppression is strict: a box is removed when its overlap with an already
kept box exceeds the threshold (> t, not >=). Score ties break by input
index, so results are deterministic across platforms.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from .geometry import ScoredBox


class IoUKind(enum.Enum):
    UNION = "union"
    MIN = "min"


class Stage(enum.Enum):
    SCORE_FILTER = "score_filter"
    NMS_UNION = "nms_union"
    NMS_INTER = "nms_inter"


DEFAULT_STAGE_ORDER = (Stage.SCORE_FILTER, Stage.NMS_UNION, Stage.NMS_INTER)


@dataclass(frozen=True)
class SuppressionConfig:
    """Parameters for the refinement pipeline.

    The thresholds have no universally right values; they are meant to be
    tuned against a small validation set. The defaults here are conventional
    starting points, not recommendations.
    """

    score_threshold: float = 0.3
    nms_iou_threshold: float = 0.5
    nms_inter_iou_threshold: float = 0.8
    stage_order: tuple[Stage, ...] = DEFAULT_STAGE_ORDER

    def __post_init__(self):
        for name in ("score_threshold", "nms_iou_threshold", "nms_inter_iou_threshold"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and 0.0 <= v <= 1.0):
                raise ValueError(f"{name} outside [0, 1]: {v!r}")
        if not self.stage_order:
            raise ValueError("stage_order must be non-empty")
        if len(set(self.stage_order)) != len(self.stage_order):
            raise ValueError(f"repeated stage in stage_order: {self.stage_order}")
        object.__setattr__(self, "stage_order", tuple(self.stage_order))

    def to_dict(self) -> dict:
        return {
            "score_threshold": self.score_threshold,
            "nms_iou_threshold": self.nms_iou_threshold,
            "nms_inter_iou_threshold": self.nms_inter_iou_threshold,
            "stage_order": [s.value for s in self.stage_order],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SuppressionConfig":
        kwargs = dict(d)
        if "stage_order" in kwargs:
            kwargs["stage_order"] = tuple(Stage(s) for s in kwargs["stage_order"])
        return cls(**kwargs)


def score_filter(boxes: list[ScoredBox], threshold: float) -> list[ScoredBox]:
    """Keep boxes with score >= threshold, preserving input order."""
    return [b for b in boxes if b.score >= threshold]


def _greedy_order(boxes: list[ScoredBox]) -> list[int]:
    return sorted(range(len(boxes)), key=lambda i: (-boxes[i].score, i))


def nms(
    boxes: list[ScoredBox],
    iou_threshold: float,
    iou_kind: IoUKind = IoUKind.UNION,
) -> list[ScoredBox]:
    """Greedy per-category NMS, O(n^2) reference implementation.

    Output is ordered by descending score (ties by input index). Boxes of
    different categories never suppress each other.
    """
    coords = [(b.bbox.x_min, b.bbox.y_min, b.bbox.x_max, b.bbox.y_max) for b in boxes]
    areas = [(x2 - x1) * (y2 - y1) for x1, y1, x2, y2 in coords]
    use_min = iou_kind is IoUKind.MIN
    kept_by_cat: dict[int, list[int]] = {}
    out: list[int] = []
    for i in _greedy_order(boxes):
        ax1, ay1, ax2, ay2 = coords[i]
        aa = areas[i]
        kept = kept_by_cat.setdefault(boxes[i].category_id, [])
        suppressed = False
        for j in kept:
            bx1, by1, bx2, by2 = coords[j]
            iw = (ax2 if ax2 < bx2 else bx2) - (ax1 if ax1 > bx1 else bx1)
            if iw <= 0.0:
                continue
            ih = (ay2 if ay2 < by2 else by2) - (ay1 if ay1 > by1 else by1)
            if ih <= 0.0:
                continue
            inter = iw * ih
            ab = areas[j]
            denom = (aa if aa < ab else ab) if use_min else aa + ab - inter
            if denom > 0.0 and inter / denom > iou_threshold:
                suppressed = True
                break
        if not suppressed:
            kept.append(i)
            out.append(i)
    return [boxes[i] for i in out]


def nms_fast(
    boxes: list[ScoredBox],
    iou_threshold: float,
    iou_kind: IoUKind = IoUKind.UNION,
) -> list[ScoredBox]:
    """Grid-indexed NMS; output is bit-identical to `nms` on the same input.

    Each kept box is bucketed once, at the grid cell of its center; a
    candidate queries the cells covering its own extent padded by the
    largest box half-extent, which is every cell a colliding center could
    occupy. Effective when box sizes are roughly uniform, as in dense
    shelf scenes.
    """
    if not boxes:
        return []
    coords = [(b.bbox.x_min, b.bbox.y_min, b.bbox.x_max, b.bbox.y_max) for b in boxes]
    areas = [(x2 - x1) * (y2 - y1) for x1, y1, x2, y2 in coords]
    diags = sorted(
        math.hypot(x2 - x1, y2 - y1) for x1, y1, x2, y2 in coords
    )
    cell = diags[len(diags) // 2]
    if cell <= 0.0:
        # All-degenerate input; nothing can overlap anything, but fall back
        # to the reference path to keep the equivalence contract trivially.
        return nms(boxes, iou_threshold, iou_kind)
    pad_x = max(x2 - x1 for x1, _, x2, _ in coords) / 2.0
    pad_y = max(y2 - y1 for _, y1, _, y2 in coords) / 2.0

    use_min = iou_kind is IoUKind.MIN
    grid: dict[tuple[int, int, int], list[int]] = {}
    out: list[int] = []
    for i in _greedy_order(boxes):
        ax1, ay1, ax2, ay2 = coords[i]
        aa = areas[i]
        cat = boxes[i].category_id
        cx0 = math.floor((ax1 - pad_x) / cell)
        cx1 = math.floor((ax2 + pad_x) / cell)
        cy0 = math.floor((ay1 - pad_y) / cell)
        cy1 = math.floor((ay2 + pad_y) / cell)
        suppressed = False
        for cx in range(cx0, cx1 + 1):
            for cy in range(cy0, cy1 + 1):
                bucket = grid.get((cat, cx, cy))
                if not bucket:
                    continue
                for j in bucket:
                    bx1, by1, bx2, by2 = coords[j]
                    iw = (ax2 if ax2 < bx2 else bx2) - (ax1 if ax1 > bx1 else bx1)
                    if iw <= 0.0:
                        continue
                    ih = (ay2 if ay2 < by2 else by2) - (ay1 if ay1 > by1 else by1)
                    if ih <= 0.0:
                        continue
                    inter = iw * ih
                    ab = areas[j]
                    denom = (aa if aa < ab else ab) if use_min else aa + ab - inter
                    if denom > 0.0 and inter / denom > iou_threshold:
                        suppressed = True
                        break
                if suppressed:
                    break
            if suppressed:
                break
        if not suppressed:
            out.append(i)
            key = (
                cat,
                math.floor((ax1 + ax2) / 2.0 / cell),
                math.floor((ay1 + ay2) / 2.0 / cell),
            )
            grid.setdefault(key, []).append(i)
    return [boxes[i] for i in out]


def refine(boxes: list[ScoredBox], cfg: SuppressionConfig) -> list[ScoredBox]:
    """Apply the configured refinement stages in order. Idempotent."""
    return refine_detailed(boxes, cfg)[0]


def refine_detailed(
    boxes: list[ScoredBox], cfg: SuppressionConfig
) -> tuple[list[ScoredBox], dict[Stage, int]]:
    """Like `refine`, but also reports how many boxes each stage removed."""
    kept = list(boxes)
    removed: dict[Stage, int] = {}
    for stage in cfg.stage_order:
        before = len(kept)
        if stage is Stage.SCORE_FILTER:
            kept = score_filter(kept, cfg.score_threshold)
        elif stage is Stage.NMS_UNION:
            kept = nms_fast(kept, cfg.nms_iou_threshold, IoUKind.UNION)
        else:
            kept = nms_fast(kept, cfg.nms_inter_iou_threshold, IoUKind.MIN)
        removed[stage] = before - len(kept)
    return kept, removed
