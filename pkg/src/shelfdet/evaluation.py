"""COCO-protocol mAP evaluation for a single-category corpus.

AP is computed per IoU threshold (default 0.50:0.95 step 0.05) with
101-point interpolated precision, detections capped per image at
`max_detections` (default 300), and mAP is the arithmetic mean over
thresholds. Matching is the greedy pycocotools rule: detections in
descending score order each take the unmatched ground-truth box with the
highest IoU at or above the threshold.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .dataset import DetectionDataset, DetectionResults
from .geometry import BBox, ScoredBox

log = logging.getLogger(__name__)


class EvaluationError(Exception):
    pass


def _default_thresholds() -> tuple[float, ...]:
    return tuple(round(0.5 + 0.05 * i, 2) for i in range(10))


@dataclass(frozen=True)
class EvalConfig:
    iou_thresholds: tuple[float, ...] = field(default_factory=_default_thresholds)
    max_detections: int = 300
    recall_points: int = 101

    def __post_init__(self):
        object.__setattr__(self, "iou_thresholds", tuple(self.iou_thresholds))
        ts = self.iou_thresholds
        if not ts or any(not 0.0 < t <= 1.0 for t in ts):
            raise ValueError(f"iou thresholds must lie in (0, 1]: {ts}")
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError(f"iou thresholds must be strictly increasing: {ts}")
        if self.max_detections < 1:
            raise ValueError("max_detections must be positive")
        if self.recall_points < 1:
            raise ValueError("recall_points must be positive")

    def to_dict(self) -> dict:
        return {
            "iou_thresholds": list(self.iou_thresholds),
            "max_detections": self.max_detections,
            "recall_points": self.recall_points,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalConfig":
        kwargs = dict(d)
        if "iou_thresholds" in kwargs:
            kwargs["iou_thresholds"] = tuple(kwargs["iou_thresholds"])
        return cls(**kwargs)


@dataclass(frozen=True)
class EvalCounts:
    total_gt: int
    total_detections: int
    matched_per_threshold: dict[float, int]


@dataclass(frozen=True)
class EvalReport:
    map: float
    ap_per_threshold: dict[float, float]
    precision_recall_curves: dict[float, tuple[float, ...]]
    counts: EvalCounts
    recall_grid: tuple[float, ...]

    def to_dict(self) -> dict:
        return {
            "map": self.map,
            "ap_per_threshold": {
                f"{t:.2f}": ap for t, ap in self.ap_per_threshold.items()
            },
            "counts": {
                "total_gt": self.counts.total_gt,
                "total_detections": self.counts.total_detections,
                "matched_per_threshold": {
                    f"{t:.2f}": m
                    for t, m in self.counts.matched_per_threshold.items()
                },
            },
        }


def iou_matrix(dets: list[BBox], gts: list[BBox]) -> np.ndarray:
    """(n_det, n_gt) matrix of intersection-over-union values."""
    if not dets or not gts:
        return np.zeros((len(dets), len(gts)))
    d = np.array([[b.x_min, b.y_min, b.x_max, b.y_max] for b in dets])
    g = np.array([[b.x_min, b.y_min, b.x_max, b.y_max] for b in gts])
    iw = np.minimum(d[:, None, 2], g[None, :, 2]) - np.maximum(d[:, None, 0], g[None, :, 0])
    ih = np.minimum(d[:, None, 3], g[None, :, 3]) - np.maximum(d[:, None, 1], g[None, :, 1])
    inter = np.clip(iw, 0, None) * np.clip(ih, 0, None)
    da = (d[:, 2] - d[:, 0]) * (d[:, 3] - d[:, 1])
    ga = (g[:, 2] - g[:, 0]) * (g[:, 3] - g[:, 1])
    union = da[:, None] + ga[None, :] - inter
    with np.errstate(divide="ignore", invalid="ignore"):
        iou = np.where(union > 0, inter / np.where(union > 0, union, 1.0), 0.0)
    return iou


def match_image(
    gt: list[BBox], dets: list[ScoredBox], iou_threshold: float
) -> list[tuple[int, int | None]]:
    """Greedy matching for one image at one IoU threshold.

    Returns (det index, matched gt index or None) pairs in descending score
    order (score ties broken by input index). Each detection takes the
    still-unmatched gt with the highest IoU >= threshold, ties going to the
    lowest gt index; each gt is matched at most once.
    """
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, i))
    ious = iou_matrix([d.bbox for d in dets], gt)
    taken = [False] * len(gt)
    out: list[tuple[int, int | None]] = []
    for di in order:
        best_gi = None
        best_iou = 0.0
        row = ious[di]
        for gi in range(len(gt)):
            if taken[gi]:
                continue
            v = row[gi]
            if v < iou_threshold:
                continue
            if best_gi is None or v > best_iou:
                best_iou = v
                best_gi = gi
        if best_gi is not None:
            taken[best_gi] = True
        out.append((di, best_gi))
    return out


def average_precision(
    matches: list[tuple[float, bool]], total_gt: int, recall_points: int = 101
) -> float:
    """Interpolated AP over a pooled, score-ranked detection list.

    `matches` holds (score, is_true_positive) for every evaluated detection.
    Interpolated precision at recall r is the max precision attained at any
    recall >= r; AP averages it over `recall_points` evenly spaced recall
    values in [0, 1]. Zero ground truth yields 0 by convention.
    """
    if total_gt == 0:
        if matches:
            log.warning("average_precision: zero ground truth, AP defined as 0")
        return 0.0
    if not matches:
        return 0.0
    ranked = sorted(range(len(matches)), key=lambda i: -matches[i][0])
    tp = np.cumsum([1.0 if matches[i][1] else 0.0 for i in ranked])
    ranks = np.arange(1, len(ranked) + 1)
    precision = tp / ranks
    recall = tp / total_gt
    # max precision at recall >= r == suffix-maximum of the precision curve
    p_interp = np.maximum.accumulate(precision[::-1])[::-1]
    grid = np.linspace(0.0, 1.0, recall_points)
    idx = np.searchsorted(recall, grid, side="left")
    sampled = np.where(idx < len(ranked), p_interp[np.minimum(idx, len(ranked) - 1)], 0.0)
    return float(np.mean(sampled))


def evaluate(
    gt_dataset: DetectionDataset, results: DetectionResults, cfg: EvalConfig
) -> EvalReport:
    """Corpus-level evaluation.

    Images present in the dataset but absent from `results` count as zero
    detections; a results image id missing from the dataset is an error.
    """
    gt_ids = {im.image_id for im in gt_dataset.images}
    for image_id in results.by_image:
        if image_id not in gt_ids:
            raise EvaluationError(f"results reference unknown image_id {image_id}")

    gt_by_image: dict[int, list[BBox]] = {im.image_id: [] for im in gt_dataset.images}
    for a in gt_dataset.annotations:
        gt_by_image[a.image_id].append(a.bbox)
    total_gt = len(gt_dataset.annotations)
    if total_gt == 0:
        log.warning("evaluate: dataset has zero ground-truth annotations")

    # Per-image truncation to the top max_detections by score happens once,
    # before any threshold is considered.
    dets_by_image: dict[int, list[ScoredBox]] = {}
    total_dets = 0
    for image_id, boxes in results.by_image.items():
        order = sorted(range(len(boxes)), key=lambda i: (-boxes[i].score, i))
        kept = [boxes[i] for i in order[: cfg.max_detections]]
        dets_by_image[image_id] = kept
        total_dets += len(kept)

    ap_per_threshold: dict[float, float] = {}
    curves: dict[float, tuple[float, ...]] = {}
    matched_per_threshold: dict[float, int] = {}
    grid = np.linspace(0.0, 1.0, cfg.recall_points)
    for t in cfg.iou_thresholds:
        pooled: list[tuple[float, bool]] = []
        matched = 0
        for image_id in sorted(dets_by_image):
            dets = dets_by_image[image_id]
            for di, gi in match_image(gt_by_image[image_id], dets, t):
                hit = gi is not None
                matched += hit
                pooled.append((dets[di].score, hit))
        ap_per_threshold[t] = average_precision(pooled, total_gt, cfg.recall_points)
        matched_per_threshold[t] = matched
        curves[t] = _interp_curve(pooled, total_gt, grid)

    return EvalReport(
        map=float(np.mean(list(ap_per_threshold.values()))),
        ap_per_threshold=ap_per_threshold,
        precision_recall_curves=curves,
        counts=EvalCounts(
            total_gt=total_gt,
            total_detections=total_dets,
            matched_per_threshold=matched_per_threshold,
        ),
        recall_grid=tuple(float(r) for r in grid),
    )


def _interp_curve(
    matches: list[tuple[float, bool]], total_gt: int, grid: np.ndarray
) -> tuple[float, ...]:
    if total_gt == 0 or not matches:
        return tuple(0.0 for _ in grid)
    ranked = sorted(range(len(matches)), key=lambda i: -matches[i][0])
    tp = np.cumsum([1.0 if matches[i][1] else 0.0 for i in ranked])
    precision = tp / np.arange(1, len(ranked) + 1)
    recall = tp / total_gt
    p_interp = np.maximum.accumulate(precision[::-1])[::-1]
    idx = np.searchsorted(recall, grid, side="left")
    sampled = np.where(idx < len(ranked), p_interp[np.minimum(idx, len(ranked) - 1)], 0.0)
    return tuple(float(p) for p in sampled)
