"""Data plumbing for the teacher -> pseudo-label -> student loop.

The neural training steps are external; this module turns refined teacher
detections into pseudo-label datasets, merges them with human-labeled data,
samples video frames by detection density, and chains round manifests with
content digests so a tampered round is detected before it feeds the next.
"""

from __future__ import annotations

import datetime
import hashlib
import json
from dataclasses import dataclass, field

from .dataset import (
    Annotation,
    Category,
    DetectionDataset,
    DetectionResults,
    ImageRecord,
    Source,
)
from .suppression import SuppressionConfig, refine


class SelfTrainError(Exception):
    pass


class RoundChainError(SelfTrainError):
    """A previous round's recorded digest no longer matches its file."""


@dataclass(frozen=True)
class FrameSamplerConfig:
    min_detections: int = 0
    temporal_stride: int = 1
    max_frames: int | None = None

    def __post_init__(self):
        if self.min_detections < 0:
            raise ValueError("min_detections must be >= 0")
        if self.temporal_stride < 1:
            raise ValueError("temporal_stride must be >= 1")
        if self.max_frames is not None and self.max_frames < 0:
            raise ValueError("max_frames must be >= 0")

    def to_dict(self) -> dict:
        return {
            "min_detections": self.min_detections,
            "temporal_stride": self.temporal_stride,
            "max_frames": self.max_frames,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FrameSamplerConfig":
        return cls(**d)


@dataclass(frozen=True)
class RoundManifest:
    round_index: int
    teacher_checkpoint_label: str
    labeled_dataset_ref: str
    unlabeled_pool_ref: str
    suppression_config: SuppressionConfig
    output_dataset_ref: str
    content_digest: str
    created_at: str
    previous_digest: str | None = None

    def to_dict(self) -> dict:
        return {
            "round_index": self.round_index,
            "teacher_checkpoint_label": self.teacher_checkpoint_label,
            "labeled_dataset_ref": self.labeled_dataset_ref,
            "unlabeled_pool_ref": self.unlabeled_pool_ref,
            "suppression_config": self.suppression_config.to_dict(),
            "output_dataset_ref": self.output_dataset_ref,
            "content_digest": self.content_digest,
            "created_at": self.created_at,
            "previous_digest": self.previous_digest,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RoundManifest":
        kwargs = dict(d)
        kwargs["suppression_config"] = SuppressionConfig.from_dict(
            kwargs["suppression_config"]
        )
        return cls(**kwargs)

    def to_json(self) -> bytes:
        return json.dumps(self.to_dict(), indent=2).encode("utf-8")

    @classmethod
    def from_json(cls, data: bytes | str) -> "RoundManifest":
        return cls.from_dict(json.loads(data))


@dataclass(frozen=True)
class MergeResult:
    dataset: DetectionDataset
    # Old-to-new id maps, keyed by input side ("labeled" | "pseudo").
    image_id_map: dict = field(default_factory=dict)
    annotation_id_map: dict = field(default_factory=dict)


def pseudo_label(
    unlabeled_images: list[ImageRecord],
    results: DetectionResults,
    cfg: SuppressionConfig,
    categories: tuple[tuple[int, str], ...] = ((1, "object"),),
) -> DetectionDataset:
    """Refine detections and promote the survivors to pseudo annotations.

    Images with no surviving detections stay in the dataset unannotated;
    each annotation keeps the detection score that produced it.
    """
    known = {im.image_id for im in unlabeled_images}
    for image_id in results.by_image:
        if image_id not in known:
            raise SelfTrainError(f"results reference unknown image_id {image_id}")
    annotations = []
    next_id = 1
    for im in unlabeled_images:
        for box in refine(results.by_image.get(im.image_id, []), cfg):
            annotations.append(
                Annotation(
                    annotation_id=next_id,
                    image_id=im.image_id,
                    category_id=box.category_id,
                    bbox=box.bbox,
                    source=Source.PSEUDO,
                    score=box.score,
                )
            )
            next_id += 1
    return DetectionDataset(
        images=tuple(unlabeled_images),
        annotations=tuple(annotations),
        categories=tuple(Category(cid, name) for cid, name in categories),
    )


def merge(labeled: DetectionDataset, pseudo: DetectionDataset) -> MergeResult:
    """Union of two datasets with fresh ids and provenance flags kept.

    The category tables must agree exactly. A file name appearing in both
    inputs means the same physical image sits in both pools and is rejected
    as contamination.
    """
    lab_cats = {(c.category_id, c.name) for c in labeled.categories}
    pse_cats = {(c.category_id, c.name) for c in pseudo.categories}
    if lab_cats != pse_cats:
        raise SelfTrainError(
            f"incompatible category tables: {sorted(lab_cats)} vs {sorted(pse_cats)}"
        )
    lab_names = {im.file_name for im in labeled.images}
    for im in pseudo.images:
        if im.file_name in lab_names:
            raise SelfTrainError(
                f"file_name {im.file_name!r} appears in both inputs (pool contamination)"
            )

    image_id_map: dict[tuple[str, int], int] = {}
    annotation_id_map: dict[tuple[str, int], int] = {}
    images = []
    annotations = []
    next_image = 1
    next_ann = 1
    for side, ds in (("labeled", labeled), ("pseudo", pseudo)):
        for im in ds.images:
            image_id_map[(side, im.image_id)] = next_image
            images.append(
                ImageRecord(next_image, im.file_name, im.width, im.height, im.extra)
            )
            next_image += 1
        for a in ds.annotations:
            annotation_id_map[(side, a.annotation_id)] = next_ann
            annotations.append(
                Annotation(
                    annotation_id=next_ann,
                    image_id=image_id_map[(side, a.image_id)],
                    category_id=a.category_id,
                    bbox=a.bbox,
                    source=a.source,
                    score=a.score,
                    extra=a.extra,
                )
            )
            next_ann += 1
    merged = DetectionDataset(
        images=tuple(images),
        annotations=tuple(annotations),
        categories=labeled.categories,
    )
    return MergeResult(merged, image_id_map, annotation_id_map)


def sample_frames(
    frame_results: list[tuple[int, int]], cfg: FrameSamplerConfig
) -> list[int]:
    """Pick dense frames from an ordered (frame index, detection count) list.

    Frames below min_detections are dropped; within each consecutive window
    of temporal_stride frames at most the highest-count survivor is kept
    (ties to the earliest); an optional cap keeps the highest-count frames.
    Output is in ascending frame order.
    """
    indices = [f for f, _ in frame_results]
    if any(b <= a for a, b in zip(indices, indices[1:])):
        raise SelfTrainError(f"frame indices must be strictly increasing: {indices}")
    picked: list[tuple[int, int]] = []
    for start in range(0, len(frame_results), cfg.temporal_stride):
        window = [
            (f, c)
            for f, c in frame_results[start : start + cfg.temporal_stride]
            if c >= cfg.min_detections
        ]
        if window:
            picked.append(max(window, key=lambda fc: (fc[1], -fc[0])))
    if cfg.max_frames is not None and len(picked) > cfg.max_frames:
        by_count = sorted(picked, key=lambda fc: (-fc[1], fc[0]))
        picked = by_count[: cfg.max_frames]
    return sorted(f for f, _ in picked)


def file_digest(path: str) -> str:
    with open(path, "rb") as f:
        return hashlib.sha256(f.read()).hexdigest()


def record_round(
    prev: RoundManifest | None,
    *,
    teacher_checkpoint_label: str,
    labeled_dataset_ref: str,
    unlabeled_pool_ref: str,
    suppression_config: SuppressionConfig,
    output_dataset_ref: str,
) -> RoundManifest:
    """Create the manifest for one round, verifying the previous round first.

    The digest is SHA-256 over the exact bytes of the output dataset file.
    """
    if prev is not None:
        actual = file_digest(prev.output_dataset_ref)
        if actual != prev.content_digest:
            raise RoundChainError(
                f"round {prev.round_index} output {prev.output_dataset_ref} digest "
                f"mismatch: recorded {prev.content_digest}, found {actual}"
            )
    return RoundManifest(
        round_index=0 if prev is None else prev.round_index + 1,
        teacher_checkpoint_label=teacher_checkpoint_label,
        labeled_dataset_ref=labeled_dataset_ref,
        unlabeled_pool_ref=unlabeled_pool_ref,
        suppression_config=suppression_config,
        output_dataset_ref=output_dataset_ref,
        content_digest=file_digest(output_dataset_ref),
        created_at=datetime.datetime.now(datetime.timezone.utc).isoformat(),
        previous_digest=None if prev is None else prev.content_digest,
    )
