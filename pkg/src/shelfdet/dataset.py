"""COCO-style annotation and detection-result files.

These are the interchange formats with external trainers: a ground-truth
dataset document (`images` / `annotations` / `categories`) and a flat
results array of scored detections. Annotations carry two extension fields
standard COCO consumers ignore: `source` ("human" | "pseudo") and, for
pseudo labels, the teacher `score` that produced them.

Boxes are stored as [x, y, width, height] on disk and converted to the
corner-pair convention internally. Boxes overhanging the image are clamped
to its bounds at parse time (with a warning), not rejected.
"""

from __future__ import annotations

import enum
import json
import logging
import os
import statistics
import tempfile
from dataclasses import dataclass, field
from typing import IO, Union

from .geometry import BBox, ScoredBox

log = logging.getLogger(__name__)

DEFAULT_CATEGORIES = ((1, "object"),)

_IMAGE_KEYS = {"id", "file_name", "width", "height"}
_ANNOTATION_KEYS = {"id", "image_id", "category_id", "bbox", "area", "iscrowd", "source", "score"}
_CATEGORY_KEYS = {"id", "name"}
_DATASET_KEYS = {"images", "annotations", "categories"}


class DatasetError(Exception):
    """Base class for dataset file problems."""


class ParseError(DatasetError):
    """Input is not a well-formed document."""


class ValidationError(DatasetError):
    """Document parsed but violates a dataset invariant."""


class Source(enum.Enum):
    HUMAN = "human"
    PSEUDO = "pseudo"


@dataclass(frozen=True)
class ImageRecord:
    image_id: int
    file_name: str
    width: int
    height: int
    extra: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Annotation:
    annotation_id: int
    image_id: int
    category_id: int
    bbox: BBox
    source: Source = Source.HUMAN
    score: float | None = None
    extra: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Category:
    category_id: int
    name: str
    extra: dict = field(default_factory=dict)


@dataclass(frozen=True)
class DetectionDataset:
    """Validated COCO-style corpus. Construction checks all invariants."""

    images: tuple[ImageRecord, ...]
    annotations: tuple[Annotation, ...]
    categories: tuple[Category, ...]
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "images", tuple(self.images))
        object.__setattr__(self, "annotations", tuple(self.annotations))
        object.__setattr__(self, "categories", tuple(self.categories))
        _validate_dataset(self)

    def image_by_id(self, image_id: int) -> ImageRecord:
        return {im.image_id: im for im in self.images}[image_id]


@dataclass(frozen=True)
class DetectionResults:
    """Per-image model predictions, grouped by image id.

    Group insertion order and within-group detection order follow the
    source document.
    """

    by_image: dict[int, list[ScoredBox]]

    def total_detections(self) -> int:
        return sum(len(v) for v in self.by_image.values())

    def image_ids(self) -> list[int]:
        return list(self.by_image)


@dataclass(frozen=True)
class DatasetStats:
    image_count: int
    annotation_count: int
    mean_density: float
    median_density: float
    max_density: int
    per_image_counts: dict[int, int]


def _validate_dataset(d: DetectionDataset) -> None:
    image_ids = set()
    for im in d.images:
        if im.image_id in image_ids:
            raise ValidationError(f"duplicate image id {im.image_id}")
        image_ids.add(im.image_id)
        if im.width <= 0 or im.height <= 0:
            raise ValidationError(
                f"image {im.image_id}: non-positive size {im.width}x{im.height}"
            )
    cat_ids = set()
    for c in d.categories:
        if c.category_id in cat_ids:
            raise ValidationError(f"duplicate category id {c.category_id}")
        cat_ids.add(c.category_id)
    ann_ids = set()
    for a in d.annotations:
        if a.annotation_id in ann_ids:
            raise ValidationError(f"duplicate annotation id {a.annotation_id}")
        ann_ids.add(a.annotation_id)
        if a.image_id not in image_ids:
            raise ValidationError(
                f"annotation {a.annotation_id} references missing image id {a.image_id}"
            )
        if a.category_id not in cat_ids:
            raise ValidationError(
                f"annotation {a.annotation_id} references missing category id {a.category_id}"
            )
        if a.source is Source.PSEUDO and a.score is None:
            raise ValidationError(
                f"pseudo annotation {a.annotation_id} is missing its score"
            )
        if a.score is not None and not 0.0 <= a.score <= 1.0:
            raise ValidationError(
                f"annotation {a.annotation_id}: score outside [0, 1]: {a.score}"
            )


def _load_json(data: Union[bytes, str, IO]) -> object:
    if hasattr(data, "read"):
        data = data.read()
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        return json.loads(data)
    except json.JSONDecodeError as e:
        raise ParseError(f"malformed document at byte offset {e.pos}: {e.msg}") from e


def _bbox_from_xywh(raw, image: ImageRecord, where: str) -> BBox:
    if not (isinstance(raw, list) and len(raw) == 4):
        raise ValidationError(f"{where}: bbox must be [x, y, w, h], got {raw!r}")
    x, y, w, h = (float(v) for v in raw)
    if w < 0 or h < 0:
        raise ValidationError(f"{where}: negative bbox width/height ({w}, {h})")
    x_min, y_min, x_max, y_max = x, y, x + w, y + h
    cx0 = min(max(x_min, 0.0), float(image.width))
    cy0 = min(max(y_min, 0.0), float(image.height))
    cx1 = min(max(x_max, 0.0), float(image.width))
    cy1 = min(max(y_max, 0.0), float(image.height))
    if (cx0, cy0, cx1, cy1) != (x_min, y_min, x_max, y_max):
        log.warning(
            "%s: bbox %s clamped to image %s bounds", where, raw, image.image_id
        )
    return BBox(cx0, cy0, cx1, cy1)


def parse_dataset(data: Union[bytes, str, IO]) -> DetectionDataset:
    """Parse and fully validate a COCO-format annotation document.

    Unknown fields are preserved (per record and at top level) so that
    `write_dataset` can round-trip foreign documents.
    """
    doc = _load_json(data)
    if not isinstance(doc, dict):
        raise ParseError("top level of annotation document must be an object")
    images = []
    for raw in doc.get("images", []):
        try:
            images.append(
                ImageRecord(
                    image_id=int(raw["id"]),
                    file_name=str(raw["file_name"]),
                    width=int(raw["width"]),
                    height=int(raw["height"]),
                    extra={k: v for k, v in raw.items() if k not in _IMAGE_KEYS},
                )
            )
        except KeyError as e:
            raise ParseError(f"image record missing field {e}") from e
    by_id = {im.image_id: im for im in images}

    categories = []
    for raw in doc.get("categories", []):
        try:
            categories.append(
                Category(
                    category_id=int(raw["id"]),
                    name=str(raw["name"]),
                    extra={k: v for k, v in raw.items() if k not in _CATEGORY_KEYS},
                )
            )
        except KeyError as e:
            raise ParseError(f"category record missing field {e}") from e

    annotations = []
    for raw in doc.get("annotations", []):
        try:
            ann_id = int(raw["id"])
            image_id = int(raw["image_id"])
        except KeyError as e:
            raise ParseError(f"annotation record missing field {e}") from e
        where = f"annotation {ann_id}"
        if raw.get("iscrowd", 0) not in (0, False):
            raise ValidationError(f"{where}: crowd annotations are not supported")
        if image_id not in by_id:
            raise ValidationError(
                f"{where} references missing image id {image_id}"
            )
        source = Source(raw.get("source", "human"))
        score = raw.get("score")
        if source is Source.PSEUDO and score is None:
            raise ValidationError(f"{where}: pseudo annotation without a score")
        annotations.append(
            Annotation(
                annotation_id=ann_id,
                image_id=image_id,
                category_id=int(raw["category_id"]),
                bbox=_bbox_from_xywh(raw.get("bbox"), by_id[image_id], where),
                source=source,
                score=None if score is None else float(score),
                extra={k: v for k, v in raw.items() if k not in _ANNOTATION_KEYS},
            )
        )

    return DetectionDataset(
        images=tuple(images),
        annotations=tuple(annotations),
        categories=tuple(categories),
        extra={k: v for k, v in doc.items() if k not in _DATASET_KEYS},
    )


def write_dataset(d: DetectionDataset) -> bytes:
    """Serialize to a COCO-format document. Inverse of `parse_dataset`."""
    doc = dict(d.extra)
    doc["images"] = [
        {
            "id": im.image_id,
            "file_name": im.file_name,
            "width": im.width,
            "height": im.height,
            **im.extra,
        }
        for im in d.images
    ]
    annotations = []
    for a in d.annotations:
        w = a.bbox.x_max - a.bbox.x_min
        h = a.bbox.y_max - a.bbox.y_min
        rec = {
            "id": a.annotation_id,
            "image_id": a.image_id,
            "category_id": a.category_id,
            "bbox": [a.bbox.x_min, a.bbox.y_min, w, h],
            "area": w * h,
            "iscrowd": 0,
            "source": a.source.value,
        }
        if a.score is not None:
            rec["score"] = a.score
        rec.update(a.extra)
        annotations.append(rec)
    doc["annotations"] = annotations
    doc["categories"] = [
        {"id": c.category_id, "name": c.name, **c.extra} for c in d.categories
    ]
    return json.dumps(doc, indent=2).encode("utf-8")


def parse_results(data: Union[bytes, str, IO]) -> DetectionResults:
    """Parse a COCO results array into per-image grouped scored boxes."""
    doc = _load_json(data)
    if not isinstance(doc, list):
        raise ParseError("results document must be a JSON array")
    by_image: dict[int, list[ScoredBox]] = {}
    for idx, raw in enumerate(doc):
        where = f"detection #{idx}"
        if "score" not in raw:
            raise ParseError(f"{where}: missing score field")
        score = float(raw["score"])
        if not 0.0 <= score <= 1.0:
            raise ValidationError(f"{where}: score outside [0, 1]: {score}")
        try:
            image_id = int(raw["image_id"])
            category_id = int(raw.get("category_id", 1))
            x, y, w, h = (float(v) for v in raw["bbox"])
        except KeyError as e:
            raise ParseError(f"{where}: missing field {e}") from e
        if w < 0 or h < 0:
            raise ValidationError(f"{where}: negative bbox width/height ({w}, {h})")
        by_image.setdefault(image_id, []).append(
            ScoredBox(BBox(x, y, x + w, y + h), score, category_id)
        )
    return DetectionResults(by_image=by_image)


def write_results(r: DetectionResults) -> bytes:
    """Serialize detections back to the COCO results-array format."""
    out = []
    for image_id, boxes in r.by_image.items():
        for b in boxes:
            out.append(
                {
                    "image_id": image_id,
                    "category_id": b.category_id,
                    "bbox": [
                        b.bbox.x_min,
                        b.bbox.y_min,
                        b.bbox.x_max - b.bbox.x_min,
                        b.bbox.y_max - b.bbox.y_min,
                    ],
                    "score": b.score,
                }
            )
    return json.dumps(out, indent=2).encode("utf-8")


def dataset_stats(d: DetectionDataset) -> DatasetStats:
    """Per-image density summary: mean is annotations / images exactly."""
    if not d.images:
        raise ValidationError("cannot compute stats on a dataset with zero images")
    counts = {im.image_id: 0 for im in d.images}
    for a in d.annotations:
        counts[a.image_id] += 1
    values = list(counts.values())
    return DatasetStats(
        image_count=len(d.images),
        annotation_count=len(d.annotations),
        mean_density=len(d.annotations) / len(d.images),
        median_density=statistics.median(values),
        max_density=max(values),
        per_image_counts=counts,
    )


def atomic_write_bytes(path: str, data: bytes) -> None:
    """Write via a temp file in the same directory, then rename."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
