from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from shelfdet import BBox, ScoredBox


def B(x1, y1, x2, y2):
    return BBox(x1, y1, x2, y2)


def SB(x1, y1, x2, y2, score, cat=1):
    return ScoredBox(BBox(x1, y1, x2, y2), score, cat)


@pytest.fixture
def minimal_dataset_doc():
    return {
        "images": [{"id": 1, "file_name": "a.jpg", "width": 100, "height": 80}],
        "annotations": [],
        "categories": [{"id": 1, "name": "object"}],
    }


@pytest.fixture
def small_dataset_doc():
    """3 images, 7 annotations, density 7/3."""
    images = [
        {"id": i, "file_name": f"img{i}.jpg", "width": 200, "height": 150}
        for i in (1, 2, 3)
    ]
    boxes = [
        (1, [10, 10, 30, 20]),
        (1, [50, 15, 25, 25]),
        (1, [90, 40, 40, 30]),
        (2, [5, 5, 20, 20]),
        (2, [60, 60, 35, 30]),
        (3, [0, 0, 50, 50]),
        (3, [100, 90, 45, 40]),
    ]
    annotations = [
        {
            "id": k + 1,
            "image_id": image_id,
            "category_id": 1,
            "bbox": bbox,
            "area": bbox[2] * bbox[3],
            "iscrowd": 0,
        }
        for k, (image_id, bbox) in enumerate(boxes)
    ]
    return {
        "images": images,
        "annotations": annotations,
        "categories": [{"id": 1, "name": "object"}],
    }
