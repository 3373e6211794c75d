"""Weakly-supervised localization from quantized CAMs, and the metrics around it.

Boxes use inclusive pixel coordinates, so a box covering a single pixel has
width and height 1.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import (
    DimensionMismatch,
    EmptyDataset,
    EmptyMask,
    MissingClassificationFlag,
    ThresholdOutOfRange,
)
from .tensor import round_half_away

__all__ = [
    "BoundingBox",
    "LocalizationRecord",
    "Verdict",
    "Similarity",
    "binarize",
    "largest_component_bbox",
    "iou",
    "localization_error",
    "cam_similarity",
    "DEFAULT_THRESHOLD",
    "DEFAULT_IOU_THRESHOLD",
]

DEFAULT_THRESHOLD = 0.10
DEFAULT_IOU_THRESHOLD = 0.5
THRESHOLD_RANGE = (0.05, 0.50)

_EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class BoundingBox:
    xmin: int
    ymin: int
    xmax: int
    ymax: int

    def __post_init__(self):
        if not (0 <= self.xmin <= self.xmax and 0 <= self.ymin <= self.ymax):
            raise ValueError(f"invalid box {self.as_list()}")

    @property
    def area(self):
        return (self.xmax - self.xmin + 1) * (self.ymax - self.ymin + 1)

    def as_list(self):
        return [self.xmin, self.ymin, self.xmax, self.ymax]

    def fits(self, height, width):
        return self.xmax < width and self.ymax < height

    @classmethod
    def full(cls, height, width):
        return cls(0, 0, width - 1, height - 1)


@dataclass(frozen=True)
class LocalizationRecord:
    image_id: str
    predicted: BoundingBox
    ground_truth: tuple
    classified_correctly: bool = None

    def __post_init__(self):
        if len(self.ground_truth) == 0:
            raise ValueError("a record needs at least one ground-truth box")
        object.__setattr__(self, "ground_truth", tuple(self.ground_truth))


@dataclass(frozen=True)
class Verdict:
    image_id: str
    best_iou: float
    hit: bool


@dataclass(frozen=True)
class Similarity:
    pearson: float
    mask_iou: float
    undefined: bool = field(default=False)


def binarize(cam8, threshold_fraction=DEFAULT_THRESHOLD):
    """Foreground where ``cam8 >= round(threshold_fraction * 255)``."""
    lo, hi = THRESHOLD_RANGE
    if not lo <= threshold_fraction <= hi:
        raise ThresholdOutOfRange(f"threshold {threshold_fraction} outside [{lo}, {hi}]")
    cut = int(round_half_away(threshold_fraction * 255.0))
    return np.asarray(cam8) >= cut


def largest_component_bbox(mask):
    """Tight box around the largest 8-connected foreground segment.

    Ties in pixel count go to the segment holding the lowest raster index.
    Raises ``EmptyMask`` when nothing is foreground.
    """
    mask = np.asarray(mask, dtype=bool)
    labels, count = ndimage.label(mask, structure=_EIGHT_CONNECTED)
    if count == 0:
        raise EmptyMask("mask has no foreground pixel")
    flat = labels.ravel()
    sizes = np.bincount(flat, minlength=count + 1)
    ids, first = np.unique(flat, return_index=True)
    first_index = dict(zip(ids.tolist(), first.tolist()))
    best = min(range(1, count + 1), key=lambda lab: (-sizes[lab], first_index[lab]))
    ys, xs = ndimage.find_objects(labels)[best - 1]
    return BoundingBox(xs.start, ys.start, xs.stop - 1, ys.stop - 1)


def iou(a, b):
    ix = min(a.xmax, b.xmax) - max(a.xmin, b.xmin) + 1
    iy = min(a.ymax, b.ymax) - max(a.ymin, b.ymin) + 1
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


def localization_error(records, iou_threshold=DEFAULT_IOU_THRESHOLD, gate_on_classification=False):
    """Error rate ``1 - hits / total`` and the per-record verdicts.

    A record is a hit when its prediction reaches ``iou_threshold`` against
    any ground-truth box and, if gating is requested, it was classified
    correctly.
    """
    records = list(records)
    if not records:
        raise EmptyDataset("no records to evaluate")
    if gate_on_classification:
        for r in records:
            if r.classified_correctly is None:
                raise MissingClassificationFlag(f"record {r.image_id!r} has no classified_correctly flag")
    verdicts = []
    for r in records:
        best = max(iou(r.predicted, gt) for gt in r.ground_truth)
        hit = best >= iou_threshold and (not gate_on_classification or bool(r.classified_correctly))
        verdicts.append(Verdict(r.image_id, best, hit))
    hits = sum(v.hit for v in verdicts)
    return 1.0 - hits / len(verdicts), verdicts


def cam_similarity(a, b, threshold_fraction=DEFAULT_THRESHOLD):
    """Pearson correlation and foreground-set IoU between two 8-bit maps.

    When either map is constant the correlation is reported as 0 with
    ``undefined=True``.  Two empty foreground sets count as identical (1.0).
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise DimensionMismatch(f"maps differ in shape: {a.shape} vs {b.shape}")
    x = a.astype(np.float64).ravel()
    y = b.astype(np.float64).ravel()
    dx = x - x.mean()
    dy = y - y.mean()
    denom = np.sqrt(np.dot(dx, dx) * np.dot(dy, dy))
    if denom == 0.0:
        pearson, undefined = 0.0, True
    else:
        pearson, undefined = float(np.clip(np.dot(dx, dy) / denom, -1.0, 1.0)), False

    ma = binarize(a, threshold_fraction)
    mb = binarize(b, threshold_fraction)
    union = np.count_nonzero(ma | mb)
    mask_iou = 1.0 if union == 0 else np.count_nonzero(ma & mb) / union
    return Similarity(pearson=pearson, mask_iou=float(mask_iou), undefined=undefined)
