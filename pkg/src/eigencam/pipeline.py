"""End-to-end helpers: feature map -> 8-bit CAM -> box, over single images or
whole manifests."""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import formats
from .cam import CamConfig, eigen_cam, quantize
from .errors import DegenerateActivations, EmptyMask, ShapeMismatch
from .localize import (
    DEFAULT_IOU_THRESHOLD,
    DEFAULT_THRESHOLD,
    BoundingBox,
    LocalizationRecord,
    binarize,
    cam_similarity,
    largest_component_bbox,
    localization_error,
)
from .refnet import forward_to_tap
from .tensor import FeatureMap, image_to_tensor

__all__ = [
    "load_feature_map",
    "ModelSource",
    "cam_for_size",
    "localize_cam",
    "draw_box",
    "evaluate_manifest",
    "compare_maps",
]

GREEN = (0, 255, 0)


def load_feature_map(path):
    a = formats.read_fmap(path)
    if a.ndim != 3:
        raise ShapeMismatch(f"{path}: expected a rank-3 (C, H, W) dump, got dims {a.shape}")
    return FeatureMap(a)


@dataclass(frozen=True)
class ModelSource:
    """Feature maps computed by running ``model`` up to layer ``tap``."""

    model: object
    tap: int

    def __call__(self, image):
        return forward_to_tap(self.model, image_to_tensor(image), self.tap)


def cam_for_size(fm, height, width, cfg=None):
    """Eigen-CAM of ``fm`` with its 8-bit map resampled to ``height x width``."""
    return quantize(eigen_cam(fm, cfg), height, width)


def localize_cam(cam8, threshold_fraction=DEFAULT_THRESHOLD):
    """``(box, fallback)``; an empty mask yields the full-frame box."""
    mask = binarize(cam8, threshold_fraction)
    try:
        return largest_component_bbox(mask), False
    except EmptyMask:
        h, w = mask.shape
        return BoundingBox.full(h, w), True


def draw_box(image, box, color=GREEN, thickness=2):
    """Copy of ``image`` (as RGB) with a rectangle drawn just inside ``box``."""
    px = np.array(image.rgb())
    h, w = px.shape[:2]
    x0, y0 = box.xmin, box.ymin
    x1, y1 = min(box.xmax, w - 1), min(box.ymax, h - 1)
    for t in range(thickness):
        top, bottom = min(y0 + t, y1), max(y1 - t, y0)
        left, right = min(x0 + t, x1), max(x1 - t, x0)
        px[top, x0:x1 + 1] = color
        px[bottom, x0:x1 + 1] = color
        px[y0:y1 + 1, left] = color
        px[y0:y1 + 1, right] = color
    return type(image)(px)


class RecordFailure(Exception):
    """Wraps an error raised while processing one manifest record."""

    def __init__(self, record, error):
        super().__init__(f"line {record.line}: {type(error).__name__}: {error}")
        self.record = record
        self.error = error


def _process(record, source, cfg, threshold_fraction):
    try:
        if source is not None:
            image = formats.read_image(record.image)
            height, width = image.height, image.width
            fm = source(image)
        else:
            if record.fmap is None:
                raise formats.ParseError('record has no "fmap" and no model was given', line=record.line)
            height, width = formats.read_image_size(record.image)
            fm = load_feature_map(record.fmap)
        try:
            cam8 = cam_for_size(fm, height, width, cfg).quantized
        except DegenerateActivations:
            return BoundingBox.full(height, width), True, True
        box, fallback = localize_cam(cam8, threshold_fraction)
        return box, fallback, False
    except Exception as exc:  # re-raised with the record attached
        raise RecordFailure(record, exc) from exc


def evaluate_manifest(records, source=None, cfg=None, threshold_fraction=DEFAULT_THRESHOLD,
                      iou_threshold=DEFAULT_IOU_THRESHOLD, gate_on_classification=False, jobs=1):
    """Run the localization protocol over manifest records; returns the report dict.

    ``source`` maps an image to a feature map (e.g. :class:`ModelSource`);
    without one each record's ``fmap`` dump is used.  Records are processed on
    up to ``jobs`` threads and folded in manifest order, so the report does not
    depend on ``jobs``.
    """
    cfg = cfg or CamConfig()
    records = list(records)
    binarize(np.zeros((1, 1), np.uint8), threshold_fraction)  # validate early
    if gate_on_classification:
        # fail before doing any work
        localization_error(
            [LocalizationRecord(r.image_id, r.boxes[0], r.boxes, r.classified_correctly) for r in records],
            iou_threshold, True,
        )

    def work(r):
        return _process(r, source, cfg, threshold_fraction)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(work, records))
    else:
        outcomes = [work(r) for r in records]

    loc = [
        LocalizationRecord(r.image_id, box, r.boxes, r.classified_correctly)
        for r, (box, _, _) in zip(records, outcomes)
    ]
    error_rate, verdicts = localization_error(loc, iou_threshold, gate_on_classification)
    rows = []
    for i, (r, (box, fallback, degenerate), v) in enumerate(zip(records, outcomes, verdicts)):
        rows.append({
            "index": i,
            "line": r.line,
            "image": r.image_id,
            "box": box.as_list(),
            "best_iou": v.best_iou,
            "hit": v.hit,
            "fallback": fallback,
            "degenerate": degenerate,
        })
    return {
        "aggregate": {
            "error_rate": error_rate,
            "threshold_fraction": threshold_fraction,
            "iou_threshold": iou_threshold,
            "gated": gate_on_classification,
            "count": len(rows),
            "hits": sum(r["hit"] for r in rows),
            "fallbacks": sum(r["fallback"] for r in rows),
        },
        "records": rows,
    }


def compare_maps(fm_a, size_a, fm_b, size_b, cfg=None, threshold_fraction=DEFAULT_THRESHOLD):
    """Similarity of two CAMs, each resampled to its own image size."""
    a = cam_for_size(fm_a, *size_a, cfg).quantized
    b = cam_for_size(fm_b, *size_b, cfg).quantized
    return cam_similarity(a, b, threshold_fraction)
