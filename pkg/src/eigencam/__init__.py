"""Eigen-CAM: class activation maps from the principal components of
convolutional activations, with a weakly-supervised localization harness."""

from .cam import ActivationMap, CamConfig, eigen_cam, normalize_map, overlay, quantize, upsample_bilinear
from .errors import EigenCamError
from .linalg import jacobi_svd, top_component
from .localize import (
    BoundingBox,
    LocalizationRecord,
    binarize,
    cam_similarity,
    iou,
    largest_component_bbox,
    localization_error,
)
from .refnet import ModelGraph, classify, forward_to_tap, make_toy_model
from .tensor import FeatureMap, RasterImage, feature_map_to_matrix, matrix_to_map

__version__ = "0.1.0"

__all__ = [
    "ActivationMap",
    "BoundingBox",
    "CamConfig",
    "EigenCamError",
    "FeatureMap",
    "LocalizationRecord",
    "ModelGraph",
    "RasterImage",
    "binarize",
    "cam_similarity",
    "classify",
    "eigen_cam",
    "feature_map_to_matrix",
    "forward_to_tap",
    "iou",
    "jacobi_svd",
    "largest_component_bbox",
    "localization_error",
    "make_toy_model",
    "matrix_to_map",
    "normalize_map",
    "overlay",
    "quantize",
    "top_component",
    "upsample_bilinear",
]
