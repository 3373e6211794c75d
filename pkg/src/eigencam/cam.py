"""Eigen-CAM heatmaps: projection, quantization, resampling and overlay."""
from dataclasses import dataclass

import numpy as np

from . import linalg
from .errors import DegenerateActivations, DimensionMismatch
from .tensor import RasterImage, feature_map_to_matrix, matrix_to_map, round_half_away

__all__ = [
    "CamConfig",
    "ActivationMap",
    "eigen_cam",
    "normalize_map",
    "upsample_bilinear",
    "jet",
    "overlay",
    "quantize",
    "JET_CONTROL_POINTS",
]

# value -> (r, g, b); linear between points
JET_CONTROL_POINTS = (
    (0, (0, 0, 128)),
    (32, (0, 0, 255)),
    (96, (0, 255, 255)),
    (160, (255, 255, 0)),
    (224, (255, 0, 0)),
    (255, (128, 0, 0)),
)


@dataclass(frozen=True)
class CamConfig:
    """Options for :func:`eigen_cam`.

    ``component`` is the 1-based singular component to project on.
    ``center`` subtracts the per-channel mean of the (H*W, C) activation
    matrix before factorizing; off by default.
    """

    component: int = 1
    center: bool = False
    tol: float = linalg.DEFAULT_TOL
    max_iter: int = linalg.DEFAULT_MAX_ITER

    def __post_init__(self):
        if self.component < 1:
            raise ValueError(f"component must be >= 1, got {self.component}")


@dataclass(frozen=True)
class ActivationMap:
    values: np.ndarray
    component: int
    sigma: float
    quantized: np.ndarray = None

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def width(self):
        return self.values.shape[1]


def eigen_cam(fm, cfg=None):
    """Project the activations of ``fm`` onto their k-th right singular vector.

    Returns an :class:`ActivationMap` holding the raw (H, W) float32 map.  The
    singular vector's sign is chosen so that the map sums to a nonnegative
    value; the map is not rectified.
    """
    cfg = cfg or CamConfig()
    if cfg.component > fm.channels:
        raise ValueError(f"component {cfg.component} exceeds channel count {fm.channels}")
    m = feature_map_to_matrix(fm).astype(np.float64)
    if not np.any(m):
        raise DegenerateActivations("feature map is entirely zero")
    if cfg.center:
        m = m - m.mean(axis=0)
        if not np.any(m):
            raise DegenerateActivations("feature map is constant per channel; nothing left after centering")

    comp = linalg.top_component(m, cfg.component, tol=cfg.tol, max_iter=cfg.max_iter)
    projection = m @ comp.v
    if projection.sum() < 0:
        projection = -projection
    raw = matrix_to_map(projection.astype(np.float32), fm.height, fm.width)
    return ActivationMap(values=raw, component=cfg.component, sigma=comp.sigma)


def normalize_map(raw):
    """Min-max scale a real map to 0..255 (uint8); constant maps become zeros."""
    x = np.asarray(raw, dtype=np.float64)
    lo, hi = x.min(), x.max()
    if hi - lo < 1e-12:
        return np.zeros(x.shape, dtype=np.uint8)
    return round_half_away(255.0 * (x - lo) / (hi - lo)).astype(np.uint8)


def _axis_weights(n_src, n_dst):
    pos = (np.arange(n_dst) + 0.5) * (n_src / n_dst) - 0.5
    pos = np.clip(pos, 0.0, n_src - 1)
    i0 = np.floor(pos).astype(np.intp)
    i1 = np.minimum(i0 + 1, n_src - 1)
    return i0, i1, pos - i0


def upsample_bilinear(cam, target_h, target_w):
    """Bilinear resize with half-pixel centers and edge clamping.

    uint8 input gives uint8 output (rounded half away from zero); real input
    gives float32 output.
    """
    a = np.asarray(cam)
    if a.ndim != 2 or target_h < 1 or target_w < 1:
        raise ValueError("expected a 2-D map and positive target dims")
    h, w = a.shape
    y0, y1, fy = _axis_weights(h, target_h)
    x0, x1, fx = _axis_weights(w, target_w)
    src = a.astype(np.float64)
    fy = fy[:, None]
    fx = fx[None, :]
    top = src[y0][:, x0] * (1 - fx) + src[y0][:, x1] * fx
    bottom = src[y1][:, x0] * (1 - fx) + src[y1][:, x1] * fx
    out = top * (1 - fy) + bottom * fy
    if a.dtype == np.uint8:
        return np.clip(round_half_away(out), 0, 255).astype(np.uint8)
    return out.astype(np.float32)


def jet(cam8):
    """Map uint8 values to RGB through the fixed jet table, shape (..., 3) uint8."""
    v = np.asarray(cam8, dtype=np.float64)
    xs = [p for p, _ in JET_CONTROL_POINTS]
    rgb = [np.interp(v, xs, [c[i] for _, c in JET_CONTROL_POINTS]) for i in range(3)]
    return round_half_away(np.stack(rgb, axis=-1)).astype(np.uint8)


def overlay(image, cam8, alpha=0.5):
    """Blend the jet-colored map over ``image``.

    Returns an RGB ``RasterImage``, except that ``alpha == 0`` hands back the
    input unchanged (gray stays gray).
    """
    cam8 = np.asarray(cam8)
    if cam8.shape != (image.height, image.width):
        raise DimensionMismatch(
            f"map {cam8.shape} does not match image {(image.height, image.width)}"
        )
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    if alpha == 0.0:
        return image
    base = image.rgb().astype(np.float64)
    mixed = (1.0 - alpha) * base + alpha * jet(cam8).astype(np.float64)
    return RasterImage(np.clip(round_half_away(mixed), 0, 255).astype(np.uint8))


def quantize(amap, target_h=None, target_w=None):
    """Attach the 8-bit map: normalize at feature resolution, then upsample.

    Without a target size the quantized map keeps the feature-map resolution.
    """
    cam8 = normalize_map(amap.values)
    if target_h is not None:
        cam8 = upsample_bilinear(cam8, target_h, target_w)
    return ActivationMap(values=amap.values, component=amap.component, sigma=amap.sigma, quantized=cam8)
