"""Array containers and layout conventions shared by the rest of the package.

Tensors are plain ``numpy.ndarray`` objects of dtype float32 with rank 1..4,
row-major (C order).  The two wrappers here add the checks that matter:
``FeatureMap`` for channel-major activations and ``RasterImage`` for 8-bit
pixels.  Both freeze their buffers on construction.
"""
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, LengthMismatch

__all__ = [
    "as_tensor",
    "FeatureMap",
    "RasterImage",
    "feature_map_to_matrix",
    "matrix_to_map",
    "image_to_tensor",
    "round_half_away",
]


def _frozen(a):
    a = np.array(a, order="C", copy=True)
    a.flags.writeable = False
    return a


def as_tensor(data, dims=None):
    """Return ``data`` as a validated float32 tensor.

    ``dims`` optionally reshapes a flat sequence.  Raises ``LengthMismatch``
    when the element count does not match and ``ValueError`` on rank outside
    1..4, zero-sized dims or non-finite values.
    """
    a = np.asarray(data, dtype=np.float32)
    if dims is not None:
        dims = tuple(int(d) for d in dims)
        if a.size != int(np.prod(dims, dtype=np.int64)):
            raise LengthMismatch(f"{a.size} values do not fill dims {dims}")
        a = a.reshape(dims)
    if not 1 <= a.ndim <= 4:
        raise ValueError(f"tensor rank must be 1..4, got {a.ndim}")
    if 0 in a.shape:
        raise ValueError(f"tensor dims must be positive, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("tensor contains NaN or Inf")
    return np.ascontiguousarray(a)


@dataclass(frozen=True)
class FeatureMap:
    """Activations of one layer, shape (channels, height, width)."""

    data: np.ndarray

    def __post_init__(self):
        a = as_tensor(self.data)
        if a.ndim != 3:
            raise DimensionMismatch(f"feature map must be rank 3 (C, H, W), got shape {a.shape}")
        object.__setattr__(self, "data", _frozen(a))

    @property
    def channels(self):
        return self.data.shape[0]

    @property
    def height(self):
        return self.data.shape[1]

    @property
    def width(self):
        return self.data.shape[2]

    @property
    def shape(self):
        return self.data.shape

    def scaled(self, factor):
        return FeatureMap(self.data * np.float32(factor))


@dataclass(frozen=True)
class RasterImage:
    """8-bit image; ``pixels`` has shape (height, width, channels), channels 1 or 3."""

    pixels: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.pixels)
        if p.ndim == 2:
            p = p[:, :, None]
        if p.ndim != 3 or p.shape[2] not in (1, 3):
            raise DimensionMismatch(f"raster must be (H, W, 1|3), got shape {p.shape}")
        if 0 in p.shape:
            raise DimensionMismatch("raster dims must be positive")
        if p.dtype != np.uint8:
            if np.any((p < 0) | (p > 255)):
                raise ValueError("pixel values must lie in [0, 255]")
            p = p.astype(np.uint8)
        object.__setattr__(self, "pixels", _frozen(p))

    @property
    def height(self):
        return self.pixels.shape[0]

    @property
    def width(self):
        return self.pixels.shape[1]

    @property
    def channels(self):
        return self.pixels.shape[2]

    def rgb(self):
        """Pixels as an (H, W, 3) uint8 array, gray replicated across channels."""
        if self.channels == 3:
            return self.pixels
        return np.repeat(self.pixels, 3, axis=2)


def feature_map_to_matrix(fm):
    """Reshape (C, H, W) activations to an (H*W, C) matrix.

    Row ``s`` is spatial location (s // W, s % W) and column ``c`` is channel c.
    """
    c = fm.channels
    return np.ascontiguousarray(fm.data.reshape(c, -1).T)


def matrix_to_map(v, height, width):
    """Reinterpret a length H*W vector as an H x W map, row-major."""
    v = np.asarray(v)
    if v.ndim != 1 or v.shape[0] != height * width:
        raise LengthMismatch(f"vector of length {v.size} cannot fill a {height}x{width} map")
    return v.reshape(height, width).copy()


def image_to_tensor(image):
    """Convert a ``RasterImage`` to a (C, H, W) float32 tensor scaled to [0, 1]."""
    return np.ascontiguousarray(image.pixels.transpose(2, 0, 1), dtype=np.float32) / np.float32(255.0)


def round_half_away(x):
    """Round to nearest integer, ties away from zero."""
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)
