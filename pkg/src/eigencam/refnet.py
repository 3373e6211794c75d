"""A small sequential CNN interpreter used to produce feature maps.

Supported layers: ``Conv``, ``Relu``, ``MaxPool``, ``GlobalAvgPool``, ``Dense``
and ``Softmax``.  Convolution is cross-correlation (no kernel flip), the
convention of mainstream frameworks, so exported weights behave the same.
Dot products accumulate in float64; every layer output is stored as float32.
"""
import hashlib
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import NoClassifierHead, ShapeMismatch, TapNotFeatureMap
from .tensor import FeatureMap, as_tensor

__all__ = [
    "Conv",
    "Relu",
    "MaxPool",
    "GlobalAvgPool",
    "Dense",
    "Softmax",
    "ModelGraph",
    "propagate_shapes",
    "apply_layer",
    "forward",
    "forward_to_tap",
    "classify",
    "make_toy_model",
    "last_feature_tap",
    "model_checksum",
    "XorShift64Star",
]


def _weights(a, shape, what):
    a = as_tensor(a)
    if a.shape != tuple(shape):
        raise ShapeMismatch(f"{what} has shape {a.shape}, expected {tuple(shape)}")
    a = a.copy()
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Conv:
    weights: np.ndarray
    bias: np.ndarray
    stride: int = 1
    pad: int = 0
    kind = "conv"

    def __post_init__(self):
        w = as_tensor(self.weights)
        if w.ndim != 4:
            raise ShapeMismatch(f"conv weights must be [out, in, kh, kw], got {w.shape}")
        object.__setattr__(self, "weights", _weights(w, w.shape, "conv weights"))
        object.__setattr__(self, "bias", _weights(self.bias, (w.shape[0],), "conv bias"))
        if self.stride < 1 or self.pad < 0:
            raise ShapeMismatch(f"conv stride must be >= 1 and pad >= 0, got {self.stride}, {self.pad}")

    @property
    def out_ch(self):
        return self.weights.shape[0]

    @property
    def in_ch(self):
        return self.weights.shape[1]

    @property
    def kh(self):
        return self.weights.shape[2]

    @property
    def kw(self):
        return self.weights.shape[3]


@dataclass(frozen=True)
class Relu:
    kind = "relu"


@dataclass(frozen=True)
class MaxPool:
    k: int
    stride: int
    kind = "maxpool"

    def __post_init__(self):
        if self.k < 1 or self.stride < 1:
            raise ShapeMismatch("maxpool k and stride must be >= 1")


@dataclass(frozen=True)
class GlobalAvgPool:
    kind = "gap"


@dataclass(frozen=True)
class Dense:
    weights: np.ndarray
    bias: np.ndarray
    kind = "dense"

    def __post_init__(self):
        w = as_tensor(self.weights)
        if w.ndim != 2:
            raise ShapeMismatch(f"dense weights must be [out, in], got {w.shape}")
        object.__setattr__(self, "weights", _weights(w, w.shape, "dense weights"))
        object.__setattr__(self, "bias", _weights(self.bias, (w.shape[0],), "dense bias"))

    @property
    def out_features(self):
        return self.weights.shape[0]

    @property
    def in_features(self):
        return self.weights.shape[1]


@dataclass(frozen=True)
class Softmax:
    kind = "softmax"


@dataclass(frozen=True)
class ModelGraph:
    """Ordered, immutable layer list.  Construction runs shape propagation."""

    layers: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise ShapeMismatch("model has no layers")
        for i, layer in enumerate(self.layers):
            if isinstance(layer, Softmax) and i != len(self.layers) - 1:
                raise ShapeMismatch("softmax may only be the final layer", layer=i)
        propagate_shapes(self)

    def __len__(self):
        return len(self.layers)

    @property
    def in_channels(self):
        first = self.layers[0]
        return first.in_ch if isinstance(first, Conv) else None

    @property
    def has_classifier(self):
        return isinstance(self.layers[-1], Softmax)


def _conv_extent(n, k, stride, pad):
    if n is None:
        return None
    span = n + 2 * pad - k
    return None if span < 0 else span // stride + 1


def propagate_shapes(model, input_shape=None):
    """Output shape of every layer, as a list of tuples.

    Spatial shapes are ``(C, H, W)`` and vectors ``(N,)``.  With no
    ``input_shape`` the spatial dims stay symbolic (``None``) and only channel
    and feature counts are checked.  Raises ``ShapeMismatch`` naming the layer.
    """
    shapes = []
    cur = tuple(input_shape) if input_shape is not None else None
    if cur is not None and len(cur) != 3:
        raise ShapeMismatch(f"input must be (C, H, W), got {cur}", layer=0)
    for i, layer in enumerate(model.layers):
        if cur is None and not isinstance(layer, (Conv, Dense)):
            cur = (None, None, None)
        if isinstance(layer, Conv):
            if cur is None:
                cur = (layer.in_ch, None, None)
            if len(cur) != 3 or cur[0] not in (None, layer.in_ch):
                raise ShapeMismatch(f"layer {i}: conv expects {layer.in_ch} input channels, got shape {cur}", layer=i)
            h = _conv_extent(cur[1], layer.kh, layer.stride, layer.pad)
            w = _conv_extent(cur[2], layer.kw, layer.stride, layer.pad)
            if (cur[1] is not None and h is None) or (cur[2] is not None and w is None):
                raise ShapeMismatch(f"layer {i}: kernel larger than padded input {cur}", layer=i)
            cur = (layer.out_ch, h, w)
        elif isinstance(layer, MaxPool):
            if len(cur) != 3:
                raise ShapeMismatch(f"layer {i}: maxpool needs a (C, H, W) input", layer=i)
            h = _conv_extent(cur[1], layer.k, layer.stride, 0)
            w = _conv_extent(cur[2], layer.k, layer.stride, 0)
            if (cur[1] is not None and h is None) or (cur[2] is not None and w is None):
                raise ShapeMismatch(f"layer {i}: pool window larger than input {cur}", layer=i)
            cur = (cur[0], h, w)
        elif isinstance(layer, GlobalAvgPool):
            if len(cur) != 3:
                raise ShapeMismatch(f"layer {i}: global pooling needs a (C, H, W) input", layer=i)
            cur = (cur[0],)
        elif isinstance(layer, Dense):
            if cur is None:
                cur = (layer.in_features,)
            n = None if None in cur else int(np.prod(cur))
            if n is not None and n != layer.in_features:
                raise ShapeMismatch(f"layer {i}: dense expects {layer.in_features} features, got {n}", layer=i)
            cur = (layer.out_features,)
        elif isinstance(layer, (Relu, Softmax)):
            if isinstance(layer, Softmax) and len(cur) != 1:
                raise ShapeMismatch(f"layer {i}: softmax needs a vector input", layer=i)
        else:
            raise ShapeMismatch(f"layer {i}: unknown layer {layer!r}", layer=i)
        shapes.append(cur)
    return shapes


def _conv(x, layer):
    x64 = x.astype(np.float64)
    if layer.pad:
        p = layer.pad
        x64 = np.pad(x64, ((0, 0), (p, p), (p, p)))
    win = sliding_window_view(x64, (layer.kh, layer.kw), axis=(1, 2))
    win = win[:, :: layer.stride, :: layer.stride]
    out = np.einsum("oikl,iyxkl->oyx", layer.weights.astype(np.float64), win, optimize=True)
    out += layer.bias.astype(np.float64)[:, None, None]
    return out.astype(np.float32)


def _maxpool(x, layer):
    win = sliding_window_view(x, (layer.k, layer.k), axis=(1, 2))
    return np.ascontiguousarray(win[:, :: layer.stride, :: layer.stride].max(axis=(3, 4)))


def _softmax(z):
    z = z.astype(np.float64)
    e = np.exp(z - z.max())
    return e / e.sum()


def apply_layer(layer, x):
    """Evaluate a single layer on its input array."""
    if isinstance(layer, Conv):
        return _conv(x, layer)
    if isinstance(layer, Relu):
        return np.maximum(x, np.float32(0))
    if isinstance(layer, MaxPool):
        return _maxpool(x, layer)
    if isinstance(layer, GlobalAvgPool):
        return x.astype(np.float64).mean(axis=(1, 2)).astype(np.float32)
    if isinstance(layer, Dense):
        z = layer.weights.astype(np.float64) @ x.astype(np.float64).ravel()
        return (z + layer.bias).astype(np.float32)
    if isinstance(layer, Softmax):
        return _softmax(x).astype(np.float32)
    raise ShapeMismatch(f"unknown layer {layer!r}")


def _run(model, image, stop):
    x = as_tensor(image)
    shapes = propagate_shapes(model, x.shape)
    for layer, expected in zip(model.layers[: stop + 1], shapes):
        x = apply_layer(layer, x)
        assert x.shape == expected, (x.shape, expected)
    return x


def forward(model, image):
    """Run the whole model on a (C, H, W) image tensor."""
    return _run(model, image, len(model.layers) - 1)


def forward_to_tap(model, image, tap):
    """Activations after layer ``tap`` (0-based) as a :class:`FeatureMap`."""
    if not 0 <= tap < len(model.layers):
        raise TapNotFeatureMap(f"tap {tap} outside 0..{len(model.layers) - 1}")
    symbolic = propagate_shapes(model)
    if len(symbolic[tap]) != 3:
        raise TapNotFeatureMap(f"layer {tap} ({model.layers[tap].kind}) does not output a feature map")
    return FeatureMap(_run(model, image, tap))


def last_feature_tap(model):
    """Index of the last layer whose output is still a (C, H, W) map."""
    shapes = propagate_shapes(model)
    taps = [i for i, s in enumerate(shapes) if len(s) == 3]
    if not taps:
        raise TapNotFeatureMap("model has no spatial layer")
    return taps[-1]


def classify(model, image):
    """Ranked ``[(class_index, probability), ...]``, most probable first.

    Ties go to the lower class index.  Needs a model ending in ``Softmax``.
    """
    if not model.has_classifier:
        raise NoClassifierHead("model does not end in a softmax layer")
    z = _run(model, image, len(model.layers) - 2).astype(np.float64).ravel()
    p = _softmax(z)
    order = sorted(range(p.size), key=lambda i: (-p[i], i))
    return [(i, float(p[i])) for i in order]


class XorShift64Star:
    """xorshift64* generator seeded through one splitmix64 step.

    Kept in pure Python integers so the stream is identical on every platform.
    """

    MASK = (1 << 64) - 1

    def __init__(self, seed):
        z = (int(seed) + 0x9E3779B97F4A7C15) & self.MASK
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & self.MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & self.MASK
        z ^= z >> 31
        self.state = z or 0x2545F4914F6CDD1D

    def next_u64(self):
        x = self.state
        x ^= x >> 12
        x ^= (x << 25) & self.MASK
        x ^= x >> 27
        self.state = x
        return (x * 0x2545F4914F6CDD1D) & self.MASK

    def uniform(self, n, low=-1.0, high=1.0):
        """``n`` float64 values in ``[low, high)`` from the top 53 bits."""
        out = np.empty(n, dtype=np.float64)
        for i in range(n):
            out[i] = low + (high - low) * ((self.next_u64() >> 11) * 2.0**-53)
        return out


def make_toy_model(seed=0, in_channels=3, width=8, classes=10):
    """Deterministic conv net for tests and demos.

    Layout: Conv(3x3, pad 1) -> Relu -> MaxPool(2, 2) -> Conv(3x3, pad 1) ->
    Relu -> GlobalAvgPool -> Dense -> Softmax.  The last spatial layer is
    index 4.  Weights are uniform in +-1/sqrt(fan_in), biases in +-0.1.
    """
    rng = XorShift64Star(seed)

    def conv(out_ch, in_ch):
        fan_in = in_ch * 9
        w = rng.uniform(out_ch * fan_in) / np.sqrt(fan_in)
        b = rng.uniform(out_ch, -0.1, 0.1)
        return Conv(w.reshape(out_ch, in_ch, 3, 3), b, stride=1, pad=1)

    c1 = conv(width, in_channels)
    c2 = conv(2 * width, width)
    w = rng.uniform(classes * 2 * width) / np.sqrt(2 * width)
    dense = Dense(w.reshape(classes, 2 * width), rng.uniform(classes, -0.1, 0.1))
    return ModelGraph((c1, Relu(), MaxPool(2, 2), c2, Relu(), GlobalAvgPool(), dense, Softmax()))


def model_checksum(model):
    """SHA-256 over layer kinds, hyper-parameters and weight bytes."""
    h = hashlib.sha256()
    for layer in model.layers:
        h.update(layer.kind.encode())
        if isinstance(layer, Conv):
            h.update(np.array([layer.stride, layer.pad], dtype="<i8").tobytes())
        if isinstance(layer, MaxPool):
            h.update(np.array([layer.k, layer.stride], dtype="<i8").tobytes())
        for name in ("weights", "bias"):
            arr = getattr(layer, name, None)
            if arr is not None:
                h.update(np.asarray(arr, dtype="<f4").tobytes())
    return h.hexdigest()
