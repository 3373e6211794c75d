import math

import numpy as np
import pytest

from eigencam.cam import eigen_cam, quantize
from eigencam.errors import NoClassifierHead, ShapeMismatch, TapNotFeatureMap
from eigencam.refnet import (
    Conv,
    Dense,
    GlobalAvgPool,
    MaxPool,
    ModelGraph,
    Relu,
    Softmax,
    XorShift64Star,
    apply_layer,
    classify,
    forward,
    forward_to_tap,
    last_feature_tap,
    make_toy_model,
    model_checksum,
    propagate_shapes,
)

from helpers import direct_conv

X33 = np.arange(1, 10, dtype=np.float32).reshape(1, 3, 3)


def test_identity_1x1_conv_is_bitwise():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(4, 5, 6)).astype(np.float32)
    w = np.eye(4, dtype=np.float32).reshape(4, 4, 1, 1)
    model = ModelGraph((Conv(w, np.zeros(4, np.float32)),))
    assert forward_to_tap(model, x, 0).data.tobytes() == x.tobytes()


def test_conv_hand_sums():
    model = ModelGraph((Conv(np.ones((1, 1, 2, 2), np.float32), np.zeros(1, np.float32)),))
    np.testing.assert_array_equal(forward_to_tap(model, X33, 0).data[0], [[12, 16], [24, 28]])


def test_relu():
    np.testing.assert_array_equal(apply_layer(Relu(), np.array([-1, 2], np.float32)), [0, 2])


def test_maxpool_drops_partial_windows():
    model = ModelGraph((MaxPool(2, 2),))
    np.testing.assert_array_equal(forward_to_tap(model, X33, 0).data, [[[5]]])


def test_maxpool_stride_one():
    model = ModelGraph((MaxPool(2, 1),))
    np.testing.assert_array_equal(forward_to_tap(model, X33, 0).data[0], [[5, 6], [8, 9]])


def test_conv_matches_direct_oracle():
    rng = np.random.default_rng(42)
    for _ in range(25):
        cin, cout = rng.integers(1, 5, 2)
        kh, kw = rng.integers(1, 4, 2)
        stride, pad = int(rng.integers(1, 3)), int(rng.integers(0, 3))
        h, w = rng.integers(max(kh, kw), 9, 2)
        x = rng.normal(size=(cin, h, w)).astype(np.float32)
        wt = rng.normal(size=(cout, cin, kh, kw)).astype(np.float32)
        b = rng.normal(size=cout).astype(np.float32)
        out = forward_to_tap(ModelGraph((Conv(wt, b, stride, pad),)), x, 0).data
        ref = direct_conv(x, wt, b, stride, pad)
        assert out.shape == ref.shape
        np.testing.assert_allclose(out, ref, atol=1e-5, rtol=1e-6)


def _head(logits):
    n = len(logits)
    dense = Dense(np.zeros((n, 1), np.float32), np.array(logits, np.float32))
    return ModelGraph((GlobalAvgPool(), dense, Softmax()))


class TestClassify:
    def test_tie_rule(self):
        ranked = classify(_head([0.0, 0.0]), np.ones((1, 1, 1), np.float32))
        assert ranked[0][0] == 0
        assert [p for _, p in ranked] == pytest.approx([0.5, 0.5])

    def test_closed_form(self):
        ranked = classify(_head([math.log(3.0), 0.0]), np.ones((1, 1, 1), np.float32))
        assert ranked == [(0, pytest.approx(0.75, abs=1e-7)), (1, pytest.approx(0.25, abs=1e-7))]

    def test_sums_to_one(self):
        model = make_toy_model(3)
        img = np.random.default_rng(0).uniform(0, 1, (3, 12, 12)).astype(np.float32)
        assert sum(p for _, p in classify(model, img)) == pytest.approx(1.0, abs=1e-6)

    def test_stable_for_large_logits(self):
        ranked = classify(_head([1000.0, 0.0]), np.ones((1, 1, 1), np.float32))
        assert ranked[0] == (0, pytest.approx(1.0))

    def test_no_head(self):
        model = ModelGraph((Conv(np.ones((1, 1, 1, 1), np.float32), np.zeros(1, np.float32)),))
        with pytest.raises(NoClassifierHead):
            classify(model, X33)


class TestToyModel:
    def test_same_seed_same_checksum(self):
        assert model_checksum(make_toy_model(0)) == model_checksum(make_toy_model(0))

    def test_different_seed(self):
        assert model_checksum(make_toy_model(0)) != model_checksum(make_toy_model(1))

    def test_layout(self):
        m = make_toy_model(0)
        assert [l.kind for l in m.layers] == ["conv", "relu", "maxpool", "conv", "relu", "gap", "dense", "softmax"]
        assert last_feature_tap(m) == 4

    def test_prng_stream_is_fixed(self):
        # first outputs of the generator are part of the model format contract
        g = XorShift64Star(0)
        first = [g.next_u64() for _ in range(3)]
        g2 = XorShift64Star(0)
        assert first == [g2.next_u64() for _ in range(3)]
        assert len(set(first)) == 3
        assert all(0 <= v < 2**64 for v in first)


class TestShapes:
    def test_runtime_shapes_match_propagation(self):
        img = np.random.default_rng(0).uniform(0, 1, (3, 13, 10)).astype(np.float32)
        for seed in range(3):
            model = make_toy_model(seed)
            expected = propagate_shapes(model, img.shape)
            x = img
            for layer, shape in zip(model.layers, expected):
                x = apply_layer(layer, x)
                assert x.shape == shape

    def test_channel_mismatch_at_construction(self):
        c1 = Conv(np.ones((4, 3, 3, 3), np.float32), np.zeros(4, np.float32))
        c2 = Conv(np.ones((2, 5, 3, 3), np.float32), np.zeros(2, np.float32))
        with pytest.raises(ShapeMismatch) as info:
            ModelGraph((c1, Relu(), c2))
        assert info.value.layer == 2

    def test_dense_mismatch(self):
        c1 = Conv(np.ones((4, 3, 3, 3), np.float32), np.zeros(4, np.float32))
        d = Dense(np.ones((2, 5), np.float32), np.zeros(2, np.float32))
        with pytest.raises(ShapeMismatch):
            ModelGraph((c1, GlobalAvgPool(), d))

    def test_softmax_only_last(self):
        d = Dense(np.ones((2, 2), np.float32), np.zeros(2, np.float32))
        with pytest.raises(ShapeMismatch):
            ModelGraph((d, Softmax(), d))

    def test_image_channel_mismatch(self):
        with pytest.raises(ShapeMismatch):
            forward(make_toy_model(0), np.zeros((1, 8, 8), np.float32))

    def test_image_too_small_for_pool(self):
        with pytest.raises(ShapeMismatch):
            forward(make_toy_model(0), np.zeros((3, 1, 1), np.float32))


class TestTaps:
    def test_tap_past_gap(self):
        with pytest.raises(TapNotFeatureMap):
            forward_to_tap(make_toy_model(0), np.zeros((3, 8, 8), np.float32), 5)

    def test_tap_out_of_range(self):
        with pytest.raises(TapNotFeatureMap):
            forward_to_tap(make_toy_model(0), np.zeros((3, 8, 8), np.float32), 99)


def test_classifier_weights_do_not_touch_the_cam():
    model = make_toy_model(0)
    img = np.random.default_rng(5).uniform(0, 1, (3, 16, 16)).astype(np.float32)
    zeroed = ModelGraph(tuple(
        Dense(np.zeros_like(l.weights), np.zeros_like(l.bias)) if isinstance(l, Dense) else l
        for l in model.layers
    ))
    tap = last_feature_tap(model)
    fa, fb = forward_to_tap(model, img, tap), forward_to_tap(zeroed, img, tap)
    assert fa.data.tobytes() == fb.data.tobytes()
    ca = quantize(eigen_cam(fa), 16, 16).quantized
    cb = quantize(eigen_cam(fb), 16, 16).quantized
    assert ca.tobytes() == cb.tobytes()
    assert classify(model, img) != classify(zeroed, img)
