# Explain a prediction of the built-in toy network.
#
# The toy model is a small Conv-Relu-Pool-Conv-Relu-GAP-Dense-Softmax stack
# with weights drawn from a seeded generator, so every run is reproducible.
# We push a synthetic image through it, grab the last spatial activations,
# and turn them into a heatmap with the principal component of the channels.
import tempfile
from pathlib import Path

import numpy as np

from eigencam import CamConfig, RasterImage, classify, eigen_cam, forward_to_tap, make_toy_model, overlay, quantize
from eigencam.formats import write_image
from eigencam.refnet import Dense, ModelGraph, last_feature_tap
from eigencam.tensor import image_to_tensor

model = make_toy_model(seed=0)
print("layers:", [layer.kind for layer in model.layers])

# a bright disc on a dark background
h, w = 32, 32
yy, xx = np.mgrid[:h, :w]
disc = ((yy - 10) ** 2 + (xx - 20) ** 2) < 36
pixels = np.zeros((h, w, 3), np.uint8)
pixels[disc] = (230, 180, 40)
image = RasterImage(pixels)

x = image_to_tensor(image)
tap = last_feature_tap(model)
fm = forward_to_tap(model, x, tap)
print("tap", tap, "-> feature map", fm.shape)

top = classify(model, x)[:3]
print("top classes:", [(i, round(p, 4)) for i, p in top])

# first and second principal directions of the activations
for k in (1, 2):
    amap = quantize(eigen_cam(fm, CamConfig(component=k)), h, w)
    peak = tuple(int(i) for i in np.unravel_index(np.argmax(amap.quantized), amap.quantized.shape))
    print(f"component {k}: sigma={amap.sigma:.4f}, brightest pixel at {peak}")

amap = quantize(eigen_cam(fm), h, w)
out = Path(tempfile.mkdtemp()) / "toy_overlay.ppm"
write_image(out, overlay(image, amap.quantized, alpha=0.5))
print("overlay written to", out)

# The heatmap never looks at the classifier head.  Zero it out and the map
# is unchanged, even though the predicted probabilities are not.
headless = ModelGraph(tuple(
    Dense(np.zeros_like(l.weights), np.zeros_like(l.bias)) if l.kind == "dense" else l
    for l in model.layers
))
again = quantize(eigen_cam(forward_to_tap(headless, x, tap)), h, w)
print("same heatmap without classifier weights:", again.quantized.tobytes() == amap.quantized.tobytes())
print("classifier output changed:", classify(headless, x)[:3] != top)
