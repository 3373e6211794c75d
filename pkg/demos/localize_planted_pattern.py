# Weakly supervised localization on a feature map with a known answer.
#
# We build activations where every channel is a scaled copy of one spatial
# pattern, plus a little noise.  The dominant singular direction should then
# light up exactly that pattern, and the largest thresholded segment should
# recover its rectangle.
import numpy as np

from eigencam import BoundingBox, FeatureMap, binarize, eigen_cam, iou, largest_component_bbox, quantize

rng = np.random.default_rng(3)
c, h, w = 32, 14, 14
xmin, ymin, xmax, ymax = 4, 2, 9, 7

pattern = np.zeros((h, w))
pattern[ymin:ymax + 1, xmin:xmax + 1] = rng.uniform(0.6, 1.0, (ymax - ymin + 1, xmax - xmin + 1))
weights = rng.uniform(0.2, 1.0, c)
data = weights[:, None, None] * pattern[None] + 0.02 * rng.normal(size=(c, h, w))
fm = FeatureMap(data.astype(np.float32))

amap = eigen_cam(fm)
print("sigma_1 =", round(amap.sigma, 4))
print("sum of raw map (sign chosen to be >= 0):", round(float(amap.values.sum()), 4))

# localize at feature resolution and at a 4x larger "image" resolution
# Bilinear upsampling blurs the edges, so the box at image resolution grows
# or shrinks with the threshold.
for scale in (1, 4):
    truth = BoundingBox(xmin * scale, ymin * scale, (xmax + 1) * scale - 1, (ymax + 1) * scale - 1)
    cam8 = quantize(amap, h * scale, w * scale).quantized
    for t in (0.10, 0.20, 0.40):
        box = largest_component_bbox(binarize(cam8, t))
        print(f"scale {scale} threshold {t:.2f}: box {box.as_list()} IoU vs {truth.as_list()}: {iou(box, truth):.3f}")

# Positive rescaling of every activation leaves the 8-bit map unchanged.
base = quantize(amap, h, w).quantized
for k in (0.5, 3.0, 10.0):
    print(f"x{k}: identical quantized map ->", quantize(eigen_cam(fm.scaled(k)), h, w).quantized.tobytes() == base.tobytes())
