"""Fixture builders and brute-force oracles shared by the test modules.

The oracles here deliberately avoid the package's own code paths.
"""
from collections import deque

import numpy as np

from eigencam.tensor import FeatureMap, RasterImage


def planted_rank1(channels, height, width, rect, a=None, seed=0):
    """Rank-1 feature map: channel c = a[c] * P, with P > 0 only on ``rect``.

    ``rect`` is (xmin, ymin, xmax, ymax) inclusive.  Returns (fm, P).
    """
    rng = np.random.default_rng(seed)
    if a is None:
        a = rng.uniform(0.2, 1.0, channels)
    p = np.zeros((height, width))
    x0, y0, x1, y1 = rect
    p[y0:y1 + 1, x0:x1 + 1] = rng.uniform(0.5, 1.0, (y1 - y0 + 1, x1 - x0 + 1))
    data = np.asarray(a)[:, None, None] * p[None]
    return FeatureMap(data.astype(np.float32)), p


def planted_rank2(channels, height, width, rect1, rect2, strength=(3.0, 1.0), seed=0):
    """Sum of two rank-1 terms with orthogonal channel vectors and disjoint supports.

    The first term is the dominant one.  Returns (fm, P1, P2).
    """
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.normal(size=(channels, 2)))
    a1, a2 = q[:, 0] * strength[0], q[:, 1] * strength[1]
    planes = []
    for rect in (rect1, rect2):
        p = np.zeros((height, width))
        x0, y0, x1, y1 = rect
        p[y0:y1 + 1, x0:x1 + 1] = 1.0
        planes.append(p)
    data = a1[:, None, None] * planes[0][None] + a2[:, None, None] * planes[1][None]
    return FeatureMap(data.astype(np.float32)), planes[0], planes[1]


def inside(rect, y, x):
    x0, y0, x1, y1 = rect
    return x0 <= x <= x1 and y0 <= y <= y1


def rasterize(box, height, width):
    m = np.zeros((height, width), dtype=bool)
    m[box.ymin:box.ymax + 1, box.xmin:box.xmax + 1] = True
    return m


def pixel_iou(a, b, height=64, width=64):
    """IoU by counting rasterized pixels."""
    ma, mb = rasterize(a, height, width), rasterize(b, height, width)
    return np.count_nonzero(ma & mb) / np.count_nonzero(ma | mb)


def flood_fill_components(mask):
    """8-connected components by BFS in raster order: list of pixel lists."""
    h, w = mask.shape
    seen = np.zeros_like(mask, dtype=bool)
    comps = []
    for y in range(h):
        for x in range(w):
            if not mask[y, x] or seen[y, x]:
                continue
            pixels = []
            queue = deque([(y, x)])
            seen[y, x] = True
            while queue:
                cy, cx = queue.popleft()
                pixels.append((cy, cx))
                for dy in (-1, 0, 1):
                    for dx in (-1, 0, 1):
                        ny, nx = cy + dy, cx + dx
                        if 0 <= ny < h and 0 <= nx < w and mask[ny, nx] and not seen[ny, nx]:
                            seen[ny, nx] = True
                            queue.append((ny, nx))
            comps.append(pixels)
    return comps


def oracle_largest_bbox(mask):
    """(xmin, ymin, xmax, ymax) of the largest component; earliest-found wins ties.

    Components are discovered in raster order of their first pixel, so the
    first one found of a given size holds the lowest raster index.
    """
    comps = flood_fill_components(mask)
    best = comps[0]
    for c in comps[1:]:
        if len(c) > len(best):
            best = c
    ys = [p[0] for p in best]
    xs = [p[1] for p in best]
    return (min(xs), min(ys), max(xs), max(ys))


def direct_conv(x, w, b, stride, pad):
    """Naive quadruple-loop cross-correlation in float64."""
    cin, h, wd = x.shape
    cout, _, kh, kw = w.shape
    xp = np.zeros((cin, h + 2 * pad, wd + 2 * pad))
    xp[:, pad:pad + h, pad:pad + wd] = x
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (wd + 2 * pad - kw) // stride + 1
    out = np.zeros((cout, ho, wo))
    for o in range(cout):
        for yy in range(ho):
            for xx in range(wo):
                acc = float(b[o])
                for i in range(cin):
                    for u in range(kh):
                        for v in range(kw):
                            acc += float(w[o, i, u, v]) * float(xp[i, yy * stride + u, xx * stride + v])
                out[o, yy, xx] = acc
    return out


def gradient_image(height, width, channels=3, seed=0):
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:height, 0:width]
    base = (yy * 7 + xx * 13) % 256
    px = np.stack([(base + 40 * c + rng.integers(0, 20, (height, width))) % 256 for c in range(channels)], -1)
    return RasterImage(px.astype(np.uint8))
