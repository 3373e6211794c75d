# Batch evaluation and map comparison through the command-line front end.
#
# A small synthetic dataset is written to a temporary directory: images,
# activation dumps and a JSON Lines manifest with ground-truth boxes.  Half
# of the boxes are placed where the activations are, half somewhere else,
# so the localization error should come out near 0.5.
import json
import tempfile
from pathlib import Path

import numpy as np

from eigencam.cli import main
from eigencam.formats import write_fmap, write_image
from eigencam.tensor import RasterImage

rng = np.random.default_rng(0)
root = Path(tempfile.mkdtemp())
records = []
for i in range(10):
    h, w = 16, 16
    x0, y0 = rng.integers(0, 8, 2)
    pattern = np.zeros((h, w))
    pattern[y0:y0 + 6, x0:x0 + 6] = 1.0
    fm = rng.uniform(0.3, 1.0, 8)[:, None, None] * pattern[None]
    write_fmap(root / f"a{i}.fmap", fm.astype(np.float32))
    write_image(root / f"img{i}.ppm", RasterImage(rng.integers(0, 256, (h, w, 3)).astype(np.uint8)))
    box = [int(x0), int(y0), int(x0) + 5, int(y0) + 5]
    if i % 2:
        box = [15 - box[2], 15 - box[3], 15 - box[0], 15 - box[1]]  # mirrored, usually a miss
    records.append({"image": f"img{i}.ppm", "fmap": f"a{i}.fmap", "boxes": [box], "classified_correctly": bool(i % 3)})

manifest = root / "manifest.jsonl"
manifest.write_text("".join(json.dumps(r) + "\n" for r in records))

print("--- evaluate, 4 worker threads")
main(["evaluate", str(manifest), "--jobs", "4", "--out", str(root / "report.json")])
report = json.loads((root / "report.json").read_text())
print(json.dumps(report["aggregate"], indent=2))

print("--- evaluate, counting only correctly classified records")
main(["evaluate", str(manifest), "--gate-on-classification", "--out", str(root / "gated.json")])
print("gated error rate:", json.loads((root / "gated.json").read_text())["aggregate"]["error_rate"])

# compare: a clean map against a slightly perturbed one, then against an
# unrelated one
clean = np.zeros((8, 16, 16), np.float32)
clean[:, 3:9, 4:10] = rng.uniform(0.5, 1.0, 8)[:, None, None]
noisy = clean + 0.05 * rng.normal(size=clean.shape).astype(np.float32)
other = np.roll(clean, 7, axis=(1, 2))
write_fmap(root / "clean.fmap", clean)
write_fmap(root / "noisy.fmap", noisy)
write_fmap(root / "other.fmap", other)
img = str(root / "img0.ppm")
for name in ("noisy", "other"):
    print(f"--- compare clean vs {name}")
    main(["compare", img, img, "--fmap", str(root / "clean.fmap"), "--fmap", str(root / f"{name}.fmap")])

print("--- a malformed invocation exits with code", main(["localize", img]))
