"""
Fitting strokes to an image, then painting with a style
=======================================================

Two end-to-end runs.  The first fits 64 strokes to a smooth gradient with a
pixel loss; the second optimises strokes against content and style losses
and finishes with a short pixel refinement.  Pass --full for the larger
settings used in the acceptance suite.
"""

import sys
from pathlib import Path

import numpy as np

from strokestyle.fileio import RunManifest, save_png
from strokestyle.optimize import RunSchedule, optimize_strokes
from strokestyle.pipeline import run
from strokestyle.renderer import RenderConfig

full = "--full" in sys.argv
out = Path(__file__).with_name("out")
out.mkdir(exist_ok=True)

size = 128 if full else 48
y, x = np.mgrid[0:size, 0:size] / (size - 1)
target = np.stack([0.15 + 0.7 * x, 0.2 + 0.6 * y, 0.8 - 0.25 * (x + y)], axis=-1)

n, iters = (256, 300) if full else (64, 80)
field, log = optimize_strokes(target, None, n, RenderConfig(), schedule=RunSchedule(stroke_iters=iters), loss="pixel")
tot = log.totals()
print(f"reconstruct: L2 {tot[0]:.2f} -> {tot[-1]:.3f} ({tot[-1] / tot[0]:.1%} of start)")

# Paint: a red block on the gradient, styled after a warm noisy texture.
content = target.copy()
content[size // 3 : 2 * size // 3, size // 4 : 3 * size // 4] = [0.85, 0.2, 0.15]
rng = np.random.default_rng(3)
style = np.clip(rng.uniform(size=(size, size, 3)) * [1.0, 0.6, 0.3], 0, 1)
save_png(content, out / "content.png")
save_png(style, out / "style.png")

m = RunManifest(
    mode="paint",
    content=str(out / "content.png"),
    style=str(out / "style.png"),
    strokes=300 if full else 80,
    stroke_iters=200 if full else 60,
    pixel_iters=100 if full else 20,
    out=str(out / "paint"),
)
result = run(m)
smooth = result.loss_log.smoothed(20)
print(f"paint: smoothed total {smooth[0]:.2f} -> {smooth[-1]:.3f}")
for path in result.files.values():
    print("  wrote", path)
