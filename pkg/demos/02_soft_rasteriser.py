"""
From hard to soft rendering
===========================

The hard rasteriser lets the nearest stroke paint a pixel if the pixel is
within its width.  The soft version swaps the width test for a sigmoid and
the nearest-stroke choice for a softmax over distances.  Raising both
sharpness constants walks the soft image back to the hard one.
"""

from pathlib import Path

import numpy as np

from strokestyle.fileio import save_png
from strokestyle.gradcheck import random_field
from strokestyle.renderer import Disk, RenderConfig, render_disks_hard, render_hard, render_soft
from strokestyle.geometry import Point2

out = Path(__file__).with_name("out")
out.mkdir(exist_ok=True)

# Disks first: two that do not touch compose by plain addition over black.
black = (0.0, 0.0, 0.0)
a = Disk(Point2(14, 16), 9, (0.9, 0.3, 0.1))
b = Disk(Point2(44, 16), 10, (0.1, 0.4, 0.9))
both = render_disks_hard([a, b], 32, 64, black)
print("I1 + I2 == joint render:", np.array_equal(both, render_disks_hard([a], 32, 64, black) + render_disks_hard([b], 32, 64, black)))

# Now strokes.
field = random_field(np.random.default_rng(4), n=12, height=64, width=64)
base = RenderConfig(samples_per_curve=10, knn=6, tile_size=16)
hard = render_hard(field, base)
save_png(hard, out / "hard.png")
for factor in (1, 10, 1000):
    soft, _ = render_soft(field, base.sharpened(factor))
    save_png(soft, out / f"soft_x{factor}.png")
    print(f"sharpness x{factor:<5} mean |soft - hard| = {np.abs(soft - hard).mean():.4f}")

# With K at least N every tile sees every stroke, and pruning changes nothing.
cfg = RenderConfig(knn=len(field))
pruned, _ = render_soft(field, cfg)
full, _ = render_soft(field, cfg, prune=False)
print("K >= N, max |pruned - full| =", np.abs(pruned - full).max())
