"""
Content and style in feature space
==================================

A small seeded convolutional pyramid stands in for a pretrained network.
Content is compared feature by feature at one level; style through Gram
matrices at every level.  This script prints the losses for a few image
pairs and checks the image gradient against finite differences.
"""

import numpy as np

from strokestyle import LossWeights, content_loss, extract_features, generate_bank, gram, style_loss, total_loss
from strokestyle.gradcheck import check_loss_gradient

bank = generate_bank(seed=0)
print("bank plan:", bank.plan)

rng = np.random.default_rng(1)
y, x = np.mgrid[0:32, 0:32] / 31.0
smooth = np.stack([x, y, 0.5 * (x + y)], axis=-1)
noise = rng.uniform(size=(32, 32, 3))
stripes = np.repeat((np.sin(np.arange(32) / 1.5)[None, :, None] > 0).astype(float), 32, axis=0) * [0.9, 0.6, 0.2]

pyr = extract_features(smooth, bank)
print("feature shapes:", [f.shape for f in pyr.features])
g = gram(pyr[0].reshape(pyr[0].shape[0], -1))
print("level-0 Gram is symmetric:", np.array_equal(g, g.T), " min eigenvalue", np.linalg.eigvalsh(g).min().round(6))

w = LossWeights()
for name, img in [("smooth", smooth), ("noise", noise), ("stripes", stripes)]:
    print(f"{name:>8}:  content vs smooth {content_loss(smooth, img, bank):9.3f}   style vs stripes {style_loss(stripes, img, bank, w):.3e}")

rep = total_loss(smooth, stripes, noise, bank, LossWeights(alpha=1.0, beta=1e4))
print("total", rep.total, "per level", [f"{v:.3g}" for v in rep.style_layers])

c, s, gen = (rng.uniform(size=(16, 16, 3)) for _ in range(3))
print("loss gradient max relative error:", f"{check_loss_gradient(c, s, gen, bank, LossWeights(1.0, 1e3)).max_error:.2e}")
