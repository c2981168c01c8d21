"""Content and style losses over a small convolutional feature pyramid.

Each pyramid level is a 3x3 convolution (stride 1, zero padding 1), a
ReLU and a 2x2 average pool.  Feature maps are kept channel-first as
``(channels, rows, cols)``; images come in as ``(H, W, 3)``.

The default bank is seeded random He-initialised weights.  Externally
trained weights with the same layer plan can be loaded through
:func:`strokestyle.fileio.load_bank`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

DEFAULT_PLAN = (16, 32, 64)


@dataclass(frozen=True)
class ConvLayer:
    weight: np.ndarray  # out x in x 3 x 3
    bias: np.ndarray  # out

    def __post_init__(self):
        w = np.array(self.weight, dtype=float)
        b = np.array(self.bias, dtype=float).reshape(-1)
        if w.ndim != 4 or w.shape[2:] != (3, 3):
            raise ValueError(f"conv weight must be out x in x 3 x 3, got {w.shape}")
        if b.shape != (w.shape[0],):
            raise ValueError(f"bias length {b.shape[0]} != out channels {w.shape[0]}")
        if not (np.isfinite(w).all() and np.isfinite(b).all()):
            raise ValueError("non-finite weights in conv layer")
        w.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "bias", b)

    @property
    def out_channels(self) -> int:
        return self.weight.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weight.shape[1]


@dataclass(frozen=True)
class FeatureBank:
    layers: tuple[ConvLayer, ...]
    provenance: str = "generated"

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise ValueError("feature bank needs at least one layer")
        if layers[0].in_channels != 3:
            raise ValueError("first layer must take 3 input channels")
        for k in range(1, len(layers)):
            if layers[k].in_channels != layers[k - 1].out_channels:
                raise ValueError(
                    f"layer {k} expects {layers[k].in_channels} channels, "
                    f"previous layer gives {layers[k - 1].out_channels}"
                )
        object.__setattr__(self, "layers", layers)

    def __len__(self) -> int:
        return len(self.layers)

    @property
    def plan(self) -> tuple[int, ...]:
        return tuple(layer.out_channels for layer in self.layers)


def generate_bank(seed: int = 0, plan: Sequence[int] = DEFAULT_PLAN) -> FeatureBank:
    rng = np.random.default_rng(seed)
    layers = []
    c_in = 3
    for c_out in plan:
        fan_in = c_in * 9
        w = rng.standard_normal((c_out, c_in, 3, 3)) * np.sqrt(2.0 / fan_in)
        layers.append(ConvLayer(w, np.zeros(c_out)))
        c_in = c_out
    return FeatureBank(tuple(layers), provenance=f"generated:seed={seed}")


# --------------------------------------------------------------------------
# forward / backward primitives


def _conv3x3(x: np.ndarray, weight: np.ndarray) -> np.ndarray:
    """Cross-correlation of ``x`` (C x H x W) with zero padding 1."""
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    win = sliding_window_view(xp, (3, 3), axis=(1, 2))  # C x H x W x 3 x 3
    return np.tensordot(weight, win, axes=([1, 2, 3], [0, 3, 4]))


def _conv3x3_input_grad(g: np.ndarray, weight: np.ndarray) -> np.ndarray:
    flipped = weight[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
    return _conv3x3(g, flipped)


def _avgpool2(x: np.ndarray) -> np.ndarray:
    c, h, w = x.shape
    h2, w2 = h // 2, w // 2
    x = x[:, : 2 * h2, : 2 * w2]
    return x.reshape(c, h2, 2, w2, 2).mean(axis=(2, 4))


def _avgpool2_grad(g: np.ndarray, shape: tuple[int, int, int]) -> np.ndarray:
    out = np.zeros(shape)
    h2, w2 = g.shape[1:]
    up = np.repeat(np.repeat(g, 2, axis=1), 2, axis=2) / 4.0
    out[:, : 2 * h2, : 2 * w2] = up
    return out


@dataclass
class FeaturePyramid:
    """Per-level features; ``cache`` holds what the backward pass needs."""

    features: list[np.ndarray]
    cache: list[tuple[np.ndarray, np.ndarray]] = field(default_factory=list, repr=False)

    def __len__(self) -> int:
        return len(self.features)

    def __getitem__(self, level: int) -> np.ndarray:
        return self.features[level]

    def channels(self, level: int) -> int:
        return self.features[level].shape[0]

    def positions(self, level: int) -> int:
        return self.features[level].shape[1] * self.features[level].shape[2]


def _as_chw(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image, dtype=float)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"expected an H x W x 3 image, got shape {image.shape}")
    return image.transpose(2, 0, 1)


def extract_features(image: np.ndarray, bank: FeatureBank) -> FeaturePyramid:
    x = _as_chw(image)
    min_side = 2 ** len(bank)
    if min(x.shape[1:]) < max(8, min_side):
        raise ValueError(
            f"image {x.shape[1]}x{x.shape[2]} too small for {len(bank)} pooling levels"
        )
    feats, cache = [], []
    for layer in bank.layers:
        pre = _conv3x3(x, layer.weight) + layer.bias[:, None, None]
        cache.append((x, pre))
        x = _avgpool2(np.maximum(pre, 0.0))
        feats.append(x)
    return FeaturePyramid(feats, cache)


def backprop_features(
    pyramid: FeaturePyramid, bank: FeatureBank, grads: Sequence[np.ndarray | None]
) -> np.ndarray:
    """Pull per-level feature gradients back to an H x W x 3 image gradient."""
    g = None
    for level in reversed(range(len(bank))):
        layer = bank.layers[level]
        x_in, pre = pyramid.cache[level]
        if grads[level] is not None:
            g = grads[level] if g is None else g + grads[level]
        if g is None:
            continue
        g = _avgpool2_grad(g, pre.shape) * (pre > 0)
        g = _conv3x3_input_grad(g, layer.weight)
    if g is None:
        return np.zeros(pyramid.cache[0][0].shape[1:] + (3,))
    return g.transpose(1, 2, 0)


# --------------------------------------------------------------------------
# losses


def gram(features: np.ndarray) -> np.ndarray:
    """Unnormalised Gram matrix of a ``channels x ...`` feature map."""
    f = np.asarray(features, dtype=float)
    f = f.reshape(f.shape[0], -1)
    g = f @ f.T
    return (g + g.T) / 2.0


@dataclass(frozen=True)
class LossWeights:
    alpha: float = 1.0
    beta: float = 100.0
    layer_weights: tuple[float, ...] = (1 / 3, 1 / 3, 1 / 3)
    content_layer: int = 1

    def __post_init__(self):
        lw = tuple(float(w) for w in self.layer_weights)
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be nonnegative")
        if self.alpha == 0 and self.beta == 0:
            raise ValueError("at least one of alpha, beta must be positive")
        if any(w < 0 for w in lw):
            raise ValueError("layer weights must be nonnegative")
        if not np.isclose(sum(lw), 1.0, rtol=0, atol=1e-9):
            raise ValueError(f"layer weights must sum to 1, got {sum(lw)}")
        object.__setattr__(self, "layer_weights", lw)


@dataclass(frozen=True)
class LossReport:
    content: float
    style: float
    total: float
    style_layers: tuple[float, ...] = ()


def _check_same_shape(a, b):
    if np.shape(a) != np.shape(b):
        raise ValueError(f"image shapes differ: {np.shape(a)} vs {np.shape(b)}")


def content_loss(content, generated, bank: FeatureBank, layer: int = 1) -> float:
    _check_same_shape(content, generated)
    fc = extract_features(content, bank)[layer]
    fg = extract_features(generated, bank)[layer]
    return 0.5 * float(np.sum((fg - fc) ** 2))


def _style_targets(pyramid: FeaturePyramid) -> list[np.ndarray]:
    # per-position Grams so images of different size compare on equal footing
    return [gram(pyramid[l]) / pyramid.positions(l) for l in range(len(pyramid))]


def _style_terms(gen: FeaturePyramid, targets, layer_weights):
    terms = []
    for l, w in enumerate(layer_weights):
        n_l = gen.channels(l)
        diff = gram(gen[l]) / gen.positions(l) - targets[l]
        terms.append(w * float(np.sum(diff * diff)) / (4.0 * n_l * n_l))
    return terms


def style_loss(style, generated, bank: FeatureBank, weights: LossWeights | Sequence[float]) -> float:
    layer_weights = weights.layer_weights if isinstance(weights, LossWeights) else tuple(weights)
    if len(layer_weights) != len(bank):
        raise ValueError(f"{len(layer_weights)} layer weights for {len(bank)} levels")
    targets = _style_targets(extract_features(style, bank))
    return float(sum(_style_terms(extract_features(generated, bank), targets, layer_weights)))


class PerceptualLoss:
    """Total loss against fixed content and style images.

    Target features are computed once, so repeated evaluation only pays
    for the generated image.
    """

    def __init__(self, content, style, bank: FeatureBank, weights: LossWeights = LossWeights()):
        if len(weights.layer_weights) != len(bank):
            raise ValueError(f"{len(weights.layer_weights)} layer weights for {len(bank)} levels")
        if not 0 <= weights.content_layer < len(bank):
            raise ValueError(f"content layer {weights.content_layer} out of range")
        self.content = np.asarray(content, dtype=float)
        self.style = np.asarray(style, dtype=float)
        self.bank = bank
        self.weights = weights
        self._content_feat = extract_features(self.content, bank)[weights.content_layer]
        self._style_targets = _style_targets(extract_features(self.style, bank))

    def _evaluate(self, generated, want_grad: bool):
        _check_same_shape(self.content, generated)
        w = self.weights
        pyr = extract_features(generated, self.bank)
        diff_c = pyr[w.content_layer] - self._content_feat
        l_content = 0.5 * float(np.sum(diff_c * diff_c))
        terms = _style_terms(pyr, self._style_targets, w.layer_weights)
        l_style = float(sum(terms))
        report = LossReport(
            content=l_content,
            style=l_style,
            total=w.alpha * l_content + w.beta * l_style,
            style_layers=tuple(terms),
        )
        if not want_grad:
            return report, None

        grads: list[np.ndarray | None] = [None] * len(self.bank)
        for l, lw in enumerate(w.layer_weights):
            if lw == 0 or w.beta == 0:
                continue
            f = pyr[l]
            n_l, m_l = pyr.channels(l), pyr.positions(l)
            diff = gram(f) / m_l - self._style_targets[l]
            flat = f.reshape(n_l, -1)
            # d/dF sum((F F^T / M - T)^2) = 4 (F F^T / M - T) F / M
            g = (w.beta * lw / (4.0 * n_l * n_l)) * 4.0 * (diff @ flat) / m_l
            grads[l] = g.reshape(f.shape)
        if w.alpha != 0:
            gc = w.alpha * diff_c
            lc = w.content_layer
            grads[lc] = gc if grads[lc] is None else grads[lc] + gc
        return report, backprop_features(pyr, self.bank, grads)

    def __call__(self, generated) -> LossReport:
        return self._evaluate(generated, want_grad=False)[0]

    def value_and_grad(self, generated) -> tuple[LossReport, np.ndarray]:
        return self._evaluate(generated, want_grad=True)


class PixelLoss:
    """Half squared pixel error against a target; the reconstruction objective."""

    def __init__(self, target):
        self.target = np.asarray(target, dtype=float)

    def __call__(self, generated) -> LossReport:
        return self.value_and_grad(generated)[0]

    def value_and_grad(self, generated) -> tuple[LossReport, np.ndarray]:
        _check_same_shape(self.target, generated)
        diff = np.asarray(generated, dtype=float) - self.target
        value = 0.5 * float(np.sum(diff * diff))
        return LossReport(content=value, style=0.0, total=value), diff


def total_loss(content, style, generated, bank: FeatureBank, weights: LossWeights) -> LossReport:
    return PerceptualLoss(content, style, bank, weights)(generated)


def loss_image_gradient(content, style, generated, bank: FeatureBank, weights: LossWeights) -> np.ndarray:
    return PerceptualLoss(content, style, bank, weights).value_and_grad(generated)[1]
