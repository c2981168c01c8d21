"""Central finite-difference checks for the renderer and loss gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import N_PARAMS, StrokeField, pixel_centers, sample_points
from .perception import FeatureBank, LossWeights, PerceptualLoss, generate_bank
from .renderer import RenderConfig, TileGrid, render_soft, render_vjp

# geometric columns: location and offsets, the ones routed through the argmin sample
GEOMETRIC = slice(0, 8)


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-12) -> np.ndarray:
    """``|a - f| / max(|a|, |f|, floor)`` elementwise."""
    a = np.asarray(analytic, dtype=float)
    f = np.asarray(numeric, dtype=float)
    return np.abs(a - f) / np.maximum(np.maximum(np.abs(a), np.abs(f)), floor)


def random_field(rng: np.random.Generator, n: int = 8, height: int = 32, width: int = 32) -> StrokeField:
    p = np.empty((n, N_PARAMS))
    p[:, 0] = rng.uniform(0.15 * width, 0.85 * width, n)
    p[:, 1] = rng.uniform(0.15 * height, 0.85 * height, n)
    p[:, 2:8] = rng.uniform(-0.2, 0.2, (n, 6)) * min(height, width)
    p[:, 8] = rng.uniform(1.5, 4.0, n)
    p[:, 9:12] = rng.uniform(0.05, 0.95, (n, 3))
    return StrokeField(p, height, width)


def _second_gap(d2: np.ndarray) -> np.ndarray:
    """Gap between the two smallest square-rooted values along the last axis."""
    if d2.shape[-1] < 2:
        return np.full(d2.shape[:-1], np.inf)
    part = np.sqrt(np.partition(d2, 1, axis=-1)[..., :2])
    return part[..., 1] - part[..., 0]


def near_tie_strokes(field: StrokeField, config: RenderConfig, tol: float = 1e-3) -> np.ndarray:
    """Strokes whose geometry sits within ``tol`` px of an argmin switch.

    Covers both the per-pixel nearest-sample choice and, when pruning is
    active, the K-th/K+1-th boundary of the per-tile candidate ranking.
    """
    n = len(field)
    samples = sample_points(field.params, config.samples_per_curve)
    px = pixel_centers(field.height, field.width).reshape(-1, 2)
    d2 = (samples[None, :, :, 0] - px[:, None, None, 0]) ** 2 + (
        samples[None, :, :, 1] - px[:, None, None, 1]
    ) ** 2
    flagged = (_second_gap(d2) < tol).any(axis=0)

    if config.knn < n:
        centers = TileGrid(field.height, field.width, config.tile_size).centers()
        td2 = (samples[None, :, :, 0] - centers[:, None, None, 0]) ** 2 + (
            samples[None, :, :, 1] - centers[:, None, None, 1]
        ) ** 2
        tile_d = np.sqrt(td2.min(axis=2))  # T x N
        ranked = np.sort(tile_d, axis=1)
        kth, next_ = ranked[:, config.knn - 1], ranked[:, config.knn]
        for t in np.flatnonzero(next_ - kth < tol):
            flagged |= np.abs(tile_d[t] - kth[t]) < tol
            flagged |= np.abs(tile_d[t] - next_[t]) < tol
    return flagged


@dataclass
class RenderCheck:
    analytic: np.ndarray
    numeric: np.ndarray
    checked: np.ndarray  # bool N x 12
    error: np.ndarray  # relative error, N x 12

    @property
    def max_error(self) -> float:
        return float(self.error[self.checked].max()) if self.checked.any() else 0.0

    @property
    def n_checked(self) -> int:
        return int(self.checked.sum())


def check_render_gradient(
    field: StrokeField,
    config: RenderConfig,
    upstream: np.ndarray,
    eps: float = 1e-6,
    tie_tol: float = 1e-3,
) -> RenderCheck:
    """Compare :func:`render_vjp` with central differences of ``sum(upstream * render)``."""
    out, tape = render_soft(field, config)
    analytic = render_vjp(field, config, tape, upstream)
    numeric = np.zeros_like(analytic)
    base = np.array(field.params)
    for i in range(base.shape[0]):
        for j in range(N_PARAMS):
            p = base.copy()
            p[i, j] += eps
            plus, _ = render_soft(StrokeField(p, field.height, field.width), config)
            p[i, j] -= 2 * eps
            minus, _ = render_soft(StrokeField(p, field.height, field.width), config)
            # differencing per pixel first keeps cancellation error small
            numeric[i, j] = np.sum(upstream * (plus - minus)) / (2 * eps)
    checked = np.ones_like(analytic, dtype=bool)
    checked[near_tie_strokes(field, config, tie_tol), GEOMETRIC] = False
    return RenderCheck(analytic, numeric, checked, relative_error(analytic, numeric))


@dataclass
class LossCheck:
    analytic: np.ndarray
    numeric: np.ndarray
    error: np.ndarray

    @property
    def max_error(self) -> float:
        return float(self.error.max())


def check_loss_gradient(
    content: np.ndarray,
    style: np.ndarray,
    generated: np.ndarray,
    bank: FeatureBank,
    weights: LossWeights,
    eps: float = 1e-6,
) -> LossCheck:
    objective = PerceptualLoss(content, style, bank, weights)
    _, analytic = objective.value_and_grad(generated)
    numeric = np.zeros_like(analytic)
    for idx in np.ndindex(generated.shape):
        g = np.array(generated, dtype=float)
        g[idx] += eps
        plus = objective(g).total
        g[idx] -= 2 * eps
        minus = objective(g).total
        numeric[idx] = (plus - minus) / (2 * eps)
    return LossCheck(analytic, numeric, relative_error(analytic, numeric))


@dataclass
class SuiteResult:
    render_errors: list[float]
    render_checked: list[int]
    loss_errors: list[float]

    @property
    def max_error(self) -> float:
        return max(self.render_errors + self.loss_errors)


def run_suite(
    seed: int = 0,
    n_fields: int = 10,
    n_loss: int = 2,
    config: RenderConfig | None = None,
) -> SuiteResult:
    """Renderer checks on random 8-stroke 32x32 fields, loss checks on 16x16 images."""
    rng = np.random.default_rng(seed)
    config = config or RenderConfig(samples_per_curve=5, knn=8)
    render_errors, checked = [], []
    for _ in range(n_fields):
        field = random_field(rng)
        upstream = rng.standard_normal((field.height, field.width, 3))
        res = check_render_gradient(field, config, upstream)
        render_errors.append(res.max_error)
        checked.append(res.n_checked)
    bank = generate_bank(seed)
    loss_errors = []
    for _ in range(n_loss):
        c, s, g = (rng.uniform(size=(16, 16, 3)) for _ in range(3))
        loss_errors.append(check_loss_gradient(c, s, g, bank, LossWeights(alpha=1.0, beta=1e4)).max_error)
    return SuiteResult(render_errors, checked, loss_errors)
