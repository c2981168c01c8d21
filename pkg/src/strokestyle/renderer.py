"""Soft and hard rasterisation of stroke fields, with an exact backward pass.

Every pixel looks only at the K strokes nearest to the center of its tile.
For each candidate stroke ``n`` the pixel distance ``d_n`` is the minimum
over the stroke's sampled spine points.  The soft renderer then blends::

    c_n = sigmoid(mask_sharpness * (width_n - d_n))      # coverage
    a_n = softmax_n(-assign_sharpness * d_n)             # assignment
    out = sum_n a_n c_n color_n + (1 - sum_n a_n c_n) * background

Work is split into horizontal bands one tile high.  The band partition
depends only on the canvas and tile size, and band results are reduced in
band order, so the output does not depend on ``workers``.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.special import expit

from .geometry import (
    COLOR,
    N_PARAMS,
    WIDTH,
    Point2,
    StrokeField,
    bernstein_weights,
    pixel_centers,
    sample_points,
)

WHITE = (1.0, 1.0, 1.0)


@dataclass(frozen=True)
class RenderConfig:
    samples_per_curve: int = 10
    knn: int = 20
    mask_sharpness: float = 5.0
    assign_sharpness: float = 2.0
    background: tuple[float, float, float] = WHITE
    tile_size: int = 16
    workers: int = 1

    def __post_init__(self):
        if self.samples_per_curve < 2:
            raise ValueError("samples_per_curve must be >= 2")
        if self.knn < 1:
            raise ValueError("knn must be >= 1")
        if self.tile_size < 1:
            raise ValueError("tile_size must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if not (self.mask_sharpness > 0 and self.assign_sharpness > 0):
            raise ValueError("sharpness constants must be positive")
        bg = tuple(float(c) for c in self.background)
        if len(bg) != 3 or not all(0.0 <= c <= 1.0 for c in bg):
            raise ValueError(f"background must be 3 channels in [0, 1], got {self.background}")
        object.__setattr__(self, "background", bg)

    def sharpened(self, factor: float) -> RenderConfig:
        return replace(
            self,
            mask_sharpness=self.mask_sharpness * factor,
            assign_sharpness=self.assign_sharpness * factor,
        )


def default_workers() -> int:
    try:
        n = len(os.sched_getaffinity(0))
    except AttributeError:
        n = os.cpu_count() or 1
    return max(1, min(8, n))


# --------------------------------------------------------------------------
# disks


@dataclass(frozen=True)
class Disk:
    center: Point2
    radius: float
    color: tuple[float, float, float]

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f"disk radius must be positive, got {self.radius}")
        if len(self.color) != 3 or not all(0.0 <= c <= 1.0 for c in self.color):
            raise ValueError(f"disk color must be 3 channels in [0, 1], got {self.color}")


@dataclass(frozen=True)
class DistanceMap:
    values: np.ndarray
    owner: int = 0


def disk_distance_map(disk: Disk, height: int, width: int, owner: int = 0) -> DistanceMap:
    centers = pixel_centers(height, width)
    d = np.hypot(centers[..., 0] - disk.center.x, centers[..., 1] - disk.center.y)
    return DistanceMap(d, owner)


def render_disks_hard(
    disks: Sequence[Disk], height: int, width: int, background=WHITE
) -> np.ndarray:
    """Each pixel takes the nearest disk that contains it, else the background."""
    out = np.empty((height, width, 3))
    out[:] = np.asarray(background, dtype=float)
    if not disks:
        return out
    dist = np.stack([disk_distance_map(d, height, width, n).values for n, d in enumerate(disks)])
    radii = np.array([d.radius for d in disks])[:, None, None]
    dist = np.where(dist < radii, dist, np.inf)
    winner = np.argmin(dist, axis=0)  # first index on ties
    covered = np.isfinite(np.min(dist, axis=0))
    colors = np.array([d.color for d in disks], dtype=float)
    out[covered] = colors[winner[covered]]
    return out


# --------------------------------------------------------------------------
# tiles and candidate selection


@dataclass(frozen=True)
class TileGrid:
    height: int
    width: int
    tile_size: int

    @property
    def rows(self) -> int:
        return -(-self.height // self.tile_size)

    @property
    def cols(self) -> int:
        return -(-self.width // self.tile_size)

    def __len__(self) -> int:
        return self.rows * self.cols

    def centers(self) -> np.ndarray:
        """T x 2 ``(x, y)`` centers of the (clipped) tiles, row-major."""
        ts = self.tile_size
        y0 = np.arange(self.rows) * ts
        x0 = np.arange(self.cols) * ts
        yc = (y0 + np.minimum(y0 + ts, self.height)) / 2.0
        xc = (x0 + np.minimum(x0 + ts, self.width)) / 2.0
        yy, xx = np.meshgrid(yc, xc, indexing="ij")
        return np.stack([xx.ravel(), yy.ravel()], axis=1)

    def band_rows(self, band: int) -> tuple[int, int]:
        r0 = band * self.tile_size
        return r0, min(r0 + self.tile_size, self.height)

    def band_tile_index(self, band: int) -> np.ndarray:
        """Tile index of every pixel in ``band``, row-major within the band."""
        r0, r1 = self.band_rows(band)
        tile_col = np.arange(self.width) // self.tile_size
        return np.tile(band * self.cols + tile_col, r1 - r0)


def _knn_from_samples(
    samples: np.ndarray, grid: TileGrid, k: int
) -> np.ndarray:
    n = len(samples)
    if k >= n:
        return np.broadcast_to(np.arange(n), (len(grid), n)).copy()
    centers = grid.centers()
    d2 = (samples[None, :, :, 0] - centers[:, None, None, 0]) ** 2
    d2 += (samples[None, :, :, 1] - centers[:, None, None, 1]) ** 2
    dmin = d2.min(axis=2)
    order = np.argsort(dmin, axis=1, kind="stable")[:, :k]
    # index order inside each candidate list keeps accumulation order fixed
    return np.sort(order, axis=1)


def knn_candidates(field: StrokeField, config: RenderConfig) -> np.ndarray:
    """T x K' array of candidate stroke indices per tile (K' = min(K, N)).

    Tiles are ordered row-major; each row is sorted by stroke index.
    """
    if len(field) < 1:
        raise ValueError("candidate selection needs at least one stroke")
    grid = TileGrid(field.height, field.width, config.tile_size)
    samples = sample_points(field.params, config.samples_per_curve)
    return _knn_from_samples(samples, grid, config.knn)


def stroke_distance(samples: Sequence[Point2], pixel: Point2) -> tuple[float, int]:
    """Distance from ``pixel`` to the nearest sample and that sample's index."""
    if not samples:
        raise ValueError("need at least one sample point")
    pts = np.array([tuple(p) for p in samples], dtype=float)
    d = np.hypot(pts[:, 0] - pixel.x, pts[:, 1] - pixel.y)
    idx = int(np.argmin(d))
    return float(d[idx]), idx


# --------------------------------------------------------------------------
# forward


@dataclass
class RenderTape:
    """Forward-pass state needed by :func:`render_vjp`.

    Per-pixel arrays are flattened row-major to ``H*W`` rows with one column
    per candidate.
    """

    params: np.ndarray
    height: int
    width: int
    config: RenderConfig
    candidates: np.ndarray  # T x K'
    distance: np.ndarray  # P x K'
    nearest: np.ndarray  # P x K', sample index of the argmin
    coverage: np.ndarray  # P x K'
    assignment: np.ndarray  # P x K'
    samples: np.ndarray = field(repr=False, default=None)


def _band_distances(samples_x, samples_y, cand, px, py):
    """Nearest-sample distance and index for every (pixel, candidate)."""
    dx = samples_x[cand] - px[:, None, None]
    dy = samples_y[cand] - py[:, None, None]
    d2 = dx * dx + dy * dy
    nearest = np.argmin(d2, axis=2)
    dmin2 = np.take_along_axis(d2, nearest[..., None], axis=2)[..., 0]
    return np.sqrt(dmin2), nearest


def _softmax_neg(d, sharpness):
    z = -sharpness * d
    z -= z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _map_bands(fn, n_bands: int, workers: int):
    if workers <= 1 or n_bands <= 1:
        return [fn(b) for b in range(n_bands)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(n_bands)))


def _forward(params, height, width, config, candidates=None):
    grid = TileGrid(height, width, config.tile_size)
    samples = sample_points(params, config.samples_per_curve)
    if candidates is None:
        candidates = _knn_from_samples(samples, grid, config.knn)
    sx = np.ascontiguousarray(samples[..., 0])
    sy = np.ascontiguousarray(samples[..., 1])
    widths = params[:, WIDTH]
    colors = params[:, COLOR]
    bg = np.asarray(config.background)
    centers = pixel_centers(height, width).reshape(-1, 2)
    gm, ga = config.mask_sharpness, config.assign_sharpness

    def band(b):
        r0, r1 = grid.band_rows(b)
        sl = slice(r0 * width, r1 * width)
        cand = candidates[grid.band_tile_index(b)]
        d, nearest = _band_distances(sx, sy, cand, centers[sl, 0], centers[sl, 1])
        c = expit(gm * (widths[cand] - d))
        a = _softmax_neg(d, ga)
        q = a * c
        out = bg + np.einsum("pk,pkc->pc", q, colors[cand] - bg)
        return out, d, nearest, c, a

    parts = _map_bands(band, grid.rows, config.workers)
    out = np.concatenate([p[0] for p in parts]).reshape(height, width, 3)
    tape = RenderTape(
        params=params,
        height=height,
        width=width,
        config=config,
        candidates=candidates,
        distance=np.concatenate([p[1] for p in parts]),
        nearest=np.concatenate([p[2] for p in parts]),
        coverage=np.concatenate([p[3] for p in parts]),
        assignment=np.concatenate([p[4] for p in parts]),
        samples=samples,
    )
    return out, tape


def render_soft(field: StrokeField, config: RenderConfig, prune: bool = True):
    """Differentiable render; returns ``(canvas, tape)``.

    With ``prune=False`` every stroke is a candidate for every pixel.
    """
    h, w = field.height, field.width
    if len(field) == 0:
        canvas = np.empty((h, w, 3))
        canvas[:] = config.background
        return canvas, None
    params = np.array(field.params)
    candidates = None
    if not prune:
        grid = TileGrid(h, w, config.tile_size)
        candidates = np.broadcast_to(np.arange(len(params)), (len(grid), len(params))).copy()
    return _forward(params, h, w, config, candidates)


def render_hard(field: StrokeField, config: RenderConfig) -> np.ndarray:
    """Nearest candidate stroke wins; it paints the pixel only if within its width."""
    h, w = field.height, field.width
    out = np.empty((h, w, 3))
    out[:] = config.background
    if len(field) == 0:
        return out
    params = field.params
    grid = TileGrid(h, w, config.tile_size)
    samples = sample_points(params, config.samples_per_curve)
    candidates = _knn_from_samples(samples, grid, config.knn)
    sx, sy = samples[..., 0], samples[..., 1]
    centers = pixel_centers(h, w).reshape(-1, 2)
    flat = out.reshape(-1, 3)
    for b in range(grid.rows):
        r0, r1 = grid.band_rows(b)
        sl = slice(r0 * w, r1 * w)
        cand = candidates[grid.band_tile_index(b)]
        d, _ = _band_distances(sx, sy, cand, centers[sl, 0], centers[sl, 1])
        k = np.argmin(d, axis=1)  # candidates are index-sorted: ties go to the lowest index
        winner = cand[np.arange(len(cand)), k]
        inside = d[np.arange(len(cand)), k] <= params[winner, WIDTH]
        band_out = flat[sl]
        band_out[inside] = params[winner[inside]][:, COLOR]
    return out


# --------------------------------------------------------------------------
# backward


def render_vjp(
    field: StrokeField, config: RenderConfig, tape: RenderTape, upstream: np.ndarray
) -> np.ndarray:
    """Gradient of ``sum(upstream * render_soft(field))`` w.r.t. the N x 12 parameters."""
    h, w = field.height, field.width
    n = len(field)
    if n == 0:
        return np.zeros((0, N_PARAMS))
    if (
        tape is None
        or tape.config != config
        or (tape.height, tape.width) != (h, w)
        or tape.params.shape != field.params.shape
        or not np.array_equal(tape.params, field.params)
    ):
        raise ValueError("render tape does not belong to this field/config")
    upstream = np.asarray(upstream, dtype=float)
    if upstream.shape != (h, w, 3):
        raise ValueError(f"upstream shape {upstream.shape} != {(h, w, 3)}")

    params = tape.params
    grid = TileGrid(h, w, config.tile_size)
    samples = tape.samples
    basis = bernstein_weights(config.samples_per_curve)
    colors = params[:, COLOR]
    bg = np.asarray(config.background)
    centers = pixel_centers(h, w).reshape(-1, 2)
    g_all = upstream.reshape(-1, 3)
    gm, ga = config.mask_sharpness, config.assign_sharpness

    def band(b):
        r0, r1 = grid.band_rows(b)
        sl = slice(r0 * w, r1 * w)
        cand = tape.candidates[grid.band_tile_index(b)]
        d = tape.distance[sl]
        nearest = tape.nearest[sl]
        c = tape.coverage[sl]
        a = tape.assignment[sl]
        g = g_all[sl]

        u = np.einsum("pc,pkc->pk", g, colors[cand] - bg)  # dL/d(a_n c_n)
        q = a * c
        grad_color = q[..., None] * g[:, None, :]
        slope = gm * c * (1.0 - c)
        grad_width = u * a * slope
        uc = u * c
        grad_d = -grad_width - ga * a * (uc - np.sum(uc * a, axis=1, keepdims=True))

        pts = samples[cand, nearest]  # P x K' x 2
        vec = pts - centers[sl, None, :]
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = np.where(d[..., None] > 0, vec / d[..., None], 0.0)
        g_pt = grad_d[..., None] * unit  # dL/d(sample point)
        bw = basis[nearest]  # P x K' x 3

        rows = np.empty(cand.shape + (N_PARAMS,))
        rows[..., 0:2] = g_pt
        rows[..., 2:8] = (bw[..., :, None] * g_pt[..., None, :]).reshape(cand.shape + (6,))
        rows[..., WIDTH] = grad_width
        rows[..., COLOR] = grad_color
        idx = cand.ravel()
        rows = rows.reshape(-1, N_PARAMS)
        return np.stack(
            [np.bincount(idx, weights=rows[:, j], minlength=n) for j in range(N_PARAMS)], axis=1
        )

    parts = _map_bands(band, grid.rows, config.workers)
    grad = np.zeros((n, N_PARAMS))
    for p in parts:
        grad += p
    return grad
