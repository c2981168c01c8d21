"""Brush stroke geometry: quadratic Bezier spines, sampling and bounds.

A stroke carries 12 scalars laid out as::

    [loc_x, loc_y, p0_x, p0_y, p1_x, p1_y, p2_x, p2_y, width, r, g, b]

The three control points are offsets from the location, so the spine in
canvas coordinates is ``location + offset_k``.  Pixel ``(i, j)`` (row,
column) has its center at ``(j + 0.5, i + 0.5)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

N_PARAMS = 12

# column slices into an N x 12 parameter array
LOC = slice(0, 2)
OFFSETS = slice(2, 8)
WIDTH = 8
COLOR = slice(9, 12)


@dataclass(frozen=True)
class Point2:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite point ({self.x}, {self.y})")

    def __iter__(self) -> Iterator[float]:
        yield self.x
        yield self.y

    def __add__(self, other: Point2) -> Point2:
        return Point2(self.x + other.x, self.y + other.y)


@dataclass(frozen=True)
class QuadraticBezier:
    p0: Point2
    p1: Point2
    p2: Point2

    def control_array(self) -> np.ndarray:
        return np.array([tuple(self.p0), tuple(self.p1), tuple(self.p2)], dtype=float)


@dataclass(frozen=True)
class Stroke:
    location: Point2
    offsets: tuple[Point2, Point2, Point2]
    width: float
    color: tuple[float, float, float]

    def __post_init__(self):
        if len(self.offsets) != 3:
            raise ValueError("a stroke needs exactly three control offsets")
        if not (math.isfinite(self.width) and self.width > 0):
            raise ValueError(f"stroke width must be positive, got {self.width}")
        if len(self.color) != 3:
            raise ValueError("color must have three channels")
        for c in self.color:
            if not (0.0 <= c <= 1.0):
                raise ValueError(f"color channel {c} outside [0, 1]")

    def to_array(self) -> np.ndarray:
        row = [*self.location]
        for p in self.offsets:
            row.extend(p)
        row.append(self.width)
        row.extend(self.color)
        return np.array(row, dtype=float)

    @classmethod
    def from_array(cls, row: Sequence[float]) -> Stroke:
        row = [float(v) for v in row]
        if len(row) != N_PARAMS:
            raise ValueError(f"expected {N_PARAMS} stroke parameters, got {len(row)}")
        return cls(
            location=Point2(row[0], row[1]),
            offsets=(Point2(row[2], row[3]), Point2(row[4], row[5]), Point2(row[6], row[7])),
            width=row[8],
            color=(row[9], row[10], row[11]),
        )


class StrokeField:
    """An ordered set of strokes on a ``height`` x ``width`` canvas.

    Backed by a read-only N x 12 float array; ``strokes`` materialises
    :class:`Stroke` views on demand.
    """

    __slots__ = ("params", "height", "width")

    def __init__(self, params, height: int, width: int):
        params = np.array(params, dtype=float).reshape(-1, N_PARAMS)
        height, width = int(height), int(width)
        if height < 1 or width < 1:
            raise ValueError(f"canvas must be at least 1x1, got {height}x{width}")
        validate_params(params)
        params.setflags(write=False)
        self.params = params
        self.height = height
        self.width = width

    @classmethod
    def from_strokes(cls, strokes: Sequence[Stroke], height: int, width: int) -> StrokeField:
        if not strokes:
            return cls(np.zeros((0, N_PARAMS)), height, width)
        return cls(np.stack([s.to_array() for s in strokes]), height, width)

    @property
    def strokes(self) -> tuple[Stroke, ...]:
        return tuple(Stroke.from_array(row) for row in self.params)

    def __len__(self) -> int:
        return len(self.params)

    def __eq__(self, other) -> bool:
        if not isinstance(other, StrokeField):
            return NotImplemented
        return (self.height, self.width) == (other.height, other.width) and np.array_equal(
            self.params, other.params
        )

    def __repr__(self) -> str:
        return f"StrokeField(n={len(self)}, height={self.height}, width={self.width})"


def validate_params(params: np.ndarray) -> None:
    """Raise ``ValueError`` naming the first stroke that breaks an invariant."""
    if params.size == 0:
        return
    bad = ~np.isfinite(params).all(axis=1)
    bad |= ~(params[:, WIDTH] > 0)
    bad |= ((params[:, COLOR] < 0) | (params[:, COLOR] > 1)).any(axis=1)
    if bad.any():
        n = int(np.flatnonzero(bad)[0])
        Stroke.from_array(params[n])  # raises with the specific reason
        raise ValueError(f"stroke {n}: non-finite parameters")


def bezier_eval(curve: QuadraticBezier, t: float) -> Point2:
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"curve parameter t={t} outside [0, 1]")
    if t == 0.0:
        return curve.p0
    if t == 1.0:
        return curve.p2
    # (1-t)^2 p0 + 2(1-t)t p1 + t^2 p2, written relative to p0 so that
    # coincident control points give the point back exactly
    b1, b2 = 2 * (1 - t) * t, t * t
    p0, p1, p2 = curve.p0, curve.p1, curve.p2
    return Point2(
        p0.x + b1 * (p1.x - p0.x) + b2 * (p2.x - p0.x),
        p0.y + b1 * (p1.y - p0.y) + b2 * (p2.y - p0.y),
    )


def sample_params(n_samples: int) -> np.ndarray:
    """Curve parameters ``t_s = s / (S - 1)`` for ``s = 0..S-1``."""
    if n_samples < 2:
        raise ValueError(f"need at least 2 samples per curve, got {n_samples}")
    return np.arange(n_samples) / (n_samples - 1)


def bernstein_weights(n_samples: int) -> np.ndarray:
    """S x 3 matrix of quadratic Bernstein weights at the sample parameters."""
    t = sample_params(n_samples)
    return np.stack([(1 - t) ** 2, 2 * (1 - t) * t, t * t], axis=1)


def sample_curve(curve: QuadraticBezier, n_samples: int) -> list[Point2]:
    return [bezier_eval(curve, float(t)) for t in sample_params(n_samples)]


def stroke_world_curve(stroke: Stroke) -> QuadraticBezier:
    loc = stroke.location
    return QuadraticBezier(*(loc + off for off in stroke.offsets))


def stroke_bounds(stroke: Stroke, n_samples: int) -> tuple[float, float, float, float]:
    """Axis-aligned ``(xmin, ymin, xmax, ymax)`` around the samples, padded by the width."""
    pts = np.array([tuple(p) for p in sample_curve(stroke_world_curve(stroke), n_samples)])
    lo = pts.min(axis=0) - stroke.width
    hi = pts.max(axis=0) + stroke.width
    return float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1])


def sample_points(params: np.ndarray, n_samples: int) -> np.ndarray:
    """Vectorised sampling of every stroke spine: N x 12 params -> N x S x 2 points."""
    params = np.asarray(params, dtype=float)
    ctrl = params[:, LOC][:, None, :] + params[:, OFFSETS].reshape(-1, 3, 2)
    b = bernstein_weights(n_samples)
    rel = ctrl[:, 1:] - ctrl[:, :1]
    pts = ctrl[:, :1] + b[None, :, 1:2] * rel[:, None, 0] + b[None, :, 2:3] * rel[:, None, 1]
    pts[:, 0] = ctrl[:, 0]
    pts[:, -1] = ctrl[:, 2]
    return pts


def pixel_centers(height: int, width: int) -> np.ndarray:
    """H x W x 2 array of ``(x, y)`` pixel centers."""
    ys, xs = np.mgrid[0:height, 0:width].astype(float)
    return np.stack([xs + 0.5, ys + 0.5], axis=-1)
