"""Stroke optimisation: latent transforms, initialisation, Adam and the two stages.

Latent parameters are unconstrained.  Location and offsets are used as is;
widths go through ``softplus(z) + 0.25`` and colors through a sigmoid, so
any finite latent maps to a valid :class:`StrokeField`.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy.special import expit, logit

from .geometry import COLOR, LOC, N_PARAMS, OFFSETS, WIDTH, StrokeField
from .perception import FeatureBank, LossReport, LossWeights, PerceptualLoss, PixelLoss, generate_bank
from .renderer import RenderConfig, render_soft, render_vjp

log = logging.getLogger(__name__)

WIDTH_FLOOR = 0.25
COLOR_LOGIT_CLAMP = 6.0


class NonFiniteError(ArithmeticError):
    """A loss or gradient went NaN/Inf during optimisation."""

    def __init__(self, message: str, iteration: int | None = None, stroke: int | None = None, coordinate: int | None = None):
        super().__init__(message)
        self.iteration = iteration
        self.stroke = stroke
        self.coordinate = coordinate


# --------------------------------------------------------------------------
# transforms


def _softplus(z):
    return np.logaddexp(0.0, z)


def _inv_softplus(y):
    # log(exp(y) - 1), written to stay finite for large and small y
    return y + np.log(-np.expm1(-y))


def to_field(latent: np.ndarray, height: int, width: int) -> StrokeField:
    latent = np.asarray(latent, dtype=float).reshape(-1, N_PARAMS)
    params = latent.copy()
    params[:, WIDTH] = _softplus(latent[:, WIDTH]) + WIDTH_FLOOR
    params[:, COLOR] = expit(latent[:, COLOR])
    return StrokeField(params, height, width)


def from_field(field: StrokeField) -> np.ndarray:
    """Inverse of :func:`to_field`; widths must exceed the 0.25 px floor."""
    params = np.array(field.params)
    if len(params) and np.any(params[:, WIDTH] <= WIDTH_FLOOR):
        raise ValueError(f"widths must exceed {WIDTH_FLOOR} px to invert")
    latent = params.copy()
    latent[:, WIDTH] = _inv_softplus(params[:, WIDTH] - WIDTH_FLOOR)
    with np.errstate(divide="ignore"):
        latent[:, COLOR] = logit(params[:, COLOR])
    return latent


def latent_grad(latent: np.ndarray, field_grad: np.ndarray) -> np.ndarray:
    """Chain an N x 12 gradient w.r.t. stroke parameters through the transforms."""
    g = np.array(field_grad, dtype=float)
    g[:, WIDTH] *= expit(latent[:, WIDTH])
    col = expit(latent[:, COLOR])
    g[:, COLOR] *= col * (1.0 - col)
    return g


# --------------------------------------------------------------------------
# initialisation


def init_strokes(content: np.ndarray, n_strokes: int, seed: int = 0) -> np.ndarray:
    """Jittered-grid initialisation with colors picked from ``content``."""
    if n_strokes < 1:
        raise ValueError("need at least one stroke")
    content = np.asarray(content, dtype=float)
    h, w = content.shape[:2]
    rng = np.random.default_rng(seed)

    side = math.ceil(math.sqrt(n_strokes))
    cells = np.sort(rng.choice(side * side, size=n_strokes, replace=False))
    row, col = np.divmod(cells, side)
    jitter = rng.uniform(-0.5, 0.5, size=(n_strokes, 2))
    x = (col + 0.5 + jitter[:, 0]) * (w / side)
    y = (row + 0.5 + jitter[:, 1]) * (h / side)

    stroke_width = max(min(h, w) * 2.0 / math.sqrt(n_strokes), WIDTH_FLOOR + 0.05)
    latent = np.zeros((n_strokes, N_PARAMS))
    latent[:, 0] = x
    latent[:, 1] = y
    latent[:, OFFSETS] = rng.uniform(-stroke_width, stroke_width, size=(n_strokes, 6))
    latent[:, WIDTH] = _inv_softplus(stroke_width - WIDTH_FLOOR)

    pi = np.clip(y.astype(int), 0, h - 1)
    pj = np.clip(x.astype(int), 0, w - 1)
    with np.errstate(divide="ignore"):
        latent[:, COLOR] = np.clip(logit(np.clip(content[pi, pj], 0.0, 1.0)), -COLOR_LOGIT_CLAMP, COLOR_LOGIT_CLAMP)
    return latent


# --------------------------------------------------------------------------
# Adam


def group_learning_rates(location=1.0, offsets=0.5, width=0.1, color=0.05) -> np.ndarray:
    """Per-column learning rates for an N x 12 latent array."""
    lr = np.empty(N_PARAMS)
    lr[LOC] = location
    lr[OFFSETS] = offsets
    lr[WIDTH] = width
    lr[COLOR] = color
    return lr


@dataclass(frozen=True)
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    lr: float | np.ndarray = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params: np.ndarray, **hyper) -> AdamState:
        return cls(np.zeros_like(params, dtype=float), np.zeros_like(params, dtype=float), **hyper)


def _locate_nonfinite(grads: np.ndarray) -> tuple[int | None, int | None]:
    bad = np.argwhere(~np.isfinite(grads))[0]
    if grads.ndim == 2:
        return int(bad[0]), int(bad[1])
    if grads.ndim == 1:
        return None, int(bad[0])
    return None, None


def adam_step(state: AdamState, params: np.ndarray, grads: np.ndarray) -> tuple[AdamState, np.ndarray]:
    params = np.asarray(params, dtype=float)
    grads = np.asarray(grads, dtype=float)
    if grads.shape != params.shape or state.m.shape != params.shape:
        raise ValueError(f"shape mismatch: params {params.shape}, grads {grads.shape}, state {state.m.shape}")
    if not np.isfinite(grads).all():
        stroke, coord = _locate_nonfinite(grads)
        where = f"stroke {stroke}, coordinate {coord}" if stroke is not None else f"coordinate {coord}"
        raise NonFiniteError(f"non-finite gradient at {where}", stroke=stroke, coordinate=coord)

    t = state.step + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    v = state.beta2 * state.v + (1.0 - state.beta2) * grads * grads
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    new_params = params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return replace(state, m=m, v=v, step=t), new_params


# --------------------------------------------------------------------------
# schedules and logs


@dataclass(frozen=True)
class RunSchedule:
    stroke_iters: int = 500
    pixel_iters: int = 100
    snapshot_every: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.stroke_iters < 0 or self.pixel_iters < 0 or self.snapshot_every < 0:
            raise ValueError("iteration counts must be nonnegative")


@dataclass(frozen=True)
class LossRecord:
    iteration: int
    content: float
    style: float
    total: float
    elapsed_ms: float


@dataclass
class LossLog:
    records: list[LossRecord] = field(default_factory=list)

    def append(self, iteration: int, report: LossReport, elapsed_ms: float) -> None:
        if self.records and iteration <= self.records[-1].iteration:
            raise ValueError(f"iteration {iteration} does not follow {self.records[-1].iteration}")
        self.records.append(LossRecord(iteration, report.content, report.style, report.total, elapsed_ms))

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def next_iteration(self) -> int:
        return self.records[-1].iteration + 1 if self.records else 0

    def totals(self) -> np.ndarray:
        return np.array([r.total for r in self.records])

    def smoothed(self, window: int = 20) -> np.ndarray:
        """Trailing moving average of the totals."""
        tot = self.totals()
        csum = np.concatenate([[0.0], np.cumsum(tot)])
        idx = np.arange(len(tot))
        lo = np.maximum(0, idx - window + 1)
        return (csum[idx + 1] - csum[lo]) / (idx + 1 - lo)


# --------------------------------------------------------------------------
# stage 1: strokes


def _make_objective(content, style, weights, bank, loss):
    if loss == "pixel":
        return PixelLoss(content)
    if loss == "perceptual":
        return PerceptualLoss(content, style, bank if bank is not None else generate_bank(0), weights)
    raise ValueError(f"unknown loss {loss!r}")


def optimize_strokes(
    content: np.ndarray,
    style: Optional[np.ndarray],
    n_strokes: int,
    config: RenderConfig = RenderConfig(),
    weights: LossWeights = LossWeights(),
    schedule: RunSchedule = RunSchedule(),
    *,
    bank: FeatureBank | None = None,
    loss: str = "perceptual",
    learning_rates: np.ndarray | None = None,
    init: np.ndarray | None = None,
    snapshot: Callable[[int, StrokeField], None] | None = None,
) -> tuple[StrokeField, LossLog]:
    """Fit ``n_strokes`` strokes to the objective with Adam.

    ``loss="pixel"`` swaps the perceptual objective for half squared pixel
    error against ``content`` (``style`` and ``weights`` are then unused).
    The log holds the loss before every update plus the loss of the
    returned field.
    """
    content = np.asarray(content, dtype=float)
    h, w = content.shape[:2]
    objective = _make_objective(content, style, weights, bank, loss)
    latent = init_strokes(content, n_strokes, schedule.seed) if init is None else np.array(init, dtype=float)
    lr = group_learning_rates() if learning_rates is None else np.asarray(learning_rates, dtype=float)
    state = AdamState.zeros_like(latent, lr=lr)
    loss_log = LossLog()
    t0 = time.perf_counter()

    for it in range(schedule.stroke_iters + 1):
        field = to_field(latent, h, w)
        canvas, tape = render_soft(field, config)
        report, img_grad = objective.value_and_grad(canvas)
        loss_log.append(it, report, (time.perf_counter() - t0) * 1e3)
        if not math.isfinite(report.total):
            raise NonFiniteError(f"non-finite loss at iteration {it}", iteration=it)
        if snapshot is not None and schedule.snapshot_every and it % schedule.snapshot_every == 0:
            snapshot(it, field)
        if it == schedule.stroke_iters:
            break
        g = latent_grad(latent, render_vjp(field, config, tape, img_grad))
        try:
            state, latent = adam_step(state, latent, g)
        except NonFiniteError as exc:
            exc.iteration = it
            raise
        if it % 50 == 0:
            log.debug("stroke iter %d: total %.6g", it, report.total)

    return to_field(latent, h, w), loss_log


# --------------------------------------------------------------------------
# stage 2: pixels


def pixel_refine(
    start: np.ndarray,
    content: np.ndarray,
    style: np.ndarray,
    bank: FeatureBank,
    weights: LossWeights,
    iters: int,
    *,
    lr: float = 0.01,
    loss_log: LossLog | None = None,
) -> np.ndarray:
    """Adam on raw pixels against the perceptual loss, clamped to [0, 1] each step."""
    start = np.asarray(start, dtype=float)
    if start.shape != np.shape(content):
        raise ValueError(f"start {start.shape} and content {np.shape(content)} differ in shape")
    if iters == 0:
        return start.copy()
    objective = PerceptualLoss(content, style, bank, weights)
    img = start.copy()
    state = AdamState.zeros_like(img, lr=lr)
    first = loss_log.next_iteration if loss_log is not None else 0
    t0 = time.perf_counter()
    for k in range(iters):
        report, g = objective.value_and_grad(img)
        if not math.isfinite(report.total):
            raise NonFiniteError(f"non-finite loss at pixel iteration {k}", iteration=k)
        if loss_log is not None:
            loss_log.append(first + k, report, (time.perf_counter() - t0) * 1e3)
        state, img = adam_step(state, img, g)
        np.clip(img, 0.0, 1.0, out=img)
    if loss_log is not None:
        loss_log.append(first + iters, objective(img), (time.perf_counter() - t0) * 1e3)
    return img
