"""End-to-end runs driven by a :class:`RunManifest`."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .fileio import (
    RunManifest,
    load_bank,
    load_png,
    save_manifest,
    save_png,
    save_strokes,
    write_loss_csv,
)
from .geometry import StrokeField
from .optimize import LossLog, RunSchedule, group_learning_rates, optimize_strokes, pixel_refine
from .perception import FeatureBank, LossWeights, generate_bank
from .renderer import RenderConfig, render_soft

log = logging.getLogger(__name__)

OUTPUT_FILES = {
    "strokes_png": "strokes.png",
    "refined_png": "refined.png",
    "strokes_json": "strokes.json",
    "loss_csv": "loss.csv",
    "manifest": "manifest.json",
}


@dataclass
class RunResult:
    field: StrokeField
    stroke_canvas: np.ndarray
    refined: np.ndarray | None
    loss_log: LossLog
    files: dict[str, Path]


def render_config(m: RunManifest) -> RenderConfig:
    return RenderConfig(
        samples_per_curve=m.samples_per_curve,
        knn=m.knn,
        mask_sharpness=m.mask_sharpness,
        assign_sharpness=m.assign_sharpness,
        background=tuple(m.background),
        tile_size=m.tile_size,
        workers=m.workers,
    )


def loss_weights(m: RunManifest) -> LossWeights:
    return LossWeights(
        alpha=m.alpha,
        beta=m.beta,
        layer_weights=tuple(m.layer_weights),
        content_layer=m.content_layer,
    )


def feature_bank(m: RunManifest) -> FeatureBank:
    return load_bank(m.bank) if m.bank else generate_bank(m.bank_seed)


def run(m: RunManifest, content: np.ndarray | None = None, style: np.ndarray | None = None, write: bool = True) -> RunResult:
    """Execute a ``paint`` or ``reconstruct`` run.

    Images are read from the manifest paths unless passed in directly.
    """
    if m.mode not in ("paint", "reconstruct"):
        raise ValueError(f"unknown run mode {m.mode!r}")
    if content is None:
        content = load_png(m.content)
    if m.mode == "paint" and style is None:
        if not m.style:
            raise ValueError("paint needs a style image")
        style = load_png(m.style)

    config = render_config(m)
    schedule = RunSchedule(m.stroke_iters, m.pixel_iters, m.snapshot_every, m.seed)
    lrs = group_learning_rates(*m.learning_rates)
    out_dir = Path(m.out)
    files: dict[str, Path] = {}

    snapshot = None
    if write and m.snapshot_every:
        snap_dir = out_dir / "snapshots"
        snap_dir.mkdir(parents=True, exist_ok=True)

        def snapshot(it, fld):
            save_strokes(fld, snap_dir / f"strokes_{it:06d}.json", config.background)

    if m.mode == "paint":
        weights = loss_weights(m)
        bank = feature_bank(m)
        fld, loss_log = optimize_strokes(
            content, style, m.strokes, config, weights, schedule,
            bank=bank, learning_rates=lrs, snapshot=snapshot,
        )
        canvas, _ = render_soft(fld, config)
        refined = pixel_refine(
            canvas, content, style, bank, weights, m.pixel_iters, lr=m.pixel_lr, loss_log=loss_log
        )
    else:
        fld, loss_log = optimize_strokes(
            content, None, m.strokes, config, schedule=schedule,
            loss="pixel", learning_rates=lrs, snapshot=snapshot,
        )
        canvas, _ = render_soft(fld, config)
        refined = None

    if write:
        out_dir.mkdir(parents=True, exist_ok=True)
        files["strokes_png"] = out_dir / OUTPUT_FILES["strokes_png"]
        save_png(canvas, files["strokes_png"])
        if refined is not None:
            files["refined_png"] = out_dir / OUTPUT_FILES["refined_png"]
            save_png(refined, files["refined_png"])
        files["strokes_json"] = out_dir / OUTPUT_FILES["strokes_json"]
        save_strokes(fld, files["strokes_json"], config.background)
        files["loss_csv"] = out_dir / OUTPUT_FILES["loss_csv"]
        write_loss_csv(loss_log, files["loss_csv"])
        files["manifest"] = out_dir / OUTPUT_FILES["manifest"]
        save_manifest(m, files["manifest"])
    return RunResult(fld, canvas, refined, loss_log, files)


def with_overrides(m: RunManifest, **changes) -> RunManifest:
    return replace(m, **{k: v for k, v in changes.items() if v is not None})
