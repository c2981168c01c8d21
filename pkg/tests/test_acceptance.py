"""Acceptance suite: one test per criterion.

Each test records a PASS/FAIL line with the measured figure; the lines are
printed together in the "acceptance criteria" section of the pytest summary.
"""

import json
import math
import statistics
import time

import numpy as np
import pytest

from strokestyle.cli import main
from strokestyle.fileio import (
    RunManifest,
    load_manifest,
    load_strokes,
    read_loss_csv,
    save_manifest,
    save_png,
    save_strokes,
)
from strokestyle.geometry import Point2, pixel_centers, sample_points
from strokestyle.gradcheck import check_loss_gradient, check_render_gradient, random_field
from strokestyle.optimize import RunSchedule, optimize_strokes
from strokestyle.perception import LossWeights, content_loss, generate_bank, style_loss, total_loss
from strokestyle.pipeline import run
from strokestyle.renderer import (
    Disk,
    RenderConfig,
    TileGrid,
    default_workers,
    knn_candidates,
    render_disks_hard,
    render_hard,
    render_soft,
    render_vjp,
)

import oracles
from conftest import make_field


def _smooth_gradient(h, w):
    y, x = np.mgrid[0:h, 0:w].astype(float)
    y /= h - 1
    x /= w - 1
    return np.stack([0.15 + 0.7 * x, 0.2 + 0.6 * y, 0.8 - 0.5 * (x + y) / 2], axis=-1)


# 1 ---------------------------------------------------------------------------------


def test_render_gradient_correctness(criterion):
    with criterion(1, "render_vjp vs central differences") as c:
        rng = np.random.default_rng(2024)
        config = RenderConfig(samples_per_curve=5, knn=8)
        start = time.perf_counter()
        worst, checked = 0.0, 0
        for _ in range(10):
            field = random_field(rng, n=8, height=32, width=32)
            upstream = rng.standard_normal((32, 32, 3))
            res = check_render_gradient(field, config, upstream, eps=1e-6, tie_tol=1e-3)
            worst = max(worst, res.max_error)
            checked += res.n_checked
        elapsed = time.perf_counter() - start
        c.detail = f"max rel err {worst:.2e} over {checked}/960 coords, {elapsed:.1f} s"
        assert worst < 1e-4
        assert checked >= 480  # tie exclusion must leave most coordinates in play
        assert elapsed < 60


# 2 ---------------------------------------------------------------------------------


def test_loss_gradient_correctness(criterion):
    with criterion(2, "loss_image_gradient vs central differences") as c:
        rng = np.random.default_rng(7)
        bank = generate_bank(0)
        worst = 0.0
        for weights in (LossWeights(), LossWeights(1.0, 0.0), LossWeights(0.0, 1e4), LossWeights(0.5, 1e3)):
            content, style, gen = (rng.uniform(size=(16, 16, 3)) for _ in range(3))
            worst = max(worst, check_loss_gradient(content, style, gen, bank, weights).max_error)
        c.detail = f"max rel err {worst:.2e} over 4 weightings x 768 pixels"
        assert worst < 1e-4


# 3 ---------------------------------------------------------------------------------


def test_pruning_exactness(criterion):
    with criterion(3, "K >= N pruned render equals unpruned") as c:
        rng = np.random.default_rng(11)
        worst_prune, worst_oracle = 0.0, 0.0
        for k in range(20):
            n = int(rng.integers(1, 12))
            field = make_field(rng, n=n, height=24, width=28)
            config = RenderConfig(samples_per_curve=6, knn=n + int(rng.integers(0, 3)), tile_size=8)
            pruned, _ = render_soft(field, config)
            full, _ = render_soft(field, config, prune=False)
            worst_prune = max(worst_prune, float(np.abs(pruned - full).max()))
            if k < 5:
                ref = np.array(oracles.soft_render(field.params.tolist(), 24, 28, 6, 5.0, 2.0, (1, 1, 1)))
                worst_oracle = max(worst_oracle, float(np.abs(pruned - ref).max()))
        c.detail = f"max |pruned - unpruned| {worst_prune:.1e}, vs loop oracle {worst_oracle:.1e}"
        assert worst_prune <= 1e-12
        assert worst_oracle <= 1e-12


# 4 ---------------------------------------------------------------------------------


def _band_mask(field, config, band):
    """Pixels at least ``band`` from every candidate's width boundary and from the nearest-two tie."""
    h, w = field.height, field.width
    samples = sample_points(field.params, config.samples_per_curve)
    px = pixel_centers(h, w)
    d = np.sqrt(
        (px[:, :, None, None, 0] - samples[None, None, :, :, 0]) ** 2
        + (px[:, :, None, None, 1] - samples[None, None, :, :, 1]) ** 2
    ).min(axis=3)  # H x W x N
    grid = TileGrid(h, w, config.tile_size)
    cand = knn_candidates(field, config)
    is_cand = np.zeros(d.shape, dtype=bool)
    for i in range(h):
        for j in range(w):
            is_cand[i, j, cand[(i // config.tile_size) * grid.cols + j // config.tile_size]] = True
    widths = field.params[:, 8]
    near_edge = (np.abs(d - widths) < band) & is_cand
    dc = np.where(is_cand, d, np.inf)
    part = np.sort(dc, axis=2)
    gap = part[..., 1] - part[..., 0] if d.shape[2] > 1 else np.full((h, w), np.inf)
    return ~near_edge.any(axis=2) & (gap >= band)


def test_soft_to_hard_limit(criterion):
    with criterion(4, "sharpness x1000 soft render matches hard") as c:
        rng = np.random.default_rng(5)
        base = RenderConfig(samples_per_curve=8, knn=4, tile_size=8)
        band = 3.0 / base.mask_sharpness
        worst, kept, total = 0.0, 0, 0
        for _ in range(10):
            field = make_field(rng, n=10, height=32, width=32, spread=0.15)
            soft, _ = render_soft(field, base.sharpened(1000.0))
            hard = render_hard(field, base)
            keep = _band_mask(field, base, band)
            worst = max(worst, float(np.abs(soft - hard)[keep].max()))
            kept += int(keep.sum())
            total += keep.size
        c.detail = f"max |soft - hard| {worst:.1e} on {kept}/{total} pixels outside {band:g} px bands"
        assert worst <= 1e-2
        assert kept >= total // 2


# 5 ---------------------------------------------------------------------------------


def test_disk_model(criterion):
    with criterion(5, "disk composition and nearest-center overlap") as c:
        black = (0.0, 0.0, 0.0)
        h, w = 24, 30
        a = Disk(Point2(8.3, 9.1), 5.5, (0.9, 0.2, 0.1))
        b = Disk(Point2(21.7, 14.2), 6.0, (0.1, 0.3, 0.8))
        joint = render_disks_hard([a, b], h, w, black)
        summed = render_disks_hard([a], h, w, black) + render_disks_hard([b], h, w, black)
        assert np.array_equal(joint, summed)

        # overlapping pair: brute force every pixel with plain math
        p = Disk(Point2(12.2, 11.9), 7.0, (1.0, 0.5, 0.0))
        q = Disk(Point2(17.4, 12.6), 6.5, (0.0, 0.6, 1.0))
        out = render_disks_hard([p, q], h, w, black)
        overlap = 0
        for i in range(h):
            for j in range(w):
                dp = math.hypot(j + 0.5 - p.center.x, i + 0.5 - p.center.y)
                dq = math.hypot(j + 0.5 - q.center.x, i + 0.5 - q.center.y)
                inside_p, inside_q = dp < p.radius, dq < q.radius
                if inside_p and inside_q:
                    overlap += 1
                    expected = p.color if dp <= dq else q.color
                elif inside_p:
                    expected = p.color
                elif inside_q:
                    expected = q.color
                else:
                    expected = black
                assert tuple(out[i, j]) == tuple(expected), (i, j)
        c.detail = f"non-overlap sum exact on {h}x{w}; {overlap} overlap pixels brute-forced"
        assert overlap > 20


# 6 ---------------------------------------------------------------------------------


def test_loss_identities(criterion):
    with criterion(6, "loss identities and (alpha, beta) homogeneity") as c:
        rng = np.random.default_rng(9)
        bank = generate_bank(1)
        worst = 0.0
        for _ in range(5):
            x, s, g = (rng.uniform(size=(16, 16, 3)) for _ in range(3))
            worst = max(worst, abs(content_loss(x, x, bank)), abs(style_loss(x, x, bank, LossWeights())))
            base = total_loss(x, s, g, bank, LossWeights(0.7, 30.0))
            for lam in (0.25, 2.0, 8.0):
                scaled = total_loss(x, s, g, bank, LossWeights(0.7 * lam, 30.0 * lam))
                assert scaled.total == lam * base.total
                assert scaled.content == base.content and scaled.style == base.style
        c.detail = f"max self-loss {worst:.1e}; scaled totals bit-identical"
        assert worst <= 1e-12


# 7 ---------------------------------------------------------------------------------


@pytest.mark.slow
def test_reconstruction(criterion):
    with criterion(7, "reconstruction 256 strokes, 128x128, 300 iters") as c:
        target = _smooth_gradient(128, 128)
        start = time.perf_counter()
        field, log = optimize_strokes(
            target, None, 256, RenderConfig(), schedule=RunSchedule(stroke_iters=300, seed=0), loss="pixel"
        )
        elapsed = time.perf_counter() - start
        tot = log.totals()
        ratio = tot[-1] / tot[0]
        c.detail = f"final/initial L2 {ratio:.3f} ({tot[0]:.1f} -> {tot[-1]:.2f}), {elapsed:.0f} s"
        assert ratio <= 0.20
        assert elapsed < 300


# 8 ---------------------------------------------------------------------------------


@pytest.mark.slow
def test_paint_end_to_end(criterion, tmp_path):
    with criterion(8, "paint N=300, 200 + 100 iterations") as c:
        rng = np.random.default_rng(3)
        content = _smooth_gradient(64, 64)
        content[20:44, 16:48] = [0.85, 0.2, 0.15]
        style = np.clip(rng.uniform(size=(64, 64, 3)) * [1.0, 0.6, 0.3] + 0.1 * np.sin(np.arange(64) / 3)[:, None, None], 0, 1)
        save_png(content, tmp_path / "content.png")
        save_png(style, tmp_path / "style.png")
        out = tmp_path / "out"
        start = time.perf_counter()
        code = main([
            "paint", "--content", str(tmp_path / "content.png"), "--style", str(tmp_path / "style.png"),
            "--strokes", "300", "--iters", "200", "--pixel-iters", "100", "--out", str(out),
        ])
        elapsed = time.perf_counter() - start
        assert code == 0
        files = {p.name for p in out.iterdir()}
        assert {"strokes.png", "refined.png", "strokes.json", "loss.csv", "manifest.json"} <= files

        field = load_strokes(out / "strokes.json")
        again = tmp_path / "again.json"
        save_strokes(field, again)
        assert load_strokes(again) == field
        assert again.read_text() == (out / "strokes.json").read_text()
        assert len(field) == 300

        log = read_loss_csv(out / "loss.csv")
        smooth = log.smoothed(20)
        ratio = smooth[-1] / smooth[0]
        c.detail = f"smoothed-20 final/initial {ratio:.4f}, {len(log)} log rows, {elapsed:.0f} s"
        assert ratio < 0.5


# 9 ---------------------------------------------------------------------------------


@pytest.mark.slow
def test_performance(criterion):
    with criterion(9, "forward+backward N=1000, 256x256, S=10, K=20") as c:
        rng = np.random.default_rng(0)
        field = make_field(rng, n=1000, height=256, width=256, spread=0.03, widths=(1.0, 5.0))
        workers = default_workers()
        config = RenderConfig(samples_per_curve=10, knn=20, workers=workers)
        upstream = rng.standard_normal((256, 256, 3))
        times = []
        for _ in range(3):
            start = time.perf_counter()
            _, tape = render_soft(field, config)
            render_vjp(field, config, tape, upstream)
            times.append(time.perf_counter() - start)
        median = statistics.median(times)
        c.detail = f"median {median:.2f} s (runs {', '.join(f'{t:.2f}' for t in times)}; workers={workers})"
        assert median <= 2.0


# 10 --------------------------------------------------------------------------------


def test_determinism(criterion, tmp_path):
    with criterion(10, "same manifest reproduces across runs and worker counts") as c:
        rng = np.random.default_rng(1)
        content = _smooth_gradient(48, 48)
        style = rng.uniform(size=(48, 48, 3))
        m = RunManifest(mode="paint", strokes=40, stroke_iters=15, pixel_iters=5, seed=6, tile_size=8, workers=1)
        save_manifest(m, tmp_path / "m.json")
        m = load_manifest(tmp_path / "m.json")
        first = run(m, content, style, write=False)
        second = run(m, content, style, write=False)
        threaded = run(RunManifest(**{**json.loads(m.to_json()), "workers": 3}), content, style, write=False)

        t1, t2, t3 = (r.loss_log.totals() for r in (first, second, threaded))
        across_runs = float(np.abs(t1 - t2).max())
        across_workers = float(np.abs(t1 - t3).max())
        c.detail = f"max |d total| {across_runs:.1e} across runs, {across_workers:.1e} across workers 1 vs 3"
        assert across_runs <= 1e-9 and across_workers <= 1e-9
        assert np.abs(first.field.params - threaded.field.params).max() <= 1e-9
