"""Command-line entry point.

Exit codes: 0 success, 1 runtime failure, 2 bad arguments.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .fileio import (
    FormatError,
    RunManifest,
    export_svg,
    load_manifest,
    load_strokes,
    save_bank,
    save_png,
)
from .gradcheck import run_suite
from .optimize import NonFiniteError
from .perception import DEFAULT_PLAN, generate_bank
from .pipeline import run, with_overrides
from .renderer import RenderConfig, render_hard, render_soft

GRAD_TOLERANCE = 1e-4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


class _UsageError(Exception):
    pass


def _render_args(p: argparse.ArgumentParser, defaults: bool = True) -> None:
    d = (lambda v: v) if defaults else (lambda v: None)
    p.add_argument("--samples", type=int, default=d(10), help="samples per curve (S)")
    p.add_argument("--knn", type=int, default=d(20), help="candidate strokes per tile (K)")
    p.add_argument("--mask-sharpness", type=float, default=d(5.0))
    p.add_argument("--assign-sharpness", type=float, default=d(2.0))
    p.add_argument("--tile-size", type=int, default=d(16))
    p.add_argument("--workers", type=int, default=d(1))


def _run_args(p: argparse.ArgumentParser) -> None:
    # None means "keep the manifest / built-in default"
    p.add_argument("--manifest", help="rerun from a saved manifest; other flags override it")
    p.add_argument("--content")
    p.add_argument("--strokes", type=int)
    p.add_argument("--iters", type=int, help="stroke-stage iterations")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--snapshot-every", type=int)
    _render_args(p, defaults=False)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="strokestyle", description="Brush-stroke style transfer.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("paint", help="stroke optimisation then pixel refinement")
    _run_args(p)
    p.add_argument("--style")
    p.add_argument("--pixel-iters", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--bank", help="feature-bank file (default: seeded random bank)")
    p.add_argument("--bank-seed", type=int)

    p = sub.add_parser("reconstruct", help="fit strokes to --content under pixel L2")
    _run_args(p)

    p = sub.add_parser("render", help="render a strokes JSON document")
    p.add_argument("--strokes", required=True)
    p.add_argument("--out", help="PNG output")
    p.add_argument("--svg", help="SVG output")
    p.add_argument("--hard", action="store_true", help="hard (non-differentiable) rasteriser")
    _render_args(p)

    p = sub.add_parser("grad-check", help="finite-difference gradient checks")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fields", type=int, default=10)

    p = sub.add_parser("gen-bank", help="write a seeded feature-bank file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--plan", default=",".join(map(str, DEFAULT_PLAN)))
    return parser


def _manifest_from_args(args, mode: str) -> RunManifest:
    base = load_manifest(args.manifest) if args.manifest else RunManifest(mode=mode)
    if base.mode != mode:
        raise _UsageError(f"manifest is for {base.mode!r}, not {mode!r}")
    m = with_overrides(
        base,
        content=args.content,
        strokes=args.strokes,
        stroke_iters=args.iters,
        seed=args.seed,
        out=args.out,
        snapshot_every=args.snapshot_every,
        samples_per_curve=args.samples,
        knn=args.knn,
        mask_sharpness=args.mask_sharpness,
        assign_sharpness=args.assign_sharpness,
        tile_size=args.tile_size,
        workers=args.workers,
    )
    if mode == "paint":
        m = with_overrides(
            m,
            style=args.style,
            pixel_iters=args.pixel_iters,
            alpha=args.alpha,
            beta=args.beta,
            bank=args.bank,
            bank_seed=args.bank_seed,
        )
        if not m.style:
            raise _UsageError("paint: --style is required")
    else:
        m = with_overrides(m, pixel_iters=0, beta=0.0, style=None)
    if not m.content:
        raise _UsageError(f"{mode}: --content is required")
    return m


def _cmd_run(args, mode: str) -> int:
    m = _manifest_from_args(args, mode)
    result = run(m)
    last = result.loss_log.records[-1]
    print(f"{mode}: {len(result.field)} strokes, final total loss {last.total:.6g}")
    for path in result.files.values():
        print(f"  wrote {path}")
    return 0


def _cmd_render(args) -> int:
    if not (args.out or args.svg):
        raise _UsageError("render: give --out and/or --svg")
    field, background = load_strokes(args.strokes, with_background=True)
    config = RenderConfig(
        samples_per_curve=args.samples,
        knn=args.knn,
        mask_sharpness=args.mask_sharpness,
        assign_sharpness=args.assign_sharpness,
        background=background,
        tile_size=args.tile_size,
        workers=args.workers,
    )
    if args.out:
        image = render_hard(field, config) if args.hard else render_soft(field, config)[0]
        save_png(image, args.out)
    if args.svg:
        export_svg(field, config, args.svg)
    return 0


def _cmd_grad_check(args) -> int:
    result = run_suite(seed=args.seed, n_fields=args.fields)
    print(f"renderer: max relative error {max(result.render_errors):.3e} "
          f"over {sum(result.render_checked)} coordinates")
    print(f"loss:     max relative error {max(result.loss_errors):.3e}")
    worst = result.max_error
    ok = worst < GRAD_TOLERANCE
    print(f"max relative error {worst:.3e} ({'ok' if ok else 'FAIL'}, tolerance {GRAD_TOLERANCE:g})")
    return 0 if ok else 1


def _cmd_gen_bank(args) -> int:
    try:
        plan = tuple(int(c) for c in args.plan.split(","))
    except ValueError:
        raise _UsageError(f"gen-bank: bad --plan {args.plan!r}") from None
    if not plan or min(plan) < 1:
        raise _UsageError(f"gen-bank: bad --plan {args.plan!r}")
    save_bank(generate_bank(args.seed, plan), args.out)
    print(f"wrote {args.out}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
        if args.command in ("paint", "reconstruct"):
            return _cmd_run(args, args.command)
        if args.command == "render":
            return _cmd_render(args)
        if args.command == "grad-check":
            return _cmd_grad_check(args)
        return _cmd_gen_bank(args)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return 2
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except (OSError, FormatError, NonFiniteError, ValueError) as exc:
        print(f"strokestyle: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
