"""
Strokes as quadratic Bezier spines
==================================

A stroke is twelve numbers: where it sits, three control offsets, a width
and a color.  This script builds a few by hand, samples their spines and
draws them with the hard rasteriser.
"""

from pathlib import Path

import numpy as np

from strokestyle import QuadraticBezier, Stroke, StrokeField, bezier_eval, sample_curve, stroke_world_curve
from strokestyle.geometry import Point2
from strokestyle.fileio import export_svg, save_png
from strokestyle.renderer import RenderConfig, render_hard

out = Path(__file__).with_name("out")
out.mkdir(exist_ok=True)

# The curve from the textbook: the midpoint is a quarter of each end plus half the middle.
curve = QuadraticBezier(Point2(0, 0), Point2(2, 0), Point2(2, 2))
print("B(0.5) =", bezier_eval(curve, 0.5))
print("5 samples:", [(round(p.x, 3), round(p.y, 3)) for p in sample_curve(curve, 5)])

# Offsets are relative to the stroke location, so moving a stroke is one addition.
s = Stroke(Point2(10, 10), (Point2(0, 0), Point2(2, 0), Point2(2, 2)), 1.5, (0.8, 0.2, 0.1))
print("world curve:", stroke_world_curve(s))

# A small field: three arcs on a 64 x 96 canvas.
field = StrokeField.from_strokes(
    [
        Stroke(Point2(20, 32), (Point2(-12, 14), Point2(0, -30), Point2(12, 14)), 4.0, (0.85, 0.25, 0.1)),
        Stroke(Point2(48, 32), (Point2(-14, 0), Point2(0, 24), Point2(14, 0)), 3.0, (0.1, 0.45, 0.8)),
        Stroke(Point2(76, 30), (Point2(-10, -16), Point2(16, 0), Point2(-10, 16)), 5.0, (0.2, 0.7, 0.3)),
    ],
    height=64,
    width=96,
)
print(field.params.round(2))

config = RenderConfig(samples_per_curve=24)
save_png(render_hard(field, config), out / "strokes_hard.png")
export_svg(field, config, out / "strokes.svg")
print("wrote", out / "strokes_hard.png", "and", out / "strokes.svg")
