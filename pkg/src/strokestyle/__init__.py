"""Style transfer in the brush-stroke domain.

Strokes are quadratic Bezier spines with a width and a color.  A soft
rasteriser turns them into an image, content/style losses score it, and
exact gradients flow back to every stroke parameter.
"""

__version__ = "0.1.0"

from .geometry import (
    Point2,
    QuadraticBezier,
    Stroke,
    StrokeField,
    bezier_eval,
    sample_curve,
    stroke_bounds,
    stroke_world_curve,
)
from .optimize import (
    AdamState,
    LossLog,
    NonFiniteError,
    RunSchedule,
    adam_step,
    from_field,
    init_strokes,
    optimize_strokes,
    pixel_refine,
    to_field,
)
from .perception import (
    FeatureBank,
    LossReport,
    LossWeights,
    content_loss,
    extract_features,
    generate_bank,
    gram,
    loss_image_gradient,
    style_loss,
    total_loss,
)
from .renderer import (
    Disk,
    RenderConfig,
    RenderTape,
    disk_distance_map,
    knn_candidates,
    render_disks_hard,
    render_hard,
    render_soft,
    render_vjp,
    stroke_distance,
)
