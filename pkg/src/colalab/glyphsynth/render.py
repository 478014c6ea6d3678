"""Rendering glyph trees to grayscale images."""

from dataclasses import dataclass

import numpy as np

from ..exceptions import InvalidArgumentError
from .grammar import ENCLOSURE, LEFT_RIGHT, OVERLAY, TOP_BOTTOM, Node
from .raster import rasterize_polylines

DEFAULT_CANVAS = 80
MARGIN = 0.1

TEMPLATE_STROKE_RANGE = (2.2, 3.4)
TEMPLATE_SCALE_RANGE = (0.92, 1.0)


@dataclass(frozen=True)
class RenderStyle:
    stroke_width: float = 2.8
    jitter_sigma: float = 0.0
    rotation: float = 0.0
    scale: float = 1.0
    is_template: bool = True

    def __post_init__(self):
        if self.is_template and (self.jitter_sigma != 0 or self.rotation != 0):
            raise InvalidArgumentError("template styles must have zero jitter and rotation")
        if not 0.5 <= self.scale <= 1.0:
            raise InvalidArgumentError(f"scale {self.scale} outside [0.5, 1.0]")
        if abs(self.rotation) > 10:
            raise InvalidArgumentError("rotation beyond +-10 degrees can leave the canvas")


TEMPLATE_STYLE = RenderStyle()


def sample_style(rng, heavy=False):
    """Draw a handwriting-like style. ``heavy`` widens every range."""
    if heavy:
        return RenderStyle(
            stroke_width=float(rng.uniform(1.6, 4.2)),
            jitter_sigma=float(rng.uniform(1.0, 2.0)),
            rotation=float(rng.uniform(-9, 9)),
            scale=float(rng.uniform(0.78, 0.95)),
            is_template=False,
        )
    return RenderStyle(
        stroke_width=float(rng.uniform(2.0, 3.6)),
        jitter_sigma=float(rng.uniform(0.4, 1.2)),
        rotation=float(rng.uniform(-6, 6)),
        scale=float(rng.uniform(0.86, 0.98)),
        is_template=False,
    )


def template_styles(n):
    """``n`` clean styles spread over stroke width and scale, fixed per index."""
    if n < 1:
        raise InvalidArgumentError(f"N must be >= 1, got {n}")
    if n == 1:
        return [TEMPLATE_STYLE]
    widths = np.linspace(*TEMPLATE_STROKE_RANGE, n)
    # interleave scales so width and scale are not perfectly correlated
    scales = np.linspace(*TEMPLATE_SCALE_RANGE, n)[np.argsort(np.arange(n) % 2, kind="stable")]
    return [RenderStyle(float(w), 0.0, 0.0, float(s), True) for w, s in zip(widths, scales)]


def layout(tree, box=(0.0, 0.0, 1.0, 1.0)):
    """Assign a box ``(x0, y0, x1, y1)`` to every leaf, in leaf order."""
    if not isinstance(tree, Node):
        return [(int(tree), box)]
    x0, y0, x1, y1 = box
    a, b = tree.children
    r = tree.ratio
    if tree.op == LEFT_RIGHT:
        xm = x0 + r * (x1 - x0)
        return layout(a, (x0, y0, xm, y1)) + layout(b, (xm, y0, x1, y1))
    if tree.op == TOP_BOTTOM:
        ym = y0 + r * (y1 - y0)
        return layout(a, (x0, y0, x1, ym)) + layout(b, (x0, ym, x1, y1))
    if tree.op == ENCLOSURE:
        cx, cy = (x0 + x1) / 2, (y0 + y1) / 2
        hw, hh = r * (x1 - x0) / 2, r * (y1 - y0) / 2
        return layout(a, box) + layout(b, (cx - hw, cy - hh, cx + hw, cy + hh))
    if tree.op == OVERLAY:
        return layout(a, box) + layout(b, box)
    raise InvalidArgumentError(f"unknown operator {tree.op!r}")


def _leaf_polylines(bank, prim_id, box):
    x0, y0, x1, y1 = box
    span = np.array([x1 - x0, y1 - y0])
    origin = np.array([x0, y0])
    return [origin + s * span for s in bank[prim_id].strokes]


def glyph_polylines(bank, spec, style, canvas, rng=None):
    """Stroke polylines of a glyph in pixel coordinates, after style transforms."""
    inner = (MARGIN, MARGIN, 1 - MARGIN, 1 - MARGIN)
    lines = []
    for prim_id, box in layout(spec.tree, inner):
        lines.extend(_leaf_polylines(bank, prim_id, box))
    theta = np.deg2rad(style.rotation)
    rot = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    out = []
    for line in lines:
        pts = (line - 0.5) * style.scale @ rot.T + 0.5
        pts = pts * canvas
        if style.jitter_sigma > 0:
            if rng is None:
                raise InvalidArgumentError("jittered styles need an rng")
            pts = pts + rng.normal(0.0, style.jitter_sigma, size=pts.shape)
        out.append(np.clip(pts, 1.0, canvas - 1.0))
    return out


def render(bank, spec, style=TEMPLATE_STYLE, canvas=DEFAULT_CANVAS, seed=None):
    """Render ``spec`` to a ``canvas x canvas`` float image in [0, 1].

    ``seed`` drives the per-vertex jitter; it is ignored for clean styles.
    The same (spec, style, seed) always yields a bit-identical image.
    """
    if canvas < 32:
        raise InvalidArgumentError(f"canvas must be >= 32, got {canvas}")
    rng = np.random.default_rng(seed) if style.jitter_sigma > 0 else None
    lines = glyph_polylines(bank, spec, style, canvas, rng)
    return rasterize_polylines(lines, canvas, style.stroke_width)


def render_leaf_masks(bank, spec, style=TEMPLATE_STYLE, canvas=DEFAULT_CANVAS):
    """Per-leaf ink images of a clean rendering, for ink attribution checks."""
    inner = (MARGIN, MARGIN, 1 - MARGIN, 1 - MARGIN)
    masks = []
    for prim_id, box in layout(spec.tree, inner):
        lines = [(line - 0.5) * style.scale + 0.5 for line in _leaf_polylines(bank, prim_id, box)]
        masks.append((rasterize_polylines([np.clip(l * canvas, 1.0, canvas - 1.0) for l in lines],
                                          canvas, style.stroke_width), box))
    return masks


def render_templates(bank, charset, n, canvas=DEFAULT_CANVAS):
    """``n`` clean renderings per class as an array ``(classes, n, canvas, canvas)``."""
    styles = template_styles(n)
    out = np.empty((len(charset), n, canvas, canvas), dtype=np.float32)
    for i, spec in enumerate(charset):
        for j, style in enumerate(styles):
            out[i, j] = render(bank, spec, style, canvas)
    return out
