"""Random stroke primitives, the leaves of every glyph tree."""

from dataclasses import dataclass

import numpy as np

from ..exceptions import InvalidArgumentError
from .raster import rasterize_polylines

CELL = 32
CELL_STROKE = 2.5
MIN_COVERAGE = 0.01
MAX_COVERAGE = 0.60
# primitives whose cell bitmaps overlap more than this are rejected as duplicates
MAX_IOU = 0.5

_LO, _HI = 0.12, 0.88


@dataclass(frozen=True)
class PrimitiveShape:
    id: int
    strokes: tuple  # tuple of (n, 2) float arrays in unit-square coordinates

    def to_json(self):
        return {"id": self.id, "strokes": [np.asarray(s).tolist() for s in self.strokes]}

    @classmethod
    def from_json(cls, record):
        return cls(record["id"], tuple(np.asarray(s, dtype=np.float64) for s in record["strokes"]))


@dataclass(frozen=True)
class PrimitiveBank:
    primitives: tuple
    seed: int

    def __len__(self):
        return len(self.primitives)

    def __getitem__(self, idx):
        return self.primitives[idx]

    def to_json(self):
        return {"seed": self.seed, "primitives": [p.to_json() for p in self.primitives]}

    @classmethod
    def from_json(cls, record):
        return cls(tuple(PrimitiveShape.from_json(r) for r in record["primitives"]), record["seed"])


def _line(rng):
    return rng.uniform(_LO, _HI, size=(2, 2))


def _polyline(rng):
    return rng.uniform(_LO, _HI, size=(rng.integers(3, 5), 2))


def _arc(rng):
    centre = rng.uniform(0.35, 0.65, size=2)
    radius = rng.uniform(0.15, 0.35)
    start = rng.uniform(0, 2 * np.pi)
    sweep = rng.uniform(0.6, 1.8) * np.pi
    theta = start + np.linspace(0.0, sweep, 12)
    pts = centre + radius * np.stack([np.cos(theta), np.sin(theta)], axis=1)
    return np.clip(pts, _LO, _HI)


def _hook(rng):
    # straight bar with a short turn at one end
    a, b = rng.uniform(_LO, _HI, size=(2, 2))
    d = b - a
    normal = np.array([-d[1], d[0]])
    c = b + 0.3 * normal * rng.choice([-1.0, 1.0])
    return np.clip(np.stack([a, b, c]), _LO, _HI)


_STROKE_KINDS = (_line, _polyline, _arc, _hook)


def render_cell(strokes, size=CELL, stroke_width=CELL_STROKE):
    return rasterize_polylines([np.asarray(s) * size for s in strokes], size, stroke_width)


def _iou(a, b):
    a = a > 0.5
    b = b > 0.5
    union = np.logical_or(a, b).sum()
    return np.logical_and(a, b).sum() / union if union else 1.0


def make_primitive_bank(seed, count):
    """Draw ``count`` distinct random stroke primitives.

    Each primitive is 1 to 3 strokes (lines, polylines, arcs or hooks).
    Candidates are rejected when their rendered coverage falls outside
    [1%, 60%] of the unit cell or when they overlap an earlier primitive
    too closely. Deterministic in ``seed``.
    """
    if count < 2:
        raise InvalidArgumentError(f"count must be >= 2, got {count}")
    rng = np.random.default_rng(seed)
    shapes = []
    bitmaps = []
    attempts = 0
    while len(shapes) < count:
        attempts += 1
        if attempts > 200 * count:
            raise RuntimeError("could not draw enough distinct primitives")
        n_strokes = int(rng.integers(1, 4))
        strokes = tuple(
            _STROKE_KINDS[rng.integers(len(_STROKE_KINDS))](rng) for _ in range(n_strokes)
        )
        cell = render_cell(strokes)
        coverage = cell.mean()
        if not MIN_COVERAGE <= coverage <= MAX_COVERAGE:
            continue
        if any(_iou(cell, other) > MAX_IOU for other in bitmaps):
            continue
        shapes.append(PrimitiveShape(len(shapes), strokes))
        bitmaps.append(cell)
    return PrimitiveBank(tuple(shapes), seed)
