"""Anti-aliased stroke rasterization on a pixel grid."""

import numpy as np


def _segment_distance(px, py, a, b):
    # distance from every pixel centre to the segment a-b
    d = b - a
    denom = float(d @ d)
    if denom == 0.0:
        return np.hypot(px - a[0], py - a[1])
    t = ((px - a[0]) * d[0] + (py - a[1]) * d[1]) / denom
    t = np.clip(t, 0.0, 1.0)
    return np.hypot(px - (a[0] + t * d[0]), py - (a[1] + t * d[1]))


def rasterize_polylines(polylines, size, stroke_width):
    """Rasterize polylines given in pixel coordinates.

    Ink at a pixel is ``clip(stroke_width/2 + 0.5 - dist, 0, 1)`` where
    ``dist`` is the distance from the pixel centre to the nearest segment,
    which gives a one-pixel linear anti-aliasing ramp.
    """
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64)
    xs += 0.5
    ys += 0.5
    img = np.zeros((size, size), dtype=np.float64)
    half = stroke_width / 2.0 + 0.5
    for line in polylines:
        line = np.asarray(line, dtype=np.float64)
        if len(line) == 1:
            line = np.vstack([line, line])
        lo = np.floor(line.min(axis=0) - half - 1).astype(int)
        hi = np.ceil(line.max(axis=0) + half + 1).astype(int)
        x0, y0 = max(lo[0], 0), max(lo[1], 0)
        x1, y1 = min(hi[0], size), min(hi[1], size)
        if x0 >= x1 or y0 >= y1:
            continue
        sub_x = xs[y0:y1, x0:x1]
        sub_y = ys[y0:y1, x0:x1]
        dist = np.full(sub_x.shape, np.inf)
        for a, b in zip(line[:-1], line[1:]):
            np.minimum(dist, _segment_distance(sub_x, sub_y, a, b), out=dist)
        ink = np.clip(half - dist, 0.0, 1.0)
        np.maximum(img[y0:y1, x0:x1], ink, out=img[y0:y1, x0:x1])
    return img
