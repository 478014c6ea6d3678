"""Input checks shared by the estimator and the command line."""

import numpy as np

from .exceptions import InvalidArgumentError, ShapeError


def check_images(X, canvas=None):
    """Return ``X`` as a float32 ``(n, H, W)`` array of finite values in [0, 1].

    A single ``(H, W)`` image is promoted to a batch of one. uint8 input is
    rescaled from [0, 255].
    """
    X = np.asarray(X)
    if X.dtype == np.uint8:
        X = X.astype(np.float32) / 255.0
    if X.dtype == object or not np.issubdtype(X.dtype, np.number):
        raise InvalidArgumentError(f"images must be numeric, got dtype {X.dtype}")
    if X.ndim == 2:
        X = X[None]
    if X.ndim != 3:
        raise ShapeError(f"images must be (n, H, W), got shape {X.shape}")
    if X.shape[0] == 0:
        raise InvalidArgumentError("no images given")
    if canvas is not None and (X.shape[1] != X.shape[2] or X.shape[1] % canvas):
        raise ShapeError(f"images must be square with a side divisible by {canvas}, got {X.shape[1:]}")
    X = X.astype(np.float32, copy=False)
    if not np.isfinite(X).all():
        raise InvalidArgumentError("images contain NaN or infinite values")
    if X.min() < 0 or X.max() > 1:
        raise InvalidArgumentError("image intensities must lie in [0, 1]")
    return X


def check_labels(y, n):
    y = np.asarray(y)
    if y.ndim != 1 or len(y) != n:
        raise ShapeError(f"expected {n} labels, got shape {y.shape}")
    if not np.issubdtype(y.dtype, np.integer):
        raise InvalidArgumentError("labels must be integer class ids")
    return y.astype(np.int64)


def check_templates(templates, canvas=None):
    """``(C, N, H, W)`` template stack with at least one template per class."""
    t = np.asarray(templates)
    if t.ndim != 4:
        raise ShapeError(f"templates must be (C, N, H, W), got shape {t.shape}")
    if t.shape[1] == 0:
        raise InvalidArgumentError("every class needs at least one template")
    c, n = t.shape[:2]
    flat = check_images(t.reshape(c * n, *t.shape[2:]), canvas)
    return flat.reshape(c, n, *flat.shape[1:])
