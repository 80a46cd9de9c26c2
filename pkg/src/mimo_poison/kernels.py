"""Backend selection for the hot loops.

The compiled extension is used when it was built and importable; setting
``MIMO_POISON_PURE_PYTHON=1`` forces the numpy fallback.
"""

import os

import numpy as np

from . import _pykernels

_ckernels = None
if not os.environ.get("MIMO_POISON_PURE_PYTHON"):
    try:
        from . import _ckernels
    except ImportError:
        _ckernels = None

BACKEND = "cython" if _ckernels is not None else "python"
_impl = _ckernels if _ckernels is not None else _pykernels


def segments_blocked(p0, p1, boxes):
    """Return a uint8 mask: 1 where segment ``p0[i] -> p1[i]`` crosses any box interior.

    ``boxes`` rows are ``(xmin, xmax, ymin, ymax, zmin, zmax)``. Segments that
    only touch a box surface (e.g. ending on a reflecting wall) are not blocked.
    """
    p0 = np.ascontiguousarray(p0, dtype=np.float64)
    p1 = np.ascontiguousarray(p1, dtype=np.float64)
    boxes = np.ascontiguousarray(boxes, dtype=np.float64).reshape(-1, 6)
    return _impl.segments_blocked(p0, p1, boxes)


def build_histogram(binned, rows, grad, hess, n_bins):
    """Per-feature gradient/hessian/count histograms over ``rows``."""
    return _impl.build_histogram(
        np.ascontiguousarray(binned, dtype=np.uint8),
        np.ascontiguousarray(rows, dtype=np.int64),
        np.ascontiguousarray(grad, dtype=np.float64),
        np.ascontiguousarray(hess, dtype=np.float64),
        int(n_bins),
    )


def predict_forest(X, feature, threshold, left, right, value, roots):
    """Sum of leaf values over all trees for every row of ``X``."""
    return _impl.predict_forest(
        np.ascontiguousarray(X, dtype=np.float64),
        np.ascontiguousarray(feature, dtype=np.int32),
        np.ascontiguousarray(threshold, dtype=np.float64),
        np.ascontiguousarray(left, dtype=np.int32),
        np.ascontiguousarray(right, dtype=np.int32),
        np.ascontiguousarray(value, dtype=np.float64),
        np.ascontiguousarray(roots, dtype=np.int64),
    )


def reflection_mask(users, images, axis, coord, sign, lo, hi, bs):
    """``(S, M)`` uint8 mask of geometrically valid (reflector sequence, user) pairs.

    ``images``/``lo``/``hi`` are ``(S, k, 3)``; ``axis``/``coord``/``sign`` are
    ``(S, k)`` describing each reflecting plane. Occlusion is not tested.
    """
    f64 = lambda a: np.ascontiguousarray(a, dtype=np.float64)
    return _impl.reflection_mask(
        f64(users), f64(images), np.ascontiguousarray(axis, dtype=np.int32),
        f64(coord), f64(sign), f64(lo), f64(hi), f64(bs),
    )


def use_backend(name):
    """Switch backend at runtime (``"cython"`` or ``"python"``); used by tests and benchmarks."""
    global _impl, BACKEND
    if name == "cython":
        if _ckernels is None:
            raise RuntimeError("compiled kernels are not available")
        _impl = _ckernels
    elif name == "python":
        _impl = _pykernels
    else:
        raise ValueError(f"unknown backend: {name}")
    BACKEND = name
