"""Compiled and numpy backends must agree bit-for-bit, and both must match simple oracles."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mimo_poison import _pykernels, kernels

from test_channel import exact_segment_hits_box

needs_cython = pytest.mark.skipif(kernels._ckernels is None, reason="compiled kernels not built")


def random_boxes(rng, n):
    lo = rng.uniform(-20, 20, (n, 3))
    size = rng.uniform(0.5, 10, (n, 3))
    lo[:, 2] = 0.0
    return np.column_stack([lo[:, 0], lo[:, 0] + size[:, 0], lo[:, 1], lo[:, 1] + size[:, 1],
                            lo[:, 2], lo[:, 2] + size[:, 2]])


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=60, deadline=None)
def test_segments_blocked_matches_exact_oracle(seed):
    rng = np.random.default_rng(seed)
    boxes = random_boxes(rng, 3)
    p0 = rng.uniform(-25, 25, (40, 3))
    p1 = rng.uniform(-25, 25, (40, 3))
    want = [any(exact_segment_hits_box(a, b, box) for box in boxes) for a, b in zip(p0, p1)]
    got = kernels.segments_blocked(p0, p1, boxes).astype(bool)
    assert np.array_equal(got, want)


def test_segments_touching_face_not_blocked(backend):
    box = np.array([[0.0, 1.0, 0.0, 1.0, 0.0, 1.0]])
    p0 = np.array([[-1.0, 0.5, 0.5], [-1.0, 0.5, 0.5], [-1.0, 1.0, 0.5], [-1, 0.5, 0.5]])
    p1 = np.array([[0.0, 0.5, 0.5], [2.0, 0.5, 0.5], [2.0, 1.0, 0.5], [0.5, 0.5, 0.5]])
    assert kernels.segments_blocked(p0, p1, box).tolist() == [0, 1, 0, 1]


def test_empty_inputs(backend):
    assert kernels.segments_blocked(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros((1, 6))).size == 0
    hg, hh, hn = kernels.build_histogram(np.zeros((5, 2), np.uint8), np.zeros(0, np.int64), np.ones(5), np.ones(5), 4)
    assert hn.sum() == 0


@needs_cython
@given(st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_segments_backends_identical(seed):
    rng = np.random.default_rng(seed)
    boxes = random_boxes(rng, 5)
    p0, p1 = rng.uniform(-25, 25, (200, 3)), rng.uniform(-25, 25, (200, 3))
    assert np.array_equal(kernels._ckernels.segments_blocked(p0, p1, boxes), _pykernels.segments_blocked(p0, p1, boxes))


def test_histogram_matches_loop(backend, rng):
    binned = rng.integers(0, 7, (300, 4)).astype(np.uint8)
    rows = np.sort(rng.choice(300, 120, replace=False)).astype(np.int64)
    g, h = rng.normal(size=300), rng.uniform(0, 1, 300)
    hg, hh, hn = kernels.build_histogram(binned, rows, g, h, 8)
    eg, eh, en = np.zeros((4, 8)), np.zeros((4, 8)), np.zeros((4, 8), int)
    for r in rows:
        for f in range(4):
            eg[f, binned[r, f]] += g[r]
            eh[f, binned[r, f]] += h[r]
            en[f, binned[r, f]] += 1
    assert np.array_equal(hn, en)
    np.testing.assert_allclose(hg, eg, rtol=0, atol=1e-12)
    np.testing.assert_allclose(hh, eh, rtol=0, atol=1e-12)


@needs_cython
def test_histogram_backends_identical(rng):
    binned = rng.integers(0, 64, (5000, 6)).astype(np.uint8)
    rows = np.arange(0, 5000, 3, dtype=np.int64)
    g, h = rng.normal(size=5000), rng.uniform(0, 1, 5000)
    a = kernels._ckernels.build_histogram(binned, rows, g, h, 64)
    b = _pykernels.build_histogram(binned, rows, g, h, 64)
    for x, y in zip(a, b):
        assert np.array_equal(x, y)


def _forest_arrays():
    # tree 0: x0 <= 0.5 ? -1 : (x1 <= 2 ? 2 : 3); tree 1: single leaf 0.25
    feature = np.array([0, -1, 1, -1, -1, -1], np.int32)
    threshold = np.array([0.5, 0, 2.0, 0, 0, 0])
    left = np.array([1, -1, 3, -1, -1, -1], np.int32)
    right = np.array([2, -1, 4, -1, -1, -1], np.int32)
    value = np.array([0, -1.0, 0, 2.0, 3.0, 0.25])
    return feature, threshold, left, right, value, np.array([0, 5], np.int64)


def test_predict_forest_hand_tree(backend):
    X = np.array([[0.0, 0.0], [0.5, 9.0], [1.0, 2.0], [1.0, 2.1]])
    out = kernels.predict_forest(X, *_forest_arrays())
    assert out.tolist() == [-0.75, -0.75, 2.25, 3.25]


@needs_cython
def test_predict_forest_backends_identical(rng):
    from mimo_poison.detector import GbdtParams, train_gbdt
    X = rng.normal(size=(2000, 5))
    y = (X[:, 0] * X[:, 1] > 0).astype(int)
    m = train_gbdt(X, y, GbdtParams(n_estimators=20, max_depth=4, num_leaves=10))
    (f, t, l, r, v), roots = m._flat()
    a = kernels._ckernels.predict_forest(X, f, t, l, r, v, roots)
    b = _pykernels.predict_forest(X, f, t, l, r, v, roots)
    assert np.array_equal(a, b)


@needs_cython
@pytest.mark.parametrize("order", [1, 2, 3])
def test_reflection_mask_backends_identical(order):
    from mimo_poison.channel import _image_levels, _reflectors
    from conftest import five_building_scene
    scene = five_building_scene(max_reflections=order, nx=15, ny=15)
    level = _image_levels(scene, order, _reflectors(scene))[order - 1]
    users = scene.user_grid.points(scene.user_height)
    args = (users, level.images, level.axis.astype(np.int32), level.coord, level.sign, level.lo, level.hi,
            np.asarray(scene.bs_position, float))
    a = kernels._ckernels.reflection_mask(*[np.ascontiguousarray(x) for x in args])
    b = _pykernels.reflection_mask(*args)
    assert a.sum() > 0
    assert np.array_equal(a, b)


def test_use_backend_rejects_unknown():
    with pytest.raises(ValueError):
        kernels.use_backend("fortran")
