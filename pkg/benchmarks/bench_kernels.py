"""Time the compiled and numpy kernel backends on representative workloads.

    python benchmarks/bench_kernels.py [--repeat 3]

Each kernel runs on both backends with identical inputs; the script also
checks that the two outputs are bit-identical.
"""

import argparse
import time

import numpy as np

from mimo_poison import kernels
from mimo_poison.channel import _image_levels, _reflectors, default_urban_scene
from mimo_poison.detector.gbdt import GbdtParams, train_gbdt


def _segments(rng):
    boxes = np.column_stack([
        rng.uniform(-200, 150, 60), np.zeros(60), rng.uniform(-200, 150, 60), np.zeros(60),
        np.zeros(60), rng.uniform(8, 40, 60),
    ])
    boxes[:, 1] = boxes[:, 0] + rng.uniform(10, 30, 60)
    boxes[:, 3] = boxes[:, 2] + rng.uniform(10, 30, 60)
    p0 = np.tile([0.0, 0.0, 15.0], (50_000, 1))
    p1 = np.column_stack([rng.uniform(-210, 210, (50_000, 2)), np.full(50_000, 2.0)])
    return (p0, p1, boxes)


def _histogram(rng):
    n, f = 200_000, 14
    binned = rng.integers(0, 64, (n, f)).astype(np.uint8)
    rows = np.arange(n, dtype=np.int64)
    return (binned, rows, rng.normal(size=n), rng.uniform(0.01, 0.25, n), 64)


def _forest(rng):
    X = rng.normal(size=(20_000, 14))
    y = (X[:, 0] + X[:, 1] ** 2 > 1).astype(int)
    model = train_gbdt(X, y, GbdtParams(n_estimators=200, max_depth=8, num_leaves=31))
    (feature, threshold, left, right, value), roots = model._flat()
    return (X, feature, threshold, left, right, value, roots)


def _reflection(rng):
    scene = default_urban_scene(nx=60, ny=60).resolved()
    refl = _reflectors(scene)
    level = _image_levels(scene, 2, refl)[1]  # second-order images
    users = scene.user_grid.points(scene.user_height)
    sel = np.arange(min(2000, level.images.shape[0]))
    return (users, level.images[sel], level.axis[sel], level.coord[sel], level.sign[sel],
            level.lo[sel], level.hi[sel], np.asarray(scene.bs_position, dtype=np.float64))


CASES = {
    "segments_blocked": (_segments, kernels.segments_blocked),
    "build_histogram": (_histogram, kernels.build_histogram),
    "predict_forest": (_forest, kernels.predict_forest),
    "reflection_mask": (_reflection, kernels.reflection_mask),
}


def _time(fn, args, repeat):
    best, out = np.inf, None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def _same(a, b):
    if isinstance(a, tuple):
        return all(np.array_equal(x, y) for x, y in zip(a, b))
    return np.array_equal(a, b)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if kernels._ckernels is None:
        print("compiled kernels not built; only the numpy backend is available")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<18} {'python s':>10} {'cython s':>10} {'speedup':>8}  identical")
    for name, (make, fn) in CASES.items():
        inputs = make(rng)
        kernels.use_backend("python")
        t_py, out_py = _time(fn, inputs, args.repeat)
        if kernels._ckernels is None:
            print(f"{name:<18} {t_py:>10.4f} {'-':>10} {'-':>8}  -")
            continue
        kernels.use_backend("cython")
        t_cy, out_cy = _time(fn, inputs, args.repeat)
        print(f"{name:<18} {t_py:>10.4f} {t_cy:>10.4f} {t_py / t_cy:>8.1f}  {_same(out_py, out_cy)}")


if __name__ == "__main__":
    main()
