"""Pure-numpy versions of the compiled kernels in ``_ckernels.pyx``.

Both implementations accumulate in the same order, so they agree bit-for-bit.
"""

import numpy as np

BLOCK_TOL = 1e-9
PARALLEL_EPS = 1e-15


def segments_blocked(p0, p1, boxes):
    p0 = np.asarray(p0, dtype=np.float64)
    p1 = np.asarray(p1, dtype=np.float64)
    boxes = np.asarray(boxes, dtype=np.float64)
    n = p0.shape[0]
    if n == 0 or boxes.shape[0] == 0:
        return np.zeros(n, dtype=np.uint8)
    t_in = np.zeros((n, boxes.shape[0]))
    t_out = np.ones((n, boxes.shape[0]))
    miss = np.zeros((n, boxes.shape[0]), dtype=bool)
    for a in range(3):
        o = p0[:, a][:, None]
        d = (p1[:, a] - p0[:, a])[:, None]
        lo = boxes[:, 2 * a][None, :]
        hi = boxes[:, 2 * a + 1][None, :]
        parallel = (d > -PARALLEL_EPS) & (d < PARALLEL_EPS)
        miss |= parallel & ((o <= lo) | (o >= hi))
        with np.errstate(divide="ignore", invalid="ignore"):
            ta = (lo - o) / d
            tb = (hi - o) / d
        lo_t = np.where(parallel, -np.inf, np.minimum(ta, tb))
        hi_t = np.where(parallel, np.inf, np.maximum(ta, tb))
        t_in = np.maximum(t_in, lo_t)
        t_out = np.minimum(t_out, hi_t)
    hit = ~miss & (t_out - t_in > BLOCK_TOL)
    return hit.any(axis=1).astype(np.uint8)


def build_histogram(binned, rows, grad, hess, n_bins):
    n_features = binned.shape[1]
    hg = np.zeros((n_features, n_bins))
    hh = np.zeros((n_features, n_bins))
    hn = np.zeros((n_features, n_bins), dtype=np.int64)
    sub = binned[rows]
    g = grad[rows]
    h = hess[rows]
    for f in range(n_features):
        col = sub[:, f]
        hg[f] = np.bincount(col, weights=g, minlength=n_bins)
        hh[f] = np.bincount(col, weights=h, minlength=n_bins)
        hn[f] = np.bincount(col, minlength=n_bins)
    return hg, hh, hn


def predict_forest(X, feature, threshold, left, right, value, roots):
    n = X.shape[0]
    out = np.zeros(n)
    rows = np.arange(n)
    for root in roots:
        node = np.full(n, root, dtype=np.int64)
        active = feature[node] >= 0
        while active.any():
            idx = node[active]
            f = feature[idx]
            go_left = X[rows[active], f] <= threshold[idx]
            node[active] = np.where(go_left, left[idx], right[idx])
            active = feature[node] >= 0
        out += value[node]
    return out


def reflection_mask(users, images, axis, coord, sign, lo, hi, bs, chunk_pairs=1_000_000):
    n_seq, k = axis.shape
    m = users.shape[0]
    mask = np.zeros((n_seq, m), dtype=np.uint8)
    if n_seq == 0 or m == 0:
        return mask
    per_chunk = max(1, chunk_pairs // m)
    for s0 in range(0, n_seq, per_chunk):
        s1 = min(n_seq, s0 + per_chunk)
        s_idx = np.repeat(np.arange(s0, s1), m)
        m_idx = np.tile(np.arange(m), s1 - s0)
        q = users[m_idx]
        pts = np.empty((s_idx.size, k, 3))
        for j in range(k - 1, -1, -1):
            rows = np.arange(s_idx.size)
            a = axis[s_idx, j]
            c = coord[s_idx, j]
            ok = (q[rows, a] - c) * sign[s_idx, j] > 0
            img = images[s_idx, j]
            ia = img[rows, a]
            with np.errstate(divide="ignore", invalid="ignore"):
                t = (c - ia) / (q[rows, a] - ia)
                pt = img + t[:, None] * (q - img)
            ok &= (t > 0) & (t < 1)
            pt[rows, a] = c
            ok &= np.all((pt >= lo[s_idx, j]) & (pt <= hi[s_idx, j]), axis=1)
            s_idx, m_idx, q, pts = s_idx[ok], m_idx[ok], pt[ok], pts[ok]
            pts[:, j] = q
            if s_idx.size == 0:
                break
        if s_idx.size == 0:
            continue
        ok = np.ones(s_idx.size, dtype=bool)
        rows = np.arange(s_idx.size)
        for j in range(k):
            prev = np.broadcast_to(bs, (s_idx.size, 3)) if j == 0 else pts[:, j - 1]
            a = axis[s_idx, j]
            ok &= (prev[rows, a] - coord[s_idx, j]) * sign[s_idx, j] > 0
        mask[s_idx[ok], m_idx[ok]] = 1
    return mask
