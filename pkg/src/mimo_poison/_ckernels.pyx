# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops. Semantics are mirrored exactly by ``_pykernels``."""

import numpy as np
cimport numpy as cnp

cnp.import_array()

cdef double BLOCK_TOL = 1e-9
cdef double PARALLEL_EPS = 1e-15


def segments_blocked(const double[:, ::1] p0, const double[:, ::1] p1, const double[:, ::1] boxes):
    cdef Py_ssize_t n = p0.shape[0]
    cdef Py_ssize_t nb = boxes.shape[0]
    cdef Py_ssize_t i, b, a
    cdef double t_in, t_out, d, lo, hi, ta, tb, tmp, o
    cdef bint miss
    out_arr = np.zeros(n, dtype=np.uint8)
    cdef unsigned char[::1] out = out_arr
    for i in range(n):
        for b in range(nb):
            t_in = 0.0
            t_out = 1.0
            miss = False
            for a in range(3):
                o = p0[i, a]
                d = p1[i, a] - o
                lo = boxes[b, 2 * a]
                hi = boxes[b, 2 * a + 1]
                if -PARALLEL_EPS < d < PARALLEL_EPS:
                    if o <= lo or o >= hi:
                        miss = True
                        break
                else:
                    ta = (lo - o) / d
                    tb = (hi - o) / d
                    if ta > tb:
                        tmp = ta
                        ta = tb
                        tb = tmp
                    if ta > t_in:
                        t_in = ta
                    if tb < t_out:
                        t_out = tb
            if not miss and t_out - t_in > BLOCK_TOL:
                out[i] = 1
                break
    return out_arr


def build_histogram(const unsigned char[:, ::1] binned, const cnp.int64_t[::1] rows,
                    const double[::1] grad, const double[::1] hess, int n_bins):
    cdef Py_ssize_t n_features = binned.shape[1]
    cdef Py_ssize_t k, f, r
    cdef unsigned char bin_idx
    hg_arr = np.zeros((n_features, n_bins), dtype=np.float64)
    hh_arr = np.zeros((n_features, n_bins), dtype=np.float64)
    hn_arr = np.zeros((n_features, n_bins), dtype=np.int64)
    cdef double[:, ::1] hg = hg_arr
    cdef double[:, ::1] hh = hh_arr
    cdef cnp.int64_t[:, ::1] hn = hn_arr
    cdef double gr, hr
    for k in range(rows.shape[0]):
        r = rows[k]
        gr = grad[r]
        hr = hess[r]
        for f in range(n_features):
            bin_idx = binned[r, f]
            hg[f, bin_idx] += gr
            hh[f, bin_idx] += hr
            hn[f, bin_idx] += 1
    return hg_arr, hh_arr, hn_arr


def predict_forest(const double[:, ::1] X, const int[::1] feature, const double[::1] threshold,
                   const int[::1] left, const int[::1] right, const double[::1] value,
                   const cnp.int64_t[::1] roots):
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t n_trees = roots.shape[0]
    cdef Py_ssize_t i, t
    cdef cnp.int64_t node
    out_arr = np.zeros(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    for t in range(n_trees):
        for i in range(n):
            node = roots[t]
            while feature[node] >= 0:
                if X[i, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            out[i] += value[node]
    return out_arr


def reflection_mask(const double[:, ::1] users, const double[:, :, ::1] images, const int[:, ::1] axis,
                    const double[:, ::1] coord, const double[:, ::1] sign,
                    const double[:, :, ::1] lo, const double[:, :, ::1] hi, const double[::1] bs):
    """1 where the (sequence, user) pair has geometrically valid reflection points.

    Occlusion is not checked here.
    """
    cdef Py_ssize_t n_seq = images.shape[0]
    cdef Py_ssize_t k = images.shape[1]
    cdef Py_ssize_t m = users.shape[0]
    cdef Py_ssize_t s, u, j, b, a
    cdef double c, sg, t, ia
    cdef double q[3]
    cdef double prev[3]
    cdef double pts[4][3]
    cdef bint ok
    mask_arr = np.zeros((n_seq, m), dtype=np.uint8)
    cdef unsigned char[:, ::1] mask = mask_arr
    for s in range(n_seq):
        for u in range(m):
            q[0] = users[u, 0]
            q[1] = users[u, 1]
            q[2] = users[u, 2]
            ok = True
            for j in range(k - 1, -1, -1):
                a = axis[s, j]
                c = coord[s, j]
                sg = sign[s, j]
                if (q[a] - c) * sg <= 0:
                    ok = False
                    break
                ia = images[s, j, a]
                t = (c - ia) / (q[a] - ia)
                if not (t > 0 and t < 1):
                    ok = False
                    break
                for b in range(3):
                    if b == a:
                        pts[j][b] = c
                    else:
                        pts[j][b] = images[s, j, b] + t * (q[b] - images[s, j, b])
                    if pts[j][b] < lo[s, j, b] or pts[j][b] > hi[s, j, b]:
                        ok = False
                if not ok:
                    break
                q[0] = pts[j][0]
                q[1] = pts[j][1]
                q[2] = pts[j][2]
            if ok:
                for j in range(k):
                    if j == 0:
                        prev[0] = bs[0]
                        prev[1] = bs[1]
                        prev[2] = bs[2]
                    else:
                        prev[0] = pts[j - 1][0]
                        prev[1] = pts[j - 1][1]
                        prev[2] = pts[j - 1][2]
                    a = axis[s, j]
                    if (prev[a] - coord[s, j]) * sign[s, j] <= 0:
                        ok = False
                        break
            if ok:
                mask[s, u] = 1
    return mask_arr
