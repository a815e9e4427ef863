# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops.

Every function here has a numpy twin in ``_pykernels`` with the same
signature and bit-identical output; ``_backend`` picks one at import.
Inputs are expected to be pre-padded by the caller (see ``raster``).
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY

cnp.import_array()


def median_u8(const cnp.uint8_t[:, ::1] padded, int size):
    cdef Py_ssize_t r = size // 2
    cdef Py_ssize_t H = padded.shape[0] - 2 * r
    cdef Py_ssize_t W = padded.shape[1] - 2 * r
    cdef Py_ssize_t n = size * size
    cdef Py_ssize_t half = n // 2
    out_arr = np.empty((H, W), dtype=np.uint8)
    cdef cnp.uint8_t[:, ::1] out = out_arr
    cdef int hist[256]
    cdef Py_ssize_t y, x, dy, k, acc
    cdef int v
    for y in range(H):
        # running histogram along the row (Huang)
        for k in range(256):
            hist[k] = 0
        for dy in range(size):
            for k in range(size):
                hist[padded[y + dy, k]] += 1
        for x in range(W):
            if x > 0:
                for dy in range(size):
                    hist[padded[y + dy, x - 1]] -= 1
                    hist[padded[y + dy, x + size - 1]] += 1
            acc = 0
            v = 0
            while True:
                acc += hist[v]
                if acc > half:
                    break
                v += 1
            out[y, x] = <cnp.uint8_t>v
    return out_arr


def convolve_rows(const double[:, ::1] padded, const double[::1] kernel):
    cdef Py_ssize_t K = kernel.shape[0]
    cdef Py_ssize_t H = padded.shape[0]
    cdef Py_ssize_t W = padded.shape[1] - K + 1
    out_arr = np.empty((H, W), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t y, x, k
    cdef double s
    for y in range(H):
        for x in range(W):
            s = 0.0
            for k in range(K):
                s += kernel[k] * padded[y, x + k]
            out[y, x] = s
    return out_arr


cdef inline int _zs_flag(cnp.uint8_t[:, ::1] im, Py_ssize_t y, Py_ssize_t x, int step) nogil:
    cdef int p2 = im[y - 1, x]
    cdef int p3 = im[y - 1, x + 1]
    cdef int p4 = im[y, x + 1]
    cdef int p5 = im[y + 1, x + 1]
    cdef int p6 = im[y + 1, x]
    cdef int p7 = im[y + 1, x - 1]
    cdef int p8 = im[y, x - 1]
    cdef int p9 = im[y - 1, x - 1]
    cdef int b = p2 + p3 + p4 + p5 + p6 + p7 + p8 + p9
    if b < 2 or b > 6:
        return 0
    cdef int a = ((p2 == 0 and p3 == 1) + (p3 == 0 and p4 == 1) + (p4 == 0 and p5 == 1)
                  + (p5 == 0 and p6 == 1) + (p6 == 0 and p7 == 1) + (p7 == 0 and p8 == 1)
                  + (p8 == 0 and p9 == 1) + (p9 == 0 and p2 == 1))
    if a != 1:
        return 0
    if step == 0:
        return (p2 * p4 * p6 == 0) and (p4 * p6 * p8 == 0)
    return (p2 * p4 * p8 == 0) and (p2 * p6 * p8 == 0)


def zhang_suen(cnp.uint8_t[:, ::1] im):
    """Thin ``im`` in place. ``im`` must carry a one-pixel zero border."""
    cdef Py_ssize_t H = im.shape[0]
    cdef Py_ssize_t W = im.shape[1]
    flags_arr = np.zeros((H, W), dtype=np.uint8)
    cdef cnp.uint8_t[:, ::1] flags = flags_arr
    cdef Py_ssize_t y, x
    cdef int step, changed = 1, removed
    while changed:
        changed = 0
        for step in range(2):
            removed = 0
            for y in range(1, H - 1):
                for x in range(1, W - 1):
                    if im[y, x] and _zs_flag(im, y, x, step):
                        flags[y, x] = 1
                        removed = 1
            if removed:
                changed = 1
                for y in range(1, H - 1):
                    for x in range(1, W - 1):
                        if flags[y, x]:
                            im[y, x] = 0
                            flags[y, x] = 0
    return np.asarray(im)


cdef void _envelope(double* f, double* d, Py_ssize_t n, Py_ssize_t* v, double* z) nogil:
    # Felzenszwalb & Huttenlocher lower envelope of parabolas
    cdef Py_ssize_t k = 0, q
    cdef double s
    v[0] = 0
    z[0] = -INFINITY
    z[1] = INFINITY
    for q in range(1, n):
        s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k])
        while s <= z[k]:
            k -= 1
            s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k])
        k += 1
        v[k] = q
        z[k] = s
        z[k + 1] = INFINITY
    k = 0
    for q in range(n):
        while z[k + 1] < q:
            k += 1
        d[q] = (q - v[k]) * (q - v[k]) + f[v[k]]


def edt_sq(const cnp.uint8_t[:, ::1] mask):
    """Squared Euclidean distance from every pixel to the nearest 0 pixel."""
    cdef Py_ssize_t H = mask.shape[0]
    cdef Py_ssize_t W = mask.shape[1]
    cdef Py_ssize_t n = H if H > W else W
    cdef double big = 1e20
    out_arr = np.empty((H, W), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    f_arr = np.empty(n, dtype=np.float64)
    d_arr = np.empty(n, dtype=np.float64)
    z_arr = np.empty(n + 1, dtype=np.float64)
    v_arr = np.empty(n, dtype=np.intp)
    cdef double[::1] f = f_arr
    cdef double[::1] d = d_arr
    cdef double[::1] z = z_arr
    cdef Py_ssize_t[::1] v = v_arr
    cdef Py_ssize_t y, x
    for x in range(W):
        for y in range(H):
            f[y] = big if mask[y, x] else 0.0
        _envelope(&f[0], &d[0], H, &v[0], &z[0])
        for y in range(H):
            out[y, x] = d[y]
    for y in range(H):
        for x in range(W):
            f[x] = out[y, x]
        _envelope(&f[0], &d[0], W, &v[0], &z[0])
        for x in range(W):
            out[y, x] = d[x]
    return out_arr


cdef Py_ssize_t _find(Py_ssize_t[::1] parent, Py_ssize_t a) nogil:
    cdef Py_ssize_t root = a, nxt
    while parent[root] != root:
        root = parent[root]
    while parent[a] != root:
        nxt = parent[a]
        parent[a] = root
        a = nxt
    return root


cdef inline void _union(Py_ssize_t[::1] parent, Py_ssize_t a, Py_ssize_t b) nogil:
    a = _find(parent, a)
    b = _find(parent, b)
    if a < b:
        parent[b] = a
    elif b < a:
        parent[a] = b


def label(const cnp.uint8_t[:, ::1] mask, int connectivity):
    """Two-pass union-find labeling; labels follow raster order of first pixel."""
    cdef Py_ssize_t H = mask.shape[0]
    cdef Py_ssize_t W = mask.shape[1]
    labels_arr = np.zeros((H, W), dtype=np.int32)
    cdef cnp.int32_t[:, ::1] labels = labels_arr
    parent_arr = np.arange(H * W, dtype=np.intp)
    cdef Py_ssize_t[::1] parent = parent_arr
    remap_arr = np.zeros(H * W, dtype=np.int32)
    cdef cnp.int32_t[::1] remap = remap_arr
    cdef Py_ssize_t y, x, i, r
    cdef int eight = connectivity == 8
    cdef cnp.int32_t count = 0
    for y in range(H):
        for x in range(W):
            if not mask[y, x]:
                continue
            i = y * W + x
            if x > 0 and mask[y, x - 1]:
                _union(parent, i, i - 1)
            if y > 0:
                if mask[y - 1, x]:
                    _union(parent, i, i - W)
                if eight:
                    if x > 0 and mask[y - 1, x - 1]:
                        _union(parent, i, i - W - 1)
                    if x < W - 1 and mask[y - 1, x + 1]:
                        _union(parent, i, i - W + 1)
    for y in range(H):
        for x in range(W):
            if not mask[y, x]:
                continue
            r = _find(parent, y * W + x)
            if remap[r] == 0:
                count += 1
                remap[r] = count
            labels[y, x] = remap[r]
    return labels_arr, int(count)
