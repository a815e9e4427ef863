"""Pure numpy/Python versions of the compiled kernels in ``_ckernels``.

Same signatures, same padding conventions, same outputs. Used when the
extension is not built or when ``RETIPULSE_BACKEND=python`` is set.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def median_u8(padded, size):
    windows = sliding_window_view(padded, (size, size))
    flat = windows.reshape(windows.shape[0], windows.shape[1], size * size)
    half = (size * size) // 2
    return np.partition(flat, half, axis=2)[:, :, half].astype(np.uint8)


def convolve_rows(padded, kernel):
    K = kernel.shape[0]
    W = padded.shape[1] - K + 1
    out = np.zeros((padded.shape[0], W), dtype=np.float64)
    for k in range(K):
        out += kernel[k] * padded[:, k:k + W]
    return out


def _zs_flags(im, step):
    p2 = im[:-2, 1:-1]
    p3 = im[:-2, 2:]
    p4 = im[1:-1, 2:]
    p5 = im[2:, 2:]
    p6 = im[2:, 1:-1]
    p7 = im[2:, :-2]
    p8 = im[1:-1, :-2]
    p9 = im[:-2, :-2]
    ring = [p2, p3, p4, p5, p6, p7, p8, p9]
    b = sum(p.astype(np.int16) for p in ring)
    a = np.zeros_like(b)
    for cur, nxt in zip(ring, ring[1:] + ring[:1]):
        a += (cur == 0) & (nxt == 1)
    ok = (im[1:-1, 1:-1] == 1) & (b >= 2) & (b <= 6) & (a == 1)
    if step == 0:
        ok &= (p2 * p4 * p6 == 0) & (p4 * p6 * p8 == 0)
    else:
        ok &= (p2 * p4 * p8 == 0) & (p2 * p6 * p8 == 0)
    return ok


def zhang_suen(im):
    """Thin ``im`` in place. ``im`` must carry a one-pixel zero border."""
    changed = True
    while changed:
        changed = False
        for step in (0, 1):
            flags = _zs_flags(im, step)
            if flags.any():
                im[1:-1, 1:-1][flags] = 0
                changed = True
    return im


def edt_sq(mask):
    """Squared Euclidean distance from every pixel to the nearest 0 pixel."""
    H, W = mask.shape
    big = 1e20
    # vertical pass: distance to nearest zero in the same column
    idx = np.arange(H, dtype=np.float64)[:, None] * np.ones((1, W))
    zero = mask == 0
    above = np.where(zero, idx, -np.inf)
    above = np.maximum.accumulate(above, axis=0)
    below = np.where(zero, idx, np.inf)
    below = np.minimum.accumulate(below[::-1], axis=0)[::-1]
    g = np.minimum(idx - above, below - idx)
    g2 = np.where(np.isfinite(g), g * g, big)
    # horizontal pass: min over columns of (x - x')^2 + g2(x'), in row blocks
    xs = np.arange(W, dtype=np.float64)
    dx2 = (xs[:, None] - xs[None, :]) ** 2
    out = np.empty((H, W), dtype=np.float64)
    block = max(1, 2_000_000 // max(1, W * W))
    for y0 in range(0, H, block):
        rows = g2[y0:y0 + block]
        out[y0:y0 + block] = (rows[:, None, :] + dx2[None, :, :]).min(axis=2)
    return out


def label(mask, connectivity):
    """Union-find labeling; labels follow raster order of first pixel."""
    H, W = mask.shape
    labels = np.zeros((H, W), dtype=np.int32)
    ys, xs = np.nonzero(mask)
    if len(ys) == 0:
        return labels, 0
    index = -np.ones((H, W), dtype=np.int64)
    index[ys, xs] = np.arange(len(ys))
    parent = list(range(len(ys)))

    def find(a):
        root = a
        while parent[root] != root:
            root = parent[root]
        while parent[a] != root:
            parent[a], a = root, parent[a]
        return root

    if connectivity == 8:
        back = ((0, -1), (-1, -1), (-1, 0), (-1, 1))
    else:
        back = ((0, -1), (-1, 0))
    for i, (y, x) in enumerate(zip(ys.tolist(), xs.tolist())):
        for dy, dx in back:
            ny, nx = y + dy, x + dx
            if 0 <= ny and 0 <= nx < W:
                j = index[ny, nx]
                if j >= 0:
                    ri, rj = find(i), find(int(j))
                    if ri != rj:
                        parent[max(ri, rj)] = min(ri, rj)
    remap = {}
    out = np.empty(len(ys), dtype=np.int32)
    for i in range(len(ys)):
        r = find(i)
        if r not in remap:
            remap[r] = len(remap) + 1
        out[i] = remap[r]
    labels[ys, xs] = out
    return labels, len(remap)
