"""Pixel-level primitives: filtering, CLAHE, binary morphology, exact EDT,
connected components and bilinear sampling.

Images are plain 2-D numpy arrays: ``uint8`` for gray images, ``uint8``
(or ``bool``) holding {0, 1} for binary masks. Row index is ``y``, column
index is ``x``. All filters replicate edge pixels at the border.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from . import _backend
from .errors import InvalidParameterError, OutOfRangeError, ShapeError


def as_gray(img):
    arr = np.asarray(img)
    if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
        raise ShapeError(f"expected a non-empty 2-D gray image, got shape {arr.shape}")
    if arr.dtype != np.uint8:
        arr = np.clip(np.rint(arr), 0, 255).astype(np.uint8)
    return np.ascontiguousarray(arr)


def as_mask(mask):
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise ShapeError(f"expected a 2-D mask, got shape {arr.shape}")
    return np.ascontiguousarray(arr != 0, dtype=np.uint8)


def _check_odd(size, name, minimum=1):
    if int(size) != size or size < minimum or size % 2 == 0:
        raise InvalidParameterError(f"{name} must be an odd integer >= {minimum}, got {size}")
    return int(size)


def median_filter(img, size=5):
    """Median of each ``size`` x ``size`` neighborhood."""
    size = _check_odd(size, "median size", minimum=3)
    img = as_gray(img)
    r = size // 2
    padded = np.ascontiguousarray(np.pad(img, r, mode="edge"))
    return _backend.kernels.median_u8(padded, size)


def gaussian_sigma(size):
    """Sigma implied by an odd kernel size, following the usual toolkit rule."""
    return 0.3 * ((size - 1) / 2 - 1) + 0.8


def gaussian_kernel(size):
    size = _check_odd(size, "gaussian size")
    sigma = gaussian_sigma(size)
    x = np.arange(size, dtype=np.float64) - size // 2
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def _separable(img, kernel):
    r = kernel.shape[0] // 2
    work = np.ascontiguousarray(np.pad(img.astype(np.float64), r, mode="edge"))
    conv = _backend.kernels.convolve_rows
    rows = conv(work, kernel)  # (H + 2r, W)
    return conv(np.ascontiguousarray(rows.T), kernel).T


def gaussian_blur(img, size=55):
    """Separable Gaussian blur, rounded back to 8 bits."""
    kernel = gaussian_kernel(size)
    img = as_gray(img)
    out = _separable(img, kernel)
    return np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)


def _tile_edges(n, grid):
    return [(k * n) // grid for k in range(grid + 1)]


def _blend_weights(n, edges):
    """Lower tile index and upper-tile weight for every coordinate in [0, n)."""
    centers = np.array([(edges[i] + edges[i + 1] - 1) / 2.0 for i in range(len(edges) - 1)])
    pos = np.arange(n, dtype=np.float64)
    if len(centers) == 1:
        return np.zeros(n, dtype=np.intp), np.zeros(n)
    lo = np.clip(np.searchsorted(centers, pos, side="right") - 1, 0, len(centers) - 2)
    w = (pos - centers[lo]) / (centers[lo + 1] - centers[lo])
    return lo, np.clip(w, 0.0, 1.0)


def clahe_luts(img, grid=9, clip_limit=3.0):
    """Per-tile equalization look-up tables, shape (grid, grid, 256), real-valued."""
    img = as_gray(img)
    H, W = img.shape
    if grid < 1 or grid > H or grid > W:
        raise InvalidParameterError(f"CLAHE grid {grid} does not fit a {W}x{H} image")
    if clip_limit <= 0:
        raise InvalidParameterError("clip_limit must be positive")
    ey, ex = _tile_edges(H, grid), _tile_edges(W, grid)
    luts = np.empty((grid, grid, 256), dtype=np.float64)
    for i in range(grid):
        for j in range(grid):
            tile = img[ey[i]:ey[i + 1], ex[j]:ex[j + 1]]
            area = tile.size
            hist = np.bincount(tile.ravel(), minlength=256).astype(np.float64)
            clip = clip_limit * area / 256.0
            excess = np.maximum(hist - clip, 0.0).sum()
            hist = np.minimum(hist, clip) + excess / 256.0
            luts[i, j] = np.cumsum(hist) * (255.0 / area)
    return luts


def clahe(img, grid=9, clip_limit=3.0):
    """Contrast-limited adaptive histogram equalization.

    The image is split into ``grid`` x ``grid`` tiles (edge tiles absorb the
    remainder). Each tile histogram is clipped at ``clip_limit`` times the
    uniform bin height, the clipped mass is spread evenly over all 256 bins,
    and each pixel is mapped by bilinear blending of the four nearest tile
    mappings.
    """
    img = as_gray(img)
    luts = clahe_luts(img, grid, clip_limit)
    H, W = img.shape
    ly, wy = _blend_weights(H, _tile_edges(H, grid))
    lx, wx = _blend_weights(W, _tile_edges(W, grid))
    hy = np.minimum(ly + 1, grid - 1)
    hx = np.minimum(lx + 1, grid - 1)
    Y0, X0 = ly[:, None], lx[None, :]
    Y1, X1 = hy[:, None], hx[None, :]
    WY, WX = wy[:, None], wx[None, :]
    top = (1 - WX) * luts[Y0, X0, img] + WX * luts[Y0, X1, img]
    bottom = (1 - WX) * luts[Y1, X0, img] + WX * luts[Y1, X1, img]
    out = (1 - WY) * top + WY * bottom
    return np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)


@dataclass(frozen=True)
class StructuringElement:
    """Set of (dx, dy) offsets, always containing the origin."""

    kind: str
    params: tuple
    offsets: tuple = field(repr=False)

    @classmethod
    def ellipse(cls, a, b):
        a, b = int(a), int(b)
        if a < 0 or b < 0:
            raise InvalidParameterError("ellipse semi-axes must be non-negative")
        offs = [
            (dx, dy)
            for dy in range(-b, b + 1)
            for dx in range(-a, a + 1)
            if dx * dx * b * b + dy * dy * a * a <= a * a * b * b
        ]
        return cls("ellipse", (a, b), tuple(offs))

    @classmethod
    def line(cls, length, angle):
        """Digital line of ``length`` pixels through the origin.

        ``angle`` is in degrees, counter-clockwise from +x with y pointing
        down. The dominant axis advances one pixel per step and the minor
        axis is rounded half away from zero, so the set is point-symmetric.
        """
        length = _check_odd(length, "line length")
        half = length // 2
        rad = math.radians(angle)
        c, s = math.cos(rad), -math.sin(rad)
        offs = []
        for t in range(-half, half + 1):
            if abs(c) >= abs(s):
                dx = t if c >= 0 else -t
                dy = _round_away(t * s / abs(c))
            else:
                dy = t if s >= 0 else -t
                dx = _round_away(t * c / abs(s))
            offs.append((dx, dy))
        return cls("line", (length, angle), tuple(offs))

    @classmethod
    def point(cls):
        return cls("point", (), ((0, 0),))

    @property
    def radius(self):
        return max(max(abs(dx), abs(dy)) for dx, dy in self.offsets)


def _round_away(v):
    v = round(v, 9)
    return int(math.copysign(math.floor(abs(v) + 0.5), v))


def _shifted(mask, dx, dy):
    """out[y, x] = mask[y + dy, x + dx], zero outside."""
    H, W = mask.shape
    out = np.zeros_like(mask)
    ys, yd = (slice(dy, H), slice(0, H - dy)) if dy >= 0 else (slice(0, H + dy), slice(-dy, H))
    xs, xd = (slice(dx, W), slice(0, W - dx)) if dx >= 0 else (slice(0, W + dx), slice(-dx, W))
    out[yd, xd] = mask[ys, xs]
    return out


def dilate(mask, se):
    m = as_mask(mask).astype(bool)
    out = np.zeros_like(m)
    for dx, dy in se.offsets:
        out |= _shifted(m, -dx, -dy)
    return out.astype(np.uint8)


def erode(mask, se):
    """Keep a pixel iff every offset lands on foreground; outside counts as 0."""
    m = as_mask(mask).astype(bool)
    out = np.ones_like(m)
    for dx, dy in se.offsets:
        out &= _shifted(m, dx, dy)
    return out.astype(np.uint8)


def close(mask, se):
    m = as_mask(mask)
    r = se.radius
    padded = np.pad(m, r)
    closed = erode(dilate(padded, se), se)
    return closed[r:r + m.shape[0], r:r + m.shape[1]] if r else closed


def morphology(mask, op, se):
    if not se.offsets:
        raise InvalidParameterError("structuring element is empty")
    ops = {"erode": erode, "dilate": dilate, "close": close}
    if op not in ops:
        raise InvalidParameterError(f"unknown morphology op {op!r}")
    return ops[op](mask, se)


def distance_transform(mask):
    """Exact Euclidean distance from each foreground pixel to the nearest
    background pixel; pixels outside the image count as background."""
    m = as_mask(mask)
    padded = np.ascontiguousarray(np.pad(m, 1))
    d2 = _backend.kernels.edt_sq(padded)
    return np.sqrt(d2[1:-1, 1:-1])


@dataclass
class Components:
    labels: np.ndarray
    areas: np.ndarray  # areas[k - 1] is the pixel count of label k

    @property
    def count(self):
        return len(self.areas)


def connected_components(mask, connectivity=8):
    if connectivity not in (4, 8):
        raise InvalidParameterError("connectivity must be 4 or 8")
    labels, n = _backend.kernels.label(as_mask(mask), connectivity)
    areas = np.bincount(labels.ravel(), minlength=n + 1)[1:]
    return Components(labels, areas)


def remove_small_components(mask, min_area, connectivity=8):
    comps = connected_components(mask, connectivity)
    keep = np.concatenate([[False], comps.areas >= min_area])
    return keep[comps.labels].astype(np.uint8)


def bilinear_sample(img, x, y):
    """Interpolated intensity at real coordinates (x, y)."""
    img = np.asarray(img)
    H, W = img.shape
    if not (0 <= x <= W - 1 and 0 <= y <= H - 1):
        raise OutOfRangeError(f"({x}, {y}) lies outside a {W}x{H} image")
    vals, _ = bilinear_sample_many(img, np.array([x], float), np.array([y], float))
    return float(vals[0])


def bilinear_sample_many(img, xs, ys):
    """Vectorized bilinear sampling.

    Returns ``(values, valid)``; samples outside ``[0, W-1] x [0, H-1]`` are
    NaN and flagged invalid.
    """
    img = np.asarray(img, dtype=np.float64)
    H, W = img.shape
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    eps = 1e-9
    valid = (xs >= -eps) & (xs <= W - 1 + eps) & (ys >= -eps) & (ys <= H - 1 + eps)
    xc = np.clip(xs, 0, W - 1)
    yc = np.clip(ys, 0, H - 1)
    x0 = np.minimum(np.floor(xc).astype(np.intp), max(W - 2, 0))
    y0 = np.minimum(np.floor(yc).astype(np.intp), max(H - 2, 0))
    x1 = np.minimum(x0 + 1, W - 1)
    y1 = np.minimum(y0 + 1, H - 1)
    fx = xc - x0
    fy = yc - y0
    top = img[y0, x0] * (1 - fx) + img[y0, x1] * fx
    bottom = img[y1, x0] * (1 - fx) + img[y1, x1] * fx
    vals = top * (1 - fy) + bottom * fy
    return np.where(valid, vals, np.nan), valid
