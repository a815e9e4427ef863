"""Vessel caliber along a selected centerline.

Intensities are sampled along normals to the centerline and stacked into
an image (one column per centerline point, center row on the centerline).
The stack is split into three intensity clusters, the darkest is taken as
vessel, the mask is repaired (central reflex fill, mirror symmetry, row
joining) and widths are counted per column.
"""

from dataclasses import dataclass
import math

import numpy as np

from . import raster
from .errors import DegeneratePathError, InvalidParameterError, LowContrastError
from .skeleton import select_nearest


@dataclass
class CaliperParams:
    normal_factor: float = 1.5
    tangent_window: int = 6
    kmeans_k: int = 3
    kmeans_tol: float = 0.5
    kmeans_max_iter: int = 50
    row_join: int = 20
    count_mode: str = "center"  # or "total": raw count of vessel pixels per column


@dataclass
class ProfileStack:
    values: np.ndarray  # (rows, columns), real intensities
    valid: np.ndarray  # per-cell flag, False where the sample fell outside the image
    column_valid: np.ndarray
    centers: np.ndarray  # (columns, 2) real (x, y)
    normals: np.ndarray  # (columns, 2) unit (dx, dy)

    @property
    def rows(self):
        return self.values.shape[0]

    @property
    def center_row(self):
        return (self.values.shape[0] - 1) // 2


@dataclass
class ClusterResult:
    mask: np.ndarray
    centroids: np.ndarray
    low_contrast: bool
    objective: list  # k-means objective after every assignment step


@dataclass
class VesselEstimate:
    path: object
    widths: np.ndarray
    stack: ProfileStack
    clustered: ClusterResult
    repaired: np.ndarray

    @property
    def mean_width(self):
        return float(np.mean(self.widths)) if len(self.widths) else 0.0


def tangent_at(points, i, window=6):
    """Tangent angle in [0, pi) at point ``i`` from an orthogonal
    least-squares line through ``window`` points centered on it."""
    pts = np.asarray(points, dtype=np.float64)
    n = len(pts)
    if n < 2:
        raise DegeneratePathError("a tangent needs at least two points")
    w = min(window, n)
    start = min(max(i - w // 2, 0), n - w)
    seg = pts[start:start + w]
    d = seg - seg.mean(axis=0)
    sxx = float((d[:, 0] ** 2).sum())
    syy = float((d[:, 1] ** 2).sum())
    sxy = float((d[:, 0] * d[:, 1]).sum())
    theta = 0.5 * math.atan2(2.0 * sxy, sxx - syy)
    theta = theta % math.pi
    return 0.0 if math.isclose(theta, math.pi) else theta


def path_normals(points, window=6):
    """Unit normals with a consistent side along the path."""
    normals = np.empty((len(points), 2))
    prev = None
    for i in range(len(points)):
        t = tangent_at(points, i, window)
        nrm = np.array([-math.sin(t), math.cos(t)])
        if prev is not None and nrm @ prev < 0:
            nrm = -nrm
        normals[i] = nrm
        prev = nrm
    return normals


def normal_samples(max_diameter, factor=1.5):
    """Odd sample count covering ``factor`` times the maximum diameter."""
    if max_diameter <= 0:
        raise InvalidParameterError("max_diameter must be positive")
    n = int(math.ceil(factor * max_diameter - 1e-9))
    return n if n % 2 else n + 1


def build_profile_stack(img, points, max_diameter, factor=1.5, window=6):
    """Bilinear samples along each normal, 1 px apart, centered on the path."""
    img = np.asarray(img, dtype=np.float64)
    pts = np.asarray(getattr(points, "points", points), dtype=np.float64)
    rows = normal_samples(max_diameter, factor)
    normals = path_normals(pts, window)
    offsets = np.arange(rows, dtype=np.float64) - (rows - 1) / 2
    xs = pts[None, :, 0] + offsets[:, None] * normals[None, :, 0]
    ys = pts[None, :, 1] + offsets[:, None] * normals[None, :, 1]
    vals, valid = raster.bilinear_sample_many(img, xs, ys)
    if valid.any():
        overall = float(vals[valid].mean())
    else:
        overall = float(img.mean())
    counts = valid.sum(axis=1)
    sums = np.where(valid, vals, 0.0).sum(axis=1)
    row_mean = np.where(counts > 0, sums / np.maximum(counts, 1), overall)
    vals = np.where(valid, vals, row_mean[:, None])
    return ProfileStack(vals, valid, valid.any(axis=0), pts, normals)


def kmeans_1d(values, k=3, tol=0.5, max_iter=50):
    """Lloyd iterations on scalars with centroids started at evenly spaced
    quantiles (min, median, max for k = 3), then an exact 1-D solve.

    Lloyd can stop in a local minimum; when the exact optimum over
    contiguous partitions of the sorted values is lower it replaces the
    Lloyd result. Returns ``(centroids, labels, objective_history)``; empty
    clusters keep their previous centroid. Ties in assignment go to the
    lower centroid.
    """
    v = np.asarray(values, dtype=np.float64).ravel()
    centroids = np.quantile(v, np.linspace(0.0, 1.0, k))
    history = []
    labels = np.zeros(len(v), dtype=np.intp)
    for _ in range(max_iter):
        labels = np.argmin(np.abs(v[:, None] - centroids[None, :]), axis=1)
        history.append(float(((v - centroids[labels]) ** 2).sum()))
        new = centroids.copy()
        for c in range(k):
            members = v[labels == c]
            if len(members):
                new[c] = members.mean()
        shift = np.abs(new - centroids).max()
        centroids = new
        if shift < tol:
            break
    labels = np.argmin(np.abs(v[:, None] - centroids[None, :]), axis=1)
    history.append(float(((v - centroids[labels]) ** 2).sum()))
    exact = optimal_partition_1d(v, k)
    if exact is not None and exact[0] < history[-1] * (1 - 1e-12) - 1e-9:
        bounds = exact[1]
        labels = np.searchsorted(bounds, v, side="right")
        centroids = np.array([v[labels == c].mean() for c in range(k)])
        history.append(float(((v - centroids[labels]) ** 2).sum()))
    return centroids, labels, history


def optimal_partition_1d(values, k=3):
    """Globally optimal k-means of scalars.

    The optimum splits the sorted distinct values into contiguous groups;
    a layered dynamic program finds it, with the monotone split position
    searched by divide and conquer. Returns ``(objective, bounds)`` where
    ``bounds`` holds the k - 1 smallest values of groups 2..k, or None
    with fewer than k distinct values.
    """
    u, counts = np.unique(np.asarray(values, dtype=np.float64), return_counts=True)
    d = len(u)
    if d < k:
        return None
    s0 = np.concatenate([[0.0], np.cumsum(counts)])
    s1 = np.concatenate([[0.0], np.cumsum(counts * u)])
    s2 = np.concatenate([[0.0], np.cumsum(counts * u * u)])

    def cost(a, b):
        # sum of squared deviations of sorted groups [a, b)
        s = s1[b] - s1[a]
        return np.maximum(s2[b] - s2[a] - s * s / (s0[b] - s0[a]), 0.0)

    prev = np.full(d + 1, np.inf)
    prev[1:] = cost(0, np.arange(1, d + 1))
    splits = []
    for m in range(2, k + 1):
        cur = np.full(d + 1, np.inf)
        arg = np.zeros(d + 1, dtype=np.intp)
        # prefixes of length j in [m, d - (k - m)] split at i in [m - 1, j - 1];
        # intervals of one recursion depth are solved together
        jlo, jhi = np.array([m]), np.array([d - (k - m)])
        ilo, ihi = np.array([m - 1]), np.array([d - (k - m) - 1])
        while len(jlo):
            j = (jlo + jhi) // 2
            top = np.minimum(ihi, j - 1)
            lens = top - ilo + 1
            starts = np.concatenate([[0], np.cumsum(lens)[:-1]])
            seg = np.repeat(np.arange(len(j)), lens)
            i = ilo[seg] + np.arange(len(seg)) - starts[seg]
            total = prev[i] + cost(i, j[seg])
            low = np.minimum.reduceat(total, starts)
            hits = np.flatnonzero(total == low[seg])
            _, first = np.unique(seg[hits], return_index=True)
            best = i[hits[first]]
            cur[j], arg[j] = low, best
            left, right = jlo <= j - 1, j + 1 <= jhi
            jlo, jhi, ilo, ihi = (np.concatenate([jlo[left], j[right] + 1]),
                                  np.concatenate([j[left] - 1, jhi[right]]),
                                  np.concatenate([ilo[left], best[right]]),
                                  np.concatenate([best[left], ihi[right]]))
        splits.append(arg)
        prev = cur
    objective = float(prev[d])
    cuts, j = [], d
    for arg in reversed(splits):
        j = int(arg[j])
        cuts.append(j)
    return objective, u[np.array(cuts[::-1])]


def cluster_profiles(stack, k=3, tol=0.5, max_iter=50):
    """Mark cells of the darkest intensity cluster as vessel."""
    values = stack.values if isinstance(stack, ProfileStack) else np.asarray(stack, float)
    valid = stack.valid if isinstance(stack, ProfileStack) else np.ones(values.shape, bool)
    data = values[valid]
    low_contrast = len(np.unique(data)) < k
    centroids, labels, history = kmeans_1d(data, k, tol, max_iter)
    darkest = int(np.argmin(centroids))
    mask = np.zeros(values.shape, dtype=np.uint8)
    mask[valid] = labels == darkest
    return ClusterResult(mask, centroids, low_contrast, history)


def _fill_bounded(line, max_gap=None):
    """Set 0-runs enclosed by 1s on both sides (shorter than ``max_gap``)."""
    out = line.copy()
    ones = np.flatnonzero(line)
    if len(ones) < 2:
        return out
    gaps = np.diff(ones) - 1
    for a, g in zip(ones[:-1], gaps):
        if g > 0 and (max_gap is None or g < max_gap):
            out[a + 1:a + 1 + g] = 1
    return out


def fill_columns(mask):
    """Pass 1: fill 0-runs bounded above and below by 1s (reflex holes)."""
    m = np.asarray(mask, dtype=np.uint8)
    if not m.shape[1]:
        return m.copy()
    return np.stack([_fill_bounded(m[:, j]) for j in range(m.shape[1])], axis=1)


def mirror_and(mask):
    """Pass 2: keep cells whose mirror about the center row is also set."""
    m = np.asarray(mask, dtype=np.uint8)
    return m & m[::-1, :]


def join_rows(mask, row_join=20):
    """Pass 3: fill 0-runs shorter than ``row_join`` bounded left and right."""
    m = np.asarray(mask, dtype=np.uint8)
    if not m.shape[0]:
        return m.copy()
    return np.stack([_fill_bounded(m[i], row_join) for i in range(m.shape[0])], axis=0)


def repair_profile(mask, row_join=20):
    """Central-reflex fill per column, AND with the mirror about the center
    row, then join row gaps shorter than ``row_join``."""
    return join_rows(mirror_and(fill_columns(mask)), row_join).astype(np.uint8)


def _runs(col):
    """(start, stop) of each run of 1s."""
    padded = np.concatenate([[0], col.astype(np.int8), [0]])
    edges = np.flatnonzero(np.diff(padded))
    return list(zip(edges[::2], edges[1::2]))


def measure_diameters(mask, mode="center"):
    """Per-column width: the run through the center row, else the longest run.

    ``mode="total"`` counts every vessel pixel in the column instead.
    """
    m = np.asarray(mask, dtype=np.uint8)
    rows = m.shape[0]
    center = (rows - 1) // 2
    widths = np.zeros(m.shape[1])
    for j in range(m.shape[1]):
        col = m[:, j]
        if mode == "total":
            widths[j] = col.sum()
            continue
        runs = _runs(col)
        if not runs:
            continue
        hit = [b - a for a, b in runs if a <= center < b]
        widths[j] = hit[0] if hit else max(b - a for a, b in runs)
    return widths


def measure_path(img, path, max_diameter, params=None):
    params = params or CaliperParams()
    stack = build_profile_stack(img, path, max_diameter, params.normal_factor,
                                params.tangent_window)
    clustered = cluster_profiles(stack, params.kmeans_k, params.kmeans_tol,
                                 params.kmeans_max_iter)
    if clustered.low_contrast:
        raise LowContrastError("profile stack has too few distinct intensities")
    repaired = repair_profile(clustered.mask, params.row_join)
    widths = measure_diameters(repaired, params.count_mode)
    return VesselEstimate(path, widths, stack, clustered, repaired)


def estimate_vessel(img, paths, click, max_diameter, params=None, max_distance=None):
    """Select the centerline nearest ``click`` and measure it."""
    path = select_nearest(paths, click, max_distance)
    return measure_path(img, path, max_diameter, params)
