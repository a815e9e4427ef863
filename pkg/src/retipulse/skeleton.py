"""Centerline extraction from a binary vessel map.

Zhang-Suen thinning, gap closing with rotated line elements, junction
detection by crossing number, junction removal, short-segment pruning and
ordered path tracing.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _backend, raster
from .errors import NoVesselError

# (dy, dx) around a pixel, clockwise from north
RING = ((-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1))


@dataclass
class SkeletonParams:
    gap_se_length: int = 9
    gap_angle_step: float = 15.0
    prune_length: int = 25


@dataclass
class CenterlinePath:
    id: int
    points: np.ndarray  # (N, 2) integer (x, y), consecutive points 8-adjacent
    loop: bool = False

    def __len__(self):
        return len(self.points)

    @property
    def midpoint(self):
        x, y = self.points[len(self.points) // 2]
        return int(x), int(y)


@dataclass
class Centerlines:
    thinned: np.ndarray
    closed: np.ndarray
    bifurcations: frozenset
    pruned: np.ndarray
    paths: list = field(default_factory=list)


def _neighbors(im):
    """The eight neighbor planes of a zero-padded image, in RING order."""
    H, W = im.shape[0] - 2, im.shape[1] - 2
    return [im[1 + dy:1 + dy + H, 1 + dx:1 + dx + W] for dy, dx in RING]


def _yokoi_c8(im, y, x):
    # connectivity number for 8-connected foreground; 1 means simple
    ring = [1 - im[y + dy, x + dx] for dy, dx in RING]
    # start at east so that 4-neighbors sit at even positions
    ring = ring[2:] + ring[:2]
    return sum(ring[k] - ring[k] * ring[(k + 1) % 8] * ring[(k + 2) % 8] for k in (0, 2, 4, 6))


def _in_block(im, y, x):
    return any(im[y + a:y + a + 2, x + b:x + b + 2].sum() == 4 for a in (-1, 0) for b in (-1, 0))


def _remove_blocks(im):
    """Delete simple pixels sitting in 2x2 blocks. Returns True if any went."""
    removed = False
    while True:
        blk = im[:-1, :-1] & im[1:, :-1] & im[:-1, 1:] & im[1:, 1:]
        ys, xs = np.nonzero(blk)
        if len(ys) == 0:
            return removed
        cands = sorted({(y + a, x + b) for y, x in zip(ys.tolist(), xs.tolist())
                        for a in (0, 1) for b in (0, 1)})
        did = False
        for y, x in cands:
            if not im[y, x] or not _in_block(im, y, x):
                continue
            if _yokoi_c8(im, y, x) == 1 and im[y - 1:y + 2, x - 1:x + 2].sum() >= 3:
                im[y, x] = 0
                did = True
        if not did:
            return removed
        removed = True


def thin(mask):
    """Zhang-Suen thinning to convergence.

    Zhang-Suen can stall on 2x2 blocks at junctions; those pixels are
    removed when doing so keeps 8-connectivity, and thinning is resumed.
    """
    src = raster.as_mask(mask)
    im = np.ascontiguousarray(np.pad(src, 1))
    while True:
        _backend.kernels.zhang_suen(im)
        if not _remove_blocks(im):
            break
    out = im[1:-1, 1:-1].copy()
    _restore_vanished(src, out)
    return out


def _restore_vanished(src, out):
    """Zhang-Suen deletes a 2x2 square outright, so compact blobs can vanish.
    Such a component keeps one pixel at its distance-transform peak."""
    comps = raster.connected_components(src, 8)
    if comps.count == 0:
        return
    hit = np.zeros(comps.count + 1, dtype=bool)
    hit[comps.labels[out == 1]] = True
    lost = np.flatnonzero(~hit[1:]) + 1
    if len(lost) == 0:
        return
    dist = raster.distance_transform(src)
    for k in lost:
        ys, xs = np.nonzero(comps.labels == k)
        i = int(np.argmax(dist[ys, xs]))  # first peak in raster order
        out[ys[i], xs[i]] = 1


def close_centerline_gaps(skel, gap_se_length=9, angle_step=15.0):
    """Union of closings with line elements every ``angle_step`` degrees,
    re-thinned to one pixel width. An unbroken skeleton comes back unchanged."""
    skel = raster.as_mask(skel)
    out = skel.copy()
    n = int(round(180.0 / angle_step))
    for k in range(n):
        se = raster.StructuringElement.line(gap_se_length, k * angle_step)
        out |= raster.close(skel, se)
    res = thin(out)
    # Zhang-Suen on the filled staircase of a digital curve can keep an added
    # corner and drop the original one. Where closing neither bridged nor
    # absorbed anything (same single input piece, same endpoints, junctions
    # and Euler number) the input pixels are kept.
    regions = raster.connected_components(out, 8)
    if regions.count == 0:
        return res
    n = regions.count + 1
    lab = regions.labels
    pieces = raster.connected_components(skel, 8)
    ids, first = np.unique(pieces.labels.ravel(), return_index=True)
    n_pieces = np.bincount(lab.ravel()[first[ids > 0]], minlength=n)
    same = (n_pieces == 1) & np.all(_topology(skel, lab, n) == _topology(res, lab, n), axis=0)
    keep = same[lab]
    return np.where(keep, skel, res).astype(np.uint8)


def _topology(m, lab, n):
    """Per region: endpoint count, junction pixel count and 8-connected
    Euler number (bit-quad count)."""
    ends = (neighbor_count(m) == 1) & (m == 1)
    junctions = (crossing_number(m) >= 3) & (m == 1)
    q = np.pad(m, 1).astype(np.int16)
    a, b, c, d = q[:-1, :-1], q[:-1, 1:], q[1:, :-1], q[1:, 1:]
    total = a + b + c + d
    diag = (total == 2) & (a == d)
    quad_lab = np.pad(lab, 1)
    quad_lab = np.maximum.reduce([quad_lab[:-1, :-1], quad_lab[:-1, 1:],
                                  quad_lab[1:, :-1], quad_lab[1:, 1:]])
    euler4 = (total == 1).astype(np.int16) - (total == 3) - 2 * diag
    return np.stack([np.bincount(lab[ends], minlength=n),
                     np.bincount(lab[junctions], minlength=n),
                     np.bincount(quad_lab.ravel(), weights=euler4.ravel(), minlength=n)])


def crossing_number(skel):
    """0 -> 1 transitions around each pixel's circular 8-neighborhood."""
    im = np.pad(raster.as_mask(skel), 1)
    ring = _neighbors(im)
    cn = np.zeros(skel.shape, dtype=np.int16)
    for cur, nxt in zip(ring, ring[1:] + ring[:1]):
        cn += (cur == 0) & (nxt == 1)
    return cn


def neighbor_count(skel):
    im = np.pad(raster.as_mask(skel), 1)
    return sum(p.astype(np.int16) for p in _neighbors(im))


def detect_bifurcations(skel):
    """Skeleton pixels whose crossing number is at least 3, as (x, y) pairs."""
    skel = raster.as_mask(skel)
    ys, xs = np.nonzero((crossing_number(skel) >= 3) & (skel == 1))
    return frozenset(zip(xs.tolist(), ys.tolist()))


def _strip_junctions(skel, bifs):
    work = raster.as_mask(skel).copy()
    for x, y in bifs:
        work[y, x] = 0
    # removing one junction can expose another next to it
    for _ in range(8):
        more = detect_bifurcations(work)
        if not more:
            break
        for x, y in more:
            work[y, x] = 0
    return work


def _adjacency(mask):
    ys, xs = np.nonzero(mask)
    H, W = mask.shape
    index = -np.ones((H + 2, W + 2), dtype=np.int64)
    index[ys + 1, xs + 1] = np.arange(len(ys))
    # 4-adjacent directions first so traces visit corner pixels
    order = [0, 2, 4, 6, 1, 3, 5, 7]
    nbrs = np.stack([index[ys + 1 + RING[k][0], xs + 1 + RING[k][1]] for k in order], axis=1)
    return ys, xs, nbrs


def _trace_component(members, nbrs):
    """Split one component into ordered 8-adjacent walks."""
    remaining = set(members)
    walks = []
    while remaining:
        start = None
        for i in members:
            if i in remaining and sum(1 for j in nbrs[i] if j in remaining) <= 1:
                start = i
                break
        closed = start is None
        if closed:
            start = next(i for i in members if i in remaining)
        walk = [start]
        remaining.discard(start)
        cur = start
        while True:
            nxt = next((j for j in nbrs[cur] if j in remaining), None)
            if nxt is None:
                break
            walk.append(nxt)
            remaining.discard(nxt)
            cur = nxt
        walks.append((walk, closed))
    return walks


def prune(skel, bifs, min_length=25):
    """Skeleton with junctions removed and pieces under ``min_length`` pixels dropped."""
    stripped = _strip_junctions(skel, bifs)
    return raster.remove_small_components(stripped, min_length, 8)


def trace(pruned, min_length=25):
    """Ordered paths of a junction-free skeleton, numbered from 1 in raster
    order of their component's first pixel. A component without endpoints is
    traced from its top-left pixel and marked as a loop."""
    pruned = raster.as_mask(pruned)
    if not pruned.any():
        return []
    comps = raster.connected_components(pruned, 8)
    ys, xs, nbr_arr = _adjacency(pruned)
    nbrs = [[j for j in row if j >= 0] for row in nbr_arr.tolist()]
    labels = comps.labels[ys, xs]
    # pixel indices are already in raster order; group them by label
    order = np.argsort(labels, kind="stable")
    bounds = np.flatnonzero(np.diff(labels[order])) + 1
    paths = []
    for group in np.split(order, bounds):
        for walk, closed in _trace_component(group.tolist(), nbrs):
            if len(walk) < min_length:
                continue
            pts = np.stack([xs[walk], ys[walk]], axis=1).astype(np.int64)
            paths.append(CenterlinePath(len(paths) + 1, pts, closed))
    return paths


def prune_and_trace(skel, bifs, min_length=25):
    return trace(prune(skel, bifs, min_length), min_length)


def extract_centerlines(vessel_mask, params=None):
    params = params or SkeletonParams()
    thinned = thin(vessel_mask)
    closed = close_centerline_gaps(thinned, params.gap_se_length, params.gap_angle_step)
    bifs = detect_bifurcations(closed)
    pruned = prune(closed, bifs, params.prune_length)
    return Centerlines(thinned, closed, bifs, pruned, trace(pruned, params.prune_length))


def select_nearest(paths, click, max_distance=None):
    """Path holding the pixel closest to ``click`` = (x, y); ties go to the
    lower id. Raises NoVesselError if nothing lies within ``max_distance``."""
    if not paths:
        raise NoVesselError("no centerlines to select from")
    cx, cy = float(click[0]), float(click[1])
    best, best_d2 = None, np.inf
    for path in sorted(paths, key=lambda p: p.id):
        d = path.points.astype(np.float64) - (cx, cy)
        d2 = float((d * d).sum(axis=1).min())
        if d2 < best_d2:
            best, best_d2 = path, d2
    if max_distance is not None and best_d2 > max_distance ** 2:
        raise NoVesselError(f"no vessel near point ({cx:g}, {cy:g}): nearest centerline is "
                            f"{best_d2 ** 0.5:.1f} px away, limit {max_distance:g}")
    return best
