"""Segmentation confusion scores and vessel width error statistics."""

from collections import OrderedDict
from dataclasses import dataclass
import csv
import math

import numpy as np
from scipy.spatial import cKDTree

from .errors import AnnotationError, ShapeError, TooFewPointsError, UndefinedMetricError


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self):
        return self.tp + self.fp + self.tn + self.fn


def confusion(pred, truth, fov=None):
    """Pixel confusion counts restricted to the field of view."""
    pred = np.asarray(pred) != 0
    truth = np.asarray(truth) != 0
    fov = np.ones(pred.shape, bool) if fov is None else np.asarray(fov) != 0
    if pred.shape != truth.shape or pred.shape != fov.shape:
        raise ShapeError(f"shape mismatch: pred {pred.shape}, truth {truth.shape}, fov {fov.shape}")
    p, t = pred[fov], truth[fov]
    return ConfusionCounts(
        tp=int(np.sum(p & t)),
        fp=int(np.sum(p & ~t)),
        tn=int(np.sum(~p & ~t)),
        fn=int(np.sum(~p & t)),
    )


def seg_scores(c):
    """(accuracy, sensitivity, specificity)."""
    if c.total == 0:
        raise UndefinedMetricError("accuracy")
    if c.tp + c.fn == 0:
        raise UndefinedMetricError("sensitivity")
    if c.tn + c.fp == 0:
        raise UndefinedMetricError("specificity")
    return (
        (c.tp + c.tn) / c.total,
        c.tp / (c.tp + c.fn),
        c.tn / (c.tn + c.fp),
    )


@dataclass(frozen=True)
class WidthStats:
    mu_error: float
    sigma_error: float
    mu_mean: float
    sigma_mean: float
    n: int


def width_error(estimated, truth, literal_mu=False):
    """Width statistics over paired estimates and references.

    ``mu_error`` is the mean of ``estimated - truth``; ``sigma_error`` is the
    sample standard deviation of those differences about ``mu_error``.
    ``literal_mu=True`` uses the mean of reciprocal differences instead, for
    comparison with the reciprocal form of the published formula; it is
    undefined when any difference is zero.
    """
    w = np.asarray(estimated, dtype=np.float64)
    g = np.asarray(truth, dtype=np.float64)
    if w.shape != g.shape:
        raise ShapeError("estimated and truth widths differ in length")
    n = len(w)
    if n < 2:
        raise TooFewPointsError(f"need at least 2 width pairs, got {n}")
    chi = w - g
    if literal_mu:
        if np.any(chi == 0):
            raise UndefinedMetricError("mu_error (reciprocal form)")
        mu = float(np.mean(1.0 / chi))
    else:
        mu = float(np.mean(chi))
    sigma = math.sqrt(float(np.sum((chi - mu) ** 2)) / (n - 1))
    return WidthStats(mu, sigma, float(np.mean(w)), float(np.std(w, ddof=1)), n)


@dataclass(frozen=True)
class Annotation:
    image: str
    segment: str
    point: int
    cx: float
    cy: float
    width: float


ANNOTATION_HEADER = ["image", "segment", "point", "cx", "cy", "width"]


def parse_annotations(lines):
    """Annotation records grouped by (image, segment), in file order."""
    reader = csv.reader(lines)
    groups = OrderedDict()
    header = None
    for lineno, row in enumerate(reader, 1):
        if not row or all(not c.strip() for c in row):
            continue
        if header is None:
            header = [c.strip().lower() for c in row]
            if header != ANNOTATION_HEADER:
                raise AnnotationError(lineno, f"expected header {','.join(ANNOTATION_HEADER)}")
            continue
        if len(row) != len(ANNOTATION_HEADER):
            raise AnnotationError(lineno, f"expected 6 fields, got {len(row)}")
        try:
            rec = Annotation(row[0].strip(), row[1].strip(), int(row[2]), float(row[3]),
                             float(row[4]), float(row[5]))
        except ValueError as exc:
            raise AnnotationError(lineno, str(exc)) from None
        if not rec.width > 0:
            raise AnnotationError(lineno, f"width must be positive, got {rec.width}")
        if rec.cx < 0 or rec.cy < 0:
            raise AnnotationError(lineno, "point lies outside the image")
        groups.setdefault((rec.image, rec.segment), []).append(rec)
    if header is None:
        raise AnnotationError(1, "empty annotation file")
    return groups


def load_annotations(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return parse_annotations(fh)


def write_annotations(path, records):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(ANNOTATION_HEADER)
        for r in records:
            if isinstance(r, Annotation):
                r = (r.image, r.segment, r.point, r.cx, r.cy, r.width)
            writer.writerow(r)


@dataclass
class Matching:
    estimated: np.ndarray
    truth: np.ndarray
    matched: int
    unmatched: int


def match_widths(points, widths, refs, ref_widths, radius=3.0):
    """Pair every reference point with the nearest estimated centerline point
    within ``radius`` px. Unpaired references are counted, not dropped silently."""
    refs = np.asarray(refs, dtype=np.float64).reshape(-1, 2)
    ref_widths = np.asarray(ref_widths, dtype=np.float64)
    if len(points) == 0:
        return Matching(np.empty(0), np.empty(0), 0, len(refs))
    d, idx = cKDTree(np.asarray(points, dtype=np.float64)).query(refs)
    ok = d <= radius
    w = np.asarray(widths, dtype=np.float64)
    return Matching(w[idx[ok]], ref_widths[ok], int(ok.sum()), int((~ok).sum()))
