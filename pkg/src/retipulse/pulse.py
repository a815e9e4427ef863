"""Vessel diameter over time and heart rate from its pulsation.

A vessel picked on the first frame is re-found on every later frame from
the previous frame's path midpoint (frames are assumed registered). The
mean width per frame forms a series which is smoothed (Savitzky-Golay,
then a zero-phase windowed-sinc low-pass), and the heart rate follows from
the mean spacing of alternating extrema.
"""

from dataclasses import dataclass, field, asdict
from functools import lru_cache
import math

import numpy as np
from scipy.optimize import brentq
from scipy.signal import filtfilt, firwin, freqz, savgol_filter

from . import caliper, segment, skeleton
from .errors import (InsufficientPulsationError, InvalidParameterError, NoVesselError,
                     TooShortError, TrackingLostError)

# heart-rate formulas: the period is twice the extrema spacing (max to min is
# half a cycle), or the spacing itself
TWICE_SEPARATION = "2*sep"
SEPARATION = "sep"
FORMULAS = (TWICE_SEPARATION, SEPARATION)


@dataclass
class PulseParams:
    sg_window: int = 5
    sg_order: int = 2
    lowpass_hz: float = 2.0
    lowpass_taps: int = 31
    search_radius: float = 20.0  # carry-over distance between frames
    click_radius: float = 50.0  # first-frame selection distance
    formula: str = TWICE_SEPARATION

    def validate(self):
        if self.sg_window < 3 or self.sg_window % 2 == 0:
            raise InvalidParameterError("sg_window must be odd and at least 3")
        if not 0 <= self.sg_order < self.sg_window:
            raise InvalidParameterError("sg_order must be below sg_window")
        if self.lowpass_hz <= 0:
            raise InvalidParameterError("lowpass_hz must be positive")
        if self.lowpass_taps < 3 or self.lowpass_taps % 2 == 0:
            raise InvalidParameterError("lowpass_taps must be odd and at least 3")
        if self.formula not in FORMULAS:
            raise InvalidParameterError(f"formula must be one of {FORMULAS}")
        return self


@dataclass
class DiameterSeries:
    values: np.ndarray
    fps: float
    vessel_kind: str = "unknown"  # artery, vein or unknown

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.fps <= 0:
            raise InvalidParameterError("fps must be positive")
        if not np.all(np.isfinite(self.values)) or np.any(self.values < 0):
            raise InvalidParameterError("series values must be finite and non-negative")

    def __len__(self):
        return len(self.values)

    @property
    def times(self):
        return np.arange(len(self.values)) / self.fps


@dataclass
class PulseReport:
    mean_separation: float  # seconds
    period: float
    heart_rate_bpm: float
    extrema: list  # (frame index, "min" | "max")
    formula: str = TWICE_SEPARATION
    # both formulas, always reported
    bpm_by_formula: dict = field(default_factory=dict)

    def to_dict(self):
        d = asdict(self)
        d["extrema"] = [[int(i), k] for i, k in self.extrema]
        return d


@dataclass
class TrackedFrame:
    path: skeleton.CenterlinePath
    widths: np.ndarray


# -- tracking ---------------------------------------------------------------

def _analyse(frame, seg_params, skel_params):
    arr = np.asarray(frame)
    if arr.ndim == 3:
        seg = segment.segment_vessels(arr, seg_params)
        gray = segment.green_channel(arr)
    else:
        seg = segment.segment_gray(arr, seg_params)
        gray = arr
    lines = skeleton.extract_centerlines(seg.vessel_mask, skel_params)
    return gray, seg.max_diameter, lines.paths


def track_many(frames, clicks, params=None, seg_params=None, skel_params=None,
               cal_params=None, fps=30.0, kinds=None):
    """One DiameterSeries per click; each frame is segmented once.

    Also returns the per-frame selections as ``[[TrackedFrame, ...], ...]``.
    """
    params = (params or PulseParams()).validate()
    frames = list(frames)
    if len(frames) < 2:
        raise TooShortError(f"tracking needs at least 2 frames, got {len(frames)}")
    points = [(float(x), float(y)) for x, y in clicks]
    values = [[] for _ in points]
    tracked = [[] for _ in points]
    for k, frame in enumerate(frames):
        gray, max_d, paths = _analyse(frame, seg_params, skel_params)
        for v, point in enumerate(points):
            radius = params.click_radius if k == 0 else params.search_radius
            try:
                path = skeleton.select_nearest(paths, point, radius)
            except NoVesselError:
                if k == 0:
                    raise
                raise TrackingLostError(k) from None
            est = caliper.measure_path(gray, path, max_d, cal_params)
            values[v].append(est.mean_width)
            tracked[v].append(TrackedFrame(path, est.widths))
            points[v] = path.midpoint
    kinds = kinds or ["unknown"] * len(points)
    series = [DiameterSeries(vals, fps, kind) for vals, kind in zip(values, kinds)]
    return series, tracked


def track(frames, click, params=None, seg_params=None, skel_params=None,
          cal_params=None, fps=30.0, vessel_kind="unknown"):
    series, _ = track_many(frames, [click], params, seg_params, skel_params,
                           cal_params, fps, [vessel_kind])
    return series[0]


# -- smoothing --------------------------------------------------------------

@lru_cache(maxsize=32)
def lowpass_kernel(cutoff_hz, fps, taps=31):
    """Hamming-windowed sinc whose forward-backward response is 0.5 at
    ``cutoff_hz``. Returns None when the cutoff is at or above Nyquist."""
    nyq = fps / 2.0
    if cutoff_hz >= nyq:
        return None

    def gain(fc):
        b = firwin(taps, fc, window="hamming", fs=fps)
        return abs(freqz(b, [1.0], worN=[cutoff_hz], fs=fps)[1][0]) ** 2 - 0.5

    hi = nyq * (1 - 1e-6)
    if gain(hi) < 0:
        # too few taps to place the half-power point; fall back to the plain cutoff
        return firwin(taps, cutoff_hz, window="hamming", fs=fps)
    fc = brentq(gain, cutoff_hz * 0.5, hi, xtol=1e-9)
    return firwin(taps, fc, window="hamming", fs=fps)


def smooth_values(values, fps, params=None):
    params = (params or PulseParams()).validate()
    x = np.asarray(values, dtype=np.float64)
    if len(x) <= params.sg_window:
        raise TooShortError(f"series of {len(x)} samples is too short to smooth "
                            f"(needs more than {params.sg_window})")
    y = savgol_filter(x, params.sg_window, params.sg_order, mode="interp")
    b = lowpass_kernel(float(params.lowpass_hz), float(fps), params.lowpass_taps)
    if b is not None:
        y = filtfilt(b, [1.0], y, padlen=min(3 * len(b), len(y) - 1))
    return y


def smooth(series, params=None):
    return DiameterSeries(smooth_values(series.values, series.fps, params),
                          series.fps, series.vessel_kind)


# -- extrema and rate -------------------------------------------------------

def _plateaus(x):
    """(start, stop) runs of equal values."""
    change = np.flatnonzero(np.diff(x) != 0) + 1
    starts = np.concatenate([[0], change])
    stops = np.concatenate([change, [len(x)]])
    return list(zip(starts.tolist(), stops.tolist()))


def find_extrema(series):
    """Alternating local extrema as ``[(index, "max" | "min"), ...]``.

    A plateau counts as one extremum at its middle; of two neighboring
    extrema of the same kind the weaker one is dropped.
    """
    x = np.asarray(getattr(series, "values", series), dtype=np.float64)
    runs = _plateaus(x)
    found = []
    for k in range(1, len(runs) - 1):
        a, b = runs[k]
        left, here, right = x[runs[k - 1][0]], x[a], x[b]
        if here > left and here > right:
            found.append(((a + b - 1) // 2, "max"))
        elif here < left and here < right:
            found.append(((a + b - 1) // 2, "min"))
    out = []
    for idx, kind in found:
        if out and out[-1][1] == kind:
            prev = out[-1][0]
            stronger = x[idx] > x[prev] if kind == "max" else x[idx] < x[prev]
            if stronger:
                out[-1] = (idx, kind)
            continue
        out.append((idx, kind))
    if len(out) < 2:
        raise InsufficientPulsationError(f"found {len(out)} extrema, need at least 2")
    return out


def bpm_from_separation(separation, formula=TWICE_SEPARATION):
    if formula not in FORMULAS:
        raise InvalidParameterError(f"formula must be one of {FORMULAS}")
    period = 2.0 * separation if formula == TWICE_SEPARATION else separation
    return period, 60.0 / period


def heart_rate(extrema, fps, formula=TWICE_SEPARATION):
    if len(extrema) < 2:
        raise InsufficientPulsationError(f"found {len(extrema)} extrema, need at least 2")
    if fps <= 0:
        raise InvalidParameterError("fps must be positive")
    idx = np.array([i for i, _ in extrema], dtype=np.float64)
    separation = float(np.mean(np.diff(idx))) / fps
    period, bpm = bpm_from_separation(separation, formula)
    both = {f: bpm_from_separation(separation, f)[1] for f in FORMULAS}
    return PulseReport(separation, period, bpm, list(extrema), formula, both)


def analyse_series(series, params=None):
    """smooth -> extrema -> heart rate. Returns (smoothed, report)."""
    params = (params or PulseParams()).validate()
    smoothed = smooth(series, params)
    report = heart_rate(find_extrema(smoothed), series.fps, params.formula)
    return smoothed, report


def pearson(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    a, b = a - a.mean(), b - b.mean()
    denom = math.sqrt(float((a * a).sum() * (b * b).sum()))
    return float((a * b).sum() / denom) if denom else 0.0
