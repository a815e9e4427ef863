"""Unsupervised retinal vessel segmentation, caliber measurement and
pulsation-based heart rate from fundus image sequences."""

__version__ = "0.1.0"

from . import _backend
from .caliper import CaliperParams, estimate_vessel, measure_path
from .config import RunConfig
from .errors import RetiPulseError
from .metrics import confusion, seg_scores, width_error
from .pulse import DiameterSeries, PulseParams, analyse_series, track, track_many
from .segment import SegmentationParams, segment_gray, segment_vessels
from .skeleton import SkeletonParams, extract_centerlines, select_nearest

backend = _backend.NAME

__all__ = [
    "CaliperParams", "DiameterSeries", "PulseParams", "RetiPulseError", "RunConfig",
    "SegmentationParams", "SkeletonParams", "analyse_series", "backend", "confusion",
    "estimate_vessel", "extract_centerlines", "measure_path", "seg_scores", "segment_gray",
    "segment_vessels", "select_nearest", "track", "track_many", "width_error",
]
