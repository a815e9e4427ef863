"""Global-threshold vessel segmentation of fundus frames.

green channel -> CLAHE -> background subtraction -> threshold -> small
blob removal -> field-of-view masking. Vessels are darker than their
surround in the green channel, so background minus image makes them
bright before thresholding.
"""

from dataclasses import dataclass, field, asdict

import numpy as np

from . import raster
from .errors import InvalidParameterError, ShapeError


@dataclass
class SegmentationParams:
    clahe_grid: int = 9
    clahe_clip: float = 3.0
    median_size: int = 5
    gaussian_size: int = 55
    global_threshold: int = 8
    min_blob_area: int = 200
    fov_threshold: int = 10
    fov_erode_radius: int = 5
    connectivity: int = 8

    def validate(self):
        for name in ("clahe_grid", "median_size", "gaussian_size", "min_blob_area"):
            if getattr(self, name) <= 0:
                raise InvalidParameterError(f"{name} must be positive")
        for name in ("median_size", "gaussian_size"):
            if getattr(self, name) % 2 == 0:
                raise InvalidParameterError(f"{name} must be odd")
        if self.clahe_clip <= 0:
            raise InvalidParameterError("clahe_clip must be positive")
        if self.global_threshold < 0 or self.fov_threshold < 0 or self.fov_erode_radius < 0:
            raise InvalidParameterError("thresholds and radii must be non-negative")
        if self.connectivity not in (4, 8):
            raise InvalidParameterError("connectivity must be 4 or 8")
        return self

    def to_dict(self):
        return asdict(self)


@dataclass
class SegmentationResult:
    vessel_mask: np.ndarray
    fov_mask: np.ndarray
    max_diameter: float
    # intermediate images keyed by stage name, only filled on request
    stages: dict = field(default_factory=dict, repr=False)


def as_rgb(img):
    arr = np.asarray(img)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ShapeError(f"expected an (H, W, 3) RGB image, got shape {arr.shape}")
    return arr


def green_channel(img):
    return np.ascontiguousarray(as_rgb(img)[:, :, 1]).astype(np.uint8, copy=False)


def fov_mask(gray, params=None):
    params = params or SegmentationParams()
    gray = raster.as_gray(gray)
    mask = (gray > params.fov_threshold).astype(np.uint8)
    r = params.fov_erode_radius
    if r == 0:
        return mask
    return raster.erode(mask, raster.StructuringElement.ellipse(r, r))


def estimate_background(enhanced, params=None):
    params = params or SegmentationParams()
    smoothed = raster.median_filter(enhanced, params.median_size)
    return raster.gaussian_blur(smoothed, params.gaussian_size)


def subtract_background(enhanced, params=None):
    """Background minus image, negatives truncated to 0."""
    enhanced = raster.as_gray(enhanced)
    background = estimate_background(enhanced, params)
    diff = background.astype(np.int16) - enhanced.astype(np.int16)
    return np.clip(diff, 0, 255).astype(np.uint8)


def max_vessel_diameter(vessel_mask):
    """Twice the largest distance-transform value of the vessel map."""
    if not np.any(vessel_mask):
        return 0.0
    return 2.0 * float(raster.distance_transform(vessel_mask).max())


def segment_gray(gray, params=None, keep_stages=False):
    """Run the pipeline on an already extracted green channel."""
    params = (params or SegmentationParams()).validate()
    gray = raster.as_gray(gray)
    fov = fov_mask(gray, params)
    enhanced = raster.clahe(gray, params.clahe_grid, params.clahe_clip)
    subtracted = subtract_background(enhanced, params)
    rough = (subtracted > params.global_threshold).astype(np.uint8)
    cleaned = raster.remove_small_components(rough, params.min_blob_area, params.connectivity)
    vessels = cleaned & fov
    stages = {}
    if keep_stages:
        stages = {
            "green": gray,
            "clahe": enhanced,
            "background_subtracted": subtracted,
            "threshold": rough,
            "segmented": vessels,
        }
    return SegmentationResult(vessels, fov, max_vessel_diameter(vessels), stages)


def segment_vessels(img, params=None, keep_stages=False):
    rgb = as_rgb(img)
    result = segment_gray(green_channel(rgb), params, keep_stages)
    if keep_stages:
        result.stages = {"original": rgb, **result.stages}
    return result
