"""Synthetic fundus frames with exactly known vessel geometry.

Vessels are dark bands around parametric centerlines (polylines or
quadratic Bezier arcs) on a smooth bright background. The truth mask is
``{p : dist(p, centerline) <= width / 2}`` with the distance taken to a
dense 0.25 px sampling of the curve; the rendered green channel is
anti-aliased over one pixel around that boundary.
"""

from dataclasses import dataclass, field, fields
import configparser
import csv
import io
import math

import numpy as np
from scipy.spatial import cKDTree

from .errors import SceneValidationError

STEP = 0.25


@dataclass(frozen=True)
class VesselSpec:
    points: tuple  # control points ((x, y), ...)
    kind: str = "polyline"  # or "quadratic" (exactly three control points)
    width: float = 10.0
    width_end: float | None = None  # linear taper towards this width
    mod_amplitude: float = 0.0  # sinusoidal width modulation along the curve
    mod_period: float = 60.0  # px of arc length
    intensity: float = 70.0
    clr_width: float = 0.0  # central light reflex stripe, px
    clr_intensity: float = 0.0  # brightness added on the stripe
    pulse_amplitude: float = 0.0  # px
    pulse_frequency: float = 1.0  # Hz
    pulse_phase: float = 0.0  # rad

    @property
    def base_width(self):
        end = self.width if self.width_end is None else self.width_end
        return 0.5 * (self.width + end)


@dataclass(frozen=True)
class SceneSpec:
    width: int = 256
    height: int = 256
    background: float = 150.0
    gradient: float = 0.0
    noise_sigma: float = 0.0
    vessels: tuple = ()
    fps: float = 30.0
    duration: float = 0.0  # seconds; 0 means a single still frame
    fov_radius: float | None = None
    seed: int = 0

    @property
    def n_frames(self):
        return max(1, int(round(self.duration * self.fps)))


@dataclass
class VesselTruth:
    samples: np.ndarray  # (N, 2) dense centerline (x, y)
    arclength: np.ndarray
    widths: np.ndarray  # width at every sample

    def widths_near(self, points):
        """Truth width at the curve sample nearest each (x, y)."""
        _, idx = cKDTree(self.samples).query(np.asarray(points, dtype=np.float64))
        return self.widths[idx]

    def distance_to(self, points):
        d, _ = cKDTree(self.samples).query(np.asarray(points, dtype=np.float64))
        return d

    def pixel_path(self, spacing=1.0):
        """Centerline resampled every ``spacing`` px of arc length."""
        s = np.arange(0.0, self.arclength[-1] + 1e-9, spacing)
        x = np.interp(s, self.arclength, self.samples[:, 0])
        y = np.interp(s, self.arclength, self.samples[:, 1])
        w = np.interp(s, self.arclength, self.widths)
        return np.stack([x, y], axis=1), w


@dataclass
class Truth:
    mask: np.ndarray
    vessels: list = field(default_factory=list)


@dataclass
class Sequence:
    frames: list  # RGB frames
    truths: list  # Truth per frame
    series: np.ndarray  # (n_vessels, n_frames) true mean width per frame
    fps: float


def _curve(spec):
    pts = np.asarray(spec.points, dtype=np.float64)
    if spec.kind == "quadratic":
        t = np.linspace(0.0, 1.0, 4000)[:, None]
        dense = (1 - t) ** 2 * pts[0] + 2 * (1 - t) * t * pts[1] + t ** 2 * pts[2]
    else:
        dense = pts
    seg = np.hypot(*np.diff(dense, axis=0).T)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    grid = np.arange(0.0, s[-1] + 1e-9, STEP)
    if grid[-1] < s[-1]:
        grid = np.append(grid, s[-1])
    x = np.interp(grid, s, dense[:, 0])
    y = np.interp(grid, s, dense[:, 1])
    return np.stack([x, y], axis=1), grid


def _widths(spec, s, scale=1.0):
    length = s[-1] if s[-1] > 0 else 1.0
    end = spec.width if spec.width_end is None else spec.width_end
    w = spec.width + (end - spec.width) * s / length
    if spec.mod_amplitude:
        w = w + spec.mod_amplitude * np.sin(2 * math.pi * s / spec.mod_period)
    return w * scale


def vessel_truth(spec, scale=1.0):
    samples, s = _curve(spec)
    return VesselTruth(samples, s, _widths(spec, s, scale))


def validate_scene(scene):
    if scene.width <= 0 or scene.height <= 0:
        raise SceneValidationError("scene.size", "width and height must be positive")
    if scene.fps <= 0:
        raise SceneValidationError("scene.fps", "must be positive")
    if scene.noise_sigma < 0:
        raise SceneValidationError("scene.noise_sigma", "must be non-negative")
    if scene.duration and scene.n_frames < 2:
        raise SceneValidationError("scene.duration", "sequence needs at least 2 frames")
    for i, v in enumerate(scene.vessels, 1):
        where = f"vessel.{i}"
        if v.kind not in ("polyline", "quadratic"):
            raise SceneValidationError(f"{where}.kind", f"unknown curve kind {v.kind!r}")
        if len(v.points) < 2 or (v.kind == "quadratic" and len(v.points) != 3):
            raise SceneValidationError(f"{where}.points", "wrong number of control points")
        if v.pulse_frequency >= scene.fps / 2:
            raise SceneValidationError(f"{where}.pulse_frequency", "must be below fps / 2")
        truth = vessel_truth(v)
        base = v.base_width
        lo = (truth.widths * (1 - abs(v.pulse_amplitude) / base)).min()
        hi = (truth.widths * (1 + abs(v.pulse_amplitude) / base)).max()
        if lo <= 2:
            raise SceneValidationError(f"{where}.width", "width must stay above 2 px")
        margin = 1.5 * hi
        x, y = truth.samples[:, 0], truth.samples[:, 1]
        if (x.min() < margin or y.min() < margin or x.max() > scene.width - 1 - margin
                or y.max() > scene.height - 1 - margin):
            raise SceneValidationError(f"{where}.points", f"curve must keep {margin:g} px from the border")
    return scene


def _background(scene):
    yy, xx = np.mgrid[0:scene.height, 0:scene.width].astype(np.float64)
    ramp = (xx / max(scene.width - 1, 1) + yy / max(scene.height - 1, 1)) - 1.0
    return scene.background + scene.gradient * ramp


def _render(scene, scales, rng):
    H, W = scene.height, scene.width
    green = _background(scene)
    mask = np.zeros((H, W), dtype=np.uint8)
    truths = []
    for spec, scale in zip(scene.vessels, scales):
        truth = vessel_truth(spec, scale)
        truths.append(truth)
        reach = truth.widths.max() / 2 + 2
        x0 = max(int(math.floor(truth.samples[:, 0].min() - reach)), 0)
        x1 = min(int(math.ceil(truth.samples[:, 0].max() + reach)) + 1, W)
        y0 = max(int(math.floor(truth.samples[:, 1].min() - reach)), 0)
        y1 = min(int(math.ceil(truth.samples[:, 1].max() + reach)) + 1, H)
        yy, xx = np.mgrid[y0:y1, x0:x1]
        pix = np.stack([xx.ravel(), yy.ravel()], axis=1).astype(np.float64)
        d, idx = cKDTree(truth.samples).query(pix, distance_upper_bound=reach)
        far = ~np.isfinite(d)
        d[far], idx[far] = np.inf, 0
        half = truth.widths[idx] / 2
        inside = (d <= half).reshape(yy.shape)
        mask[y0:y1, x0:x1] |= inside.astype(np.uint8)
        cover = np.clip(half + 0.5 - d, 0.0, 1.0).reshape(yy.shape)
        patch = green[y0:y1, x0:x1]
        patch[:] = (1 - cover) * patch + cover * spec.intensity
        if spec.clr_width > 0 and spec.clr_intensity:
            stripe = np.clip(spec.clr_width / 2 + 0.5 - d, 0.0, 1.0).reshape(yy.shape)
            patch += stripe * spec.clr_intensity
    if scene.noise_sigma > 0:
        green = green + rng.normal(0.0, scene.noise_sigma, green.shape)
    green = np.clip(np.floor(green + 0.5), 0, 255)
    rgb = np.stack([np.clip(np.floor(1.6 * green + 0.5), 0, 255), green,
                    np.floor(0.4 * green + 0.5)], axis=2).astype(np.uint8)
    if scene.fov_radius is not None:
        yy, xx = np.mgrid[0:H, 0:W]
        outside = (xx - (W - 1) / 2) ** 2 + (yy - (H - 1) / 2) ** 2 > scene.fov_radius ** 2
        rgb[outside] = 0
        mask[outside] = 0
    return rgb, Truth(mask, truths)


def render(scene):
    """Single frame plus truth; the green plane carries the vessel contrast."""
    validate_scene(scene)
    rng = np.random.default_rng([scene.seed, 0])
    return _render(scene, [1.0] * len(scene.vessels), rng)


def pulse_scales(scene, t):
    return [1.0 + v.pulse_amplitude * math.sin(2 * math.pi * v.pulse_frequency * t + v.pulse_phase)
            / v.base_width for v in scene.vessels]


def render_sequence(scene):
    """Frames at ``fps`` over ``duration`` with every vessel's width scaled by
    ``1 + amplitude * sin(2 pi f t + phase) / base_width``."""
    validate_scene(scene)
    if scene.n_frames < 2:
        raise SceneValidationError("scene.duration", "sequence needs at least 2 frames")
    frames, truths = [], []
    series = np.zeros((len(scene.vessels), scene.n_frames))
    for k in range(scene.n_frames):
        t = k / scene.fps
        scales = pulse_scales(scene, t)
        rgb, truth = _render(scene, scales, np.random.default_rng([scene.seed, k]))
        frames.append(rgb)
        truths.append(truth)
        for i, (v, sc) in enumerate(zip(scene.vessels, scales)):
            series[i, k] = v.base_width * sc
    return Sequence(frames, truths, series, scene.fps)


def truth_rows(truth, image_id, spacing=1.0):
    """Annotation records (image, segment, point, cx, cy, width) for a frame."""
    rows = []
    for seg, vt in enumerate(truth.vessels, 1):
        pts, w = vt.pixel_path(spacing)
        for i, ((x, y), wi) in enumerate(zip(pts, w)):
            rows.append((image_id, seg, i, round(float(x), 3), round(float(y), 3), round(float(wi), 4)))
    return rows


def truth_csv(truth, image_id, spacing=1.0):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["image", "segment", "point", "cx", "cy", "width"])
    writer.writerows(truth_rows(truth, image_id, spacing))
    return buf.getvalue()


# -- declarative scene files -------------------------------------------------

_SCENE_KEYS = {f.name: f for f in fields(SceneSpec) if f.name != "vessels"}
_VESSEL_KEYS = {f.name: f for f in fields(VesselSpec)}


def _coerce(text, default, where):
    text = text.strip()
    try:
        if text == "" or text.lower() == "none":
            return None
        if isinstance(default, bool):
            return text.lower() in ("1", "true", "yes", "on")
        if isinstance(default, int) and not isinstance(default, bool):
            return int(text)
        if isinstance(default, str):
            return text
        return float(text)
    except ValueError:
        raise SceneValidationError(where, f"cannot parse {text!r}") from None


def _parse_points(text, where):
    try:
        pts = tuple(tuple(float(c) for c in p.split(",")) for p in text.split(";") if p.strip())
    except ValueError:
        raise SceneValidationError(where, f"cannot parse points {text!r}") from None
    if any(len(p) != 2 for p in pts):
        raise SceneValidationError(where, "points must be x,y pairs separated by ';'")
    return pts


def parse_scene(text):
    """Scene from INI text: one ``[scene]`` section and ``[vessel.N]`` sections."""
    cp = configparser.ConfigParser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise SceneValidationError("file", str(exc)) from None
    kwargs = {}
    if cp.has_section("scene"):
        for key, raw in cp.items("scene"):
            if key not in _SCENE_KEYS:
                raise SceneValidationError(f"scene.{key}", "unknown key")
            default = _SCENE_KEYS[key].default
            val = _coerce(raw, 0.0 if default is None else default, f"scene.{key}")
            if val is None and default is not None:
                raise SceneValidationError(f"scene.{key}", "value required")
            kwargs[key] = val
    names = sorted((s for s in cp.sections() if s.startswith("vessel")),
                   key=lambda s: int(s.split(".")[1]) if "." in s and s.split(".")[1].isdigit() else 0)
    vessels = []
    for name in names:
        vk = {}
        for key, raw in cp.items(name):
            where = f"{name}.{key}"
            if key not in _VESSEL_KEYS:
                raise SceneValidationError(where, "unknown key")
            if key == "points":
                vk[key] = _parse_points(raw, where)
                continue
            default = _VESSEL_KEYS[key].default
            val = _coerce(raw, 0.0 if default is None else default, where)
            if val is None and default is not None:
                raise SceneValidationError(where, "value required")
            vk[key] = val
        if "points" not in vk:
            raise SceneValidationError(f"{name}.points", "missing")
        vessels.append(VesselSpec(**vk))
    return validate_scene(SceneSpec(vessels=tuple(vessels), **kwargs))


def dump_scene(scene):
    cp = configparser.ConfigParser()
    cp["scene"] = {k: "" if getattr(scene, k) is None else str(getattr(scene, k)) for k in _SCENE_KEYS}
    for i, v in enumerate(scene.vessels, 1):
        sec = {}
        for k in _VESSEL_KEYS:
            val = getattr(v, k)
            if k == "points":
                sec[k] = "; ".join(f"{float(x)!r},{float(y)!r}" for x, y in val)
            else:
                sec[k] = "" if val is None else str(val)
        cp[f"vessel.{i}"] = sec
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def straight_vessel(scene_size=256, width=10.0, angle=0.0, length=None, **kw):
    """Convenience spec: a straight vessel through the image center."""
    length = length or scene_size - 2 * (1.5 * width * 1.3 + 4)
    c = (scene_size - 1) / 2
    dx, dy = math.cos(math.radians(angle)) * length / 2, math.sin(math.radians(angle)) * length / 2
    return VesselSpec(points=((c - dx, c - dy), (c + dx, c + dy)), width=width, **kw)

