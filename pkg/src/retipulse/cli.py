"""Command-line front end.

    retipulse segment IMAGE -o OUT [--debug]
    retipulse measure IMAGE (--at X,Y | --segment ID) -o OUT
    retipulse track FRAMES --at X,Y [--at X,Y ...] --fps F -o OUT
    retipulse eval (--drive DIR [--predictions DIR] | --review CSV --images DIR) -o OUT
    retipulse synth SCENE -o OUT [--seed N]

Exit codes: 0 success, 2 file I/O, 3 no vessel / no measurable pulsation,
4 tracking lost, 64 usage, 65 invalid configuration or scene.
"""

import argparse
import csv
from dataclasses import replace
import glob
import hashlib
import io
import json
import os
import sys

import numpy as np

from . import __version__, caliper, config, imageio, metrics, pulse, segment, skeleton, synthgen
from .errors import (ConfigError, InsufficientPulsationError, LowContrastError, NoVesselError,
                     TooShortError, TrackingLostError)
from .imageio import ImageIOError

EXIT_OK = 0
EXIT_IO = 2
EXIT_NO_VESSEL = 3
EXIT_TRACKING_LOST = 4
EXIT_USAGE = 64
EXIT_CONFIG = 65

IMAGE_EXTS = (".png", ".ppm", ".pgm", ".pnm", ".bmp", ".tif", ".tiff", ".gif", ".jpg", ".jpeg")

# fixed 12-color cycle keyed by segment id
PALETTE = (
    (230, 25, 75), (60, 180, 75), (255, 225, 25), (0, 130, 200), (245, 130, 48),
    (145, 30, 180), (70, 240, 240), (240, 50, 230), (210, 245, 60), (250, 190, 190),
    (0, 128, 128), (170, 110, 40),
)

STAGE_NAMES = ("original", "green", "clahe", "background_subtracted", "threshold", "segmented")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _point(text):
    try:
        x, y = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected X,Y, got {text!r}") from None
    return x, y


# -- shared plumbing --------------------------------------------------------

class Run:
    """Collects input hashes and writes the manifest next to the outputs."""

    def __init__(self, command, out, cfg, arguments):
        self.command = command
        self.out = out
        self.cfg = cfg
        self.arguments = arguments
        self.inputs = []

    def read(self, reader, path):
        data = reader(path)
        self.hash(path)
        return data

    def hash(self, path):
        h = hashlib.sha256()
        with open(path, "rb") as fh:
            for chunk in iter(lambda: fh.read(1 << 20), b""):
                h.update(chunk)
        self.inputs.append({"path": os.path.normpath(path), "sha256": h.hexdigest()})

    def path(self, *parts):
        p = os.path.join(self.out, *parts)
        os.makedirs(os.path.dirname(p), exist_ok=True)
        return p

    def manifest(self):
        doc = {
            "tool": "retipulse",
            "version": __version__,
            "command": self.command,
            "arguments": self.arguments,
            "config": self.cfg.to_dict(),
            "inputs": self.inputs,
        }
        write_text(self.path("manifest.json"), json.dumps(doc, indent=2, sort_keys=True) + "\n")


def write_text(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def write_csv(path, header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    write_text(path, buf.getvalue())


def _fmt(v, digits=4):
    return "" if v is None else f"{v:.{digits}f}"


def load_config(path):
    if path is None:
        return config.RunConfig().validate()
    try:
        return config.load(path)
    except OSError as exc:
        raise ImageIOError(path, exc.strerror or str(exc)) from None


def _analyse(rgb, cfg):
    seg = segment.segment_vessels(rgb, cfg.segment, keep_stages=True)
    lines = skeleton.extract_centerlines(seg.vessel_mask, cfg.skeleton)
    return seg, lines


def overlay(gray, paths):
    """Centerlines drawn in palette colors over the dimmed green channel, with ids."""
    from PIL import Image, ImageDraw

    base = (np.asarray(gray, dtype=np.float64) * 0.6).astype(np.uint8)
    rgb = np.repeat(base[:, :, None], 3, axis=2)
    for p in paths:
        color = PALETTE[(p.id - 1) % len(PALETTE)]
        rgb[p.points[:, 1], p.points[:, 0]] = color
    im = Image.fromarray(rgb)
    draw = ImageDraw.Draw(im)
    for p in paths:
        x, y = p.midpoint
        color = PALETTE[(p.id - 1) % len(PALETTE)]
        draw.text((x + 3, y + 3), str(p.id), fill=color)
    return np.asarray(im)


# -- subcommands ------------------------------------------------------------

def cmd_segment(args, cfg):
    run = Run("segment", args.out, cfg, {"image": args.image, "debug": args.debug})
    rgb = run.read(imageio.read_rgb, args.image)
    seg, lines = _analyse(rgb, cfg)
    imageio.write_png(run.path("vessel_mask.png"), seg.vessel_mask, mask=True)
    imageio.write_png(run.path("fov_mask.png"), seg.fov_mask, mask=True)
    imageio.write_png(run.path("centerline_overlay.png"), overlay(seg.stages["green"], lines.paths))
    write_csv(run.path("segments.csv"), ["segment", "length", "mid_x", "mid_y"],
              [(p.id, len(p), *p.midpoint) for p in lines.paths])
    if args.debug:
        for k, name in enumerate(STAGE_NAMES):
            img = seg.stages[name]
            is_mask = name in ("threshold", "segmented")
            imageio.write_png(run.path("stages", f"{k + 1}_{name}.png"), img, mask=is_mask)
    run.manifest()
    return EXIT_OK


def cmd_measure(args, cfg):
    if (args.at is None) == (args.segment is None):
        raise UsageError("give exactly one of --at or --segment")
    run = Run("measure", args.out, cfg, {"image": args.image, "at": args.at, "segment": args.segment})
    rgb = run.read(imageio.read_rgb, args.image)
    seg, lines = _analyse(rgb, cfg)
    if args.at is not None:
        path = skeleton.select_nearest(lines.paths, args.at, args.max_distance)
    else:
        match = [p for p in lines.paths if p.id == args.segment]
        if not match:
            raise NoVesselError(f"no segment with id {args.segment}")
        path = match[0]
    est = caliper.measure_path(seg.stages["green"], path, seg.max_diameter, cfg.caliper)
    write_csv(run.path("widths.csv"), ["point", "cx", "cy", "width_px"],
              [(i, int(x), int(y), _fmt(w, 1)) for i, ((x, y), w) in enumerate(zip(path.points, est.widths))])
    imageio.write_png(run.path("profile_stack.png"), est.stack.values)
    imageio.write_png(run.path("clustered_mask.png"), est.clustered.mask, mask=True)
    imageio.write_png(run.path("repaired_mask.png"), est.repaired, mask=True)
    summary = {
        "segment": path.id,
        "points": len(path),
        "max_diameter": round(seg.max_diameter, 4),
        "mean_width": round(float(est.widths.mean()), 4),
        "min_width": float(est.widths.min()),
        "max_width": float(est.widths.max()),
    }
    write_text(run.path("summary.json"), json.dumps(summary, indent=2) + "\n")
    print(json.dumps(summary))
    run.manifest()
    return EXIT_OK


def list_frames(source):
    if os.path.isdir(source):
        names = [os.path.join(source, n) for n in os.listdir(source)
                 if n.lower().endswith(IMAGE_EXTS)]
    else:
        names = glob.glob(source)
        if not names and not glob.has_magic(source):
            raise ImageIOError(source, "no such file or directory")
    return sorted(names)


def _plot(path, series_list, smoothed_list, reports):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(len(series_list), 1, figsize=(8, 2.8 * len(series_list)), squeeze=False)
    for ax, s, sm, rep in zip(axes[:, 0], series_list, smoothed_list, reports):
        t = s.times
        ax.plot(t, s.values, color="0.6", lw=1, label="raw")
        if sm is not None:
            ax.plot(t, sm.values, color="C0", lw=1.5, label="smoothed")
        if rep is not None:
            for i, kind in rep.extrema:
                ax.plot(t[i], sm.values[i], "v" if kind == "min" else "^",
                        color="C3" if kind == "max" else "C2")
            ax.set_title(f"{s.vessel_kind}: {rep.heart_rate_bpm:.2f} bpm ({rep.formula})", fontsize=9)
        ax.set_xlabel("time (s)")
        ax.set_ylabel("diameter (px)")
        ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)


def cmd_track(args, cfg):
    fps = args.fps if args.fps is not None else cfg.fps
    if fps <= 0:
        raise UsageError("--fps must be positive")
    kinds = args.kind or []
    if len(kinds) > len(args.at):
        raise UsageError("more --kind than --at values")
    kinds = kinds + ["unknown"] * (len(args.at) - len(kinds))
    names = list_frames(args.frames)
    need = max(2, cfg.pulse.sg_window + 1)
    if len(names) < need:
        raise UsageError(f"need at least {need} frames, found {len(names)}")
    run = Run("track", args.out, cfg, {"frames": args.frames, "at": args.at, "fps": fps, "kind": kinds})
    frames = [run.read(imageio.read_rgb, n) for n in names]
    try:
        series, _ = pulse.track_many(frames, args.at, cfg.pulse, cfg.segment, cfg.skeleton,
                                     cfg.caliper, fps, kinds)
    except TrackingLostError as exc:
        print(f"tracking lost at frame {exc.frame} ({names[exc.frame]})", file=sys.stderr)
        return EXIT_TRACKING_LOST
    vessels, smoothed_list, reports = [], [], []
    status = EXIT_OK
    for v, (s, click) in enumerate(zip(series, args.at), 1):
        sm = pulse.smooth(s, cfg.pulse)
        entry = {"index": v, "click": list(click), "kind": s.vessel_kind}
        try:
            rep = pulse.heart_rate(pulse.find_extrema(sm), fps, cfg.pulse.formula)
            entry["report"] = rep.to_dict()
        except InsufficientPulsationError as exc:
            rep = None
            entry["error"] = str(exc)
            status = EXIT_NO_VESSEL
        vessels.append(entry)
        smoothed_list.append(sm)
        reports.append(rep)
        name = "series.csv" if v == 1 else f"series_{v}.csv"
        write_csv(run.path(name), ["frame_index", "time_s", "raw_px", "smoothed_px"],
                  [(k, _fmt(k / fps, 6), _fmt(raw), _fmt(smv))
                   for k, (raw, smv) in enumerate(zip(s.values, sm.values))])
    doc = {"fps": fps, "frames": len(frames), "formula": cfg.pulse.formula, "vessels": vessels}
    if len(series) >= 2:
        doc["pearson_r_smoothed"] = pulse.pearson(smoothed_list[0].values, smoothed_list[1].values)
    write_text(run.path("pulse_report.json"), json.dumps(doc, indent=2) + "\n")
    _plot(run.path("pulse_plot.png"), series, smoothed_list, reports)
    run.manifest()
    for entry in vessels:
        if "error" in entry:
            print(f"vessel {entry['index']}: {entry['error']}", file=sys.stderr)
    return status


def _find_by_id(directory, ident, what):
    if os.path.isdir(directory):
        for name in sorted(os.listdir(directory)):
            if name.split("_")[0] == ident and name.lower().endswith(IMAGE_EXTS):
                return os.path.join(directory, name)
    raise ImageIOError(os.path.join(directory, f"{ident}_*"), f"missing {what}")


def _average(rows, keys):
    return {k: float(np.mean([r[k] for r in rows])) if rows else None for k in keys}


def eval_drive(args, cfg, run):
    images_dir = os.path.join(args.drive, "images")
    if not os.path.isdir(images_dir):
        raise ImageIOError(images_dir, "missing images directory")
    names = sorted(n for n in os.listdir(images_dir) if n.lower().endswith(IMAGE_EXTS))
    rows = []
    for name in names:
        ident = name.split("_")[0]
        manual = _find_by_id(os.path.join(args.drive, "1st_manual"), ident, "ground truth")
        fov = _find_by_id(os.path.join(args.drive, "mask"), ident, "field-of-view mask")
        if args.predictions:
            pred = run.read(imageio.read_mask, _find_by_id(args.predictions, ident, "prediction"))
        else:
            rgb = run.read(imageio.read_rgb, os.path.join(images_dir, name))
            pred = segment.segment_vessels(rgb, cfg.segment).vessel_mask
        truth = run.read(imageio.read_mask, manual)
        fov_mask = run.read(imageio.read_mask, fov)
        acc, sens, spec = metrics.seg_scores(metrics.confusion(pred, truth, fov_mask))
        rows.append({"image": name, "accuracy": acc, "sensitivity": sens, "specificity": spec})
    keys = ("accuracy", "sensitivity", "specificity")
    avg = _average(rows, keys)
    write_csv(run.path("drive_scores.csv"), ["image", *keys],
              [(r["image"], *(_fmt(r[k]) for k in keys)) for r in rows]
              + [("average", *(_fmt(avg[k]) for k in keys))])
    doc = {"images": rows, "average": avg}
    write_text(run.path("drive_scores.json"), json.dumps(doc, indent=2) + "\n")
    print(json.dumps({"average": avg}))


def _resolve_image(directory, name):
    p = os.path.join(directory, name)
    if os.path.isfile(p):
        return p
    stem = os.path.splitext(name)[0]
    for ext in IMAGE_EXTS:
        if os.path.isfile(os.path.join(directory, stem + ext)):
            return os.path.join(directory, stem + ext)
    raise ImageIOError(p, "missing image")


def measure_all(gray, paths, max_diameter, params):
    """Points and widths of every measurable centerline, concatenated."""
    pts, ws = [], []
    for p in paths:
        try:
            est = caliper.measure_path(gray, p, max_diameter, params)
        except LowContrastError:
            continue
        pts.append(p.points)
        ws.append(est.widths)
    if not pts:
        return np.empty((0, 2)), np.empty(0)
    return np.concatenate(pts), np.concatenate(ws)


def eval_review(args, cfg, run):
    if not args.images:
        raise UsageError("--review needs --images DIR")
    groups = run.read(metrics.load_annotations, args.review)
    by_image = {}
    for (image, seg_id), recs in groups.items():
        by_image.setdefault(image, []).append((seg_id, recs))
    rows = []
    for image, segs in by_image.items():
        rgb = run.read(imageio.read_rgb, _resolve_image(args.images, image))
        seg, lines = _analyse(rgb, cfg)
        pts, ws = measure_all(seg.stages["green"], lines.paths, seg.max_diameter, cfg.caliper)
        for seg_id, recs in segs:
            refs = [(r.cx, r.cy) for r in recs]
            m = metrics.match_widths(pts, ws, refs, [r.width for r in recs], args.match_radius)
            row = {"image": image, "segment": seg_id, "points": len(recs),
                   "matched": m.matched, "unmatched": m.unmatched}
            if m.matched >= 2:
                st = metrics.width_error(m.estimated, m.truth)
                row.update(mu_mean=st.mu_mean, sigma_mean=st.sigma_mean,
                           mu_error=st.mu_error, sigma_error=st.sigma_error)
                if args.literal_mu:
                    try:
                        row["mu_error_reciprocal"] = metrics.width_error(
                            m.estimated, m.truth, literal_mu=True).mu_error
                    except metrics.UndefinedMetricError:
                        row["mu_error_reciprocal"] = None
            rows.append(row)
    keys = ("mu_mean", "sigma_mean", "mu_error", "sigma_error")
    scored = [r for r in rows if "sigma_error" in r]
    avg = _average(scored, keys)
    avg["unmatched"] = int(sum(r["unmatched"] for r in rows))
    header = ["image", "segment", "points", "matched", "unmatched", *keys]
    write_csv(run.path("review_scores.csv"), header,
              [(r["image"], r["segment"], r["points"], r["matched"], r["unmatched"],
                *(_fmt(r.get(k)) for k in keys)) for r in rows]
              + [("average", "", "", "", avg["unmatched"], *(_fmt(avg[k]) for k in keys))])
    write_text(run.path("review_scores.json"),
               json.dumps({"segments": rows, "average": avg}, indent=2) + "\n")
    print(json.dumps({"average": avg}))


def cmd_eval(args, cfg):
    if (args.drive is None) == (args.review is None):
        raise UsageError("give exactly one of --drive or --review")
    run = Run("eval", args.out, cfg, {"drive": args.drive, "predictions": args.predictions,
                                      "review": args.review, "images": args.images,
                                      "match_radius": args.match_radius,
                                      "literal_mu": args.literal_mu})
    if args.drive is not None:
        eval_drive(args, cfg, run)
    else:
        eval_review(args, cfg, run)
    run.manifest()
    return EXIT_OK


def cmd_synth(args, cfg):
    run = Run("synth", args.out, cfg, {"scene": args.scene, "seed": args.seed})
    try:
        with open(args.scene, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ImageIOError(args.scene, exc.strerror or str(exc)) from None
    run.hash(args.scene)
    scene = synthgen.parse_scene(text)
    if args.seed is not None:
        scene = replace(scene, seed=args.seed)
    write_text(run.path("scene.ini"), synthgen.dump_scene(scene))
    if scene.n_frames == 1:
        rgb, truth = synthgen.render(scene)
        name = "01_synth.png"
        imageio.write_png(run.path("images", name), rgb)
        imageio.write_png(run.path("1st_manual", "01_manual1.png"), truth.mask, mask=True)
        fov = (rgb.max(axis=2) > 0) if scene.fov_radius else np.ones(truth.mask.shape, bool)
        imageio.write_png(run.path("mask", "01_synth_mask.png"), fov, mask=True)
        write_text(run.path("truth.csv"), synthgen.truth_csv(truth, name))
    else:
        seq = synthgen.render_sequence(scene)
        rows = []
        for k, (frame, truth) in enumerate(zip(seq.frames, seq.truths)):
            name = f"frame_{k:04d}.png"
            imageio.write_png(run.path("frames", name), frame)
            rows.extend(synthgen.truth_rows(truth, name))
        write_csv(run.path("truth.csv"), metrics.ANNOTATION_HEADER, rows)
        write_csv(run.path("series_truth.csv"),
                  ["frame_index", "time_s", *(f"vessel_{i + 1}_px" for i in range(len(scene.vessels)))],
                  [(k, _fmt(k / scene.fps, 6), *(_fmt(v, 6) for v in seq.series[:, k]))
                   for k in range(scene.n_frames)])
    run.manifest()
    return EXIT_OK


def build_parser():
    parser = _Parser(prog="retipulse", description="Retinal vessel caliber and pulse tools.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("-o", "--out", required=True, help="output directory")
        p.add_argument("-c", "--config", help="sectioned key=value config file")

    p = sub.add_parser("segment", help="vessel map, FOV mask and labeled centerlines")
    p.add_argument("image")
    p.add_argument("--debug", action="store_true", help="also write the six stage images")
    common(p)

    p = sub.add_parser("measure", help="per-point widths of one vessel")
    p.add_argument("image")
    p.add_argument("--at", type=_point, help="X,Y near the vessel")
    p.add_argument("--segment", type=int, help="segment id from centerline_overlay.png")
    p.add_argument("--max-distance", type=float, default=50.0,
                   help="largest accepted distance from --at to a centerline (px)")
    common(p)

    p = sub.add_parser("track", help="diameter series and heart rate over frames")
    p.add_argument("frames", help="frame directory or glob; file name order is time order")
    p.add_argument("--at", type=_point, action="append", required=True, help="X,Y on frame 0; repeatable")
    p.add_argument("--kind", action="append", choices=("artery", "vein", "unknown"),
                   help="vessel kind per --at, in order")
    p.add_argument("--fps", type=float, help="frame rate (default from config)")
    common(p)

    p = sub.add_parser("eval", help="score against a DRIVE or REVIEW style dataset")
    p.add_argument("--drive", help="directory with images/, 1st_manual/ and mask/")
    p.add_argument("--predictions", help="precomputed vessel maps named by image id")
    p.add_argument("--review", help="width annotation CSV")
    p.add_argument("--images", help="image directory for --review")
    p.add_argument("--match-radius", type=float, default=3.0)
    p.add_argument("--literal-mu", action="store_true",
                   help="also report the mean of reciprocal differences")
    common(p)

    p = sub.add_parser("synth", help="render a scene file with its ground truth")
    p.add_argument("scene")
    p.add_argument("--seed", type=int)
    common(p)
    return parser


COMMANDS = {
    "segment": cmd_segment,
    "measure": cmd_measure,
    "track": cmd_track,
    "eval": cmd_eval,
    "synth": cmd_synth,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        return COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"retipulse: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ImageIOError as exc:
        print(f"retipulse: {exc}", file=sys.stderr)
        return EXIT_IO
    except ConfigError as exc:
        print(f"retipulse: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrackingLostError as exc:
        print(f"retipulse: {exc}", file=sys.stderr)
        return EXIT_TRACKING_LOST
    except (NoVesselError, LowContrastError) as exc:
        print(f"retipulse: {exc}", file=sys.stderr)
        return EXIT_NO_VESSEL
    except TooShortError as exc:
        print(f"retipulse: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
