"""Compare the compiled and numpy kernel backends.

    python benchmarks/bench_kernels.py [--repeat 5] [--size 584x768]

Each kernel runs through the public ``raster``/``skeleton`` entry points on
the same inputs for every importable backend. Outputs are checked for
equality before timings are reported (best of ``--repeat``, milliseconds).
"""

import argparse
import time

import numpy as np

from retipulse import _backend, caliper, raster, segment, skeleton, synthgen


def frame(height, width):
    vs = (synthgen.VesselSpec(points=((0.1 * width, 0.2 * height), (0.52 * width, 0.5 * height),
                                      (0.9 * width, 0.43 * height)), width=12, intensity=60),
          synthgen.VesselSpec(points=((0.13 * width, 0.82 * height), (0.5 * width, 0.34 * height),
                                      (0.88 * width, 0.8 * height)), kind="quadratic", width=8,
                              intensity=70),
          synthgen.VesselSpec(points=((0.49 * width, 0.07 * height), (0.55 * width, 0.92 * height)),
                              width=6, intensity=75))
    scene = synthgen.SceneSpec(width=width, height=height, background=160, noise_sigma=5,
                               vessels=vs, fov_radius=0.49 * min(width, height), seed=7)
    img, _ = synthgen.render(scene)
    return img


def pipeline(img):
    seg = segment.segment_vessels(img)
    paths = skeleton.extract_centerlines(seg.vessel_mask).paths
    h, w = img.shape[:2]
    est = caliper.estimate_vessel(img[:, :, 1], paths, (0.31 * w, 0.36 * h), seg.max_diameter)
    return seg.vessel_mask, est.widths


def cases(img):
    gray = img[:, :, 1]
    seg = segment.segment_vessels(img)
    mask = seg.vessel_mask
    return {
        "median 5x5": lambda: raster.median_filter(gray, 5),
        "gaussian 55": lambda: raster.gaussian_blur(gray, 55),
        "distance transform": lambda: raster.distance_transform(mask),
        "components (8)": lambda: raster.connected_components(mask, 8).labels,
        "zhang-suen thinning": lambda: skeleton.thin(mask),
        "segment + measure": lambda: pipeline(img),
    }


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def same(a, b):
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    return np.array_equal(np.asarray(a), np.asarray(b))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--size", default="584x768", help="HEIGHTxWIDTH")
    args = ap.parse_args(argv)
    height, width = (int(v) for v in args.size.lower().split("x"))
    img = frame(height, width)

    names = sorted(_backend.available())
    previous = _backend.NAME
    results = {}
    try:
        for name in names:
            _backend.use(name)
            for label, fn in cases(img).items():
                results[label, name] = best_of(fn, args.repeat)
    finally:
        _backend.use(previous)

    print(f"frame {height}x{width}, best of {args.repeat}, ms")
    print(f"{'kernel':<22}" + "".join(f"{n:>10}" for n in names) + ("   speedup  equal" if len(names) > 1 else ""))
    for label in cases(img):
        row = f"{label:<22}" + "".join(f"{1000 * results[label, n][0]:10.1f}" for n in names)
        if len(names) > 1:
            compiled = next(n for n in names if n != "python")
            py, fast = results[label, "python"], results[label, compiled]
            eq = same(py[1], fast[1])
            row += f"{py[0] / fast[0]:9.1f}x  {'yes' if eq else 'NO'}"
        print(row)
    if len(names) == 1:
        print("compiled backend not built; only the numpy fallback was timed")


if __name__ == "__main__":
    main()
