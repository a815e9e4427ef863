import math

import numpy as np
import pytest

from retipulse import _backend, synthgen

BACKENDS = sorted(_backend.available())


@pytest.fixture(params=BACKENDS)
def backend(request):
    """Run the test once per importable kernel backend."""
    previous = _backend.use(request.param)
    yield request.param
    _backend.use(previous)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_blob(rng, size=40, n=4):
    """A smooth random blob: union of a few random ellipses."""
    yy, xx = np.mgrid[0:size, 0:size]
    mask = np.zeros((size, size), dtype=np.uint8)
    for _ in range(n):
        cx, cy = rng.uniform(8, size - 8, 2)
        a, b = rng.uniform(2, 9, 2)
        t = rng.uniform(0, math.pi)
        u = (xx - cx) * math.cos(t) + (yy - cy) * math.sin(t)
        v = -(xx - cx) * math.sin(t) + (yy - cy) * math.cos(t)
        mask |= ((u / a) ** 2 + (v / b) ** 2 <= 1).astype(np.uint8)
    return mask


def straight_scene(width=10.0, angle=0.0, size=256, noise=5.0, seed=1, **kw):
    v = synthgen.straight_vessel(size, width=width, angle=angle, intensity=60.0, **kw)
    return synthgen.SceneSpec(width=size, height=size, background=160.0, noise_sigma=noise,
                              vessels=(v,), seed=seed)
