"""8-bit image files in and out (PNG, PPM/PGM, BMP, plus whatever Pillow decodes)."""

import os

import numpy as np
from PIL import Image

from .errors import RetiPulseError


class ImageIOError(RetiPulseError, OSError):
    def __init__(self, path, message):
        self.path = str(path)
        super().__init__(f"{path}: {message}")


def read_image(path):
    """Decode ``path`` to uint8, (H, W) for gray files and (H, W, 3) otherwise."""
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode in ("I;16", "I;16B", "I;16L", "I", "F"):
                raise ImageIOError(path, f"unsupported {im.mode} image, expected 8-bit")
            if im.mode in ("L", "1"):
                arr = np.asarray(im.convert("L"))
            else:
                arr = np.asarray(im.convert("RGB"))
    except ImageIOError:
        raise
    except (OSError, ValueError, SyntaxError) as exc:
        raise ImageIOError(path, str(exc) or type(exc).__name__) from None
    return np.ascontiguousarray(arr, dtype=np.uint8)


def read_rgb(path):
    arr = read_image(path)
    return np.repeat(arr[:, :, None], 3, axis=2) if arr.ndim == 2 else arr


def read_mask(path):
    """Any non-zero pixel is foreground."""
    arr = read_image(path)
    if arr.ndim == 3:
        arr = arr.max(axis=2)
    return (arr > 0).astype(np.uint8)


def to_u8(arr):
    a = np.asarray(arr)
    if a.dtype == np.uint8:
        return a
    return np.clip(np.floor(a.astype(np.float64) + 0.5), 0, 255).astype(np.uint8)


def write_png(path, arr, mask=False):
    """Write an (H, W) or (H, W, 3) array; ``mask=True`` scales 0/1 to 0/255."""
    a = np.asarray(arr)
    if mask:
        a = (a != 0).astype(np.uint8) * 255
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    Image.fromarray(to_u8(a)).save(path, format="PNG")
