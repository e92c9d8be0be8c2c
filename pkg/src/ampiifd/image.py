"""Image containers, file I/O and the low-level raster operators.

Images are plain 2-D ``float64`` numpy arrays of shape ``(height, width)``
holding luminance in [0, 1].  Every operator uses clamp-to-edge borders.
"""
from __future__ import annotations

import math
import os
from typing import NamedTuple

import numpy as np
from PIL import Image as PILImage
from scipy import ndimage

from .errors import ImageIOError

LUMA_WEIGHTS = (0.299, 0.587, 0.114)

_SAVE_FORMATS = {".png": "PNG", ".pgm": "PPM", ".ppm": "PPM", ".pnm": "PPM",
                 ".tif": "TIFF", ".tiff": "TIFF"}


class GradientField(NamedTuple):
    gx: np.ndarray
    gy: np.ndarray

    def magnitude(self):
        return np.hypot(self.gx, self.gy)


def as_image(data) -> np.ndarray:
    """Validate and convert array-like data to a float64 luminance image."""
    img = np.asarray(data, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError(f"expected a 2-D image, got shape {img.shape}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise ValueError("zero-dimension image")
    if not np.all(np.isfinite(img)):
        raise ValueError("image contains non-finite values")
    return img


def _decode(pil) -> np.ndarray:
    mode = pil.mode
    if mode in ("I;16", "I;16L", "I;16B", "I;16N"):
        return np.asarray(pil, dtype=np.float64) / 65535.0
    if mode == "I":
        # 16-bit PNGs decode to mode "I" on some Pillow versions
        arr = np.asarray(pil, dtype=np.float64)
        if arr.min(initial=0) < 0 or arr.max(initial=0) > 65535:
            raise ImageIOError("unsupported format: 32-bit integer raster")
        return arr / 65535.0
    if mode == "1":
        return np.asarray(pil.convert("L"), dtype=np.float64) / 255.0
    if mode == "L":
        return np.asarray(pil, dtype=np.float64) / 255.0
    if mode == "LA":
        return np.asarray(pil, dtype=np.float64)[..., 0] / 255.0
    if mode in ("P", "PA"):
        pil = pil.convert("RGB")
        mode = "RGB"
    if mode in ("RGB", "RGBA", "RGBX"):
        rgb = np.asarray(pil, dtype=np.float64)[..., :3] / 255.0
        w = LUMA_WEIGHTS
        return w[0] * rgb[..., 0] + w[1] * rgb[..., 1] + w[2] * rgb[..., 2]
    raise ImageIOError(f"unsupported format: pixel mode {mode!r}")


def load_image(path) -> np.ndarray:
    """Read a PNG/PNM/TIFF raster as luminance normalized to [0, 1].

    RGB inputs are reduced with Rec.601 weights; integer samples are divided
    by the maximum of their bit depth.
    """
    path = os.fspath(path)
    try:
        with PILImage.open(path) as pil:
            pil.load()
            img = _decode(pil)
    except ImageIOError:
        raise
    except (OSError, SyntaxError, ValueError) as exc:
        raise ImageIOError(f"unreadable file: {path} ({exc})") from exc
    if img.size == 0:
        raise ImageIOError(f"zero-dimension image: {path}")
    return np.ascontiguousarray(np.clip(img, 0.0, 1.0))


def quantize8(img: np.ndarray) -> np.ndarray:
    """Scale [0, 1] values to bytes, rounding half up."""
    return np.floor(np.clip(img, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def save_image(img: np.ndarray, path) -> None:
    """Write an image (or an ``(h, w, 3)`` RGB raster) as 8-bit."""
    path = os.fspath(path)
    fmt = _SAVE_FORMATS.get(os.path.splitext(path)[1].lower())
    if fmt is None:
        raise ImageIOError(f"unsupported output extension: {path}")
    data = np.asarray(img, dtype=np.float64)
    if data.ndim == 3 and data.shape[2] == 3:
        pil = PILImage.fromarray(quantize8(data), mode="RGB")
    elif data.ndim == 2:
        pil = PILImage.fromarray(quantize8(data), mode="L")
    else:
        raise ValueError(f"cannot save array of shape {data.shape}")
    try:
        pil.save(path, format=fmt)
    except OSError as exc:
        raise ImageIOError(f"unwritable path: {path} ({exc})") from exc


def gaussian_kernel(sigma: float) -> np.ndarray:
    radius = int(math.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_smooth(img: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur with radius ceil(3 sigma) and clamped borders."""
    if not math.isfinite(sigma) or sigma < 0:
        raise ValueError(f"sigma must be finite and >= 0, got {sigma}")
    img = np.asarray(img, dtype=np.float64)
    if sigma == 0:
        return img.copy()
    k = gaussian_kernel(sigma)
    out = ndimage.correlate1d(img, k, axis=0, mode="nearest")
    return ndimage.correlate1d(out, k, axis=1, mode="nearest")


def gradient(img: np.ndarray) -> GradientField:
    """Central differences inside, one-sided differences on the border."""
    img = np.asarray(img, dtype=np.float64)
    if img.shape[0] < 3 or img.shape[1] < 3:
        raise ValueError(f"gradient needs at least 3x3 pixels, got {img.shape}")
    gy, gx = np.gradient(img)
    return GradientField(gx, gy)


def bilinear_sample_many(img: np.ndarray, x, y) -> np.ndarray:
    """Vectorized bilinear interpolation with coordinates clamped to the frame."""
    h, w = img.shape
    x = np.clip(np.asarray(x, dtype=np.float64), 0.0, w - 1.0)
    y = np.clip(np.asarray(y, dtype=np.float64), 0.0, h - 1.0)
    x0 = np.minimum(np.floor(x).astype(np.intp), max(w - 2, 0))
    y0 = np.minimum(np.floor(y).astype(np.intp), max(h - 2, 0))
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = x - x0
    fy = y - y0
    top = img[y0, x0] * (1.0 - fx) + img[y0, x1] * fx
    bottom = img[y1, x0] * (1.0 - fx) + img[y1, x1] * fx
    return top * (1.0 - fy) + bottom * fy


def bilinear_sample(img: np.ndarray, x: float, y: float) -> float:
    if not (math.isfinite(x) and math.isfinite(y)):
        raise ValueError("non-finite sample coordinates")
    return float(bilinear_sample_many(img, x, y))
