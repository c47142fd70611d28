"""Image containers and the basic pixel operations everything else builds on.

Buffers are stored as float32; arithmetic is carried out in float64 and
cast back on construction.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ContractError, DomainError

# BT.709 / sRGB primaries
LUMA_WEIGHTS = np.array([0.2126, 0.7152, 0.0722])
DEFAULT_PEAK = 4000.0

_threads: int = os.cpu_count() or 1


def set_threads(n: Optional[int]) -> int:
    """Bound the worker pool used by row-parallel operations."""
    global _threads
    _threads = max(1, int(n)) if n else (os.cpu_count() or 1)
    return _threads


def get_threads() -> int:
    return _threads


def map_rows(fn: Callable[[np.ndarray, int], np.ndarray], arr: np.ndarray,
             out_dtype=np.float64) -> np.ndarray:
    """Apply ``fn(row_block, first_row)`` over horizontal bands of ``arr``.

    Bands are fixed by the thread count only through scheduling; each band's
    result is written to its own slice, so output never depends on ordering.
    """
    h = arr.shape[0]
    n = min(_threads, h)
    if n <= 1:
        return np.asarray(fn(arr, 0), dtype=out_dtype)
    bounds = np.linspace(0, h, n + 1).astype(int)
    first = fn(arr[bounds[0]:bounds[1]], 0)
    out = np.empty((h,) + np.shape(first)[1:], dtype=out_dtype)
    out[bounds[0]:bounds[1]] = first

    def work(i):
        lo, hi = bounds[i], bounds[i + 1]
        out[lo:hi] = fn(arr[lo:hi], lo)

    with ThreadPoolExecutor(max_workers=n) as pool:
        list(pool.map(work, range(1, n)))
    return out


@dataclass
class LinearImage:
    """H x W x 3 image in absolute linear units (cd/m^2 per channel)."""

    data: np.ndarray
    peak_nominal: Optional[float] = None

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3 or data.shape[2] != 3:
            raise ContractError(f"expected an H x W x 3 array, got shape {data.shape}")
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise DomainError("image must be at least 1 x 1")
        data = np.ascontiguousarray(data, dtype=np.float32)
        if not np.all(np.isfinite(data)):
            raise DomainError("image contains non-finite values")
        if np.any(data < 0):
            raise DomainError("image contains negative values")
        self.data = data

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @classmethod
    def constant(cls, height: int, width: int, value, **kw) -> "LinearImage":
        return cls(np.broadcast_to(np.asarray(value, dtype=np.float64),
                                   (height, width, 3)).copy(), **kw)


def as_array(img) -> np.ndarray:
    """float64 view of a LinearImage, or of a bare array."""
    if isinstance(img, LinearImage):
        return img.data.astype(np.float64)
    return np.asarray(img, dtype=np.float64)


def luminance(img) -> np.ndarray:
    """Per-pixel luminance map, Y = 0.2126 R + 0.7152 G + 0.0722 B."""
    rgb = as_array(img)
    return rgb[..., 0] * LUMA_WEIGHTS[0] + rgb[..., 1] * LUMA_WEIGHTS[1] + rgb[..., 2] * LUMA_WEIGHTS[2]


def rescale_to_peak(img: LinearImage, l_peak: float = DEFAULT_PEAK) -> LinearImage:
    """Scale the image globally so its maximum luminance equals ``l_peak``."""
    if not l_peak > 0:
        raise DomainError(f"l_peak must be positive, got {l_peak}")
    y_max = float(luminance(img).max())
    if not y_max > 0:
        raise DomainError("cannot rescale an image with zero luminance everywhere")
    return LinearImage(as_array(img) * (l_peak / y_max), peak_nominal=float(l_peak))


def gaussian_kernel(sigma: float) -> np.ndarray:
    """1-D Gaussian taps truncated at radius ceil(3 sigma), normalized to sum 1."""
    if not sigma > 0:
        raise DomainError(f"sigma must be positive, got {sigma}")
    radius = int(math.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def _convolve_axis(m: np.ndarray, k: np.ndarray, axis: int) -> np.ndarray:
    radius = len(k) // 2
    pad = [(0, 0)] * m.ndim
    pad[axis] = (radius, radius)
    # 'symmetric' mirrors about the edge, repeating the border sample
    p = np.pad(m, pad, mode="symmetric")
    n = m.shape[axis]
    out = np.zeros_like(m)
    for i, w in enumerate(k):
        out += w * np.take(p, np.arange(i, i + n), axis=axis)
    return out


def gaussian_blur(m: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur of a 2-D map with mirrored boundaries."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ContractError(f"expected a 2-D map, got shape {m.shape}")
    k = gaussian_kernel(sigma)
    return _convolve_axis(_convolve_axis(m, k, 0), k, 1)


def percentile(m: np.ndarray, p: float) -> float:
    """Linear-interpolation percentile at rank p/100 * (N - 1)."""
    m = np.asarray(m, dtype=np.float64)
    if m.size == 0:
        raise DomainError("percentile of an empty map")
    if not 0 <= p <= 100:
        raise DomainError(f"percentile must be in [0, 100], got {p}")
    return float(np.percentile(m, p, method="linear"))


def crop(img: LinearImage, x: int, y: int, w: int, h: int) -> LinearImage:
    if w < 1 or h < 1 or x < 0 or y < 0 or x + w > img.width or y + h > img.height:
        raise DomainError(
            f"crop ({x}, {y}, {w}, {h}) outside {img.width} x {img.height} image")
    return LinearImage(img.data[y:y + h, x:x + w].copy(), peak_nominal=img.peak_nominal)


def _bilinear_coords(n_in: int, n_out: int):
    # pixel-centre alignment, clamped to the edge samples
    s = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    s = np.clip(s, 0.0, n_in - 1)
    i0 = np.floor(s).astype(int)
    i1 = np.minimum(i0 + 1, n_in - 1)
    return i0, i1, s - i0


def resize_bilinear(img: LinearImage, w: int, h: int) -> LinearImage:
    if w < 1 or h < 1:
        raise DomainError(f"target size must be positive, got {w} x {h}")
    a = as_array(img)
    y0, y1, fy = _bilinear_coords(a.shape[0], h)
    x0, x1, fx = _bilinear_coords(a.shape[1], w)
    fy = fy[:, None, None]
    fx = fx[None, :, None]
    top = a[y0][:, x0] * (1 - fx) + a[y0][:, x1] * fx
    bot = a[y1][:, x0] * (1 - fx) + a[y1][:, x1] * fx
    return LinearImage(top * (1 - fy) + bot * fy, peak_nominal=img.peak_nominal)
