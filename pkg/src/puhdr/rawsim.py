"""Simulated RAW capture: Bayer mosaic, bilinear demosaic, exposure clipping,
Poisson-Gaussian sensor noise and synthetic radial-gradient targets."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ContractError, DomainError
from .imgcore import LUMA_WEIGHTS, LinearImage, as_array, map_rows

PATTERNS = ("RGGB",)
DEFAULT_CLIP = 100.0
DEFAULT_PHOTON_GAIN = 400.0
DEFAULT_READ_SIGMA = 0.02


@dataclass
class BayerFrame:
    """Single-channel sensor frame; RGGB means R at (even row, even col)."""

    data: np.ndarray
    pattern: str = "RGGB"

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 2:
            raise ContractError(f"Bayer frame must be 2-D, got shape {data.shape}")
        if data.shape[0] % 2 or data.shape[1] % 2 or data.size == 0:
            raise ContractError(f"Bayer frame needs even, non-zero dimensions, got {data.shape}")
        if self.pattern not in PATTERNS:
            raise ContractError(f"unsupported CFA pattern {self.pattern!r}")
        data = np.ascontiguousarray(data, dtype=np.float32)
        if not np.all(np.isfinite(data)) or np.any(data < 0):
            raise DomainError("Bayer samples must be finite and non-negative")
        self.data = data

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def sidecar(self) -> dict:
        return {"pattern": self.pattern, "width": self.width, "height": self.height}

    def sidecar_json(self) -> str:
        return json.dumps(self.sidecar(), sort_keys=True)


def cfa_masks(height: int, width: int):
    """Boolean (R, G, B) site masks for an RGGB layout."""
    yy, xx = np.mgrid[0:height, 0:width]
    r = (yy % 2 == 0) & (xx % 2 == 0)
    b = (yy % 2 == 1) & (xx % 2 == 1)
    return r, ~(r | b), b


def mosaic(img: LinearImage) -> BayerFrame:
    a = as_array(img)
    h, w = a.shape[:2]
    if h % 2 or w % 2:
        raise ContractError(f"mosaic needs even dimensions, got {w} x {h}")
    out = np.empty((h, w))
    for ch, m in enumerate(cfa_masks(h, w)):
        out[m] = a[..., ch][m]
    return BayerFrame(out)


def _box3(a: np.ndarray) -> np.ndarray:
    # 3x3 neighbourhood sum with zero padding
    p = np.pad(a, 1)
    h, w = a.shape
    return sum(p[dy:dy + h, dx:dx + w] for dy in range(3) for dx in range(3))


def demosaic_bilinear(frame: BayerFrame) -> LinearImage:
    """Fill each missing channel with the mean of same-channel samples in the
    3x3 neighbourhood. On RGGB this is the classic bilinear stencil: two or
    four neighbours in the interior, fewer at the borders."""
    raw = frame.data.astype(np.float64)
    out = np.empty(raw.shape + (3,))
    for ch, m in enumerate(cfa_masks(*raw.shape)):
        mf = m.astype(np.float64)
        num = _box3(raw * mf)
        den = _box3(mf)
        out[..., ch] = np.where(m, raw, num / np.maximum(den, 1.0))
    return LinearImage(out)


def virtual_exposure(img: LinearImage, clip_at: float = DEFAULT_CLIP) -> LinearImage:
    if not clip_at > 0:
        raise DomainError(f"clip level must be positive, got {clip_at}")
    return LinearImage(np.minimum(as_array(img), clip_at), peak_nominal=img.peak_nominal)


@dataclass(frozen=True)
class NoiseParams:
    photon_gain: float = DEFAULT_PHOTON_GAIN
    read_sigma: float = DEFAULT_READ_SIGMA
    seed: int = 0

    def __post_init__(self):
        if not self.photon_gain > 0:
            raise DomainError("photon_gain must be positive")
        if not self.read_sigma >= 0:
            raise DomainError("read_sigma must be non-negative")


def add_noise(frame: BayerFrame, p: NoiseParams = NoiseParams()) -> BayerFrame:
    """Poisson shot noise at ``photon_gain`` plus Gaussian read noise.

    Each row draws from its own stream spawned from ``p.seed``, so output is
    identical for any thread count. Results are clamped at zero.
    """
    streams = np.random.SeedSequence(p.seed).spawn(frame.height)

    def rows(block, y0):
        out = np.empty(block.shape)
        for i, row in enumerate(block.astype(np.float64)):
            g = np.random.Generator(np.random.PCG64(streams[y0 + i]))
            shot = g.poisson(row * p.photon_gain) / p.photon_gain
            out[i] = shot + g.normal(0.0, 1.0, row.shape) * p.read_sigma
        return out

    noisy = map_rows(rows, frame.data)
    return BayerFrame(np.maximum(noisy, 0.0), frame.pattern)


CHROMA_CHANNELS = {
    "white": (0, 1, 2),
    "yellow": (0, 1),
    "red": (0,),
    "green": (1,),
}


def radial_profile(r, r_max: float, peak: float = 4000.0, floor: float = 0.005):
    """Log-linear falloff from ``peak`` at r = 0 to ``floor`` at r >= r_max."""
    t = np.clip(np.asarray(r, dtype=np.float64) / r_max, 0.0, 1.0)
    return np.exp(math.log(peak) + (math.log(floor) - math.log(peak)) * t)


def gradient_geometry(size: int):
    """Centre pixel (row, col) and r_max for a ``size`` x ``size`` gradient.

    The centre is pixel (size // 2, size // 2); r_max is its distance to the
    nearest corner pixel, so every corner reaches the floor.
    """
    c = size // 2
    r_max = math.hypot(min(c, size - 1 - c), min(c, size - 1 - c))
    return c, r_max


def synth_radial_gradient(size: int = 512, peak: float = 4000.0, floor: float = 0.005,
                          chroma: str = "white") -> LinearImage:
    if size < 2:
        raise ContractError("size must be at least 2")
    if not floor > 0 or not peak > floor:
        raise ContractError(f"need 0 < floor < peak, got floor={floor}, peak={peak}")
    if chroma not in CHROMA_CHANNELS:
        raise ContractError(f"chroma must be one of {sorted(CHROMA_CHANNELS)}")
    c, r_max = gradient_geometry(size)
    yy, xx = np.mgrid[0:size, 0:size]
    lum = radial_profile(np.hypot(yy - c, xx - c), r_max, peak, floor)
    chans = CHROMA_CHANNELS[chroma]
    # split so that the BT.709 luminance of the pixel equals the target
    k = 1.0 / sum(LUMA_WEIGHTS[ch] for ch in chans)
    out = np.zeros((size, size, 3))
    for ch in chans:
        out[..., ch] = lum * k
    return LinearImage(out)
