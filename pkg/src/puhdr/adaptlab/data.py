"""Procedural datasets for the adaptation lab."""
from __future__ import annotations

import math

import numpy as np

from ..imgcore import DEFAULT_PEAK, gaussian_blur
from ..rawsim import radial_profile
from ..xfer import PU21_L_FLOOR, pu21_encode, srgb_encode

LDR_CLIP = 100.0


def mixture_2d(n: int, seed: int = 0, n_modes: int = 4, radius: float = 2.0,
               spread: float = 0.15) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian blobs on a circle. Returns points (n, 2) and one-hot mode labels."""
    rng = np.random.default_rng(seed)
    modes = rng.integers(0, n_modes, n)
    ang = 2 * np.pi * modes / n_modes
    centers = radius * np.stack([np.cos(ang), np.sin(ang)], axis=1)
    return centers + spread * rng.standard_normal((n, 2)), np.eye(n_modes)[modes]


def hdr_scene(rng: np.random.Generator, size: int = 16, peak: float = DEFAULT_PEAK,
              floor: float = PU21_L_FLOOR) -> np.ndarray:
    """One size x size x 3 linear HDR scene in cd/m^2, peak luminance ``peak``.

    Log-luminance is a blend of an off-centre radial falloff, a few rectangular
    plateaus, and blurred noise; a mild random tint is applied per channel.
    """
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    lo, hi = math.log(floor), math.log(peak)
    cy, cx = rng.uniform(-0.5, 1.5, 2) * size
    span = rng.uniform(0.5, 2.0) * size
    log_l = np.log(radial_profile(np.hypot(yy - cy, xx - cx), span, peak, floor))
    for _ in range(rng.integers(1, 4)):
        y0, x0 = rng.integers(0, size, 2)
        h, w = rng.integers(2, size // 2 + 1, 2)
        level = rng.uniform(lo, hi)
        mix = rng.uniform(0.3, 1.0)
        sl = (slice(y0, y0 + h), slice(x0, x0 + w))
        log_l[sl] = (1 - mix) * log_l[sl] + mix * level
    noise = gaussian_blur(rng.standard_normal((size, size)), rng.uniform(0.7, 2.0))
    log_l = log_l + rng.uniform(0.2, 1.0) * noise / (noise.std() + 1e-12)
    # stretch so the scene touches the peak and keeps a wide range
    log_l = log_l - log_l.max() + hi
    log_l = np.maximum(log_l, lo)
    tint = np.exp(rng.normal(0.0, 0.15, 3))
    rgb = np.exp(log_l)[..., None] * tint / tint.max()
    return np.clip(rgb, floor, peak)


def ldr_from_hdr(hdr: np.ndarray, clip: float = LDR_CLIP) -> np.ndarray:
    """Display-referred LDR: clip at ``clip`` cd/m^2, normalize, sRGB-encode."""
    return srgb_encode(np.minimum(hdr, clip) / clip)


def patches(img: np.ndarray, p: int) -> np.ndarray:
    """Non-overlapping p x p patches flattened to rows of length p * p * channels."""
    h, w, ch = img.shape
    img = img[: h - h % p, : w - w % p]
    a = img.reshape(h // p, p, w // p, p, ch).swapaxes(1, 2)
    return a.reshape(-1, p * p * ch)


def pu21_patches(n: int, patch_size: int = 4, seed: int = 0, scene_size: int = 16) -> np.ndarray:
    """``n`` flattened PU21-encoded HDR patches (48 values for 4 x 4 x 3)."""
    rng = np.random.default_rng(seed)
    out = []
    while sum(len(o) for o in out) < n:
        out.append(patches(pu21_encode(hdr_scene(rng, scene_size)), patch_size))
    return np.concatenate(out)[:n]
