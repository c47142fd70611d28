"""Effective dynamic range and a PU21-space PSNR."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ContractError, DomainError
from .imgcore import LinearImage, as_array, gaussian_blur, luminance, percentile
from .xfer import PU21_L_FLOOR, pu21_encode

DR_SIGMA = 3.0
DR_P_LOW = 0.5
DR_P_HIGH = 99.5


@dataclass
class DrReport:
    dr_stops: float
    l_low: float
    l_high: float
    sigma: float
    degenerate: bool = False

    def to_json(self) -> dict:
        d = asdict(self)
        if not self.degenerate:
            d.pop("degenerate")
        return d


def effective_dr(img, sigma: float = DR_SIGMA, p_low: float = DR_P_LOW,
                 p_high: float = DR_P_HIGH) -> DrReport:
    """Dynamic range in stops between two percentiles of blurred luminance.

    The low percentile is floored at 0.005 cd/m^2 so dark or zero regions
    give a finite answer. An all-zero image reports 0 stops and sets
    ``degenerate``.
    """
    y = luminance(img)
    if y.size == 0:
        raise DomainError("empty image")
    if np.any(y < 0):
        raise DomainError("negative luminance")
    if not y.max() > 0:
        return DrReport(0.0, 0.0, 0.0, float(sigma), degenerate=True)
    smooth = gaussian_blur(y, sigma)
    lo = percentile(smooth, p_low)
    hi = percentile(smooth, p_high)
    lo_f = max(lo, PU21_L_FLOOR)
    hi_f = max(hi, lo_f)
    return DrReport(math.log2(hi_f / lo_f), lo, hi, float(sigma))


def pu_psnr(a, b) -> float:
    """PSNR (dB, peak 1) between PU21 encodings of two linear images.

    Identical encodings return ``math.inf``.
    """
    x, y = as_array(a), as_array(b)
    if x.shape != y.shape:
        raise ContractError(f"shape mismatch {x.shape} vs {y.shape}")
    return psnr(pu21_encode(x), pu21_encode(y))


def psnr(x, y, peak: float = 1.0) -> float:
    mse = float(np.mean((np.asarray(x, np.float64) - np.asarray(y, np.float64)) ** 2))
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)
