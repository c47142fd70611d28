"""Transfer functions between absolute linear light and display code values.

PU21 here is the log-quadratic approximation

    V = a * (log2 L - Lmin)^2 + b * (log2 L - Lmin)

valid for L in [0.005, 10000] cd/m^2. PQ is SMPTE ST 2084 normalized by
10000 cd/m^2; sRGB is the usual piecewise curve on relative values.

Every scalar function accepts a float or an ndarray and evaluates in float64.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ContractError, DomainError
from .imgcore import LinearImage, as_array, map_rows

PU21_L_FLOOR = 0.005
PU21_L_CEIL = 10000.0
PQ_L_MAX = 10000.0

PQ_M1 = 2610.0 / 16384.0
PQ_M2 = 2523.0 / 4096.0 * 128.0
PQ_C1 = 3424.0 / 4096.0
PQ_C2 = 2413.0 / 4096.0 * 32.0
PQ_C3 = 2392.0 / 4096.0 * 32.0


@dataclass(frozen=True)
class Pu21Params:
    a: float = 0.001908
    b: float = 0.0078
    l_min_log2: float = math.log2(PU21_L_FLOOR)
    l_max: float = PU21_L_CEIL

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise DomainError("PU21 coefficients a and b must be positive")

    @property
    def l_min(self) -> float:
        return 2.0 ** self.l_min_log2


PU21_DEFAULT = Pu21Params()


class TransferTag(str, enum.Enum):
    PU21 = "pu21"
    PQ = "pq"
    SRGB = "srgb"
    LINEAR_NORMALIZED = "linear"


def _finite(x, what: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise DomainError(f"{what}: non-finite input")
    return x


def _out(x: np.ndarray, like):
    return float(x) if np.ndim(like) == 0 else x


def _clip(x: np.ndarray, lo: float, hi: float):
    n = int(np.count_nonzero((x < lo) | (x > hi)))
    return np.clip(x, lo, hi), n


def pu21_encode(l, p: Pu21Params = PU21_DEFAULT, *, return_clipped: bool = False):
    """Absolute luminance (cd/m^2) to PU21 code value.

    Inputs outside [L_min, l_max] are clamped. With ``return_clipped`` a
    ``(values, n_clipped)`` pair is returned.
    """
    x = _finite(l, "pu21_encode")
    x, n = _clip(x, p.l_min, p.l_max)
    d = np.log2(x) - p.l_min_log2
    # the floor must land on exactly zero
    d = np.where(x == p.l_min, 0.0, d)
    v = p.a * d * d + p.b * d
    v = _out(v, l)
    return (v, n) if return_clipped else v


def pu21_decode(v, p: Pu21Params = PU21_DEFAULT):
    """PU21 code value back to absolute luminance (cd/m^2)."""
    x = _finite(v, "pu21_decode")
    if np.any(x < 0):
        raise DomainError("pu21_decode: negative code value")
    e = (2 * p.a * p.l_min_log2 - p.b + np.sqrt(p.b * p.b + 4 * p.a * x)) / (2 * p.a)
    return _out(np.exp2(e), v)


def pq_encode(l, *, return_clipped: bool = False):
    """Absolute luminance (cd/m^2) to ST 2084 code value in [0, 1]."""
    x = _finite(l, "pq_encode")
    x, n = _clip(x, 0.0, PQ_L_MAX)
    y = np.power(x / PQ_L_MAX, PQ_M1)
    v = np.power((PQ_C1 + PQ_C2 * y) / (1 + PQ_C3 * y), PQ_M2)
    v = _out(v, l)
    return (v, n) if return_clipped else v


def pq_decode(v, *, return_clipped: bool = False):
    x = _finite(v, "pq_decode")
    x, n = _clip(x, 0.0, 1.0)
    e = np.power(x, 1.0 / PQ_M2)
    y = np.power(np.maximum(e - PQ_C1, 0.0) / (PQ_C2 - PQ_C3 * e), 1.0 / PQ_M1)
    out = _out(y * PQ_L_MAX, v)
    return (out, n) if return_clipped else out


SRGB_LINEAR_BREAK = 0.0031308
SRGB_CODE_BREAK = 0.04045


def srgb_encode(l):
    """Relative linear value in [0, 1] to sRGB code value. Clamps."""
    x = np.clip(_finite(l, "srgb_encode"), 0.0, 1.0)
    v = np.where(x <= SRGB_LINEAR_BREAK, 12.92 * x,
                 1.055 * np.power(x, 1 / 2.4) - 0.055)
    return _out(v, l)


def srgb_decode(v):
    x = np.clip(_finite(v, "srgb_decode"), 0.0, 1.0)
    l = np.where(x <= SRGB_CODE_BREAK, x / 12.92,
                 np.power((x + 0.055) / 1.055, 2.4))
    return _out(l, v)


@dataclass
class EncodedImage:
    """H x W x 3 code values tagged with the transfer that produced them.

    ``scale`` is the divisor used by LINEAR_NORMALIZED (1.0 otherwise).
    ``clipped`` counts samples clamped during encoding.
    """

    data: np.ndarray
    tag: TransferTag
    scale: float = 1.0
    clipped: int = field(default=0, compare=False)

    def __post_init__(self):
        self.tag = TransferTag(self.tag)
        data = np.asarray(self.data)
        if data.ndim != 3 or data.shape[2] != 3:
            raise ContractError(f"expected an H x W x 3 array, got shape {data.shape}")
        self.data = np.ascontiguousarray(data, dtype=np.float32)


def encode_image(img: LinearImage, tag: TransferTag, p: Pu21Params = PU21_DEFAULT) -> EncodedImage:
    """Apply a transfer function pixelwise and per channel."""
    tag = TransferTag(tag)
    a = as_array(img)
    if a.size == 0:
        raise DomainError("empty image")
    if tag is TransferTag.LINEAR_NORMALIZED:
        peak = float(a.max())
        if not peak > 0:
            raise DomainError("cannot normalize an all-zero image")
        return EncodedImage(a / peak, tag, scale=peak)
    if tag is TransferTag.SRGB:
        clipped = int(np.count_nonzero(a > 1.0))
        return EncodedImage(map_rows(lambda r, _: srgb_encode(r), a), tag, clipped=clipped)
    fn = {TransferTag.PU21: lambda x: pu21_encode(x, p, return_clipped=True),
          TransferTag.PQ: lambda x: pq_encode(x, return_clipped=True)}[tag]
    counts = []

    def band(rows, _):
        v, n = fn(rows)
        counts.append(n)
        return v

    v = map_rows(band, a)
    return EncodedImage(v, tag, clipped=int(sum(counts)))


def decode_image(img: EncodedImage, p: Pu21Params = PU21_DEFAULT) -> LinearImage:
    """Inverse of :func:`encode_image`. sRGB decodes to relative values."""
    a = img.data.astype(np.float64)
    if a.size == 0:
        raise DomainError("empty image")
    if img.tag is TransferTag.LINEAR_NORMALIZED:
        return LinearImage(a * img.scale)
    fn = {TransferTag.PU21: lambda x: pu21_decode(np.maximum(x, 0.0), p),
          TransferTag.PQ: pq_decode,
          TransferTag.SRGB: srgb_decode}[img.tag]
    return LinearImage(map_rows(lambda r, _: fn(r), a))
