"""Dataset preparation: DR-filtered random crops, median normalization and
exposure-bracketed sRGB renders."""
from __future__ import annotations

import json
import logging
import zlib
from dataclasses import asdict, dataclass, field
from typing import Iterable, List, Mapping, Optional, Sequence

import numpy as np

from .errors import DomainError
from .imgcore import DEFAULT_PEAK, LinearImage, as_array, crop, luminance
from .metrics import effective_dr
from .xfer import EncodedImage, TransferTag, srgb_encode

log = logging.getLogger(__name__)

DR_THRESHOLD = 5.0
DEFAULT_RATE = 8
CROP_SIZES = (512, 1024)
MEDIAN_PRESETS = {"study": 8.0, "web": 0.5}
MID_GRAY = 0.18


@dataclass(frozen=True)
class CropSpec:
    source_id: str
    x: int
    y: int
    size: int
    dr_stops: float

    def sort_key(self):
        return (self.source_id, self.x, self.y, self.size)


@dataclass
class Manifest:
    threshold: float
    peak: float
    seed: int
    entries: List[CropSpec] = field(default_factory=list)

    def to_json(self) -> str:
        entries = sorted(self.entries, key=CropSpec.sort_key)
        doc = {"threshold": float(self.threshold), "peak": float(self.peak),
               "seed": int(self.seed), "entries": [asdict(e) for e in entries]}
        return json.dumps(doc, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "Manifest":
        doc = json.loads(text)
        return cls(doc["threshold"], doc["peak"], doc["seed"],
                   [CropSpec(**e) for e in doc["entries"]])


def attempt_budget(height: int, width: int, size: int, rate: float = DEFAULT_RATE) -> int:
    """Number of candidate crops of ``size`` drawn from an image: proportional
    to how many non-overlapping crops would fit."""
    return int(round(rate * ((height * width) // (size * size))))


def _image_rng(seed: int, source_id: str, size: int) -> np.random.Generator:
    # crc32 rather than hash(): stable across interpreter runs
    return np.random.default_rng([seed, zlib.crc32(source_id.encode("utf-8")), size])


def sample_crops(img: LinearImage, sizes: Sequence[int] = CROP_SIZES,
                 dr_threshold: float = DR_THRESHOLD, rate: float = DEFAULT_RATE,
                 seed: int = 0, source_id: str = "image") -> List[CropSpec]:
    """Random square crops whose effective DR is at least ``dr_threshold``.

    Sizes that do not fit the image are skipped (logged). Each size gets its
    own RNG stream, so results do not depend on the order of ``sizes``.
    """
    kept = []
    for size in sizes:
        if size > img.width or size > img.height:
            log.info("%s: %dx%d too small for %d crops, skipped",
                     source_id, img.width, img.height, size)
            continue
        rng = _image_rng(seed, source_id, size)
        n = attempt_budget(img.height, img.width, size, rate)
        xs = rng.integers(0, img.width - size + 1, n)
        ys = rng.integers(0, img.height - size + 1, n)
        for x, y in zip(xs.tolist(), ys.tolist()):
            dr = effective_dr(crop(img, x, y, size, size)).dr_stops
            if dr >= dr_threshold:
                kept.append(CropSpec(source_id, x, y, size, dr))
    return kept


def build_manifest(images: Mapping[str, LinearImage], sizes: Sequence[int] = CROP_SIZES,
                   dr_threshold: float = DR_THRESHOLD, rate: float = DEFAULT_RATE,
                   seed: int = 0, peak: float = DEFAULT_PEAK) -> Manifest:
    entries = []
    for sid in sorted(images):
        entries.extend(sample_crops(images[sid], sizes, dr_threshold, rate, seed, sid))
    entries.sort(key=CropSpec.sort_key)
    return Manifest(dr_threshold, peak, seed, entries)


def median_luminance(img) -> float:
    return float(np.median(luminance(img)))


def normalize_median(img: LinearImage, target_median: float) -> LinearImage:
    """Scale uniformly so the median luminance equals ``target_median``."""
    med = median_luminance(img)
    if not med > 0:
        raise DomainError("median luminance is zero")
    if not target_median > 0:
        raise DomainError("target median must be positive")
    return LinearImage(as_array(img) * (target_median / med))


def default_anchor(img) -> float:
    """Luminance rendered as code 1.0 at EV 0: places the median at 18% grey."""
    med = median_luminance(img)
    return med / MID_GRAY if med > 0 else 1.0


def render_ev(img, ev: float = 0.0, anchor: Optional[float] = None) -> EncodedImage:
    """sRGB view of ``img`` after an exposure shift of ``ev`` stops."""
    if anchor is None:
        anchor = default_anchor(img)
    if not anchor > 0:
        raise DomainError("anchor must be positive")
    rel = as_array(img) * (np.exp2(ev) / anchor)
    return EncodedImage(srgb_encode(np.clip(rel, 0.0, 1.0)), TransferTag.SRGB,
                        clipped=int(np.count_nonzero(rel > 1.0)))
