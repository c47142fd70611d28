"""Readers and writers for Radiance RGBE (.hdr), PFM and binary PPM.

RGBE pixels are decoded as ``c * 2**(e - 136)`` (no half-step mantissa
offset); the encoder rounds to nearest so that this decode is unbiased and
a write/read/write cycle reproduces the same bytes.
"""
from __future__ import annotations

import enum
import logging
import math
import re
from pathlib import Path
from typing import Union

import numpy as np

from .errors import ContractError, DomainError, ParseError, UnsupportedFormatError
from .imgcore import LinearImage, as_array
from .xfer import EncodedImage, TransferTag

log = logging.getLogger(__name__)

RLE_MIN_WIDTH = 8
RLE_MAX_WIDTH = 32767
_MIN_RUN = 4
_RES_RE = re.compile(rb"^-Y (\d+) \+X (\d+)$")


class RgbeScanlineMode(str, enum.Enum):
    FLAT = "flat"
    ADAPTIVE_RLE = "rle"


# --------------------------------------------------------------------------
# RGBE

def rgbe_quantize(rgb) -> np.ndarray:
    """Float RGB (..., 3) to shared-exponent (..., 4) uint8 quadruples."""
    rgb = np.asarray(rgb, dtype=np.float64)
    if np.any(rgb < 0) or not np.all(np.isfinite(rgb)):
        raise DomainError("RGBE needs finite non-negative values")
    v = rgb.max(axis=-1)
    m, e = np.frexp(v)          # v = m * 2**e, m in [0.5, 1)
    scale = np.ldexp(1.0, 8 - e)  # 256 / 2**e, exact
    c = np.floor(rgb * scale[..., None] + 0.5)
    # rounding the largest mantissa up to 256 moves the pixel to the next exponent
    bump = c.max(axis=-1) >= 256
    if np.any(bump):
        e = np.where(bump, e + 1, e)
        scale = np.ldexp(1.0, 8 - e)
        c = np.floor(rgb * scale[..., None] + 0.5)
    out = np.zeros(rgb.shape[:-1] + (4,), dtype=np.uint8)
    ok = v >= 1e-32
    # exponents beyond the byte range saturate; underflow becomes black
    ok &= e + 128 > 0
    e = np.clip(e, -128, 127)
    out[..., :3] = np.where(ok[..., None], np.clip(c, 0, 255), 0).astype(np.uint8)
    out[..., 3] = np.where(ok, e + 128, 0).astype(np.uint8)
    return out


def rgbe_dequantize(q) -> np.ndarray:
    q = np.asarray(q)
    e = q[..., 3].astype(np.int64)
    f = np.where(e > 0, np.ldexp(1.0, e - 136), 0.0)
    return q[..., :3].astype(np.float64) * f[..., None]


def _rle_channel(buf: bytearray, data: np.ndarray) -> None:
    n = len(data)
    i = 0
    while i < n:
        # find the next run of at least _MIN_RUN equal bytes
        beg = i
        run = 0
        while beg < n:
            run = 1
            while beg + run < n and run < 127 and data[beg + run] == data[beg]:
                run += 1
            if run >= _MIN_RUN:
                break
            beg += run
        else:
            run = 0
        # literal bytes before the run
        while i < beg:
            k = min(128, beg - i)
            buf.append(k)
            buf.extend(data[i:i + k].tobytes())
            i += k
        if run >= _MIN_RUN:
            buf.append(128 + run)
            buf.append(int(data[beg]))
            i = beg + run


def _encode_scanline_rle(row: np.ndarray) -> bytes:
    w = row.shape[0]
    buf = bytearray([2, 2, w >> 8, w & 0xFF])
    for ch in range(4):
        _rle_channel(buf, row[:, ch])
    return bytes(buf)


def write_rgbe(img: LinearImage, mode: RgbeScanlineMode = RgbeScanlineMode.ADAPTIVE_RLE) -> bytes:
    """Serialize to Radiance .hdr bytes."""
    mode = RgbeScanlineMode(mode)
    q = rgbe_quantize(as_array(img))
    h, w = q.shape[:2]
    if mode is RgbeScanlineMode.ADAPTIVE_RLE and not RLE_MIN_WIDTH <= w <= RLE_MAX_WIDTH:
        log.info("width %d outside RLE range, writing flat scanlines", w)
        mode = RgbeScanlineMode.FLAT
    out = bytearray(b"#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\n")
    out += f"-Y {h} +X {w}\n".encode("ascii")
    if mode is RgbeScanlineMode.FLAT:
        out += q.tobytes()
    else:
        for y in range(h):
            out += _encode_scanline_rle(q[y])
    return bytes(out)


def _read_header(data: bytes):
    if not (data.startswith(b"#?RADIANCE") or data.startswith(b"#?RGBE")):
        raise ParseError("missing #?RADIANCE / #?RGBE magic", 0)
    pos = data.index(b"\n") + 1 if b"\n" in data else len(data)
    exposure = 1.0
    while True:
        nl = data.find(b"\n", pos)
        if nl < 0:
            raise ParseError("unterminated header", pos)
        line = data[pos:nl].strip()
        if not line:
            pos = nl + 1
            break
        if line.startswith(b"FORMAT="):
            fmt = line[len(b"FORMAT="):]
            if fmt != b"32-bit_rle_rgbe":
                raise UnsupportedFormatError(f"unsupported FORMAT {fmt.decode(errors='replace')}", pos)
        elif line.startswith(b"EXPOSURE="):
            try:
                exposure *= float(line[len(b"EXPOSURE="):])
            except ValueError:
                raise ParseError("bad EXPOSURE value", pos) from None
        pos = nl + 1
    nl = data.find(b"\n", pos)
    if nl < 0:
        raise ParseError("missing resolution line", pos)
    m = _RES_RE.match(data[pos:nl].strip())
    if not m:
        raise UnsupportedFormatError(
            f"unsupported resolution line {data[pos:nl]!r}; only '-Y H +X W' is read", pos)
    h, w = int(m.group(1)), int(m.group(2))
    if h < 1 or w < 1:
        raise ParseError("empty image", pos)
    if not exposure > 0:
        raise ParseError("non-positive EXPOSURE", pos)
    return h, w, exposure, nl + 1


def _need(data: bytes, pos: int, n: int):
    if pos + n > len(data):
        raise ParseError("truncated scanline", len(data))


def _read_flat(data: bytes, pos: int, w: int, row: np.ndarray, start: int = 0) -> int:
    """Flat pixels, with old-style (1,1,1,n) repeat records."""
    x = start
    shift = 0
    while x < w:
        _need(data, pos, 4)
        px = data[pos:pos + 4]
        if px[0] == 1 and px[1] == 1 and px[2] == 1:
            if x == 0:
                raise ParseError("repeat record at start of scanline", pos)
            count = px[3] << shift
            if x + count > w:
                raise ParseError("repeat run overruns scanline", pos)
            row[x:x + count] = row[x - 1]
            x += count
            shift += 8
        else:
            row[x] = np.frombuffer(px, dtype=np.uint8)
            x += 1
            shift = 0
        pos += 4
    return pos


def _read_rle(data: bytes, pos: int, w: int, row: np.ndarray) -> int:
    for ch in range(4):
        x = 0
        while x < w:
            _need(data, pos, 1)
            count = data[pos]
            pos += 1
            if count > 128:
                count -= 128
                if x + count > w:
                    raise ParseError("run overruns scanline", pos - 1)
                _need(data, pos, 1)
                row[x:x + count, ch] = data[pos]
                pos += 1
            else:
                if count == 0 or x + count > w:
                    raise ParseError("bad literal count", pos - 1)
                _need(data, pos, count)
                row[x:x + count, ch] = np.frombuffer(data, np.uint8, count, pos)
                pos += count
            x += count
    return pos


def read_rgbe_codes(data: bytes):
    """Parse .hdr bytes into raw (H, W, 4) quadruples and the EXPOSURE product."""
    h, w, exposure, pos = _read_header(data)
    q = np.zeros((h, w, 4), dtype=np.uint8)
    for y in range(h):
        row = q[y]
        if RLE_MIN_WIDTH <= w <= RLE_MAX_WIDTH and pos + 4 <= len(data) \
                and data[pos] == 2 and data[pos + 1] == 2 and data[pos + 2] < 128:
            sw = (data[pos + 2] << 8) | data[pos + 3]
            if sw != w:
                raise ParseError(f"scanline width {sw} does not match {w}", pos)
            pos = _read_rle(data, pos + 4, w, row)
        else:
            pos = _read_flat(data, pos, w, row)
    return q, exposure


def read_rgbe(data: bytes) -> LinearImage:
    q, exposure = read_rgbe_codes(data)
    return LinearImage(rgbe_dequantize(q) / exposure)


# --------------------------------------------------------------------------
# PFM

def _pfm_header_fields(data: bytes):
    """The three newline-terminated header lines with their byte offsets."""
    fields = []
    pos = 0
    for _ in range(3):
        nl = data.find(b"\n", pos)
        if nl < 0:
            raise ParseError("truncated PFM header", pos)
        fields.append((data[pos:nl].strip(), pos))
        pos = nl + 1
    return fields, pos


def _read_pfm(data: bytes, magic: bytes, channels: int) -> np.ndarray:
    fields, pos = _pfm_header_fields(data)
    (tag, _), (dims, dpos), (scale_s, spos) = fields
    if tag not in (b"PF", b"Pf"):
        raise ParseError(f"not a PFM file (magic {tag!r})", 0)
    if tag != magic:
        kind = "grayscale 'Pf'" if tag == b"Pf" else "color 'PF'"
        raise UnsupportedFormatError(f"{kind} PFM not accepted here", 0)
    try:
        w, h = (int(t) for t in dims.split())
    except ValueError:
        raise ParseError("bad PFM dimensions", dpos) from None
    if w < 1 or h < 1:
        raise ParseError("bad PFM dimensions", dpos)
    try:
        scale = float(scale_s)
    except ValueError:
        raise ParseError("bad PFM scale", spos) from None
    if scale == 0 or not math.isfinite(scale):
        raise ParseError("bad PFM scale", spos)
    dt = np.dtype("<f4") if scale < 0 else np.dtype(">f4")
    n = w * h * channels
    if len(data) - pos < 4 * n:
        raise ParseError("truncated PFM payload", len(data))
    a = np.frombuffer(data, dtype=dt, count=n, offset=pos)
    bad = np.flatnonzero(~np.isfinite(a))
    if bad.size:
        raise ParseError("non-finite PFM sample", pos + 4 * int(bad[0]))
    shape = (h, w, channels) if channels > 1 else (h, w)
    # rows are stored bottom to top
    return np.flipud(a.reshape(shape)).astype(np.float32)


def _write_pfm(a: np.ndarray, magic: bytes) -> bytes:
    h, w = a.shape[:2]
    head = magic + f"\n{w} {h}\n-1.0\n".encode("ascii")
    return head + np.ascontiguousarray(np.flipud(a), dtype="<f4").tobytes()


def read_pfm(data: bytes) -> LinearImage:
    """Color ("PF") PFM. Grayscale files raise UnsupportedFormatError."""
    return LinearImage(_read_pfm(data, b"PF", 3))


def write_pfm(img) -> bytes:
    """Little-endian color PFM. Accepts a LinearImage, EncodedImage or array."""
    a = img.data if hasattr(img, "data") else np.asarray(img, dtype=np.float32)
    if a.ndim != 3 or a.shape[2] != 3:
        raise ContractError(f"color PFM needs H x W x 3, got {a.shape}")
    return _write_pfm(a, b"PF")


def read_pfm_gray(data: bytes) -> np.ndarray:
    """Single-channel ("Pf") PFM as an H x W float32 array."""
    return _read_pfm(data, b"Pf", 1)


def write_pfm_gray(a) -> bytes:
    a = np.asarray(a, dtype=np.float32)
    if a.ndim != 2:
        raise ContractError(f"grayscale PFM needs H x W, got {a.shape}")
    return _write_pfm(a, b"Pf")


def read_pfm_any(data: bytes) -> np.ndarray:
    """PFM data of either kind, as float32 (H, W) or (H, W, 3)."""
    magic = data[:2]
    return _read_pfm(data, magic, 3 if magic == b"PF" else 1)


# --------------------------------------------------------------------------
# PPM

def write_ppm8(img: EncodedImage) -> bytes:
    if not isinstance(img, EncodedImage) or img.tag is not TransferTag.SRGB:
        raise ContractError("write_ppm8 needs an sRGB-tagged EncodedImage")
    v = img.data.astype(np.float64)
    if np.any(v < 0) or np.any(v > 1):
        raise ContractError("sRGB code values must lie in [0, 1]")
    b = np.floor(v * 255.0 + 0.5).astype(np.uint8)
    h, w = b.shape[:2]
    return f"P6\n{w} {h}\n255\n".encode("ascii") + b.tobytes()


# --------------------------------------------------------------------------
# path helpers

PathLike = Union[str, Path]


def load_image(path: PathLike) -> LinearImage:
    """Read a LinearImage from .hdr/.pic or .pfm by extension."""
    path = Path(path)
    data = path.read_bytes()
    if path.suffix.lower() in (".hdr", ".pic", ".rgbe"):
        return read_rgbe(data)
    if path.suffix.lower() == ".pfm":
        return read_pfm(data)
    raise UnsupportedFormatError(f"unknown image extension {path.suffix!r}")


def save_image(path: PathLike, img) -> None:
    path = Path(path)
    if path.suffix.lower() in (".hdr", ".pic", ".rgbe"):
        path.write_bytes(write_rgbe(img))
    elif path.suffix.lower() == ".pfm":
        path.write_bytes(write_pfm(img))
    elif path.suffix.lower() == ".ppm":
        path.write_bytes(write_ppm8(img))
    else:
        raise UnsupportedFormatError(f"unknown image extension {path.suffix!r}")
