import math
import struct

import numpy as np
import pytest
from hypothesis import given, strategies as st

from puhdr.errors import ContractError, ParseError, UnsupportedFormatError
from puhdr.hdrio import (RgbeScanlineMode, load_image, read_pfm, read_pfm_gray, read_rgbe,
                         read_rgbe_codes, rgbe_dequantize, rgbe_quantize, save_image,
                         write_pfm, write_pfm_gray, write_ppm8, write_rgbe)
from puhdr.imgcore import LinearImage
from puhdr.xfer import EncodedImage, TransferTag

HEADER = b"#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\n"


def _quantize_oracle(r, g, b):
    """Per-pixel RGBE with math.frexp and explicit round-to-nearest."""
    v = max(r, g, b)
    if v < 1e-32:
        return (0, 0, 0, 0)
    m, e = math.frexp(v)
    codes = [math.floor(c * 2.0 ** (8 - e) + 0.5) for c in (r, g, b)]
    if max(codes) >= 256:
        e += 1
        codes = [math.floor(c * 2.0 ** (8 - e) + 0.5) for c in (r, g, b)]
    return (*codes, e + 128)


def _rgbe_file(h, w, body, extra_header=b""):
    return (b"#?RADIANCE\n" + extra_header + b"FORMAT=32-bit_rle_rgbe\n\n"
            + f"-Y {h} +X {w}\n".encode() + body)


def test_decode_known_quadruples():
    q = np.array([[[128, 128, 128, 129], [0, 0, 0, 0]]], dtype=np.uint8)
    np.testing.assert_array_equal(rgbe_dequantize(q), [[[1, 1, 1], [0, 0, 0]]])
    img = read_rgbe(_rgbe_file(1, 2, bytes([128, 128, 128, 129, 0, 0, 0, 0])))
    np.testing.assert_array_equal(img.data, [[[1, 1, 1], [0, 0, 0]]])


def test_quantize_matches_oracle(rng):
    rgb = np.exp(rng.uniform(-8, 9, (40, 3))) * (rng.uniform(size=(40, 3)) > 0.1)
    q = rgbe_quantize(rgb)
    for px, code in zip(rgb, q):
        assert tuple(int(c) for c in code) == _quantize_oracle(*map(float, px))


def test_black_pixel_record():
    data = write_rgbe(LinearImage.constant(1, 1, 0.0))
    assert data == HEADER + b"-Y 1 +X 1\n" + b"\x00\x00\x00\x00"


@pytest.mark.parametrize("mode", list(RgbeScanlineMode))
@pytest.mark.parametrize("shape", [(1, 1), (3, 7), (5, 8), (4, 130)])
def test_codes_survive_write_read(mode, shape, rng):
    rgb = np.exp(rng.uniform(-6, 8, shape + (3,)))
    rgb[0, 0] = 0.0
    if shape[1] > 20:
        rgb[1, 10:60] = 3.0    # long runs for the RLE path
    img = LinearImage(rgb)
    data = write_rgbe(img, mode)
    q, exposure = read_rgbe_codes(data)
    assert exposure == 1.0
    np.testing.assert_array_equal(q, rgbe_quantize(img.data))
    # byte-stable under read -> write
    assert write_rgbe(read_rgbe(data), mode) == data


def test_rle_shorter_for_uniform_row():
    img = LinearImage.constant(1, 200, 2.5)
    rle = write_rgbe(img, RgbeScanlineMode.ADAPTIVE_RLE)
    flat = write_rgbe(img, RgbeScanlineMode.FLAT)
    assert len(rle) < len(flat)
    np.testing.assert_array_equal(read_rgbe(rle).data, read_rgbe(flat).data)


def test_narrow_rle_falls_back_to_flat(caplog):
    img = LinearImage.constant(2, 4, 1.0)
    with caplog.at_level("INFO"):
        assert write_rgbe(img, "rle") == write_rgbe(img, "flat")
    assert "flat" in caplog.text


@given(st.lists(st.floats(1e-3, 1e4), min_size=3, max_size=3))
def test_quantization_bound(rgb):
    # each channel within 2**-8 of the pixel maximum; the maximum itself within 2**-8 relative
    back = rgbe_dequantize(rgbe_quantize(np.array(rgb)))
    v = max(rgb)
    for c, b in zip(rgb, back):
        assert abs(b - c) <= 2.0 ** -8 * v * (1 + 1e-12)
    i = int(np.argmax(rgb))
    assert abs(back[i] / rgb[i] - 1) <= 2.0 ** -8 + 1e-12


def test_roundtrip_within_one_percent(rng):
    img = LinearImage(np.exp(rng.uniform(-5, 8, (16, 24, 1))) * rng.uniform(0.5, 1, (16, 24, 3)))
    back = read_rgbe(write_rgbe(img))
    assert np.max(np.abs(back.data / img.data - 1)) <= 0.01


def test_old_style_repeat_and_exposure():
    px = bytes([128, 64, 32, 130])
    body = px + bytes([1, 1, 1, 3])
    data = _rgbe_file(1, 4, body, b"EXPOSURE=2.0\nEXPOSURE=0.5\nEXPOSURE=4\n")
    q, exposure = read_rgbe_codes(data)
    assert exposure == 4.0
    assert np.all(q[0] == np.frombuffer(px, np.uint8))
    np.testing.assert_allclose(read_rgbe(data).data[0, 0], np.array([2, 1, 0.5]) / 4.0)


def test_rgbe_magic_variant():
    data = write_rgbe(LinearImage.constant(2, 2, 1.0)).replace(b"#?RADIANCE", b"#?RGBE")
    np.testing.assert_array_equal(read_rgbe(data).data, 1.0)


def test_rgbe_errors():
    with pytest.raises(ParseError) as e:
        read_rgbe(b"P6\n1 1\n255\n")
    assert e.value.offset == 0
    with pytest.raises(UnsupportedFormatError):
        read_rgbe(b"#?RADIANCE\n\n+Y 1 +X 1\n\x00\x00\x00\x00")
    full = write_rgbe(LinearImage.constant(3, 16, 1.5))
    with pytest.raises(ParseError) as e:
        read_rgbe(full[:-5])
    assert "byte" in str(e.value)
    with pytest.raises(ParseError):
        read_rgbe(b"#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n")


def test_pfm_hand_assembled_fixture():
    data = np.array([[[1.0, 2.0, 3.0], [0.5, 0.25, 4096.0]]], np.float32)
    expected = b"PF\n2 1\n-1.0\n" + struct.pack("<6f", 1.0, 2.0, 3.0, 0.5, 0.25, 4096.0)
    assert write_pfm(LinearImage(data)) == expected
    np.testing.assert_array_equal(read_pfm(expected).data, data)


def test_pfm_bottom_up_rows():
    data = np.zeros((2, 1, 3), np.float32)
    data[0] = 1.0    # top row
    raw = write_pfm(LinearImage(data))
    payload = np.frombuffer(raw[len(b"PF\n1 2\n-1.0\n"):], "<f4")
    np.testing.assert_array_equal(payload, [0, 0, 0, 1, 1, 1])


def test_pfm_big_endian_read():
    raw = b"PF\n1 1\n1.0\n" + struct.pack(">3f", 1.5, 2.5, 3.5)
    np.testing.assert_array_equal(read_pfm(raw).data[0, 0], [1.5, 2.5, 3.5])


def test_pfm_roundtrip_bit_exact(rng):
    bits = rng.integers(0, 2 ** 31, (7, 9, 3), dtype=np.uint32)
    a = bits.view(np.float32)
    a = np.where(np.isfinite(a), a, 1.0).astype(np.float32)
    raw = write_pfm(a)
    back = read_pfm(raw).data
    assert back.tobytes() == a.tobytes()
    assert write_pfm(back) == raw


def test_pfm_errors():
    gray = write_pfm_gray(np.ones((2, 2)))
    with pytest.raises(UnsupportedFormatError):
        read_pfm(gray)
    np.testing.assert_array_equal(read_pfm_gray(gray), 1.0)
    bad = bytearray(write_pfm(np.ones((1, 2, 3), np.float32)))
    head = len(b"PF\n2 1\n-1.0\n")
    bad[head + 16:head + 20] = struct.pack("<f", float("nan"))
    with pytest.raises(ParseError) as e:
        read_pfm(bytes(bad))
    assert e.value.offset == head + 16
    with pytest.raises(ParseError):
        read_pfm(b"PF\n2 2\n-1.0\n" + b"\x00" * 8)
    with pytest.raises(ParseError):
        read_pfm(b"P6\n1 1\n255\n")


def test_ppm8():
    ones = EncodedImage(np.ones((2, 3, 3)), TransferTag.SRGB)
    data = write_ppm8(ones)
    assert data.startswith(b"P6\n3 2\n255\n")
    assert set(data[len(b"P6\n3 2\n255\n"):]) == {255}
    half = write_ppm8(EncodedImage(np.full((1, 1, 3), 0.5), TransferTag.SRGB))
    assert half[-3:] == bytes([128] * 3)
    big = write_ppm8(EncodedImage(np.zeros((480, 640, 3)), TransferTag.SRGB))
    assert big.startswith(b"P6\n640 480\n255\n") and len(big) == 15 + 640 * 480 * 3
    with pytest.raises(ContractError):
        write_ppm8(EncodedImage(np.ones((1, 1, 3)), TransferTag.PU21))
    with pytest.raises(ContractError):
        write_ppm8(EncodedImage(np.full((1, 1, 3), 1.5), TransferTag.SRGB))


def test_path_helpers(tmp_path, rng):
    img = LinearImage(rng.uniform(1, 10, (4, 6, 1)) * rng.uniform(0.5, 1, (4, 6, 3)))
    save_image(tmp_path / "a.pfm", img)
    np.testing.assert_array_equal(load_image(tmp_path / "a.pfm").data, img.data)
    save_image(tmp_path / "a.hdr", img)
    assert np.max(np.abs(load_image(tmp_path / "a.hdr").data / img.data - 1)) < 0.01
    with pytest.raises(UnsupportedFormatError):
        save_image(tmp_path / "a.exr", img)
