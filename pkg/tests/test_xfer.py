import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from puhdr.errors import DomainError
from puhdr.imgcore import LinearImage
from puhdr.xfer import (PU21_DEFAULT, EncodedImage, Pu21Params, TransferTag, decode_image,
                        encode_image, pq_decode, pq_encode, pu21_decode, pu21_encode,
                        srgb_decode, srgb_encode)

# 40-digit mpmath evaluations of the closed forms
PU21_AT_10000 = 0.99921934861031445395559754283039462102562527985964
PU21_AT_100 = 0.5009408439381996698018588596929959510552
PQ_AT_100 = 0.5080784215173948550651281288415277111261
PQ_AT_1000 = 0.7518270962470417731430602305111720657869
PQ_AT_0 = 7.309559025783966e-07

LOG_GRID = np.geomspace(0.005, 10000, 10_000)


def test_pu21_defaults():
    p = Pu21Params()
    assert (p.a, p.b, p.l_max) == (0.001908, 0.0078, 10000)
    assert p.l_min_log2 == math.log2(0.005)
    with pytest.raises(DomainError):
        Pu21Params(a=0.0)


def test_pu21_endpoints():
    assert pu21_encode(0.005) == 0.0
    assert pu21_encode(10000.0) == pytest.approx(PU21_AT_10000, abs=1e-12)
    assert pu21_encode(100.0) == pytest.approx(PU21_AT_100, abs=1e-12)
    assert pu21_decode(0.0) == pytest.approx(0.005, rel=1e-12)
    assert pu21_decode(PU21_AT_10000) == pytest.approx(10000, rel=1e-6)


def test_pu21_monotone_and_roundtrip():
    v = pu21_encode(LOG_GRID)
    assert np.all(np.diff(v) > 0)
    assert np.max(np.abs(pu21_decode(v) / LOG_GRID - 1)) < 1e-6


def test_pu21_clamps_and_counts():
    v, n = pu21_encode(np.array([0.0, 0.001, 1.0, 2e4]), return_clipped=True)
    assert n == 3
    assert v[0] == v[1] == 0.0
    assert v[3] == pytest.approx(PU21_AT_10000)


@pytest.mark.parametrize("bad", [np.nan, np.inf, -np.inf])
def test_pu21_rejects_non_finite(bad):
    with pytest.raises(DomainError):
        pu21_encode(bad)
    with pytest.raises(DomainError):
        pu21_decode(bad)


def test_pu21_decode_rejects_negative():
    with pytest.raises(DomainError):
        pu21_decode(-0.01)


@given(st.floats(0.005, 10000), st.floats(0.005, 10000))
def test_pu21_order_preserving(l1, l2):
    if l1 < l2:
        assert pu21_encode(l1) < pu21_encode(l2)


def test_pq_values():
    # the ST 2084 curve is c1**m2 (not exactly zero) at L = 0
    assert pq_encode(0.0) == pytest.approx(PQ_AT_0, rel=1e-9)
    assert pq_encode(0.0) < 1e-6
    assert pq_encode(10000.0) == pytest.approx(1.0, abs=1e-15)
    assert 0.50 < pq_encode(100.0) < 0.52
    assert pq_encode(100.0) == pytest.approx(PQ_AT_100, abs=1e-12)
    assert pq_encode(1000.0) == pytest.approx(PQ_AT_1000, abs=1e-12)
    assert pq_decode(0.0) == 0.0
    assert pq_decode(1.0) == pytest.approx(10000.0, rel=1e-12)


def test_pq_roundtrip_and_clip():
    assert np.max(np.abs(pq_decode(pq_encode(LOG_GRID)) / LOG_GRID - 1)) < 1e-6
    _, n = pq_encode(np.array([-1.0, 5.0, 2e4]), return_clipped=True)
    assert n == 2


def test_srgb():
    assert srgb_encode(0.0) == 0.0
    assert srgb_encode(1.0) == pytest.approx(1.0, abs=1e-15)
    x = np.linspace(0, 1, 10001)
    assert np.max(np.abs(srgb_decode(srgb_encode(x)) - x)) < 1e-9
    # both branches agree at the breakpoint
    lin = 12.92 * 0.0031308
    pw = 1.055 * 0.0031308 ** (1 / 2.4) - 0.055
    assert abs(lin - pw) < 1e-6
    assert srgb_encode(0.0031308) == pytest.approx(0.04045, abs=1e-6)
    assert srgb_encode(2.0) == pytest.approx(1.0, abs=1e-15) and srgb_encode(-1.0) == 0.0


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
def test_roundtrip_precision_independent(dtype):
    # evaluating from float32 input agrees with float64 to 1e-4 relative
    grid = LOG_GRID.astype(dtype)
    ref = pu21_decode(pu21_encode(LOG_GRID))
    got = pu21_decode(pu21_encode(grid).astype(dtype))
    assert np.max(np.abs(got / ref - 1)) < 1e-4
    got = pq_decode(pq_encode(grid).astype(dtype))
    assert np.max(np.abs(got / pq_decode(pq_encode(LOG_GRID)) - 1)) < 1e-4


def test_encode_image_constant_floor():
    img = LinearImage.constant(4, 5, 0.005)
    enc = encode_image(img, TransferTag.PU21)
    assert enc.tag is TransferTag.PU21
    assert np.all(enc.data == 0.0)


@pytest.mark.parametrize("tag", [TransferTag.PU21, TransferTag.PQ])
def test_encode_decode_image_roundtrip(tag, random_image):
    img = random_image(16, 12)
    back = decode_image(encode_image(img, tag))
    rel = np.abs(back.data.astype(float) / img.data.astype(float) - 1)
    assert rel.max() < 1e-6


def test_srgb_image_roundtrip(rng):
    img = LinearImage(rng.uniform(0.01, 1.0, (9, 7, 3)))
    back = decode_image(encode_image(img, TransferTag.SRGB))
    assert np.max(np.abs(back.data.astype(float) / img.data - 1)) < 1e-6


def test_linear_normalized():
    data = np.full((3, 3, 3), 10.0)
    data[1, 1, 0] = 4000.0
    enc = encode_image(LinearImage(data), TransferTag.LINEAR_NORMALIZED)
    assert enc.scale == 4000.0
    np.testing.assert_allclose(enc.data, data / 4000.0, rtol=1e-7)
    np.testing.assert_allclose(decode_image(enc).data, data, rtol=1e-6)


def test_encode_image_matches_pixelwise_scalar(rng):
    img = LinearImage(np.exp(rng.uniform(-6, 9, (8, 8, 3))))
    for tag, fn in [(TransferTag.PU21, pu21_encode), (TransferTag.PQ, pq_encode)]:
        enc = encode_image(img, tag).data
        for y in range(8):
            for x in range(8):
                for c in range(3):
                    assert enc[y, x, c] == np.float32(fn(float(img.data[y, x, c])))


def test_encode_image_thread_invariant(random_image):
    from puhdr.imgcore import set_threads
    img = random_image(37, 11)
    try:
        set_threads(1)
        a = encode_image(img, TransferTag.PU21)
        set_threads(4)
        b = encode_image(img, TransferTag.PU21)
    finally:
        set_threads(None)
    assert a.data.tobytes() == b.data.tobytes() and a.clipped == b.clipped


def test_encoded_image_tag_required():
    with pytest.raises(ValueError):
        EncodedImage(np.zeros((2, 2, 3)), "bogus")
