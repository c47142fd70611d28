import json
import math

import numpy as np
import pytest

from oracles import demosaic_stencil
from puhdr.errors import ContractError, DomainError
from puhdr.imgcore import LinearImage, luminance, set_threads
from puhdr.rawsim import (BayerFrame, NoiseParams, add_noise, demosaic_bilinear,
                          gradient_geometry, mosaic, radial_profile, synth_radial_gradient,
                          virtual_exposure)


def test_bayer_frame_validation():
    with pytest.raises(ContractError):
        BayerFrame(np.ones((3, 4)))
    with pytest.raises(DomainError):
        BayerFrame(-np.ones((2, 2)))
    f = BayerFrame(np.ones((4, 6)))
    assert json.loads(f.sidecar_json()) == {"pattern": "RGGB", "width": 6, "height": 4}


def test_mosaic_pattern():
    assert np.all(mosaic(LinearImage.constant(4, 4, 0.3)).data == np.float32(0.3))
    red = mosaic(LinearImage.constant(4, 6, [1.0, 0.0, 0.0])).data
    expect = np.zeros((4, 6))
    expect[0::2, 0::2] = 1.0
    np.testing.assert_array_equal(red, expect)
    rgb = np.zeros((2, 2, 3))
    rgb[..., 0], rgb[..., 1], rgb[..., 2] = 1, 2, 3
    np.testing.assert_array_equal(mosaic(LinearImage(rgb)).data, [[1, 2], [2, 3]])
    with pytest.raises(ContractError):
        mosaic(LinearImage.constant(3, 4, 1.0))


def test_demosaic_constant_exact():
    out = demosaic_bilinear(BayerFrame(np.full((6, 8), 2.5)))
    assert np.all(out.data == np.float32(2.5))


def test_demosaic_matches_stencil(rng):
    f = rng.uniform(0, 10, (8, 10))
    np.testing.assert_allclose(demosaic_bilinear(BayerFrame(f)).data,
                               demosaic_stencil(f.astype(np.float32)), rtol=1e-6)


def test_demosaic_interior_r_site(rng):
    f = rng.uniform(0, 1, (6, 6)).astype(np.float32)
    out = demosaic_bilinear(BayerFrame(f)).data
    y, x = 2, 2
    assert out[y, x, 1] == pytest.approx((f[1, 2] + f[3, 2] + f[2, 1] + f[2, 3]) / 4, rel=1e-6)
    assert out[y, x, 2] == pytest.approx((f[1, 1] + f[1, 3] + f[3, 1] + f[3, 3]) / 4, rel=1e-6)


def test_demosaic_smooth_roundtrip():
    yy, xx = np.mgrid[0:64, 0:64]
    rgb = np.stack([10 + 0.1 * xx, 20 + 0.05 * yy + 0.05 * xx, 5 + 0.08 * yy], axis=-1)
    img = LinearImage(rgb)
    back = demosaic_bilinear(mosaic(img)).data
    rel = np.abs(back / img.data - 1)[2:-2, 2:-2]
    assert rel.max() < 0.02


def test_virtual_exposure():
    img = LinearImage.constant(2, 2, 50.0)
    np.testing.assert_array_equal(virtual_exposure(img).data, img.data)
    np.testing.assert_array_equal(virtual_exposure(LinearImage.constant(2, 2, 4000.0)).data, 100.0)
    with pytest.raises(DomainError):
        virtual_exposure(img, 0.0)


def test_clip_area_matches_closed_form():
    size = 512
    img = synth_radial_gradient(size)
    clipped = virtual_exposure(img)
    n = int(np.sum(np.any(clipped.data < img.data, axis=-1)))
    _, r_max = gradient_geometry(size)
    r100 = r_max * math.log(4000 / 100) / math.log(4000 / 0.005)
    area = math.pi * r100 ** 2
    assert abs(n - area) <= 2 * math.pi * r100


def test_noise_law():
    v, gain, sigma = 10.0, 400.0, 0.02
    frame = BayerFrame(np.full((1000, 1000), v))
    out = add_noise(frame, NoiseParams(gain, sigma, seed=5)).data.astype(np.float64)
    var = v / gain + sigma ** 2
    assert abs(out.mean() - v) < 3 * math.sqrt(var / out.size)
    assert abs(out.var(ddof=1) / var - 1) < 0.05


def test_noise_concentrates_without_read_noise():
    f = BayerFrame(np.linspace(1, 100, 64 * 64).reshape(64, 64))
    out = add_noise(f, NoiseParams(photon_gain=1e9, read_sigma=0.0)).data
    assert np.max(np.abs(out / f.data - 1)) < 0.01


def test_noise_reproducible_and_thread_invariant(rng):
    f = BayerFrame(rng.uniform(0, 5, (34, 16)))
    p = NoiseParams(seed=11)
    try:
        set_threads(1)
        a = add_noise(f, p).data
        set_threads(5)
        b = add_noise(f, p).data
    finally:
        set_threads(None)
    assert a.tobytes() == b.tobytes()
    assert add_noise(f, NoiseParams(seed=12)).data.tobytes() != a.tobytes()
    assert np.all(a >= 0)


def test_noise_params_validation():
    with pytest.raises(DomainError):
        NoiseParams(photon_gain=0)
    with pytest.raises(DomainError):
        NoiseParams(read_sigma=-1)


@pytest.mark.parametrize("chroma", ["white", "yellow", "red", "green"])
def test_gradient_endpoints(chroma):
    img = synth_radial_gradient(512, chroma=chroma)
    y = luminance(img)
    c, r_max = gradient_geometry(512)
    assert y[c, c] == pytest.approx(4000, rel=1e-3)
    for cy, cx in [(0, 0), (0, 511), (511, 0), (511, 511)]:
        assert y[cy, cx] == pytest.approx(0.005, rel=1e-3)
    if chroma == "yellow":
        assert np.all(img.data[..., 2] == 0)
    if chroma == "red":
        assert np.all(img.data[..., 1:] == 0)


def test_gradient_half_radius_geometric_mean():
    assert radial_profile(0.5, 1.0) == pytest.approx(math.sqrt(4000 * 0.005), rel=1e-12)
    img = synth_radial_gradient(513)
    c, r_max = gradient_geometry(513)
    assert r_max == pytest.approx(math.hypot(256, 256))
    assert luminance(img)[c + 128, c + 128] == pytest.approx(math.sqrt(20), rel=1e-5)


def test_gradient_monotone_rays():
    y = luminance(synth_radial_gradient(257)).astype(np.float64)
    c, _ = gradient_geometry(257)
    for ang in np.linspace(0, 2 * np.pi, 24, endpoint=False):
        r = np.arange(0, 128)
        py = np.round(c + r * np.sin(ang)).astype(int)
        px = np.round(c + r * np.cos(ang)).astype(int)
        vals = y[py, px]
        assert np.all(np.diff(vals) <= 1e-9 * vals[:-1])


def test_gradient_errors():
    with pytest.raises(ContractError):
        synth_radial_gradient(1)
    with pytest.raises(ContractError):
        synth_radial_gradient(8, peak=1.0, floor=2.0)
    with pytest.raises(ContractError):
        synth_radial_gradient(8, floor=0.0)
    with pytest.raises(ContractError):
        synth_radial_gradient(8, chroma="blue")
