import numpy as np
import pytest

from rfdreid.resample import degrade, resample_weights, resize


def checkerboard(h, w, period=1):
    yy, xx = np.indices((h, w))
    return (((yy // period) + (xx // period)) % 2).astype(np.float64)


def test_constant_image_is_preserved():
    img = np.full((384, 128, 3), 0.37)
    out = degrade(img, 4, "bilinear")
    assert out.shape == img.shape
    assert np.allclose(out, 0.37, atol=1e-12)


def test_scale_one_is_bit_exact_identity():
    img = np.random.default_rng(0).random((48, 20, 3))
    out = degrade(img, 1, "bilinear")
    assert np.array_equal(out, img)
    assert out is not img


def test_checkerboard_variance_drops():
    cb = np.stack([checkerboard(64, 64)] * 3, axis=-1)
    out = degrade(cb, 4, "bilinear")
    assert out.var() < cb.var()


@pytest.mark.parametrize("interpolation", ["bilinear", "bicubic"])
@pytest.mark.parametrize("scale", [2, 3, 4])
def test_shape_and_channels_preserved(interpolation, scale):
    img = np.random.default_rng(1).random((50, 34, 3))
    out = degrade(img, scale, interpolation)
    assert out.shape == img.shape


def test_gray_input_supported():
    img = np.random.default_rng(2).random((40, 40))
    assert degrade(img, 2).shape == img.shape


@pytest.mark.parametrize("scale", [0, -3])
def test_nonpositive_scale_rejected(scale):
    with pytest.raises(ValueError):
        degrade(np.zeros((8, 8, 3)), scale)


def test_zero_extent_rejected():
    with pytest.raises(ValueError):
        degrade(np.zeros((0, 8, 3)), 2)


def test_too_large_scale_rejected():
    with pytest.raises(ValueError):
        degrade(np.zeros((4, 4, 3)), 5)


def test_unknown_interpolation_rejected():
    with pytest.raises(ValueError):
        degrade(np.zeros((8, 8, 3)), 2, "nearest")


def _band_energy(img2d, r):
    spectrum = np.abs(np.fft.fft2(img2d)) ** 2
    fy = np.fft.fftfreq(img2d.shape[0])
    fx = np.fft.fftfreq(img2d.shape[1])
    mask = (np.abs(fy)[:, None] > 1 / (2 * r)) | (np.abs(fx)[None, :] > 1 / (2 * r))
    return spectrum[mask].sum(), spectrum.sum()


@pytest.mark.parametrize("scale", [2, 3, 4])
def test_energy_above_new_nyquist_is_reduced(scale):
    yy, xx = np.indices((64, 64))
    patterns = [
        checkerboard(64, 64),
        (np.sin(2 * np.pi * (yy + 2 * xx) / 5) + 1) / 2,
        np.random.default_rng(7).random((64, 64)),
    ]
    for pattern in patterns:
        before, total = _band_energy(pattern, scale)
        assert before > 0.01 * total  # pattern actually has content up there
        after, _ = _band_energy(degrade(pattern, scale, "bilinear"), scale)
        assert after < before


def test_determinism():
    img = np.random.default_rng(3).random((30, 30, 3))
    assert np.array_equal(degrade(img, 3, "bicubic"), degrade(img, 3, "bicubic"))


def test_resample_weights_rows_sum_to_one():
    for pair in [(64, 16), (16, 64), (50, 50), (7, 3)]:
        for interp in ("bilinear", "bicubic"):
            w = resample_weights(*pair, interp)
            assert np.allclose(w.sum(axis=1), 1.0, atol=1e-12)


def test_resize_matches_separable_double_loop_oracle():
    rng = np.random.default_rng(5)
    img = rng.random((11, 7))
    out = resize(img, (5, 4), "bilinear")
    wy = resample_weights(11, 5, "bilinear")
    wx = resample_weights(7, 4, "bilinear")
    expected = np.zeros((5, 4))
    for i in range(5):
        for j in range(4):
            acc = 0.0
            for a in range(11):
                for b in range(7):
                    acc += wy[i, a] * wx[j, b] * img[a, b]
            expected[i, j] = acc
    assert np.allclose(out, expected, rtol=1e-12, atol=1e-12)
