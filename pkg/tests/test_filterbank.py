import math

import numpy as np
import pytest

from sogdd.filterbank import (
    Kernel2D,
    FilterBank,
    build_bank,
    convolve_bank,
    gaussian_kernel,
    gaussian_samples,
    kernels_csv_rows,
    orientations,
    radius_for,
    sogdd_kernel,
    sogdd_samples,
)
from sogdd.imagecore import GrayImage
from sogdd.kernels import convolve_stack


def test_gaussian_center_tap_and_normalisation():
    assert gaussian_samples(1.0, 4)[4, 4] == pytest.approx(1 / (2 * math.pi), rel=1e-12)
    k = gaussian_kernel(1.0, 4)
    assert abs(k.taps.sum() - 1.0) < 1e-12
    assert np.array_equal(k.taps, k.taps[::-1, ::-1])
    with pytest.raises(ValueError):
        gaussian_kernel(0.0, 3)
    with pytest.raises(ValueError):
        gaussian_kernel(1.0, 0)


def test_sogdd_center_tap_and_zero_sum():
    assert sogdd_samples(1.0, 0.0, 4)[4, 4] == pytest.approx(-1 / (2 * math.pi), rel=1e-12)
    for th in np.linspace(0, math.pi, 7):
        assert abs(sogdd_kernel(1.3, th).taps.sum()) < 1e-12
    with pytest.raises(ValueError):
        sogdd_kernel(-1.0, 0.0)


def test_sogdd_period_and_transpose():
    s = math.sqrt(1.2)
    for th in orientations(8):
        a, b = sogdd_kernel(s, th).taps, sogdd_kernel(s, th + math.pi).taps
        assert np.allclose(a, b, rtol=0, atol=1e-15)
    assert np.allclose(sogdd_kernel(s, math.pi / 2).taps, sogdd_kernel(s, 0.0).taps.T, rtol=0, atol=1e-15)


def test_sogdd_kernel_direction():
    # theta = 0 differentiates along x (columns): row through centre is the
    # derivative profile, column through centre is flat Gaussian-like
    k = sogdd_kernel(1.0, 0.0).taps
    r = k.shape[0] // 2
    assert k[r, r + 2] > 0 > k[r + 2, r]


def test_build_bank():
    b = build_bank(1.0, 4)
    assert np.allclose(b.thetas, [0, math.pi / 4, math.pi / 2, 3 * math.pi / 4])
    b8 = build_bank(math.sqrt(1.2), 8)
    # ceil(4 * 1.0954) + 1
    assert b8.K == 8 and b8.radius == 6 == radius_for(math.sqrt(1.2))
    with pytest.raises(ValueError):
        build_bank(1.0, 1)
    with pytest.raises(ValueError):
        FilterBank(1.0, (sogdd_kernel(1.0, 0.5), sogdd_kernel(1.0, 0.2)))
    with pytest.raises(ValueError):
        FilterBank(1.0, (sogdd_kernel(1.0, 0.0, 3), sogdd_kernel(1.0, 0.2, 4)))


def test_constant_image_zero_response():
    r = convolve_bank(GrayImage(np.full((20, 20), 173.0)), build_bank(1.1, 8), take_abs=False)
    assert np.max(np.abs(r.responses)) < 1e-9


def test_affine_image_zero_interior_response():
    ys, xs = np.mgrid[0:40, 0:40].astype(float)
    r = convolve_bank(GrayImage(3 * xs + 2 * ys), build_bank(1.1, 8), take_abs=False)
    rad = build_bank(1.1, 8).radius
    assert np.max(np.abs(r.responses[:, rad:-rad, rad:-rad])) < 1e-6


def test_quadratic_image_second_derivative():
    ys, xs = np.mgrid[0:40, 0:40].astype(float)
    bank = FilterBank(1.0, (sogdd_kernel(1.0, 0.0), sogdd_kernel(1.0, math.pi / 2)))
    r = convolve_bank(GrayImage((xs - 20.0) ** 2), bank, take_abs=False)
    rad = bank.radius
    assert np.max(np.abs(r.responses[0, rad:-rad, rad:-rad] - 2.0)) < 1e-3
    assert np.max(np.abs(r.responses[1, rad:-rad, rad:-rad])) < 1e-3


def test_dc_linearity_and_abs(rng):
    img = rng.uniform(0, 255, (24, 30))
    bank = build_bank(1.2, 8)
    base = convolve_bank(GrayImage(img), bank, take_abs=False).responses
    shifted = convolve_bank(GrayImage(img + 1000.0), bank, take_abs=False).responses
    assert np.max(np.abs(shifted - base)) <= 1e-9 * 1000
    scaled = convolve_bank(GrayImage(3.0 * img), bank, take_abs=False).responses
    assert np.allclose(scaled, 3.0 * base, rtol=1e-12, atol=1e-9)
    a = convolve_bank(GrayImage(img), bank)
    assert a.abs_flag and np.array_equal(a.responses, np.abs(base))


def test_theta_plus_pi_responses(rng):
    img = GrayImage(rng.uniform(0, 255, (20, 20)))
    s = 1.0
    r = radius_for(s)
    b4 = build_bank(s, 4)
    shifted = np.stack([sogdd_kernel(s, th + math.pi, r).taps for th in orientations(4)])
    padded = np.pad(img.data, r, mode="edge")
    alt = convolve_stack(padded, shifted, take_abs=True)
    assert np.allclose(convolve_bank(img, b4).responses, alt, rtol=0, atol=1e-11)


def test_transpose_equivariance_bit_exact(rng):
    img = rng.uniform(0, 255, (23, 31))
    s = math.sqrt(1.2)
    bank = build_bank(s, 8)
    swapped = FilterBank(s, tuple(Kernel2D(k.radius, k.taps.T, s, k.theta) for k in bank.kernels))
    r = convolve_bank(GrayImage(img), bank).responses
    rt = convolve_bank(GrayImage(img.T), swapped).responses
    for k in range(bank.K):
        assert np.array_equal(rt[k], r[k].T)


def test_kernels_csv_rows():
    bank = build_bank(1.0, 2)
    rows = list(kernels_csv_rows(bank))
    n = 2 * bank.radius + 1
    assert len(rows) == 2 * n * n
    assert rows[0][:4] == (0, 0.0, -bank.radius, -bank.radius)
