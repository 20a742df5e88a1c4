import numpy as np
import pytest

from sogdd import kernels as K
from sogdd._accel import HAVE_NUMBA, resolve_backend, set_threads
from sogdd.filterbank import build_bank

BACKENDS = ["numpy"] + (["numba"] if HAVE_NUMBA else [])


def _random_spd(rng, n=8, rank=None):
    a = rng.normal(size=(n, rank or n))
    return a @ a.T


def test_resolve_backend():
    assert resolve_backend("numpy") == "numpy"
    with pytest.raises(ValueError):
        resolve_backend("cuda")
    with pytest.raises(ValueError):
        set_threads(0)


def test_tap_order_covers_every_tap_once():
    pairs, single = K.symmetric_tap_order(3)
    seen = {}
    for (i1, j1, i2, j2), s in zip(pairs, single):
        for t in {(i1, j1), (i2, j2)}:
            seen[t] = seen.get(t, 0) + 1
        assert s == ((i1, j1) == (i2, j2))
    assert len(seen) == 49 and set(seen.values()) == {1}


@pytest.mark.parametrize("backend", BACKENDS)
def test_convolution_matches_scipy(rng, backend):
    from scipy.signal import convolve2d

    img = rng.uniform(0, 255, (17, 21))
    bank = build_bank(1.1, 4)
    padded = np.pad(img, bank.radius, mode="edge")
    out = K.convolve_stack(padded, bank.stacked(), take_abs=False, backend=backend)
    for k, kern in enumerate(bank.kernels):
        ref = convolve2d(padded, kern.taps, mode="valid")
        assert np.allclose(out[k], ref, rtol=1e-12, atol=1e-9)


@pytest.mark.skipif(not HAVE_NUMBA, reason="numba not installed")
def test_backends_bit_identical(rng):
    img = rng.uniform(0, 255, (40, 33))
    bank = build_bank(1.1, 8)
    padded = np.pad(img, bank.radius, mode="edge")
    a = K.convolve_stack(padded, bank.stacked(), True, "numpy")
    b = K.convolve_stack(padded, bank.stacked(), True, "numba")
    assert np.array_equal(a, b)
    for method in ("det", "eigen"):
        ma = K.measure_map(a, 3, 3, 2.22e-16, method, "numpy")
        mb = K.measure_map(a, 3, 3, 2.22e-16, method, "numba")
        assert np.array_equal(ma, mb)
    assert np.array_equal(K.local_maxima(ma, 1, 5, 0.0, "numpy"), K.local_maxima(ma, 1, 5, 0.0, "numba"))


def test_ldl_det_matches_numpy(rng):
    for _ in range(50):
        a = _random_spd(rng)
        assert K.ldl_det(a.copy()) == pytest.approx(np.linalg.det(a), rel=1e-10)
    assert K.ldl_det(np.zeros((8, 8))) == 0.0
    assert K.ldl_det(_random_spd(rng, 8, 3)) == pytest.approx(0.0, abs=1e-9)
    mats = np.stack([_random_spd(rng) for _ in range(20)])
    loop = np.array([K.ldl_det(m.copy()) for m in mats])
    assert np.array_equal(K._ldl_det_np(mats), loop)


def test_jacobi_matches_eigvalsh(rng):
    for _ in range(50):
        a = _random_spd(rng)
        ev = np.sort(K.jacobi_eigenvalues(a.copy()))
        assert np.allclose(ev, np.linalg.eigvalsh(a), rtol=1e-10, atol=1e-10 * np.trace(a))
    mats = np.stack([_random_spd(rng) for _ in range(20)])
    loop = np.array([K.jacobi_eigenvalues(m.copy()) for m in mats])
    vec = K._jacobi_eigenvalues_np(mats)
    assert np.array_equal(vec, loop)


def test_jacobi_diagonal_and_rank_one():
    d = np.diag([3.0, 1.0, 2.0])
    assert sorted(K.jacobi_eigenvalues(d)) == [1.0, 2.0, 3.0]
    ones = np.full((8, 8), 49.0)
    ev = np.sort(K.jacobi_eigenvalues(ones))
    assert ev[-1] == pytest.approx(49 * 8, rel=1e-12)
    assert np.all(np.abs(ev[:-1]) < 1e-9)


@pytest.mark.parametrize("backend", BACKENDS)
def test_local_maxima_plateau_and_margin(backend):
    m = np.zeros((9, 9))
    m[4, 4] = m[4, 5] = 5.0  # plateau: keep the row-major first pixel
    m[1, 1] = 9.0  # inside margin
    keep = K.local_maxima(m, 1, 2, 0.0, backend)
    assert list(zip(*np.nonzero(keep))) == [(4, 4)]
    assert not K.local_maxima(m, 1, 2, 5.0, backend).any()
    with pytest.raises(ValueError):
        K.local_maxima(m, 2, 1, 0.0, backend)
