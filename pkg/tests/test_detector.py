import math

import numpy as np
import pytest

from sogdd.detector import (
    Corner,
    CornerList,
    DetectorConfig,
    corner_measure,
    detect,
    measure_map,
    response_stack,
    soddc_matrix,
)
from sogdd.filterbank import ResponseStack
from sogdd.imagecore import GrayImage

from helpers import block_array


def test_config_validation_and_margin():
    cfg = DetectorConfig()
    assert cfg.radius == 6 and cfg.effective_margin == 9
    for bad in (dict(sigma2=1.0), dict(K=1), dict(p=5), dict(q=0), dict(threshold=-1), dict(measure="x")):
        with pytest.raises(ValueError):
            DetectorConfig(**bad)
    with pytest.raises(ValueError):
        DetectorConfig(margin=2)
    assert DetectorConfig.from_sigma(1.2).sigma2 == pytest.approx(1.44)


def test_soddc_matrix_examples():
    zeros = ResponseStack(np.zeros((8, 9, 9)), True)
    assert np.array_equal(soddc_matrix(zeros, (4, 4)), np.zeros((8, 8)))
    r = np.zeros((8, 9, 9))
    r[0] = np.arange(81.0).reshape(9, 9)
    lam = soddc_matrix(ResponseStack(r, True), (4, 4))
    assert lam[0, 0] == np.sum(r[0, 1:8, 1:8] ** 2)
    lam[0, 0] = 0
    assert not lam.any()
    ones = soddc_matrix(ResponseStack(np.ones((8, 9, 9)), True), (4, 4))
    assert np.array_equal(ones, np.full((8, 8), 49.0))
    ev = np.sort(np.linalg.eigvalsh(ones))
    assert ev[-1] == pytest.approx(49 * 8) and np.all(np.abs(ev[:-1]) < 1e-9)
    with pytest.raises(ValueError):
        soddc_matrix(ResponseStack(np.ones((8, 9, 9)), True), (2, 4))
    with pytest.raises(ValueError):
        soddc_matrix(ResponseStack(np.ones((8, 9, 9)), False), (4, 4))


@pytest.mark.parametrize("method", ["eigen", "det"])
def test_corner_measure_examples(method):
    assert corner_measure(np.eye(8), method=method) == 1 / (8 + 2.22e-16)
    assert corner_measure(np.zeros((8, 8)), method=method) == 0.0
    d = np.diag([2.0, 1, 1, 1, 1, 1, 1, 1])
    assert corner_measure(d, method=method) == pytest.approx(2 / (9 + 2.22e-16), rel=1e-15)


def test_corner_measure_errors():
    a = np.eye(3)
    a[0, 1] = 0.5
    with pytest.raises(ValueError):
        corner_measure(a)
    with pytest.raises(ValueError):
        corner_measure(np.diag([1.0, -1.0, 1.0]))
    # tiny negative rounding is clamped
    assert corner_measure(np.diag([1.0, -1e-12, 1.0])) == 0.0


def test_corner_measure_does_not_modify_input():
    a = np.diag([3.0, 2.0, 1.0])
    corner_measure(a, method="det")
    corner_measure(a, method="eigen")
    assert np.array_equal(a, np.diag([3.0, 2.0, 1.0]))


def test_measure_map_matches_per_pixel(rng):
    img = GrayImage(rng.uniform(0, 255, (30, 30)))
    cfg = DetectorConfig()
    m = measure_map(img, cfg)
    st = response_stack(img, cfg)
    for x, y in [(3, 3), (15, 10), (26, 20)]:
        lam = soddc_matrix(st, (x, y))
        assert m[y, x] == pytest.approx(corner_measure(lam, method="det"), rel=1e-9)
    assert np.all(m[:3] == 0) and np.all(m[:, -3:] == 0)


def test_constant_image_has_no_corners():
    assert len(detect(GrayImage(np.full((40, 40), 77.0)))) == 0


def test_block_image_four_corners():
    corners = detect(GrayImage(block_array()))
    assert len(corners) == 4
    truth = [(25, 25), (74, 25), (25, 74), (74, 74)]
    for c in corners:
        assert min(math.hypot(c.x - tx, c.y - ty) for tx, ty in truth) <= 2
        assert c.score > 1e9


def test_image_too_small():
    with pytest.raises(ValueError):
        detect(GrayImage(np.zeros((18, 40))))
    detect(GrayImage(np.zeros((19, 19))))


def test_cornerlist_order_and_csv():
    cl = CornerList([Corner(5, 2, 1.0), Corner(1, 3, 2.0), Corner(0, 2, 1.0)])
    assert [(c.x, c.y) for c in cl] == [(1, 3), (0, 2), (5, 2)]
    assert cl.to_csv() == "x,y,score\n1,3,2.0\n0,2,1.0\n5,2,1.0\n"
    assert CornerList().to_csv() == "x,y,score\n"


def test_offset_invariance_exact(rng):
    a = block_array() + rng.normal(0, 3, (100, 100))
    base = detect(GrayImage(a), DetectorConfig(threshold=0))
    shifted = detect(GrayImage(a + 37.0), DetectorConfig(threshold=0))
    assert base.locations() == shifted.locations()
    for b, s in zip(base, shifted):
        assert s.score == pytest.approx(b.score, rel=1e-6)


@pytest.mark.parametrize("a", [0.5, 2.0])
def test_intensity_scaling_rescaled_threshold(a):
    img = block_array()
    cfg = DetectorConfig()
    base = detect(GrayImage(img), cfg)
    scaled = detect(GrayImage(a * img), DetectorConfig(threshold=cfg.threshold * a ** (2 * cfg.K - 2)))
    assert base.locations() == scaled.locations()
    assert [(c.x, c.y) for c in base] == [(c.x, c.y) for c in scaled]


def test_eigen_and_det_measures_agree(rng):
    img = GrayImage(rng.uniform(0, 255, (40, 40)))
    a = measure_map(img, DetectorConfig(measure="det"))
    b = measure_map(img, DetectorConfig(measure="eigen"))
    big = np.maximum(np.abs(a), np.abs(b))
    nz = big > 0
    assert np.max(np.abs(a - b)[nz] / big[nz]) < 1e-9
