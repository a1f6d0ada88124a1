"""Backend agreement: the numba kernels and the numpy fallback must produce
identical results (fastmath is off, so bit-identical)."""

import numpy as np
import pytest

from streamwarden._kernels import _numpy_impl

try:
    from streamwarden._kernels import _numba_impl
except ImportError:
    _numba_impl = None

needs_numba = pytest.mark.skipif(_numba_impl is None, reason="numba unavailable")


@pytest.fixture
def data(rng):
    points = rng.normal(size=(200, 6))
    centers = rng.normal(size=(5, 6))
    return np.ascontiguousarray(points), np.ascontiguousarray(centers)


@needs_numba
def test_nearest_center_backends_agree(data):
    points, centers = data
    lab_np, sqd_np = _numpy_impl.nearest_center(points, centers)
    lab_nb, sqd_nb = _numba_impl.nearest_center(points, centers)
    assert np.array_equal(lab_np, lab_nb)
    assert np.allclose(sqd_np, sqd_nb, rtol=0, atol=1e-12)


@needs_numba
def test_accumulate_centers_backends_agree(data, rng):
    points, _ = data
    labels = rng.integers(0, 4, size=len(points))
    sums_np, counts_np = _numpy_impl.accumulate_centers(points, labels, 4)
    sums_nb, counts_nb = _numba_impl.accumulate_centers(points, labels, 4)
    assert np.array_equal(counts_np, counts_nb)
    assert np.allclose(sums_np, sums_nb, rtol=0, atol=1e-9)


@needs_numba
def test_boxes_contain_backends_agree(rng):
    lo = np.array([[0.0, 0.0], [5.0, 5.0]])
    hi = np.array([[1.0, 2.0], [6.0, 7.0]])
    points = np.ascontiguousarray(rng.uniform(-1, 8, size=(500, 2)))
    out_np = _numpy_impl.boxes_contain(lo, hi, points)
    out_nb = _numba_impl.boxes_contain(lo, hi, points)
    assert np.array_equal(out_np, np.asarray(out_nb, dtype=bool))


def test_boxes_contain_boundary_inclusive():
    lo = np.array([[0.0, 0.0]])
    hi = np.array([[1.0, 2.0]])
    points = np.array([[1.0, 2.0], [0.0, 0.0], [1.0000001, 2.0], [0.5, 1.0], [2.0, 1.0]])
    expected = [True, True, False, True, False]
    assert _numpy_impl.boxes_contain(lo, hi, points).tolist() == expected
    if _numba_impl is not None:
        assert list(_numba_impl.boxes_contain(lo, hi, points)) == expected


def test_nearest_center_matches_bruteforce(rng):
    points = np.ascontiguousarray(rng.normal(size=(50, 3)))
    centers = np.ascontiguousarray(rng.normal(size=(4, 3)))
    labels, sqd = _numpy_impl.nearest_center(points, centers)
    for i, point in enumerate(points):
        dists = [float(((point - c) ** 2).sum()) for c in centers]
        assert labels[i] == int(np.argmin(dists))
        assert sqd[i] == pytest.approx(min(dists), abs=1e-12)
