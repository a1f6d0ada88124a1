"""Vectorized numpy fallback for the hot numeric kernels.

Same signatures and semantics as the numba implementations; selected when
numba is unavailable or disabled via STREAMWARDEN_NO_NUMBA.
"""

import numpy as np

BACKEND = "numpy"


def nearest_center(points: np.ndarray, centers: np.ndarray):
    """Index of and squared distance to the nearest center, per row.

    points: (n, d) float64, centers: (k, d) float64.
    Returns (labels int64 (n,), sqdists float64 (n,)).
    """
    # (n, k) squared distances, chunked to bound memory on large n*k
    n = points.shape[0]
    labels = np.empty(n, dtype=np.int64)
    sqd = np.empty(n, dtype=np.float64)
    chunk = max(1, int(4_000_000 // max(1, centers.shape[0])))
    for start in range(0, n, chunk):
        block = points[start : start + chunk]
        d2 = ((block[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        labels[start : start + chunk] = np.argmin(d2, axis=1)
        sqd[start : start + chunk] = d2[np.arange(len(block)), labels[start : start + chunk]]
    return labels, sqd


def accumulate_centers(points: np.ndarray, labels: np.ndarray, k: int):
    """Per-cluster coordinate sums and member counts.

    Returns (sums float64 (k, d), counts int64 (k,)).
    """
    d = points.shape[1]
    sums = np.zeros((k, d), dtype=np.float64)
    counts = np.bincount(labels, minlength=k).astype(np.int64)
    np.add.at(sums, labels, points)
    return sums, counts


def boxes_contain(lo: np.ndarray, hi: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Whether each row of points lies inside at least one box (bounds inclusive).

    lo, hi: (b, d) float64; points: (n, d) float64. Returns bool (n,).
    """
    inside = (points[:, None, :] >= lo[None, :, :]) & (points[:, None, :] <= hi[None, :, :])
    return inside.all(axis=2).any(axis=1)
