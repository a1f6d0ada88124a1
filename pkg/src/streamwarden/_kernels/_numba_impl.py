"""Numba-jitted hot kernels: kmeans assignment/update, box membership.

Scalar loops compile to tight machine code; fastmath stays off so results
match the numpy fallback (identically at the dimensionalities traces carry,
where numpy reduces sequentially too).
"""

import numpy as np
from numba import njit

BACKEND = "numba"


@njit(cache=True)
def nearest_center(points, centers):
    n, d = points.shape
    k = centers.shape[0]
    labels = np.empty(n, dtype=np.int64)
    sqd = np.empty(n, dtype=np.float64)
    for i in range(n):
        best = -1
        best_d2 = np.inf
        for c in range(k):
            acc = 0.0
            for j in range(d):
                diff = points[i, j] - centers[c, j]
                acc += diff * diff
            if acc < best_d2:
                best_d2 = acc
                best = c
        labels[i] = best
        sqd[i] = best_d2
    return labels, sqd


@njit(cache=True)
def accumulate_centers(points, labels, k):
    n, d = points.shape
    sums = np.zeros((k, d), dtype=np.float64)
    counts = np.zeros(k, dtype=np.int64)
    for i in range(n):
        c = labels[i]
        counts[c] += 1
        for j in range(d):
            sums[c, j] += points[i, j]
    return sums, counts


@njit(cache=True)
def boxes_contain(lo, hi, points):
    n, d = points.shape
    b = lo.shape[0]
    out = np.zeros(n, dtype=np.bool_)
    for i in range(n):
        for box in range(b):
            inside = True
            for j in range(d):
                v = points[i, j]
                if v < lo[box, j] or v > hi[box, j]:
                    inside = False
                    break
            if inside:
                out[i] = True
                break
    return out
