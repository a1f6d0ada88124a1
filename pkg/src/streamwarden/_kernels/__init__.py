"""Backend selection for the hot numeric kernels.

The numba path is used when numba imports cleanly; set STREAMWARDEN_NO_NUMBA=1
(or "true"/"yes") to force the pure-numpy fallback. Both backends compute
identical results; see benchmarks/benchmark_kernels.py for the speed gap.
"""

import os


def _numba_disabled() -> bool:
    return os.environ.get("STREAMWARDEN_NO_NUMBA", "").strip().lower() in {"1", "true", "yes"}


if _numba_disabled():
    from streamwarden._kernels._numpy_impl import (
        BACKEND,
        accumulate_centers,
        boxes_contain,
        nearest_center,
    )
else:
    try:
        from streamwarden._kernels._numba_impl import (
            BACKEND,
            accumulate_centers,
            boxes_contain,
            nearest_center,
        )
    except ImportError:
        from streamwarden._kernels._numpy_impl import (
            BACKEND,
            accumulate_centers,
            boxes_contain,
            nearest_center,
        )

USING_NUMBA = BACKEND == "numba"

__all__ = [
    "BACKEND",
    "USING_NUMBA",
    "accumulate_centers",
    "boxes_contain",
    "nearest_center",
]
