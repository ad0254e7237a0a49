"""Kernel backend selection.

Hot numeric kernels (convolution, pooling) exist twice: a numba-jitted
loop version and a pure-numpy (im2col + BLAS) version. The active
backend is chosen once at import time:

  USG_BACKEND=numba   force the jitted kernels (error if numba missing)
  USG_BACKEND=numpy   force the pure-numpy kernels
  unset               numpy by default (BLAS wins at these tensor sizes;
                      see benchmarks/bench_backends.py)
"""

import os

_choice = os.environ.get("USG_BACKEND", "").strip().lower()

if _choice not in ("", "numba", "numpy"):
    raise ValueError(f"USG_BACKEND must be 'numba' or 'numpy', got {_choice!r}")

if _choice == "numba":
    import numba  # noqa: F401  (fail loudly if unavailable)
    BACKEND = "numba"
elif _choice == "numpy":
    BACKEND = "numpy"
else:
    BACKEND = "numpy"


def using_numba() -> bool:
    return BACKEND == "numba"
