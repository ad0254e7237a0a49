"""Backend dispatch for the hot kernels (see usguide.backend)."""

from ..backend import using_numba

if using_numba():
    from .kernels_numba import (  # noqa: F401
        conv2d_backward,
        conv2d_forward,
        maxpool2x2_backward,
        maxpool2x2_forward,
    )
else:
    from .kernels_numpy import (  # noqa: F401
        conv2d_backward,
        conv2d_forward,
        maxpool2x2_backward,
        maxpool2x2_forward,
    )
