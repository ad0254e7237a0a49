"""Pure-numpy convolution / pooling kernels (im2col + BLAS).

Layout is NHWC throughout. Convolutions use zero padding of k//2 so a
stride-1 conv preserves the spatial size.
"""

import numpy as np


def _im2col(x, k, stride):
    """(N,H,W,C) -> (N, Ho, Wo, k*k*C) patch matrix, zero-padded by k//2."""
    n, h, w, c = x.shape
    p = k // 2
    xp = np.pad(x, ((0, 0), (p, p), (p, p), (0, 0)))
    windows = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(1, 2))
    # windows: (N, Ho', Wo', C, k, k) with Ho' = h, strided below
    windows = windows[:, ::stride, ::stride]
    n_, ho, wo, c_, _, _ = windows.shape
    # reorder to (k, k, C) per patch to match kernel layout (k,k,Cin,Cout)
    cols = windows.transpose(0, 1, 2, 4, 5, 3).reshape(n_, ho, wo, k * k * c_)
    return np.ascontiguousarray(cols)


def conv2d_forward(x, w, b, stride):
    k = w.shape[0]
    cout = w.shape[3]
    cols = _im2col(x, k, stride)
    n, ho, wo, patch = cols.shape
    y = cols.reshape(-1, patch) @ w.reshape(-1, cout)
    y += b
    return y.reshape(n, ho, wo, cout)


def conv2d_backward(x, w, dy, stride):
    n, h, wdt, cin = x.shape
    k = w.shape[0]
    cout = w.shape[3]
    p = k // 2
    cols = _im2col(x, k, stride)
    _, ho, wo, patch = cols.shape
    dyf = dy.reshape(-1, cout)

    dw = (cols.reshape(-1, patch).T @ dyf).reshape(k, k, cin, cout)
    db = dyf.sum(axis=0)

    # dcols -> dx by scatter-add over the padded image
    dcols = (dyf @ w.reshape(-1, cout).T).reshape(n, ho, wo, k, k, cin)
    dxp = np.zeros((n, h + 2 * p, wdt + 2 * p, cin), dtype=x.dtype)
    for i in range(k):
        for j in range(k):
            dxp[:, i : i + ho * stride : stride, j : j + wo * stride : stride] += (
                dcols[:, :, :, i, j, :]
            )
    dx = dxp[:, p : p + h, p : p + wdt]
    return np.ascontiguousarray(dx), dw, db


def maxpool2x2_forward(x):
    n, h, w, c = x.shape
    ho, wo = h // 2, w // 2
    xt = x[:, : ho * 2, : wo * 2].reshape(n, ho, 2, wo, 2, c)
    blocks = xt.transpose(0, 1, 3, 2, 4, 5).reshape(n, ho, wo, 4, c)
    # first-index tiebreak in row-major block order
    idx = blocks.argmax(axis=3).astype(np.int8)
    y = np.take_along_axis(blocks, idx[:, :, :, None, :], axis=3)[:, :, :, 0, :]
    return np.ascontiguousarray(y), idx


def maxpool2x2_backward(dy, idx, in_shape):
    n, h, w, c = in_shape
    ho, wo = h // 2, w // 2
    dblocks = np.zeros((n, ho, wo, 4, c), dtype=dy.dtype)
    np.put_along_axis(dblocks, idx[:, :, :, None, :], dy[:, :, :, None, :], axis=3)
    dx = np.zeros(in_shape, dtype=dy.dtype)
    dx[:, : ho * 2, : wo * 2] = (
        dblocks.reshape(n, ho, wo, 2, 2, c).transpose(0, 1, 3, 2, 4, 5)
        .reshape(n, ho * 2, wo * 2, c)
    )
    return dx
