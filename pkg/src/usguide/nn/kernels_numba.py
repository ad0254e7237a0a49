"""Numba-jitted convolution / pooling kernels (direct loops, NHWC).

Same contracts as kernels_numpy; loop nests are ordered so the innermost
dimension is the output channel (contiguous in NHWC).
"""

import numpy as np
from numba import njit, prange


@njit(parallel=True, cache=True)
def conv2d_forward(x, w, b, stride):
    n, h, wd, cin = x.shape
    k = w.shape[0]
    cout = w.shape[3]
    p = k // 2
    ho = (h + 2 * p - k) // stride + 1
    wo = (wd + 2 * p - k) // stride + 1
    y = np.empty((n, ho, wo, cout), dtype=x.dtype)
    for s in prange(n):
        for oi in range(ho):
            for oj in range(wo):
                acc = b.copy()
                for ki in range(k):
                    ii = oi * stride + ki - p
                    if ii < 0 or ii >= h:
                        continue
                    for kj in range(k):
                        jj = oj * stride + kj - p
                        if jj < 0 or jj >= wd:
                            continue
                        for ci in range(cin):
                            v = x[s, ii, jj, ci]
                            for co in range(cout):
                                acc[co] += v * w[ki, kj, ci, co]
                y[s, oi, oj] = acc
    return y


@njit(parallel=True, cache=True)
def _conv2d_backward_dx(w, dy, h, wd, stride):
    n = dy.shape[0]
    k = w.shape[0]
    cin = w.shape[2]
    cout = w.shape[3]
    p = k // 2
    ho, wo = dy.shape[1], dy.shape[2]
    dx = np.zeros((n, h, wd, cin), dtype=dy.dtype)
    for s in prange(n):
        for oi in range(ho):
            for oj in range(wo):
                g = dy[s, oi, oj]
                for ki in range(k):
                    ii = oi * stride + ki - p
                    if ii < 0 or ii >= h:
                        continue
                    for kj in range(k):
                        jj = oj * stride + kj - p
                        if jj < 0 or jj >= wd:
                            continue
                        for ci in range(cin):
                            acc = dx[s, ii, jj, ci]
                            for co in range(cout):
                                acc += w[ki, kj, ci, co] * g[co]
                            dx[s, ii, jj, ci] = acc
    return dx


@njit(cache=True)
def _conv2d_backward_dw(x, dy, k, stride):
    n, h, wd, cin = x.shape
    cout = dy.shape[3]
    p = k // 2
    ho, wo = dy.shape[1], dy.shape[2]
    dw = np.zeros((k, k, cin, cout), dtype=x.dtype)
    db = np.zeros(cout, dtype=x.dtype)
    for s in range(n):
        for oi in range(ho):
            for oj in range(wo):
                g = dy[s, oi, oj]
                for co in range(cout):
                    db[co] += g[co]
                for ki in range(k):
                    ii = oi * stride + ki - p
                    if ii < 0 or ii >= h:
                        continue
                    for kj in range(k):
                        jj = oj * stride + kj - p
                        if jj < 0 or jj >= wd:
                            continue
                        for ci in range(cin):
                            v = x[s, ii, jj, ci]
                            for co in range(cout):
                                dw[ki, kj, ci, co] += v * g[co]
    return dw, db


def conv2d_backward(x, w, dy, stride):
    dx = _conv2d_backward_dx(w, dy, x.shape[1], x.shape[2], stride)
    dw, db = _conv2d_backward_dw(x, dy, w.shape[0], stride)
    return dx, dw, db


@njit(parallel=True, cache=True)
def _maxpool2x2_forward(x):
    n, h, w, c = x.shape
    ho, wo = h // 2, w // 2
    y = np.empty((n, ho, wo, c), dtype=x.dtype)
    idx = np.empty((n, ho, wo, c), dtype=np.int8)
    for s in prange(n):
        for oi in range(ho):
            for oj in range(wo):
                for ci in range(c):
                    best = x[s, 2 * oi, 2 * oj, ci]
                    bi = 0
                    # row-major scan keeps the first-index tiebreak
                    for t in range(1, 4):
                        v = x[s, 2 * oi + t // 2, 2 * oj + t % 2, ci]
                        if v > best:
                            best = v
                            bi = t
                    y[s, oi, oj, ci] = best
                    idx[s, oi, oj, ci] = bi
    return y, idx


def maxpool2x2_forward(x):
    return _maxpool2x2_forward(x)


@njit(parallel=True, cache=True)
def _maxpool2x2_backward(dy, idx, h, w):
    n, ho, wo, c = dy.shape
    dx = np.zeros((n, h, w, c), dtype=dy.dtype)
    for s in prange(n):
        for oi in range(ho):
            for oj in range(wo):
                for ci in range(c):
                    t = idx[s, oi, oj, ci]
                    dx[s, 2 * oi + t // 2, 2 * oj + t % 2, ci] = dy[s, oi, oj, ci]
    return dx


def maxpool2x2_backward(dy, idx, in_shape):
    return _maxpool2x2_backward(dy, idx, in_shape[1], in_shape[2])
