"""Numpy reference implementations of the hot kernels.

These are the fallback backend: every function here has a compiled twin in
``_ckern.pyx`` with the same signature and semantics. All arrays are
C-contiguous float64; callers are responsible for that layout.
"""

import numpy as np
from scipy.special import erf

_INV_SQRT2 = 0.7071067811865476
_INV_SQRT2PI = 0.3989422804014327


def softmax_rows(x):
    """Row-wise softmax of a 2D array, max-subtracted for stability."""
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_rows_grad(y, gy):
    """Backward of softmax_rows given its output y and upstream gradient gy."""
    dot = (y * gy).sum(axis=1, keepdims=True)
    return y * (gy - dot)


def layer_norm_rows(x, gain, bias, eps):
    """Row-wise layer norm with affine output.

    Returns (y, xhat, rstd) where xhat is the normalized pre-affine value and
    rstd the reciprocal standard deviation, both needed by the backward pass.
    """
    mean = x.mean(axis=1, keepdims=True)
    var = ((x - mean) ** 2).mean(axis=1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean) * rstd
    return xhat * gain + bias, xhat, rstd[:, 0].copy()


def layer_norm_rows_grad(xhat, rstd, gain, gy):
    """Backward of layer_norm_rows; returns (gx, ggain, gbias)."""
    n = xhat.shape[1]
    gyg = gy * gain
    s1 = gyg.sum(axis=1, keepdims=True)
    s2 = (gyg * xhat).sum(axis=1, keepdims=True)
    gx = (rstd[:, None] / n) * (n * gyg - s1 - xhat * s2)
    ggain = (gy * xhat).sum(axis=0)
    gbias = gy.sum(axis=0)
    return gx, ggain, gbias


def gelu(x):
    """Exact (erf-based) GELU."""
    return 0.5 * x * (1.0 + erf(x * _INV_SQRT2))


def gelu_grad(x, gy):
    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    pdf = _INV_SQRT2PI * np.exp(-0.5 * x * x)
    return gy * (cdf + x * pdf)


def conv_transpose2d_k2s2(x, w):
    """Transposed conv, kernel 2, stride 2 (exact x2 upscale, no overlap).

    x: (c_in, h, w), w: (c_in, c_out, 2, 2) -> (c_out, 2h, 2w)
    """
    c_in, h, wd = x.shape
    c_out = w.shape[1]
    y = np.einsum("cij,cokl->oikjl", x, w)
    return np.ascontiguousarray(y.reshape(c_out, 2 * h, 2 * wd))


def conv_transpose2d_k2s2_grad_x(gy, w):
    c_out = w.shape[1]
    h2, w2 = gy.shape[1], gy.shape[2]
    gyr = gy.reshape(c_out, h2 // 2, 2, w2 // 2, 2)
    return np.ascontiguousarray(np.einsum("oikjl,cokl->cij", gyr, w))


def conv_transpose2d_k2s2_grad_w(x, gy):
    c_out = gy.shape[0]
    h2, w2 = gy.shape[1], gy.shape[2]
    gyr = gy.reshape(c_out, h2 // 2, 2, w2 // 2, 2)
    return np.ascontiguousarray(np.einsum("cij,oikjl->cokl", x, gyr))


def adam_step(p, g, m, v, lr, beta1, beta2, eps, t):
    """One Adam update, in place on flat views p/m/v."""
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * (g * g)
    mhat = m / (1.0 - beta1 ** t)
    vhat = v / (1.0 - beta2 ** t)
    p -= lr * mhat / (np.sqrt(vhat) + eps)
