# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels. Semantics match gavs.kernels.pykernels exactly;
only loop fusion and dispatch overhead differ. All inputs must be
C-contiguous float64."""

import numpy as np

cimport numpy as cnp
from libc.math cimport erf, exp, sqrt, pow

cnp.import_array()

cdef double INV_SQRT2 = 0.7071067811865476
cdef double INV_SQRT2PI = 0.3989422804014327


def softmax_rows(double[:, ::1] x):
    cdef Py_ssize_t r = x.shape[0], n = x.shape[1]
    out = np.empty((r, n), dtype=np.float64)
    cdef double[:, ::1] y = out
    cdef Py_ssize_t i, j
    cdef double mx, s
    for i in range(r):
        mx = x[i, 0]
        for j in range(1, n):
            if x[i, j] > mx:
                mx = x[i, j]
        s = 0.0
        for j in range(n):
            y[i, j] = exp(x[i, j] - mx)
            s += y[i, j]
        for j in range(n):
            y[i, j] /= s
    return out


def softmax_rows_grad(double[:, ::1] y, double[:, ::1] gy):
    cdef Py_ssize_t r = y.shape[0], n = y.shape[1]
    out = np.empty((r, n), dtype=np.float64)
    cdef double[:, ::1] gx = out
    cdef Py_ssize_t i, j
    cdef double dot
    for i in range(r):
        dot = 0.0
        for j in range(n):
            dot += y[i, j] * gy[i, j]
        for j in range(n):
            gx[i, j] = y[i, j] * (gy[i, j] - dot)
    return out


def layer_norm_rows(double[:, ::1] x, double[::1] gain, double[::1] bias, double eps):
    cdef Py_ssize_t r = x.shape[0], n = x.shape[1]
    out = np.empty((r, n), dtype=np.float64)
    xhat_arr = np.empty((r, n), dtype=np.float64)
    rstd_arr = np.empty(r, dtype=np.float64)
    cdef double[:, ::1] y = out
    cdef double[:, ::1] xhat = xhat_arr
    cdef double[::1] rstd = rstd_arr
    cdef Py_ssize_t i, j
    cdef double mean, var, d, rs
    for i in range(r):
        mean = 0.0
        for j in range(n):
            mean += x[i, j]
        mean /= n
        var = 0.0
        for j in range(n):
            d = x[i, j] - mean
            var += d * d
        var /= n
        rs = 1.0 / sqrt(var + eps)
        rstd[i] = rs
        for j in range(n):
            xhat[i, j] = (x[i, j] - mean) * rs
            y[i, j] = xhat[i, j] * gain[j] + bias[j]
    return out, xhat_arr, rstd_arr


def layer_norm_rows_grad(double[:, ::1] xhat, double[::1] rstd,
                         double[::1] gain, double[:, ::1] gy):
    cdef Py_ssize_t r = xhat.shape[0], n = xhat.shape[1]
    gx_arr = np.empty((r, n), dtype=np.float64)
    ggain_arr = np.zeros(n, dtype=np.float64)
    gbias_arr = np.zeros(n, dtype=np.float64)
    cdef double[:, ::1] gx = gx_arr
    cdef double[::1] ggain = ggain_arr
    cdef double[::1] gbias = gbias_arr
    cdef Py_ssize_t i, j
    cdef double s1, s2, g, scale
    for i in range(r):
        s1 = 0.0
        s2 = 0.0
        for j in range(n):
            g = gy[i, j] * gain[j]
            s1 += g
            s2 += g * xhat[i, j]
        scale = rstd[i] / n
        for j in range(n):
            g = gy[i, j] * gain[j]
            gx[i, j] = scale * (n * g - s1 - xhat[i, j] * s2)
            ggain[j] += gy[i, j] * xhat[i, j]
            gbias[j] += gy[i, j]
    return gx_arr, ggain_arr, gbias_arr


def gelu(x):
    flat = np.ascontiguousarray(x).reshape(-1)
    out = np.empty_like(flat)
    cdef double[::1] xv = flat
    cdef double[::1] yv = out
    cdef Py_ssize_t i, n = xv.shape[0]
    for i in range(n):
        yv[i] = 0.5 * xv[i] * (1.0 + erf(xv[i] * INV_SQRT2))
    return out.reshape(x.shape)


def gelu_grad(x, gy):
    xf = np.ascontiguousarray(x).reshape(-1)
    gf = np.ascontiguousarray(gy).reshape(-1)
    out = np.empty_like(xf)
    cdef double[::1] xv = xf
    cdef double[::1] gv = gf
    cdef double[::1] yv = out
    cdef Py_ssize_t i, n = xv.shape[0]
    cdef double cdf, pdf
    for i in range(n):
        cdf = 0.5 * (1.0 + erf(xv[i] * INV_SQRT2))
        pdf = INV_SQRT2PI * exp(-0.5 * xv[i] * xv[i])
        yv[i] = gv[i] * (cdf + xv[i] * pdf)
    return out.reshape(x.shape)


def conv_transpose2d_k2s2(double[:, :, ::1] x, double[:, :, :, ::1] w):
    cdef Py_ssize_t ci = x.shape[0], h = x.shape[1], wd = x.shape[2]
    cdef Py_ssize_t co = w.shape[1]
    out = np.zeros((co, 2 * h, 2 * wd), dtype=np.float64)
    cdef double[:, :, ::1] y = out
    cdef Py_ssize_t c, o, i, j, k, l
    cdef double v
    for c in range(ci):
        for o in range(co):
            for i in range(h):
                for j in range(wd):
                    v = x[c, i, j]
                    for k in range(2):
                        for l in range(2):
                            y[o, 2 * i + k, 2 * j + l] += v * w[c, o, k, l]
    return out


def conv_transpose2d_k2s2_grad_x(double[:, :, ::1] gy, double[:, :, :, ::1] w):
    cdef Py_ssize_t ci = w.shape[0], co = w.shape[1]
    cdef Py_ssize_t h = gy.shape[1] // 2, wd = gy.shape[2] // 2
    out = np.zeros((ci, h, wd), dtype=np.float64)
    cdef double[:, :, ::1] gx = out
    cdef Py_ssize_t c, o, i, j, k, l
    cdef double s
    for c in range(ci):
        for i in range(h):
            for j in range(wd):
                s = 0.0
                for o in range(co):
                    for k in range(2):
                        for l in range(2):
                            s += gy[o, 2 * i + k, 2 * j + l] * w[c, o, k, l]
                gx[c, i, j] = s
    return out


def conv_transpose2d_k2s2_grad_w(double[:, :, ::1] x, double[:, :, ::1] gy):
    cdef Py_ssize_t ci = x.shape[0], h = x.shape[1], wd = x.shape[2]
    cdef Py_ssize_t co = gy.shape[0]
    out = np.zeros((ci, co, 2, 2), dtype=np.float64)
    cdef double[:, :, :, ::1] gw = out
    cdef Py_ssize_t c, o, i, j, k, l
    for c in range(ci):
        for o in range(co):
            for k in range(2):
                for l in range(2):
                    for i in range(h):
                        for j in range(wd):
                            gw[c, o, k, l] += x[c, i, j] * gy[o, 2 * i + k, 2 * j + l]
    return out


def adam_step(double[::1] p, double[::1] g, double[::1] m, double[::1] v,
              double lr, double beta1, double beta2, double eps, long t):
    cdef Py_ssize_t i, n = p.shape[0]
    cdef double bc1 = 1.0 - pow(beta1, t)
    cdef double bc2 = 1.0 - pow(beta2, t)
    cdef double mhat, vhat
    for i in range(n):
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i]
        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i]
        mhat = m[i] / bc1
        vhat = v[i] / bc2
        p[i] -= lr * mhat / (sqrt(vhat) + eps)
