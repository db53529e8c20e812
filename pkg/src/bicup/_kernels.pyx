# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled patch gather/scatter kernels for the conv layers.

Must match bicup._kernels_py exactly; the backend equivalence tests
compare them element by element.
"""

import numpy as np
cimport numpy as cnp

cnp.import_array()

BACKEND = "cython"

ctypedef fused real:
    float
    double


def conv_out_size(size, k, stride):
    if size < k:
        raise ValueError(f"input size {size} smaller than kernel {k}")
    return (size - k) // stride + 1


def im2col(x, int kh, int kw, int stride):
    x = np.ascontiguousarray(x)
    if x.dtype not in (np.float32, np.float64):
        raise TypeError(f"unsupported dtype {x.dtype}")
    return _im2col(x, kh, kw, stride)


def col2im(cols, int c, int h, int w, int kh, int kw, int stride):
    cols = np.ascontiguousarray(cols)
    if cols.dtype not in (np.float32, np.float64):
        raise TypeError(f"unsupported dtype {cols.dtype}")
    return _col2im(cols, c, h, w, kh, kw, stride)


def _im2col(real[:, :, :, ::1] x, int kh, int kw, int stride):
    cdef Py_ssize_t b = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t ho = (h - kh) // stride + 1
    cdef Py_ssize_t wo = (w - kw) // stride + 1
    out_np = np.empty((b, c * kh * kw, ho * wo),
                      dtype=np.float32 if real is float else np.float64)
    cdef real[:, :, ::1] out = out_np
    cdef Py_ssize_t bi, ci, i, j, oi, oj, row, col
    for bi in range(b):
        for ci in range(c):
            for i in range(kh):
                for j in range(kw):
                    row = (ci * kh + i) * kw + j
                    for oi in range(ho):
                        for oj in range(wo):
                            out[bi, row, oi * wo + oj] = x[bi, ci, oi * stride + i,
                                                           oj * stride + j]
    return out_np


def _col2im(real[:, :, ::1] cols, int c, int h, int w, int kh, int kw, int stride):
    cdef Py_ssize_t b = cols.shape[0]
    cdef Py_ssize_t ho = (h - kh) // stride + 1
    cdef Py_ssize_t wo = (w - kw) // stride + 1
    out_np = np.zeros((b, c, h, w), dtype=np.float32 if real is float else np.float64)
    cdef real[:, :, :, ::1] out = out_np
    cdef Py_ssize_t bi, ci, i, j, oi, oj, row
    for bi in range(b):
        for ci in range(c):
            for i in range(kh):
                for j in range(kw):
                    row = (ci * kh + i) * kw + j
                    for oi in range(ho):
                        for oj in range(wo):
                            out[bi, ci, oi * stride + i, oj * stride + j] += \
                                cols[bi, row, oi * wo + oj]
    return out_np
