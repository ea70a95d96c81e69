# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled im2col/col2im kernels for stride-1 convolution.

Must stay bitwise-compatible with tidecast.nn._im2col_py: same layout for
im2col and the same (ki, kj) accumulation order in col2im.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def im2col(cnp.ndarray[cnp.float64_t, ndim=4] xp, int k):
    cdef Py_ssize_t b = xp.shape[0]
    cdef Py_ssize_t c = xp.shape[1]
    cdef Py_ssize_t hp = xp.shape[2]
    cdef Py_ssize_t wp = xp.shape[3]
    cdef Py_ssize_t h = hp - k + 1
    cdef Py_ssize_t w = wp - k + 1
    cdef cnp.ndarray[cnp.float64_t, ndim=3] cols = np.empty((b, h * w, c * k * k), dtype=np.float64)
    cdef double[:, :, :, :] x = xp
    cdef double[:, :, :] out = cols
    cdef Py_ssize_t bi, ci, i, j, ki, kj, row, col
    for bi in range(b):
        for i in range(h):
            for j in range(w):
                row = i * w + j
                for ci in range(c):
                    for ki in range(k):
                        col = (ci * k + ki) * k
                        for kj in range(k):
                            out[bi, row, col + kj] = x[bi, ci, i + ki, j + kj]
    return cols


def col2im(cnp.ndarray[cnp.float64_t, ndim=3] cols, int c, int hp, int wp, int k):
    cdef Py_ssize_t b = cols.shape[0]
    cdef Py_ssize_t h = hp - k + 1
    cdef Py_ssize_t w = wp - k + 1
    cdef cnp.ndarray[cnp.float64_t, ndim=4] xp = np.zeros((b, c, hp, wp), dtype=np.float64)
    cdef double[:, :, :] src = cols
    cdef double[:, :, :, :] out = xp
    cdef Py_ssize_t bi, ci, i, j, ki, kj, row, col
    # ki/kj outermost: accumulation order per padded cell matches the numpy
    # fallback, keeping both backends bitwise identical.
    for ki in range(k):
        for kj in range(k):
            for bi in range(b):
                for ci in range(c):
                    col = (ci * k + ki) * k + kj
                    for i in range(h):
                        row = i * w
                        for j in range(w):
                            out[bi, ci, i + ki, j + kj] += src[bi, row + j, col]
    return xp
