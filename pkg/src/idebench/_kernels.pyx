# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops: patch unfolding for convolutions and the saliency map."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()


def im2col(const double[:, :, :, ::1] x, int k, int stride, int pad):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t oh = (h + 2 * pad - k) // stride + 1
    cdef Py_ssize_t ow = (w + 2 * pad - k) // stride + 1
    out_arr = np.zeros((n, oh, ow, c * k * k), dtype=np.float64)
    cdef double[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t b, i, j, ch, ki, kj, r, s, col
    for b in range(n):
        for i in range(oh):
            for j in range(ow):
                col = 0
                for ch in range(c):
                    for ki in range(k):
                        r = i * stride + ki - pad
                        for kj in range(k):
                            s = j * stride + kj - pad
                            if 0 <= r < h and 0 <= s < w:
                                out[b, i, j, col] = x[b, ch, r, s]
                            col += 1
    return out_arr


def col2im(const double[:, :, :, ::1] cols, int c, int h, int w, int k, int stride, int pad):
    cdef Py_ssize_t n = cols.shape[0], oh = cols.shape[1], ow = cols.shape[2]
    out_arr = np.zeros((n, c, h, w), dtype=np.float64)
    cdef double[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t b, i, j, ch, ki, kj, r, s, col
    for b in range(n):
        for i in range(oh):
            for j in range(ow):
                col = 0
                for ch in range(c):
                    for ki in range(k):
                        r = i * stride + ki - pad
                        for kj in range(k):
                            s = j * stride + kj - pad
                            if 0 <= r < h and 0 <= s < w:
                                out[b, ch, r, s] += cols[b, i, j, col]
                            col += 1
    return out_arr


def saliency(const double[:, :, ::1] img, double base):
    cdef Py_ssize_t h = img.shape[0], w = img.shape[1], nc = img.shape[2]
    out_arr = np.zeros((h, w), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, di, dj, ch
    cdef double acc, d2, diff
    for i in range(1, h - 1):
        for j in range(1, w - 1):
            acc = 0.0
            for di in range(-1, 2):
                for dj in range(-1, 2):
                    if di == 0 and dj == 0:
                        continue
                    d2 = 0.0
                    for ch in range(nc):
                        diff = img[i, j, ch] - img[i + di, j + dj, ch]
                        d2 += diff * diff
                    acc += 1.0 - sqrt(d2)
            out[i, j] = base - acc
    return out_arr
