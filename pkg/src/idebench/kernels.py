"""Hot kernels with a compiled backend and a NumPy fallback.

The Cython module ``idebench._kernels`` is used when it was built; otherwise
(or when ``IDEBENCH_PURE_PYTHON=1`` is set before import) the NumPy versions
below are used. Both backends produce the same results to rounding.
"""

from __future__ import annotations

import os

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def im2col_py(x: np.ndarray, k: int, stride: int, pad: int) -> np.ndarray:
    """Unfold ``x[N, C, H, W]`` into ``[N, OH, OW, C*k*k]`` patches (c, ki, kj order)."""
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    # win: N, C, OH, OW, k, k
    n, c, oh, ow = win.shape[:4]
    return np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(n, oh, ow, c * k * k)


def col2im_py(cols: np.ndarray, c: int, h: int, w: int,
              k: int, stride: int, pad: int) -> np.ndarray:
    """Adjoint of :func:`im2col_py`: scatter-add patches back into an image."""
    n, oh, ow, _ = cols.shape
    patches = cols.reshape(n, oh, ow, c, k, k)
    out = np.zeros((n, c, h + 2 * pad, w + 2 * pad))
    for ki in range(k):
        for kj in range(k):
            out[:, :, ki:ki + stride * oh:stride, kj:kj + stride * ow:stride] += (
                patches[:, :, :, :, ki, kj].transpose(0, 3, 1, 2))
    return out[:, :, pad:pad + h, pad:pad + w]


def saliency_py(img: np.ndarray, base: float) -> np.ndarray:
    h, w, _ = img.shape
    out = np.zeros((h, w))
    centre = img[1:-1, 1:-1]
    acc = np.zeros((h - 2, w - 2))
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == 0 and dj == 0:
                continue
            nb = img[1 + di:h - 1 + di, 1 + dj:w - 1 + dj]
            acc += 1.0 - np.sqrt(((centre - nb) ** 2).sum(axis=-1))
    out[1:-1, 1:-1] = base - acc
    return out


BACKEND = "python"
im2col = im2col_py
col2im = col2im_py
saliency = saliency_py

if os.environ.get("IDEBENCH_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels
    except ImportError:
        pass
    else:
        BACKEND = "cython"

        def im2col(x, k, stride, pad):
            return _kernels.im2col(np.ascontiguousarray(x, dtype=np.float64), k, stride, pad)

        def col2im(cols, c, h, w, k, stride, pad):
            cols = np.ascontiguousarray(cols, dtype=np.float64)
            return _kernels.col2im(cols, c, h, w, k, stride, pad)

        def saliency(img, base):
            return _kernels.saliency(np.ascontiguousarray(img, dtype=np.float64), float(base))
