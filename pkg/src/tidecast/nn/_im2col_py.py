"""Pure-numpy im2col/col2im, the fallback for the compiled kernels.

Both backends must return bitwise-identical arrays: im2col is a pure gather,
and col2im accumulates the k*k contributions of each padded cell in the same
(ki, kj) order as the compiled loop.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def im2col(xp: np.ndarray, k: int) -> np.ndarray:
    """Patch matrix of a padded (B, C, Hp, Wp) input for a k x k kernel.

    Returns (B, H*W, C*k*k) with H = Hp-k+1, W = Wp-k+1, laid out so row
    (i*W + j) holds the receptive field of output pixel (i, j) flattened in
    (channel, ki, kj) order.
    """
    b, c, hp, wp = xp.shape
    h, w = hp - k + 1, wp - k + 1
    windows = sliding_window_view(xp, (k, k), axis=(2, 3))  # (B, C, H, W, k, k)
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(b, h * w, c * k * k)
    return np.ascontiguousarray(cols)


def col2im(cols: np.ndarray, c: int, hp: int, wp: int, k: int) -> np.ndarray:
    """Adjoint of im2col: scatter-add columns back onto the padded grid."""
    b = cols.shape[0]
    h, w = hp - k + 1, wp - k + 1
    xp = np.zeros((b, c, hp, wp), dtype=cols.dtype)
    patches = cols.reshape(b, h, w, c, k, k)
    for ki in range(k):
        for kj in range(k):
            xp[:, :, ki : ki + h, kj : kj + w] += patches[:, :, :, :, ki, kj].transpose(0, 3, 1, 2)
    return xp
