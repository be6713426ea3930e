"""Same-padded 3x3 convolution primitives on channels-last arrays.

Arrays are laid out as ``(batch, height, width, channels)``. Columns produced by
:func:`im2col` are ordered ``(ki, kj, channel)`` so that a kernel stored as
``(out, in, kh, kw)`` has to be transposed with :func:`kernel_matrix` first.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def sigmoid(x: np.ndarray) -> np.ndarray:
    # tanh form never overflows
    out = np.tanh(0.5 * x)
    out += 1.0
    out *= 0.5
    return out


def kernel_matrix(weight: np.ndarray) -> np.ndarray:
    """(out, in, k, k) kernel -> (out, k*k*in) matrix matching im2col columns."""
    out_ch, in_ch, kh, kw = weight.shape
    return np.ascontiguousarray(weight.transpose(0, 2, 3, 1).reshape(out_ch, kh * kw * in_ch))


def matrix_kernel(mat: np.ndarray, in_ch: int, k: int = 3) -> np.ndarray:
    """Inverse of :func:`kernel_matrix`."""
    return mat.reshape(mat.shape[0], k, k, in_ch).transpose(0, 3, 1, 2)


def im2col(z: np.ndarray, k: int = 3) -> np.ndarray:
    b, h, w, c = z.shape
    p = k // 2
    zp = np.pad(z, ((0, 0), (p, p), (p, p), (0, 0)))
    win = sliding_window_view(zp, (k, k), axis=(1, 2))  # (b, h, w, c, k, k)
    return win.transpose(0, 1, 2, 4, 5, 3).reshape(b * h * w, k * k * c)


def col2im(cols: np.ndarray, shape: tuple[int, int, int, int], k: int = 3) -> np.ndarray:
    b, h, w, c = shape
    p = k // 2
    d = cols.reshape(b, h, w, k, k, c)
    out = np.zeros((b, h + 2 * p, w + 2 * p, c), dtype=cols.dtype)
    for ki in range(k):
        for kj in range(k):
            out[:, ki:ki + h, kj:kj + w, :] += d[:, :, :, ki, kj, :]
    return out[:, p:p + h, p:p + w, :]


def conv2d(z: np.ndarray, weight: np.ndarray, bias: np.ndarray | None = None) -> np.ndarray:
    """Cross-correlation with zero 'same' padding, stride 1."""
    b, h, w, _ = z.shape
    k = weight.shape[-1]
    out = im2col(z, k) @ kernel_matrix(weight).T
    if bias is not None:
        out += bias
    return out.reshape(b, h, w, weight.shape[0])
