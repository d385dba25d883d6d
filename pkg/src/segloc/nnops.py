"""Deterministic inference kernels: 3D convolution, pooling, batch norm, dense.

All forward math runs in float64 regardless of the float32 storage format, so
identical input bytes always produce identical output bytes. Activations are
row-major (channels, x, y, z); dense weights are (out, in).
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

BN_EPS = 1e-5


def conv3d_same(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """3x3x3 convolution, stride 1, zero padding 1. w is (Cout, Cin, 3, 3, 3)."""
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (1, 1)))
    win = sliding_window_view(xp, (3, 3, 3), axis=(1, 2, 3))
    out = np.tensordot(w, win, axes=([1, 2, 3, 4], [0, 4, 5, 6]))
    return out + b[:, None, None, None]


def max_pool2(x: np.ndarray) -> np.ndarray:
    """2x2x2 max pooling, stride 2; spatial dims must be even."""
    c, X, Y, Z = x.shape
    return x.reshape(c, X // 2, 2, Y // 2, 2, Z // 2, 2).max(axis=(2, 4, 6))


def batch_norm(x: np.ndarray, gamma, beta, mean, var) -> np.ndarray:
    inv = gamma / np.sqrt(var + BN_EPS)
    return x * inv[:, None, None, None] + (beta - mean * inv)[:, None, None, None]


def dense(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    return w @ x + b


def conv_transpose3d_x2(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Transposed 3x3x3 convolution doubling each spatial dim.

    Matches stride 2, padding 1, output padding 1. w is (Cin, Cout, 3, 3, 3),
    the layout trainers that treat this as the gradient of a strided
    convolution produce.
    """
    cin, X, Y, Z = x.shape
    up = np.zeros((cin, 2 * X - 1, 2 * Y - 1, 2 * Z - 1), dtype=x.dtype)
    up[:, ::2, ::2, ::2] = x
    up = np.pad(up, ((0, 0), (1, 2), (1, 2), (1, 2)))
    w_corr = w[:, :, ::-1, ::-1, ::-1].transpose(1, 0, 2, 3, 4)
    win = sliding_window_view(up, (3, 3, 3), axis=(1, 2, 3))
    out = np.tensordot(w_corr, win, axes=([1, 2, 3, 4], [0, 4, 5, 6]))
    return out + b[:, None, None, None]


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - np.max(logits)
    e = np.exp(z)
    return e / e.sum()
