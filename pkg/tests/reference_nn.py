"""Straightforward loop-based network reference used as an independent oracle.

Deliberately naive: nested loops, no vectorization tricks, so it shares no
code path with the library kernels it checks.
"""

import numpy as np

BN_EPS = 1e-5


def conv3d_naive(x, w, b):
    cin, X, Y, Z = x.shape
    cout = w.shape[0]
    out = np.zeros((cout, X, Y, Z))
    for o in range(cout):
        for i in range(X):
            for j in range(Y):
                for k in range(Z):
                    acc = b[o]
                    for c in range(cin):
                        for a in range(3):
                            for bb in range(3):
                                for d in range(3):
                                    ii, jj, kk = i + a - 1, j + bb - 1, k + d - 1
                                    if 0 <= ii < X and 0 <= jj < Y and 0 <= kk < Z:
                                        acc += w[o, c, a, bb, d] * x[c, ii, jj, kk]
                    out[o, i, j, k] = acc
    return out


def max_pool2_naive(x):
    c, X, Y, Z = x.shape
    out = np.zeros((c, X // 2, Y // 2, Z // 2))
    for cc in range(c):
        for i in range(X // 2):
            for j in range(Y // 2):
                for k in range(Z // 2):
                    out[cc, i, j, k] = x[cc, 2 * i:2 * i + 2,
                                         2 * j:2 * j + 2,
                                         2 * k:2 * k + 2].max()
    return out


def conv_transpose3d_naive(x, w, b):
    """w is (Cin, Cout, 3, 3, 3); stride 2, padding 1, output padding 1."""
    cin, X, Y, Z = x.shape
    cout = w.shape[1]
    out = np.zeros((cout, 2 * X, 2 * Y, 2 * Z))
    for o in range(cout):
        out[o] += b[o]
    for c in range(cin):
        for o in range(cout):
            for i in range(X):
                for j in range(Y):
                    for k in range(Z):
                        for a in range(3):
                            for bb in range(3):
                                for d in range(3):
                                    oi, oj, ok = 2 * i + a - 1, 2 * j + bb - 1, 2 * k + d - 1
                                    if 0 <= oi < 2 * X and 0 <= oj < 2 * Y and 0 <= ok < 2 * Z:
                                        out[o, oi, oj, ok] += x[c, i, j, k] * w[c, o, a, bb, d]
    return out


def conv3d_shift(x, w, b):
    """Shift-and-add convolution; independent decomposition used at full size
    after being cross-checked against the loop version on small shapes."""
    cin, X, Y, Z = x.shape
    cout = w.shape[0]
    xp = np.zeros((cin, X + 2, Y + 2, Z + 2))
    xp[:, 1:-1, 1:-1, 1:-1] = x
    out = np.zeros((cout, X, Y, Z))
    for o in range(cout):
        acc = np.full((X, Y, Z), b[o])
        for c in range(cin):
            for a in range(3):
                for bb in range(3):
                    for d in range(3):
                        acc = acc + w[o, c, a, bb, d] * xp[c, a:a + X, bb:bb + Y, d:d + Z]
        out[o] = acc
    return out


def conv_transpose3d_shift(x, w, b):
    """Scatter-based transposed convolution (w is (Cin, Cout, 3, 3, 3))."""
    cin, X, Y, Z = x.shape
    cout = w.shape[1]
    out = np.zeros((cout, 2 * X + 2, 2 * Y + 2, 2 * Z + 2))
    for c in range(cin):
        for o in range(cout):
            for a in range(3):
                for bb in range(3):
                    for d in range(3):
                        out[o, a:a + 2 * X:2, bb:bb + 2 * Y:2, d:d + 2 * Z:2] += \
                            w[c, o, a, bb, d] * x[c]
    trimmed = out[:, 1:1 + 2 * X, 1:1 + 2 * Y, 1:1 + 2 * Z]
    return trimmed + b[:, None, None, None]


def bn_naive(x, gamma, beta, mean, var):
    out = np.empty_like(x)
    for c in range(x.shape[0]):
        out[c] = gamma[c] * (x[c] - mean[c]) / np.sqrt(var[c] + BN_EPS) + beta[c]
    return out


def relu(x):
    return np.where(x > 0, x, 0.0)


def encoder_forward_naive(grid, extent, tensors):
    """Reference descriptor forward pass from raw float32 tensors."""
    t = {k: v.astype(np.float64) for k, v in tensors.items()}
    x = grid.astype(np.float64)[None]
    for i in (1, 2, 3):
        x = conv3d_shift(x, t[f"conv{i}.weight"], t[f"conv{i}.bias"])
        x = bn_naive(x, t[f"bn{i}.gamma"], t[f"bn{i}.beta"], t[f"bn{i}.mean"], t[f"bn{i}.var"])
        x = relu(x)
        if i < 3:
            x = max_pool2_naive(x)
    feat = np.concatenate([x.reshape(-1), np.asarray(extent, dtype=np.float64) / 10.0])
    h = relu(t["fc1.weight"] @ feat + t["fc1.bias"])
    return relu(t["fc2.weight"] @ h + t["fc2.bias"])


def decoder_forward_naive(descriptor, tensors):
    t = {k: v.astype(np.float64) for k, v in tensors.items()}
    h = relu(t["fc.weight"] @ np.asarray(descriptor, dtype=np.float64) + t["fc.bias"])
    x = h.reshape(64, 4, 4, 2)
    x = relu(conv_transpose3d_shift(x, t["deconv1.weight"], t["deconv1.bias"]))
    x = relu(conv_transpose3d_shift(x, t["deconv2.weight"], t["deconv2.bias"]))
    x = conv_transpose3d_shift(x, t["deconv3.weight"], t["deconv3.bias"])
    return 1.0 / (1.0 + np.exp(-x[0]))


def semantics_forward_naive(descriptor, tensors):
    t = {k: v.astype(np.float64) for k, v in tensors.items()}
    h = relu(t["fc1.weight"] @ np.asarray(descriptor, dtype=np.float64) + t["fc1.bias"])
    logits = t["fc2.weight"] @ h + t["fc2.bias"]
    e = np.exp(logits - logits.max())
    return e / e.sum()
