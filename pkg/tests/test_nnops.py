"""Kernel-level checks: production kernels vs the loop reference on small
shapes, and the shift-add reference (used at full size elsewhere) vs the same
loop reference."""

import numpy as np

from reference_nn import (
    conv3d_naive,
    conv3d_shift,
    conv_transpose3d_naive,
    conv_transpose3d_shift,
    max_pool2_naive,
)
from segloc import nnops


def test_conv3d_matches_loops():
    rng = np.random.default_rng(1)
    for _ in range(5):
        cin, cout = rng.integers(1, 4), rng.integers(1, 5)
        x = rng.normal(size=(cin, 6, 4, 4))
        w = rng.normal(size=(cout, cin, 3, 3, 3))
        b = rng.normal(size=cout)
        want = conv3d_naive(x, w, b)
        assert np.allclose(nnops.conv3d_same(x, w, b), want, atol=1e-12)
        assert np.allclose(conv3d_shift(x, w, b), want, atol=1e-12)


def test_max_pool_matches_loops():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(3, 8, 6, 4))
    assert np.allclose(nnops.max_pool2(x), max_pool2_naive(x), atol=0)


def test_conv_transpose_matches_loops():
    rng = np.random.default_rng(3)
    for _ in range(5):
        cin, cout = rng.integers(1, 4), rng.integers(1, 5)
        x = rng.normal(size=(cin, 4, 3, 2))
        w = rng.normal(size=(cin, cout, 3, 3, 3))
        b = rng.normal(size=cout)
        want = conv_transpose3d_naive(x, w, b)
        assert np.allclose(nnops.conv_transpose3d_x2(x, w, b), want, atol=1e-12)
        assert np.allclose(conv_transpose3d_shift(x, w, b), want, atol=1e-12)


def test_batch_norm_definition():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(2, 3, 3, 3))
    gamma, beta = rng.normal(size=2), rng.normal(size=2)
    mean, var = rng.normal(size=2), rng.uniform(0.5, 2.0, size=2)
    got = nnops.batch_norm(x, gamma, beta, mean, var)
    for c in range(2):
        want = gamma[c] * (x[c] - mean[c]) / np.sqrt(var[c] + nnops.BN_EPS) + beta[c]
        assert np.allclose(got[c], want, atol=1e-12)


def test_softmax_sums_to_one():
    rng = np.random.default_rng(5)
    for _ in range(10):
        p = nnops.softmax(rng.normal(size=7) * 10)
        assert abs(p.sum() - 1.0) < 1e-12
        assert np.all(p >= 0)
