"""Dense float64 kernels used by the recurrent layers.

Matrices are plain 2-D ``numpy.ndarray`` objects of dtype float64. The
reference :func:`matmul` accumulates over the inner dimension in a fixed
order, so it agrees bit-for-bit with a naive triple loop. The recurrent
layers use numpy's BLAS-backed ``@`` on their hot path; on one platform
with a fixed thread count that is deterministic as well.

Set ``TRACERNN_CHECKED=1`` (or call :func:`set_checked`) to make every public
kernel assert that its output is finite.
"""
import os

import numpy as np

DTYPE = np.float64

#: Name of the pseudo-random algorithm behind :func:`seeded_rng`.
RNG_ALGORITHM = "PCG64"

_checked = os.environ.get("TRACERNN_CHECKED", "") not in ("", "0")


def set_checked(flag):
    global _checked
    _checked = bool(flag)


def is_checked():
    return _checked


def check_finite(a, what="matrix"):
    if not np.all(np.isfinite(a)):
        raise FloatingPointError(f"non-finite value in {what}")
    return a


def _out(a):
    if _checked:
        check_finite(a)
    return a


def _as_matrix(a):
    a = np.asarray(a, dtype=DTYPE)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {a.shape}")
    return a


def matmul(a, b):
    """Product of an m×k and a k×n matrix with a fixed summation order.

    Each output entry is ``((a[i,0]*b[0,j] + a[i,1]*b[1,j]) + ...)``, exactly
    the order of a naive ``for k`` loop.
    """
    a = _as_matrix(a)
    b = _as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"inner dimensions differ: {a.shape} x {b.shape}")
    out = np.zeros((a.shape[0], b.shape[1]), dtype=DTYPE)
    for k in range(a.shape[1]):
        out += a[:, k:k + 1] * b[k:k + 1, :]
    return _out(out)


def _binary(a, b, op):
    a = np.asarray(a, dtype=DTYPE)
    b = np.asarray(b, dtype=DTYPE)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return _out(op(a, b))


def add(a, b):
    return _binary(a, b, np.add)


def sub(a, b):
    return _binary(a, b, np.subtract)


def mul(a, b):
    return _binary(a, b, np.multiply)


def sigmoid(x):
    """Logistic function evaluated without overflow for any finite input."""
    x = np.asarray(x, dtype=DTYPE)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return _out(out)


def tanh(x):
    return _out(np.tanh(np.asarray(x, dtype=DTYPE)))


def softmax_rows(m):
    m = np.asarray(m, dtype=DTYPE)
    if m.ndim != 2 or m.shape[1] < 1:
        raise ValueError(f"softmax_rows needs a matrix with >= 1 column, got {m.shape}")
    e = np.exp(m - m.max(axis=1, keepdims=True))
    return _out(e / e.sum(axis=1, keepdims=True))


def seeded_rng(seed):
    return np.random.Generator(np.random.PCG64(seed))


def seeded_uniform(rows, cols, lo, hi, rng):
    if not lo < hi:
        raise ValueError(f"need lo < hi, got lo={lo}, hi={hi}")
    return _out(rng.uniform(lo, hi, size=(rows, cols)).astype(DTYPE, copy=False))
