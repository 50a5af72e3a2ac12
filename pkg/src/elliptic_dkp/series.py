"""Truncated power-series helpers (coefficient arrays along the last axis)."""
from __future__ import annotations

import numpy as np


def log_series(a):
    """Coefficients of ``log f`` from the Taylor coefficients ``a`` of ``f``.

    Uses ``n b_n a_0 = n a_n - sum_{k=1}^{n-1} k b_k a_{n-k}``.  ``b_0`` is
    the principal ``log a_0``.
    """
    a = np.asarray(a, dtype=complex)
    n = a.shape[-1]
    b = np.zeros(a.shape, dtype=complex)
    kb = np.zeros(a.shape, dtype=complex)  # k * b_k
    b[..., 0] = np.log(a[..., 0])
    for k in range(1, n):
        s = k * a[..., k] - np.einsum("...i,...i->...", kb[..., 1:k], a[..., k - 1 : 0 : -1])
        kb[..., k] = s / a[..., 0]
        b[..., k] = kb[..., k] / k
    return b


def toeplitz_lower(a):
    """Lower-triangular Toeplitz matrix of multiplication by the series ``a``."""
    n = a.shape[-1]
    i = np.arange(n)
    idx = i[:, None] - i[None, :]
    T = a[..., np.clip(idx, 0, None)]
    return np.where(idx >= 0, T, 0)


def mul(a, b):
    """Product of two series truncated to the common length."""
    return np.einsum("...ij,...j->...i", toeplitz_lower(np.asarray(a)), np.asarray(b))


def laurent_powers(c, m_max):
    """``P[m, n] = [z**-n] u(z)**m`` for ``u = sum_{k>=1} c_k z**-k``.

    ``c`` holds ``c_1..c_M`` along its last axis; rows ``m = 0..m_max`` and
    columns ``n = 0..M`` are returned.  Powers of u start at ``z**-m`` so the
    triangular structure is exact.
    """
    c = np.asarray(c)
    M = c.shape[-1]
    base = np.zeros(c.shape[:-1] + (M + 1,), dtype=np.result_type(c, float))
    base[..., 1:] = c
    T = toeplitz_lower(base)
    out = np.zeros(c.shape[:-1] + (m_max + 1, M + 1), dtype=base.dtype)
    out[..., 0, 0] = 1.0
    for m in range(1, m_max + 1):
        out[..., m, :] = np.einsum("...ij,...j->...i", T, out[..., m - 1, :])
    return out
