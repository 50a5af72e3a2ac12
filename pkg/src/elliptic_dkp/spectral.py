"""Chebyshev-Lobatto tensor grids on boxes ``[0, L_1] x ... x [0, L_N]``.

Fields are arrays whose leading ``N`` axes index the grid nodes; any
trailing axes are carried along untouched.
"""
from __future__ import annotations

import numpy as np
import numpy.polynomial.chebyshev as cheb


def lobatto_1d(n, length):
    """Nodes (ascending from 0), differentiation and integrate-from-0 matrices."""
    if n < 2:
        raise ValueError("need at least two Chebyshev nodes")
    s = -np.cos(np.pi * np.arange(n) / (n - 1))  # ascending in [-1, 1]
    x = length * (s + 1) / 2
    V = cheb.chebvander(s, n - 1)
    Vinv = np.linalg.inv(V)
    D = np.empty((n, n))
    integ = np.empty((n, n))
    for j in range(n):
        co = Vinv[:, j]
        D[:, j] = cheb.chebval(s, cheb.chebder(co)) * (2.0 / length)
        integ[:, j] = cheb.chebval(s, cheb.chebint(co, lbnd=-1)) * (length / 2.0)
    w = np.ones(n)
    w[1::2] = -1.0
    w[0] *= 0.5
    w[-1] *= 0.5
    return x, D, integ, w


class ChebGrid:
    """Tensor-product Chebyshev-Lobatto grid with spectral calculus."""

    def __init__(self, lengths, n):
        self.lengths = tuple(float(L) for L in lengths)
        self.ndim = len(self.lengths)
        self.n = int(n)
        parts = [lobatto_1d(self.n, L) for L in self.lengths]
        self.nodes = [p[0] for p in parts]
        self.D = [p[1] for p in parts]
        self.I = [p[2] for p in parts]
        self.weights = [p[3] for p in parts]
        self.shape = (self.n,) * self.ndim

    def coords(self):
        """Coordinate arrays of shape ``grid.shape`` for each axis."""
        return np.meshgrid(*self.nodes, indexing="ij")

    def apply(self, mat, F, axis):
        return np.moveaxis(np.tensordot(mat, F, axes=(1, axis)), 0, axis)

    def diff(self, F, axis):
        return self.apply(self.D[axis], F, axis)

    def integrate(self, F, axis):
        """Antiderivative along ``axis`` vanishing on the face ``lambda_axis = 0``."""
        return self.apply(self.I[axis], F, axis)

    @staticmethod
    def restrict_zero(F, axes):
        """Restrict to the faces ``lambda_a = 0`` for ``a in axes`` and broadcast back."""
        if not axes:
            return F
        idx = [slice(None)] * F.ndim
        for a in axes:
            idx[a] = slice(0, 1)
        return np.broadcast_to(F[tuple(idx)], F.shape)

    def _coef(self, axis, p):
        x = self.nodes[axis]
        d = p - x
        hit = np.flatnonzero(np.abs(d) < 1e-14 * max(1.0, self.lengths[axis]))
        if hit.size:
            c = np.zeros(self.n)
            c[hit[0]] = 1.0
            return c
        t = self.weights[axis] / d
        return t / t.sum()

    def contains(self, lam, slack=1e-12):
        lam = np.asarray(lam, dtype=float)
        return bool(np.all(lam >= -slack) and np.all(lam <= np.asarray(self.lengths) + slack))

    def interp(self, F, lam):
        """Barycentric interpolation of a field at one point ``lam``."""
        out = F
        for axis, p in enumerate(lam):
            out = np.tensordot(self._coef(axis, float(p)), out, axes=(0, 0))
        return out
