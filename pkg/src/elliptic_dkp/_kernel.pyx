# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled theta q-series kernel (same contract as ``_kernel_py.theta_table``).

Terms are generated by the recurrence
``e(n+1) = e(n) * q**(2n+1) * exp(2*pi*i*u)`` so each point costs a handful
of complex exponentials regardless of the number of retained terms.
"""
import numpy as np

from libc.math cimport log, sqrt, ceil, fabs, M_PI

cdef extern from "complex.h" nogil:
    double complex cexp(double complex z)


cdef inline int _nterms(double ay, double t, int order, double tol) nogil:
    cdef double r = ay / t
    cdef double budget = -log(tol) + order * log(16.0 * M_PI)
    return <int>ceil(r + sqrt(r * r + budget / (M_PI * t))) + 2


cdef enum:
    MAX_ORDER = 63


cdef inline void _accum(double complex* acc, int ra, int rb,
                        double complex e, double complex ca, double complex cb,
                        double n, int order) noexcept nogil:
    cdef double complex w = 2.0j * M_PI * n
    cdef double complex f = e
    cdef int d
    cdef double complex* a = acc + ra * (MAX_ORDER + 1)
    cdef double complex* b = acc + rb * (MAX_ORDER + 1)
    for d in range(order + 1):
        a[d] = a[d] + ca * f
        b[d] = b[d] + cb * f
        f = f * w


def theta_table(u, tau, int order, double tol=1e-15):
    cdef const double complex[::1] uu = np.ascontiguousarray(u, dtype=complex)
    cdef const double complex[::1] tt = np.ascontiguousarray(tau, dtype=complex)
    cdef Py_ssize_t npts = uu.shape[0]
    out = np.zeros((4, order + 1, npts), dtype=complex)
    cdef double complex[:, :, ::1] o = out
    cdef Py_ssize_t p
    cdef int k, nmax
    cdef double complex up, tp, q, q2, z, zi, ep, em, rp, rm, sq
    cdef double complex I = 1j
    cdef double complex acc[4 * (MAX_ORDER + 1)]
    cdef int d, r
    if order > MAX_ORDER:
        raise ValueError("order too large for the compiled kernel")
    if tt.shape[0] != npts:
        raise ValueError("u and tau must have the same length")
    with nogil:
        for p in range(npts):
            up = uu[p]
            tp = tt[p]
            for r in range(4 * (MAX_ORDER + 1)):
                acc[r] = 0.0
            nmax = _nterms(fabs(up.imag), tp.imag, order, tol)
            q = cexp(I * M_PI * tp)
            q2 = q * q
            z = cexp(2.0 * I * M_PI * up)
            zi = 1.0 / z
            # integer lattice: theta_3 (1), theta_4 ((-1)**n)
            _accum(acc, 2, 3, 1.0, 1.0, 1.0, 0.0, order)
            ep = 1.0
            em = 1.0
            rp = q
            for k in range(nmax):
                ep = ep * rp * z
                em = em * rp * zi
                rp = rp * q2
                _accum(acc, 2, 3, ep, 1.0, -1.0 if k % 2 == 0 else 1.0, k + 1.0, order)
                _accum(acc, 2, 3, em, 1.0, -1.0 if k % 2 == 0 else 1.0, -(k + 1.0), order)
            # half-integer lattice: theta_2 (1), theta_1 (-exp(i*pi*n))
            sq = cexp(I * M_PI * (0.25 * tp + up))
            ep = sq
            em = cexp(I * M_PI * (0.25 * tp - up))
            rp = q2
            for k in range(nmax):
                # n = k + 1/2 and n = -(k + 1/2); -exp(i*pi*n) = -i*(-1)**k and +i*(-1)**k
                _accum(acc, 1, 0, ep, 1.0, -I if k % 2 == 0 else I, k + 0.5, order)
                _accum(acc, 1, 0, em, 1.0, I if k % 2 == 0 else -I, -(k + 0.5), order)
                ep = ep * rp * z
                em = em * rp * zi
                rp = rp * q2
            for r in range(4):
                for d in range(order + 1):
                    o[r, d, p] = acc[r * (MAX_ORDER + 1) + d]
    return out
