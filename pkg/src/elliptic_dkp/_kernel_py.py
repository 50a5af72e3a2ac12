"""Pure numpy evaluation of the four theta q-series and their u-derivatives.

This is the fallback used when the compiled ``_kernel`` extension is not
available.  Both implementations share the truncation rule in
:func:`term_count` so they agree to rounding.
"""
import numpy as np

PI = np.pi


def term_count(abs_imag_u, imag_tau, order, tol):
    """Number of lattice terms per side needed for a relative tail below ``tol``.

    A term ``q**(n*n) * exp(2*pi*i*n*u)`` has modulus
    ``exp(-pi*t*n**2 + 2*pi*n*|y|)``; the derivative factor ``(2*pi*n)**order``
    is absorbed in the log budget.
    """
    r = abs_imag_u / imag_tau
    budget = -np.log(tol) + order * np.log(16.0 * PI)
    return np.ceil(r + np.sqrt(r * r + budget / (PI * imag_tau))) + 2


def theta_table(u, tau, order, tol=1e-15):
    """Return ``out[a-1, d, p] = d**d/du**d theta_a(u[p], tau[p])``.

    ``u`` and ``tau`` are 1-d complex arrays of equal length.
    """
    u = np.ascontiguousarray(u, dtype=complex)
    tau = np.ascontiguousarray(tau, dtype=complex)
    if tau.shape != u.shape:
        raise ValueError("u and tau must have the same length")
    out = np.zeros((4, order + 1, u.size), dtype=complex)
    if u.size == 0:
        return out
    nmax = int(np.max(term_count(np.abs(u.imag), tau.imag, order, tol)))
    ni = np.arange(-nmax, nmax + 1, dtype=float)
    nh = np.arange(-nmax, nmax, dtype=float) + 0.5
    # integer lattice carries theta_3 (coefficient 1) and theta_4 ((-1)**n)
    e = np.exp(1j * PI * tau[:, None] * ni ** 2 + 2j * PI * u[:, None] * ni)
    sign = np.where(ni % 2 == 0, 1.0, -1.0)
    w = 2j * PI * ni
    f = np.ones_like(w)
    for d in range(order + 1):
        out[2, d] = e @ f
        out[3, d] = e @ (sign * f)
        f = f * w
    # half-integer lattice carries theta_2 (1) and theta_1 (-exp(i*pi*n))
    e = np.exp(1j * PI * tau[:, None] * nh ** 2 + 2j * PI * u[:, None] * nh)
    c1 = -np.exp(1j * PI * nh)
    w = 2j * PI * nh
    f = np.ones_like(w)
    for d in range(order + 1):
        out[1, d] = e @ f
        out[0, d] = e @ (c1 * f)
        f = f * w
    return out
