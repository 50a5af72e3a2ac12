"""Jacobi theta functions for purely imaginary modular parameter.

Conventions: ``q = exp(i*pi*tau)`` and

    theta_3(u) = sum_n q**(n**2) exp(2*pi*i*n*u)
    theta_4(u) = sum_n (-1)**n q**(n**2) exp(2*pi*i*n*u)
    theta_2(u) = sum_{n in Z+1/2} q**(n**2) exp(2*pi*i*n*u)
    theta_1(u) = -sum_{n in Z+1/2} exp(i*pi*n) q**(n**2) exp(2*pi*i*n*u)

so that theta_1 is odd with ``theta_1(u+1) = -theta_1(u)``.

The hot loop lives in a compiled extension (``_kernel``) with a numpy
fallback; set ``ELLIPTIC_DKP_KERNEL=python`` to force the fallback.
"""
from __future__ import annotations

import math
import os
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _kernel_py
from .errors import InvalidModularParam, UnsupportedOrder

PI = math.pi
SERIES_TOL = 1e-15
MAX_PUBLIC_ORDER = 6
IMAG_TOL = 1e-14
LOW_IMAG_WARN = 0.05

try:
    from . import _kernel as _kernel_c
except ImportError:  # pragma: no cover - depends on build
    _kernel_c = None

_BACKENDS = {"python": _kernel_py.theta_table}
if _kernel_c is not None:
    _BACKENDS["compiled"] = _kernel_c.theta_table

_requested = os.environ.get("ELLIPTIC_DKP_KERNEL", "").strip().lower()
BACKEND = "compiled" if (_kernel_c is not None and _requested != "python") else "python"


def available_backends():
    return sorted(_BACKENDS)


def use_backend(name):
    """Select the theta kernel implementation (``"compiled"`` or ``"python"``)."""
    global BACKEND
    if name not in _BACKENDS:
        raise ValueError(f"backend {name!r} not available; have {available_backends()}")
    BACKEND = name


def _truncation(q, tol):
    # smallest k with q**((k+1/2)**2) < tol
    k = math.sqrt(math.log(tol) / math.log(q)) - 0.5
    return max(1, int(math.ceil(k)))


@dataclass(frozen=True)
class ModularParam:
    """Purely imaginary modular parameter with its nome and series length.

    Parameters
    ----------
    tau : complex
        Modular parameter; must satisfy ``Im tau > 0`` and ``|Re tau| < 1e-14``.
    tol : float
        Series tail tolerance used to choose ``truncation_k``.
    """

    tau: complex
    tol: float = SERIES_TOL
    nome_q: float = field(init=False)
    truncation_k: int = field(init=False)

    def __post_init__(self):
        tau = complex(self.tau)
        _validate_tau(tau)
        object.__setattr__(self, "tau", complex(0.0, tau.imag))
        q = math.exp(-PI * tau.imag)
        object.__setattr__(self, "nome_q", q)
        object.__setattr__(self, "truncation_k", _truncation(q, self.tol))

    @classmethod
    def from_imag(cls, t, tol=SERIES_TOL):
        return cls(complex(0.0, t), tol)

    def half(self) -> "ModularParam":
        """Parameter at ``tau/2``; the nome is recomputed from ``tau/2`` directly."""
        return ModularParam(self.tau / 2, self.tol)


def _validate_tau(tau):
    tau = np.asarray(tau, dtype=complex)
    if np.any(~np.isfinite(tau)) or np.any(tau.imag <= 0):
        raise InvalidModularParam(f"Im(tau) must be positive, got {tau}")
    if np.any(np.abs(tau.real) > IMAG_TOL):
        raise InvalidModularParam(f"tau must be purely imaginary, got {tau}")
    if np.any(tau.imag < LOW_IMAG_WARN):
        warnings.warn("Im(tau) < 0.05: q-series convergence is slow", RuntimeWarning, stacklevel=3)


def as_tau(m):
    """Coerce a ModularParam, scalar or array into a validated complex array."""
    if isinstance(m, ModularParam):
        return np.asarray(m.tau, dtype=complex)
    tau = np.asarray(m, dtype=complex)
    _validate_tau(tau)
    return tau.imag * 1j


def theta_table(u, tau, order, tol=SERIES_TOL):
    """All four theta functions and u-derivatives up to ``order``.

    Parameters
    ----------
    u, tau : array_like
        Broadcast against each other; ``tau`` must already be validated.
    order : int
        Highest derivative; any nonnegative integer is accepted here.

    Returns
    -------
    ndarray
        Shape ``(4, order + 1) + broadcast_shape``; ``out[a-1, d]`` is the
        d-th u-derivative of theta_a.
    """
    u, tau = np.broadcast_arrays(np.asarray(u, dtype=complex), np.asarray(tau, dtype=complex))
    shape = u.shape
    out = _BACKENDS[BACKEND](u.ravel(), tau.ravel(), int(order), tol)
    return out.reshape((4, order + 1) + shape)


def _index(a):
    if a not in (1, 2, 3, 4):
        raise ValueError(f"theta index must be in 1..4, got {a}")
    return a - 1


def _scalarize(x):
    return complex(x) if np.ndim(x) == 0 else x


def theta(a, u, m):
    """theta_a(u, tau) by truncated q-series."""
    i = _index(a)
    return _scalarize(theta_table(u, as_tau(m), 0, _tol(m))[i, 0])


def theta_du(a, order, u, m):
    """``order``-th u-derivative of theta_a, by term-wise differentiation."""
    i = _index(a)
    if order < 0 or order > MAX_PUBLIC_ORDER:
        raise UnsupportedOrder(f"derivative order must be in 0..{MAX_PUBLIC_ORDER}, got {order}")
    return _scalarize(theta_table(u, as_tau(m), order, _tol(m))[i, order])


def theta_dtau(a, u, m):
    """tau-derivative of theta_a through the heat equation ``4*pi*i*d_tau theta = theta''``."""
    i = _index(a)
    return _scalarize(theta_table(u, as_tau(m), 2, _tol(m))[i, 2] / (4j * PI))


def theta1_infinite_product(u, m, tol=SERIES_TOL):
    """theta_1 from its Jacobi triple product, used as an independent cross-check.

    theta_1(u) = 2 q**(1/4) sin(pi*u) prod_k (1 - q**(2k)) (1 - q**(2k) e) (1 - q**(2k) / e)

    with ``e = exp(2*pi*i*u)``.
    """
    tau = as_tau(m)
    u = np.asarray(u, dtype=complex)
    u, tau = np.broadcast_arrays(u, tau)
    q2 = np.exp(2j * PI * tau)
    e = np.exp(2j * PI * u)
    prod = 1.0 - 1.0 / e
    qk = np.ones_like(q2)
    k = 0
    while True:
        k += 1
        qk = qk * q2
        emax = np.max(np.abs(qk) * np.maximum(np.abs(e), 1.0 / np.abs(e))) if e.size else 0.0
        prod = prod * (1.0 - qk) * (1.0 - qk * e) * (1.0 - qk / e)
        if emax < tol or k > 10000:
            break
    out = -1j * np.exp(1j * PI * tau / 4) * np.exp(1j * PI * u) * prod
    return _scalarize(out)


def _tol(m):
    return m.tol if isinstance(m, ModularParam) else SERIES_TOL


_ZERO_OFFSET = {1: (0.0, 0.0), 2: (0.5, 0.0), 3: (0.5, 0.5), 4: (0.0, 0.5)}


def zero_distance(a, x, tau):
    """Distance from ``x`` to the nearest zero of theta_a(., tau).

    Zeros of theta_a sit at ``offset + m + n*tau``.
    """
    ox, ot = _ZERO_OFFSET[a]
    tau = np.asarray(tau, dtype=complex)
    t = tau.imag
    d = np.asarray(x, dtype=complex) - ox - ot * tau
    re = d.real - np.round(d.real)
    im = d.imag - t * np.round(d.imag / t)
    return np.hypot(re, im)
