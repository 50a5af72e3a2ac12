"""Elliptic functions built from log-derivatives of theta functions.

Notation: ``zeta_a = theta_a'/theta_a``, ``wp_a = -zeta_a'`` and
``S(u) = log(theta_1(u)/theta_4(u))``.  All derivatives are obtained from
exact Taylor coefficients of ``log theta_a`` (no finite differences).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BranchJump, PoleProximity
from .series import log_series
from .theta import PI, ModularParam, as_tau, theta_table, zero_distance

POLE_RADIUS = 1e-8
_FACT = np.array([math.factorial(k) for k in range(40)], dtype=float)


def check_pole(a, x, tau, radius=POLE_RADIUS):
    """Raise PoleProximity if ``x`` is within ``radius`` of a zero of theta_a."""
    d = zero_distance(a, x, tau)
    if np.any(d < radius):
        raise PoleProximity(f"argument within {radius:g} of a zero of theta_{a}")


def log_theta_derivs(x, tau, order, which=(1, 2, 3, 4)):
    """Derivatives ``d^k/dx^k log theta_a(x)`` for ``k = 1..order``.

    Returns a dict ``{a: array of shape x.shape + (order + 1,)}``; entry 0
    of the last axis is the principal ``log theta_a``.
    """
    table = theta_table(x, tau, order)
    out = {}
    fac = _FACT[: order + 1]
    for a in which:
        coeffs = np.moveaxis(table[a - 1], 0, -1) / fac
        out[a] = log_series(coeffs) * fac
    return out


def _one(a, x, tau, order):
    return log_theta_derivs(x, tau, order, (a,))[a]


def _scalar(v):
    return complex(v) if np.ndim(v) == 0 else v


def zeta_a(a, x, m):
    """zeta_a(x) = theta_a'(x)/theta_a(x)."""
    tau = as_tau(m)
    check_pole(a, x, tau)
    return _scalar(_one(a, x, tau, 1)[..., 1])


def wp_a(a, x, m):
    """wp_a(x) = -d/dx zeta_a(x)."""
    tau = as_tau(m)
    check_pole(a, x, tau)
    return _scalar(-_one(a, x, tau, 2)[..., 2])


def wp_a_prime(a, x, m):
    """x-derivative of wp_a."""
    tau = as_tau(m)
    check_pole(a, x, tau)
    return _scalar(-_one(a, x, tau, 3)[..., 3])


def s_derivs(x, tau, order):
    """``[S, S', ..., S^(order)]`` along the last axis (S on the principal branch)."""
    table = theta_table(x, tau, order)
    fac = _FACT[: order + 1]
    b1 = log_series(np.moveaxis(table[0], 0, -1) / fac)
    b4 = log_series(np.moveaxis(table[3], 0, -1) / fac)
    out = (b1 - b4) * fac
    out[..., 0] = np.log(table[0, 0] / table[3, 0])
    return out


def check_s_poles(x, tau, radius=POLE_RADIUS):
    check_pole(1, x, tau, radius)
    check_pole(4, x, tau, radius)


@dataclass(frozen=True)
class SValue:
    """S and its first three derivatives at one point.

    ``branch_tag`` counts the multiples of ``2*pi*i`` added to the principal
    logarithm to keep ``value`` continuous along a path.
    """

    value: complex
    d1: complex
    d2: complex
    d3: complex
    branch_tag: int = 0


class SPath:
    """Branch continuation context for S along a sequence of nearby points."""

    def __init__(self):
        self.last = None
        self.branch_tag = 0

    def continue_value(self, principal):
        if self.last is None:
            self.last = principal
            return principal, 0
        jump = (self.last.imag - principal.imag) / (2 * PI)
        k = int(round(jump))
        value = principal + 2j * PI * k
        if abs(value.imag - self.last.imag) > PI / 2:
            raise BranchJump(
                f"log argument moved by {abs(value.imag - self.last.imag):.3f} > pi/2 between samples"
            )
        self.last = value
        self.branch_tag = k
        return value, k


def s_fn(x, m, continuation=None):
    """Evaluate S with derivatives up to third order.

    Parameters
    ----------
    x : complex
    m : ModularParam
    continuation : SPath, optional
        When given, the branch of the logarithm is continued from the
        previous sample held in the context.
    """
    tau = as_tau(m)
    check_s_poles(x, tau)
    d = s_derivs(complex(x), tau, 3)
    value = complex(d[0])
    tag = 0
    if continuation is not None:
        value, tag = continuation.continue_value(value)
    return SValue(value, complex(d[1]), complex(d[2]), complex(d[3]), tag)


def _theta0_4th(tau):
    return theta_table(0.0, tau, 0)[3, 0] ** 4


def s_dtau_from(sd, z2, th4_0):
    """Closed-form tau-derivative of S given ``S'``, ``zeta_2`` and ``theta_4(0)**4``."""
    return (sd * z2 + 0.5 * PI ** 2 * th4_0) / (2j * PI)


def s_dtau(x, m):
    """tau-derivative of S via ``2*pi*i*dS/dtau = S' zeta_2 + (pi**2/2) theta_4(0)**4``."""
    tau = as_tau(m)
    check_s_poles(x, tau)
    check_pole(2, x, tau)
    sd = s_derivs(x, tau, 1)[..., 1]
    z2 = _one(2, x, tau, 1)[..., 1]
    return _scalar(s_dtau_from(sd, z2, _theta0_4th(tau)))


def s_prime_dtau(x, m):
    """tau-derivative of S' via ``2*pi*i*dS'/dtau = S'' zeta_2 - S' wp_2``."""
    tau = as_tau(m)
    check_s_poles(x, tau)
    check_pole(2, x, tau)
    sd = s_derivs(x, tau, 2)
    l2 = _one(2, x, tau, 2)
    return _scalar((sd[..., 2] * l2[..., 1] + sd[..., 1] * l2[..., 2]) / (2j * PI))


def s_prime_dtau_heat(x, tau):
    """tau-derivative of S' from the heat equation; regular at the zeros of theta_2.

    ``4*pi*i * d/dtau (log theta)' = L3 + 2 L1 L2`` where ``Lk`` is the k-th
    derivative of ``log theta``.
    """
    d = log_theta_derivs(x, tau, 3, (1, 4))
    a, b = d[1], d[4]
    return (a[..., 3] + 2 * a[..., 1] * a[..., 2] - b[..., 3] - 2 * b[..., 1] * b[..., 2]) / (4j * PI)


def zeta1_halfmod_dtau(x, m):
    """tau-derivative of ``zeta_1(x, tau/2)``.

    ``4*pi*i * d/dtau zeta_1(x, tau/2) = -zeta_1 wp_1 - wp_1'/2`` with the
    right-hand side at modulus ``tau/2``.
    """
    tau = as_tau(m) / 2
    check_pole(1, x, tau)
    l1 = _one(1, x, tau, 3)
    z, wp, wpp = l1[..., 1], -l1[..., 2], -l1[..., 3]
    return _scalar((-z * wp - 0.5 * wpp) / (4j * PI))


def half(m):
    """Half modular parameter for either a ModularParam or a raw tau."""
    if isinstance(m, ModularParam):
        return m.half()
    return as_tau(m) / 2
