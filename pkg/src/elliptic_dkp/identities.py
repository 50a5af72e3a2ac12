"""Catalogue of theta/elliptic identities checked on random samples.

Each identity is evaluated from independent sub-expressions of the kernel
(theta values, log-derivative Taylor coefficients, heat-equation tau
derivatives, finite differences in tau) so that agreement is informative.
Residuals are scaled by the largest participating term, floored at 1.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .elliptic import log_theta_derivs, s_derivs
from .report import ResidualReport, scaled
from .theta import PI, ModularParam, as_tau, theta_table

SAMPLE_EXCLUSION = 0.05
DEFAULT_TOL = 1e-10


class Evaluator:
    """Cached-free access to theta-derived quantities at ``tau`` and ``tau/2``."""

    def __init__(self, tau):
        self.tau = np.asarray(tau, dtype=complex)
        self.half = self.tau / 2

    def _mod(self, half):
        return self.half if half else self.tau

    def th(self, a, x, half=False, d=0):
        return theta_table(x, self._mod(half), d)[a - 1, d]

    def logd(self, a, x, half=False, order=3):
        return log_theta_derivs(x, self._mod(half), order, (a,))[a]

    def zeta(self, a, x, half=False):
        return self.logd(a, x, half, 1)[..., 1]

    def wp(self, a, x, half=False):
        return -self.logd(a, x, half, 2)[..., 2]

    def wpp(self, a, x, half=False):
        return -self.logd(a, x, half, 3)[..., 3]

    def S(self, k, x):
        return s_derivs(x, self.tau, k)[..., k]

    def s_dot_heat(self, x):
        """dS/dtau from theta''/theta via the heat equation (independent of the zeta_2 form)."""
        l1 = self.logd(1, x, order=2)
        l4 = self.logd(4, x, order=2)
        return (l1[..., 2] + l1[..., 1] ** 2 - l4[..., 2] - l4[..., 1] ** 2) / (4j * PI)

    def s_prime_dot_heat(self, x):
        out = 0
        for a, sign in ((1, 1.0), (4, -1.0)):
            L = self.logd(a, x, order=3)
            out = out + sign * (L[..., 3] + 2 * L[..., 1] * L[..., 2])
        return out / (4j * PI)


def h_terms(xi, xj, xk, tau):
    """Terms of the curvature h-function; their sum vanishes identically."""
    ev = Evaluator(tau)
    S1 = lambda z: ev.S(1, z)
    S2 = lambda z: ev.S(2, z)
    S3 = lambda z: ev.S(3, z)
    z1 = lambda z: ev.zeta(1, z, True)
    p1 = lambda z: ev.wp(1, z, True)
    z2 = lambda z: ev.zeta(2, z, True)
    p2 = lambda z: ev.wp(2, z, True)
    p2p = lambda z: ev.wpp(2, z, True)
    d = xi - xj
    s2d = S2(d)
    return [
        S3(d) * (z1(xk - xi) - z1(xk - xj) + z2(d)),
        -2 * s2d * p2(d),
        -S1(d) * p2p(d),
        2 * s2d * p1(xj - xk),
        s2d * S2(xj) / S1(xj) * (-z1(xk) + z1(xk - xj) + z2(xj)),
        -s2d * S2(xi) / S1(xi) * (-z1(xk) + z1(xk - xi) + z2(xi)),
        s2d * (p2(xi) - p2(xj)),
        -S1(xk) / S1(xi) * S2(xk - xi) * s2d,
        S1(xk) / S1(xj) * S2(xk - xj) * s2d,
        S2(xk - xi) * S2(xk - xj),
    ]


def f_terms(xi, xj, u, tau):
    """Terms of the conserved-density f-function; their sum vanishes identically."""
    ev = Evaluator(tau)
    S1 = lambda z: ev.S(1, z)
    S2 = lambda z: ev.S(2, z)
    z1 = lambda z: ev.zeta(1, z, True)
    p1 = lambda z: ev.wp(1, z, True)
    z2 = lambda z: ev.zeta(2, z, True)
    p2 = lambda z: ev.wp(2, z, True)
    a, b = S1(xj), S1(u + xj)
    return [
        2 * a * b * p1(xi - xj),
        a * S2(u + xj) * (-z1(u + xi) + z1(xi - xj) + z2(u + xj)),
        -a * b * p2(u + xj),
        S2(xj) * b * (-z1(xi) + z1(xi - xj) + z2(xj)),
        -a * b * p2(xj),
        S2(xi - xj) * (S1(xi) * b + a * S1(u + xi)),
    ]


def q_difference_terms(u, xi, xj, tau):
    """Direct ``Q(u, xj) - Q(u, xi)`` minus its factorized theta form."""
    ev = Evaluator(tau)
    S1 = lambda z: ev.S(1, z)
    direct = S1(u + xj) / S1(xj) - S1(u + xi) / S1(xi)
    th = lambda a, x: ev.th(a, x)
    thh = lambda a, x: ev.th(a, x, True)
    s = u + xi + xj
    fact = (th(2, s) * th(3, s) * th(1, u) * th(4, u)
            / (th(1, u + xi) * th(4, u + xi) * th(1, u + xj) * th(4, u + xj))
            * thh(1, xj - xi) * thh(2, 0.0) / (thh(2, xi) * thh(2, xj)))
    return [direct, -fact]


def tau_derivative_cauchy(f, tau, radius=None, nodes=32):
    """d f/d tau by the trapezoid rule on a circle around ``tau`` (spectrally accurate)."""
    tau = complex(tau)
    r = 0.1 * tau.imag if radius is None else radius
    w = np.exp(2j * PI * np.arange(nodes) / nodes)
    return sum(f(tau + r * wk) / wk for wk in w) / (nodes * r)


def _heat(ev, x):
    out = []
    for a in (1, 2, 3, 4):
        dtau = tau_derivative_cauchy(lambda t: theta_table(x, t, 0)[a - 1, 0], ev.tau)
        out.append(scaled([4j * PI * dtau, -ev.th(a, x, d=2)]))
    return np.max(out, axis=0)


def _theta1prime(ev):
    return scaled([ev.th(1, 0.0, d=1), -PI * ev.th(2, 0.0) * ev.th(3, 0.0) * ev.th(4, 0.0)])


def _s_prime_theta_quotient(ev, x):
    t = lambda a, z: ev.th(a, z)
    return scaled([ev.S(1, x), -PI * t(4, 0.0) ** 2 * t(2, x) * t(3, x) / (t(1, x) * t(4, x))])


def _s_prime_half_quotient(ev, x):
    t = lambda a, z: ev.th(a, z, True)
    return scaled([ev.S(1, x), -PI * t(3, 0.0) * t(4, 0.0) * t(2, x) / t(1, x)])


def _s_second_theta_quotient(ev, x):
    t = lambda a, z: ev.th(a, z)
    rhs = -PI ** 2 * t(2, 0.0) ** 2 * t(3, 0.0) ** 2 * t(4, 0.0) ** 3 * t(4, 2 * x) / (t(1, x) ** 2 * t(4, x) ** 2)
    return scaled([ev.S(2, x), -rhs])


def _s_second_half_quotient(ev, x):
    t = lambda a, z: ev.th(a, z, True)
    rhs = -PI ** 2 * t(3, 0.0) * t(4, 0.0) * t(2, 0.0) ** 2 * t(3, x) * t(4, x) / t(1, x) ** 2
    return scaled([ev.S(2, x), -rhs])


def _s_dtau_closed(ev, x):
    return scaled([2j * PI * ev.s_dot_heat(x), -ev.S(1, x) * ev.zeta(2, x),
                   -0.5 * PI ** 2 * ev.th(4, 0.0) ** 4 + 0 * x])


def _s_prime_dtau_closed(ev, x):
    return scaled([2j * PI * ev.s_prime_dot_heat(x), -ev.S(2, x) * ev.zeta(2, x), ev.S(1, x) * ev.wp(2, x)])


def _s_prime_s_second(ev, x):
    return scaled([ev.S(1, x) * ev.S(2, x), -0.5 * ev.wpp(1, x, True)])


def _s_prime_half_period(ev, x):
    return scaled([ev.S(1, x) * ev.S(1, x + 0.5), PI ** 2 * ev.th(4, 0.0) ** 4 + 0 * x])


def _s_prime_from_zeta1(ev, x):
    return scaled([ev.S(1, x), -2 * ev.zeta(1, x), ev.zeta(1, x, True)])


def _zeta2_doubling(ev, x):
    return scaled([2 * ev.zeta(2, x), -ev.zeta(2, x, True), -ev.S(1, x + 0.5)])


def _wp2_doubling(ev, x):
    return scaled([2 * ev.wp(2, x), -ev.wp(2, x, True), ev.S(2, x + 0.5)])


def _wp2_difference(ev, x, y):
    t = lambda a, z, d=0: ev.th(a, z, d=d)
    rhs = t(1, 0.0, 1) ** 2 * t(1, x - y) * t(1, x + y) / (t(2, x) ** 2 * t(2, y) ** 2)
    return scaled([ev.wp(2, x), -ev.wp(2, y), -rhs])


def _wp_difference_square(ev, x):
    return scaled([ev.wp(1, x, True), -ev.wp(2, 0.0 * x, True), -ev.S(1, x) ** 2])


def _four_theta_shuffle(ev, x, y, u, v):
    t = lambda a, z: ev.th(a, z, True)

    def side(x, y, u, v):
        return t(2, x) * t(2, y) * t(1, u) * t(1, v) - t(1, x) * t(1, y) * t(2, u) * t(2, v)

    x1, y1 = (x + y + u + v) / 2, (x + y - u - v) / 2
    u1, v1 = (x - y + u - v) / 2, (x - y - u + v) / 2
    return scaled([side(x, y, u, v), -side(x1, y1, u1, v1)])


def _theta1_duplication(ev, x):
    t = lambda a, z: ev.th(a, z)
    return scaled([t(1, 2 * x) * t(2, 0.0) * t(3, 0.0) * t(4, 0.0),
                   -2 * t(1, x) * t(2, x) * t(3, x) * t(4, x)])


def _zeta_factorization(ev, x1, x2):
    t = lambda a, z: ev.th(a, z)
    d = x1 - x2
    rhs = (PI * t(2, 0.0) * t(3, 0.0) * t(4, 0.0) ** 2 * t(1, d) * t(4, d) * t(2, x1 + x2)
           / (t(1, x1) * t(4, x1) * t(1, x2) * t(4, x2) * t(2, d)))
    return scaled([-ev.zeta(1, x1, True), ev.zeta(1, x2, True), 2 * ev.zeta(2, d), -rhs])


def _christoffel_aux(ev, xi, xj):
    S1 = lambda z: ev.S(1, z)
    S2 = lambda z: ev.S(2, z)
    s2 = S2(xi)
    return scaled([
        s2 * ev.zeta(1, xj - xi, True), -s2 * ev.zeta(1, xj, True), S1(xi) * ev.wp(1, xi - xj, True),
        2 * s2 * ev.zeta(2, xi), -2 * S1(xi) * ev.wp(2, xi), S1(xj) * S2(xj - xi),
    ])


def _wp2_half_period(ev, x):
    return scaled([-ev.S(1, x) * (ev.wp(2, x, True) - ev.wp(2, 0.0 * x, True)),
                   ev.S(2, 0.5 + 0 * x) * ev.S(1, x + 0.5)])


def _h(ev, xi, xj, xk):
    return scaled(h_terms(xi, xj, xk, ev.tau))


def _f(ev, xi, xj, u):
    return scaled(f_terms(xi, xj, u, ev.tau))


@dataclass(frozen=True)
class Identity:
    name: str
    arity: int
    residual: Callable
    guards: Callable = lambda *args: args


CATALOGUE = (
    Identity("theta1_prime_at_zero", 0, _theta1prime),
    Identity("heat_equation", 1, _heat, lambda x: ()),
    Identity("s_prime_theta_quotient", 1, _s_prime_theta_quotient),
    Identity("s_prime_half_modulus_quotient", 1, _s_prime_half_quotient),
    Identity("s_second_theta_quotient", 1, _s_second_theta_quotient),
    Identity("s_second_half_modulus_quotient", 1, _s_second_half_quotient),
    Identity("s_tau_derivative_closed_form", 1, _s_dtau_closed),
    Identity("s_prime_tau_derivative_closed_form", 1, _s_prime_dtau_closed),
    Identity("s_prime_s_second_product", 1, _s_prime_s_second),
    Identity("s_prime_half_period_product", 1, _s_prime_half_period, lambda x: (x, x + 0.5)),
    Identity("s_prime_from_zeta1", 1, _s_prime_from_zeta1),
    Identity("zeta2_modulus_doubling", 1, _zeta2_doubling, lambda x: (x, x + 0.5)),
    Identity("wp2_modulus_doubling", 1, _wp2_doubling, lambda x: (x, x + 0.5)),
    Identity("wp2_difference_product", 2, _wp2_difference, lambda x, y: (x, y)),
    Identity("wp1_minus_wp2_is_s_prime_squared", 1, _wp_difference_square),
    Identity("four_theta_product_shuffle", 4, _four_theta_shuffle, lambda *a: ()),
    Identity("theta1_duplication", 1, _theta1_duplication, lambda x: ()),
    Identity("zeta_difference_factorization", 2, _zeta_factorization, lambda x, y: (x, y, x - y)),
    Identity("christoffel_log_auxiliary", 2, _christoffel_aux, lambda x, y: (x, y, x - y)),
    Identity("wp2_half_period_relation", 1, _wp2_half_period, lambda x: (x, x + 0.5)),
    Identity("curvature_h_function", 3, _h, lambda x, y, z: (x, y, z, x - y, z - x, z - y)),
    Identity("conserved_f_function", 3, _f, lambda x, y, u: (x, y, u + x, u + y, x - y)),
)


def singular_distance(x, tau):
    """Distance to the grid ``m/2 + n*tau/4`` holding every theta zero at tau and tau/2."""
    x = np.asarray(x, dtype=complex)
    t = np.imag(tau) / 4
    re = x.real * 2
    re = (re - np.round(re)) / 2
    im = x.imag - t * np.round(x.imag / t)
    return np.hypot(re, im)


def draw_samples(identity, tau, count, rng, exclusion=SAMPLE_EXCLUSION):
    """Uniform samples in the fundamental rectangle, rejecting near-singular points."""
    t = float(np.imag(tau))
    accepted = [np.empty(0, dtype=complex) for _ in range(identity.arity)]
    n_have = 0
    while n_have < count:
        batch = 4 * count
        args = [rng.uniform(0, 1, batch) + 1j * t * rng.uniform(0, 1, batch) for _ in range(identity.arity)]
        ok = np.ones(batch, dtype=bool)
        for g in identity.guards(*args):
            ok &= singular_distance(g, tau) >= exclusion
        for i in range(identity.arity):
            accepted[i] = np.concatenate([accepted[i], args[i][ok]])
        n_have = accepted[0].size if identity.arity else count
    return [a[:count] for a in accepted]


def identity_suite(m, sample_count=100, seed=0, tolerance=DEFAULT_TOL, names=None):
    """Evaluate every catalogued identity at ``m`` on ``sample_count`` random samples.

    Returns
    -------
    list of ResidualReport
        One report per identity; failures are reported, never raised.
    """
    tau = complex(as_tau(m)) if not isinstance(m, ModularParam) else m.tau
    ev = Evaluator(tau)
    rng = np.random.default_rng(seed)
    reports = []
    for ident in CATALOGUE:
        if names is not None and ident.name not in names:
            continue
        try:
            if ident.arity == 0:
                res = np.atleast_1d(ident.residual(ev))
            else:
                args = draw_samples(ident, tau, sample_count, rng)
                res = ident.residual(ev, *args)
            reports.append(ResidualReport.from_residuals(ident.name, tau, res, tolerance))
        except Exception as exc:  # reported, not raised
            reports.append(ResidualReport.failure(ident.name, tau, tolerance, f"error: {exc}"))
    return reports
