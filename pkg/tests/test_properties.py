"""Property-based checks of the structural invariants."""
import json

import numpy as np
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from elliptic_dkp import metric as mt
from elliptic_dkp.elliptic import s_derivs
from elliptic_dkp.hodograph import curve_terms
from elliptic_dkp.identities import f_terms, h_terms, q_difference_terms, singular_distance
from elliptic_dkp.loewner import DrivingFunction, GTState, ULaurent, central_diff
from elliptic_dkp.report import ResidualReport, scaled
from elliptic_dkp.series import laurent_powers, log_series, mul
from elliptic_dkp.theta import PI, theta, zero_distance

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")

unit = st.floats(0.0, 1.0)
imag_tau = st.floats(0.6, 2.0)


def _cell(x, y, t):
    return complex(x, y * t)


@given(unit, unit, imag_tau, st.sampled_from([1, 2, 3, 4]))
def test_theta_parity(x, y, t, a):
    u, tau = _cell(x, y, t), 1j * t
    sign = -1 if a == 1 else 1
    assert abs(theta(a, -u, tau) - sign * theta(a, u, tau)) < 1e-12 * max(1, abs(theta(a, u, tau)))


@given(unit, unit, imag_tau)
def test_theta3_quasi_periodic(x, y, t):
    u, tau = _cell(x, y, t), 1j * t
    lhs = theta(3, u + tau, tau)
    rhs = np.exp(-1j * PI * tau - 2j * PI * u) * theta(3, u, tau)
    assert abs(lhs - rhs) < 1e-11 * max(1, abs(rhs))


@given(unit, unit, imag_tau)
def test_s_prime_ledger(x, y, t):
    u, tau = _cell(x, y, t), 1j * t
    assume(min(zero_distance(a, u, tau) for a in (1, 4)) > 0.05)
    d = s_derivs(u, tau, 2)
    half = s_derivs(u + tau / 2, tau, 2)
    neg = s_derivs(-u, tau, 2)
    scale = max(1.0, abs(d[1]), abs(d[2]))
    assert abs(half[1] + d[1]) < 1e-11 * scale
    assert abs(neg[1] + d[1]) < 1e-11 * scale
    assert abs(neg[2] - d[2]) < 1e-11 * scale


@given(st.lists(st.floats(-1, 1), min_size=6, max_size=6), st.lists(st.floats(-1, 1), min_size=6, max_size=6))
def test_log_series_is_additive(a, b):
    a = np.array([1.0 + abs(a[0])] + a[1:], dtype=complex)
    b = np.array([1.0 + abs(b[0])] + b[1:], dtype=complex)
    lhs = log_series(mul(a, b))
    rhs = log_series(a) + log_series(b)
    assert np.allclose(lhs, rhs, atol=1e-10)


@given(st.lists(st.floats(-1, 1), min_size=4, max_size=4), st.integers(1, 3))
def test_laurent_powers_multiply(c, m):
    P = laurent_powers(np.array(c), 4)
    assert np.allclose(P[m + 1], mul(P[m], P[1]), atol=1e-12)


@given(st.sampled_from([2, 4]), st.lists(st.floats(-3, 3), min_size=5, max_size=5), st.floats(0.01, 0.2))
def test_central_diff_exact_on_polynomials(order, coef, h):
    deg = order  # stencils of order p are exact up to degree p
    p = np.polynomial.Polynomial(coef[: deg + 1])
    x = np.arange(9) * h
    fd = central_diff(p(x), 0, h, order)
    ok = ~np.isnan(fd)
    assert np.allclose(fd[ok], p.deriv()(x[ok]), atol=1e-7 * max(1, np.abs(coef).max()))


@given(st.sampled_from(["constant", "linear", "sinusoidal"]), st.floats(-2, 2), st.floats(-2, 2),
       st.floats(0.1, 5), st.floats(0, 1), st.floats(-1, 1))
def test_driving_integral_is_antiderivative(kind, a, b, omega, phase, x):
    f = DrivingFunction(kind, a, b, omega, phase)
    h = 1e-5
    fd = (f.integral(0.0, x + h) - f.integral(0.0, x - h)) / (2 * h)
    assert abs(fd - f(x)) < 1e-6 * max(1, abs(a) + abs(b))


@given(st.floats(1e-12, 1.0), st.floats(0, 2), st.text(max_size=8))
def test_report_tolerance_monotone_and_json(tol, resid, note):
    r = ResidualReport.from_residuals("p", 1j, [resid], tol, note)
    looser = r.with_tolerance(tol * 10)
    assert looser.passed or not r.passed
    back = json.loads(r.to_json())
    assert back["max_residual"] == resid and back["pass"] == r.passed


@given(st.lists(st.complex_numbers(max_magnitude=1e6, allow_nan=False, allow_infinity=False), min_size=1,
                max_size=5))
def test_scaled_cancellation(terms):
    assert scaled(terms + [-t for t in terms]) < 1e-9


def _admissible(tau, *pts):
    return all(singular_distance(p, tau) > 0.05 for p in pts)


@given(unit, unit, unit, unit, unit, unit, st.floats(0.8, 1.5))
def test_h_and_f_functions_vanish(a, b, c, d, e, f, t):
    tau = 1j * t
    x, y, z = _cell(a, b, t), _cell(c, d, t), _cell(e, f, t)
    assume(_admissible(tau, x, y, z, x - y, z - x, z - y, z + x, z + y))
    assert scaled(h_terms(x, y, z, tau)) < 1e-10
    assert scaled(f_terms(x, y, z, tau)) < 1e-10
    assert scaled(q_difference_terms(z, x, y, tau)) < 1e-10


@given(unit, unit, st.floats(0.1, 2.0), st.floats(0.8, 1.5))
def test_curve_identity(a, b, c1, t):
    tau = 1j * t
    u = _cell(a, b, t)
    assume(min(zero_distance(k, u, tau) for k in (1, 4)) > 0.05)
    assert scaled(curve_terms(np.array([u]), c1, tau))[0] < 1e-10


@given(st.floats(0.05, 0.45), st.floats(0.55, 0.95), st.floats(0.05, 0.2), st.floats(0.05, 0.2),
       st.lists(st.floats(-0.05, 0.05), min_size=3, max_size=3), st.floats(0.3, 1.0))
def test_ratio_route_is_z_independent(x1, x2, v1, v2, tail, c1):
    s = GTState.make(1j, [x1, x2], [1j * v1, 1j * v2])
    assume(abs(x2 - x1) > 0.1)
    c = ULaurent.from_coeffs([c1, *tail], [6.0, 10.0, 8 + 2j, -7 + 3j])
    ref = mt.gamma_closed(s, 0, 1)
    for z in c.z:
        assert abs(mt.gamma_from_ratio(s, c, 0, 1, z) - ref) < 1e-8 * max(1, abs(ref))


@given(st.floats(0.05, 0.95), st.lists(st.floats(-0.1, 0.1), min_size=3, max_size=3), st.floats(0.3, 1.0))
def test_first_speed_closed_form(x, tail, c1):
    s = GTState.make(1j, [x], [0.1j])
    assume(zero_distance(1, x, 1j) > 0.05 and zero_distance(4, x, 1j) > 0.05)
    table = mt.faber_speeds(ULaurent.from_coeffs([c1, *tail]), s, 2)
    d = s_derivs(complex(x), 1j, 3)
    phi1 = (c1 * d[2] / d[1]).real
    phi2 = ((c1 ** 2 * d[3] + 2 * tail[0] * d[2]) / d[1]).real
    assert abs(table.speeds[0, 0] - phi1) < 1e-10 * max(1, abs(phi1))
    assert abs(table.speeds[0, 1] - phi2) < 1e-10 * max(1, abs(phi2))
