import warnings

import numpy as np
import pytest

from elliptic_dkp import _kernel_py, theta
from elliptic_dkp.errors import InvalidModularParam, UnsupportedOrder
from elliptic_dkp.theta import PI, ModularParam

from conftest import TAUS, random_cell
from oracles import THETA


@pytest.mark.parametrize("key", sorted(THETA, key=repr))
def test_matches_reference(key, backend):
    t, u, a, d = key
    got = theta.theta_du(a, d, u, 1j * t)
    ref = THETA[key]
    assert abs(got - ref) < 1e-13 * max(1.0, abs(ref))


def test_backends_agree(rng):
    if len(theta.available_backends()) < 2:
        pytest.skip("compiled kernel not built")
    u = random_cell(rng, 1j, 500)
    tau = np.full(u.size, 1j)
    a = theta._BACKENDS["python"](u, tau, 5, theta.SERIES_TOL)
    b = theta._BACKENDS["compiled"](u, tau, 5, theta.SERIES_TOL)
    assert np.max(np.abs(a - b) / np.maximum(1, np.abs(a))) < 1e-13


def test_backend_rejects_length_mismatch():
    for fn in theta._BACKENDS.values():
        with pytest.raises(ValueError):
            fn(np.zeros(3, complex), np.full(1, 1j), 0, 1e-15)


def test_use_backend_unknown():
    with pytest.raises(ValueError):
        theta.use_backend("fortran")


@pytest.mark.parametrize("tau", TAUS)
def test_parity(tau, rng):
    u = random_cell(rng, tau, 200)
    for a, sign in ((1, -1), (2, 1), (3, 1), (4, 1)):
        r = theta.theta(a, -u, tau) - sign * theta.theta(a, u, tau)
        assert np.max(np.abs(r)) < 1e-12


@pytest.mark.parametrize("tau", TAUS)
def test_quasi_periodicity(tau, rng):
    u = random_cell(rng, tau, 200)
    f = np.exp(-1j * PI * tau - 2j * PI * u)
    shift_one = {1: -1, 2: -1, 3: 1, 4: 1}
    shift_tau = {1: -1, 2: 1, 3: 1, 4: -1}
    for a in (1, 2, 3, 4):
        th = theta.theta(a, u, tau)
        r1 = theta.theta(a, u + 1, tau) - shift_one[a] * th
        r2 = theta.theta(a, u + tau, tau) - shift_tau[a] * f * th
        assert np.max(np.abs(r1) / np.maximum(1, np.abs(th))) < 1e-11
        assert np.max(np.abs(r2) / np.maximum(1, np.abs(f * th))) < 1e-11


@pytest.mark.parametrize("tau", TAUS)
def test_heat_equation_fd(tau, rng):
    u = random_cell(rng, tau, 50)
    h = 1e-5
    for a in (1, 2, 3, 4):
        # tau = i t, so d/dtau = -i d/dt
        fd = -1j * (theta.theta(a, u, tau + 1j * h) - theta.theta(a, u, tau - 1j * h)) / (2 * h)
        d2 = theta.theta_du(a, 2, u, tau)
        scale = np.maximum(1, np.abs(d2))
        assert np.max(np.abs(4j * PI * fd - d2) / scale) < 1e-6
        assert np.max(np.abs(4j * PI * (theta.theta_dtau(a, u, tau) - fd)) / scale) < 1e-6


@pytest.mark.parametrize("tau", TAUS)
def test_theta1_prime_at_zero(tau):
    lhs = theta.theta_du(1, 1, 0.0, tau)
    rhs = PI * theta.theta(2, 0.0, tau) * theta.theta(3, 0.0, tau) * theta.theta(4, 0.0, tau)
    assert abs(lhs - rhs) < 1e-12


@pytest.mark.parametrize("tau", TAUS)
def test_series_matches_product(tau, rng):
    u = random_cell(rng, tau, 100)
    s = theta.theta(1, u, tau)
    p = theta.theta1_infinite_product(u, tau)
    assert np.max(np.abs(s - p) / np.maximum(1, np.abs(s))) < 1e-12


def test_zero_distance_locates_zeros():
    tau = 1.2j
    for a, z in ((1, 0.0), (2, 0.5), (3, 0.5 + 0.5 * tau), (4, 0.5 * tau)):
        assert theta.zero_distance(a, z + 2 - tau, tau) < 1e-12
        assert abs(theta.theta(a, z, tau)) < 1e-13


def test_modular_param():
    m = ModularParam.from_imag(1.0)
    assert m.nome_q == pytest.approx(np.exp(-PI))
    assert m.truncation_k >= 2
    h = m.half()
    assert h.tau == 0.5j and h.nome_q == pytest.approx(np.exp(-PI / 2))
    assert theta.theta(3, 0.1, m) == pytest.approx(theta.theta(3, 0.1, 1j), abs=1e-15)


@pytest.mark.parametrize("bad", [1.0, -1j, 0.0, 0.1 + 1j, complex("nan")])
def test_invalid_tau(bad):
    with pytest.raises(InvalidModularParam):
        theta.theta(1, 0.1, bad)


def test_low_imag_warns():
    with pytest.warns(RuntimeWarning):
        theta.theta(3, 0.1, 0.04j)


def test_unsupported_order():
    with pytest.raises(UnsupportedOrder):
        theta.theta_du(1, 7, 0.1, 1j)
    with pytest.raises(ValueError):
        theta.theta(5, 0.1, 1j)


def test_term_count_grows_with_imag_u():
    small = _kernel_py.term_count(0.0, 1.0, 0, 1e-15)
    big = _kernel_py.term_count(3.0, 1.0, 0, 1e-15)
    assert big > small >= 3


def test_shape_and_scalar_returns():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        out = theta.theta_table(np.zeros((2, 3)), 1j, 2)
    assert out.shape == (4, 3, 2, 3)
    assert isinstance(theta.theta(2, 0.3, 1j), complex)
