import numpy as np
import pytest

from elliptic_dkp.identities import (CATALOGUE, q_difference_terms, draw_samples, f_terms, h_terms, identity_suite,
                                     singular_distance, tau_derivative_cauchy)
from elliptic_dkp.report import scaled
from elliptic_dkp.theta import theta, theta_table

from conftest import TAUS


def test_catalogue_size_and_names():
    names = [i.name for i in CATALOGUE]
    assert len(names) >= 20
    assert len(set(names)) == len(names)
    assert {"curvature_h_function", "conserved_f_function", "theta1_prime_at_zero", "heat_equation"} <= set(names)


@pytest.mark.parametrize("tau", TAUS)
def test_every_identity_holds(tau):
    reports = identity_suite(tau, sample_count=100, seed=7)
    bad = [r.line() for r in reports if not r.passed]
    assert not bad, bad
    assert all(r.samples >= 100 for r in reports if r.identity_name != "theta1_prime_at_zero")


def test_name_filter():
    reps = identity_suite(1j, sample_count=10, names={"heat_equation"})
    assert [r.identity_name for r in reps] == ["heat_equation"]


def test_samples_respect_exclusion(rng):
    ident = next(i for i in CATALOGUE if i.name == "curvature_h_function")
    args = draw_samples(ident, 1j, 200, rng)
    assert all(a.size == 200 for a in args)
    for g in ident.guards(*args):
        assert np.min(singular_distance(g, 1j)) >= 0.05


def test_identity_terms_do_not_vanish_individually(rng):
    # guards against a trivially zero residual: individual terms are O(1)
    x, y, z = 0.17 + 0.05j, 0.41 + 0.2j, 0.73 + 0.1j
    h = h_terms(x, y, z, 1j)
    f = f_terms(x, y, z, 1j)
    d = q_difference_terms(z, x, y, 1j)
    for terms in (h, f, d):
        assert max(abs(complex(t)) for t in terms) > 0.1
        assert scaled(terms) < 1e-11


def test_cauchy_tau_derivative():
    # the contour leaves the imaginary axis, so the unvalidated table is used
    f = lambda t: theta_table(0.2 + 0.1j, t, 0)[2, 0]
    h = 1e-5
    fd = (theta(3, 0.2 + 0.1j, 1j + 1j * h) - theta(3, 0.2 + 0.1j, 1j - 1j * h)) / (2j * h)
    assert abs(tau_derivative_cauchy(f, 1j) - fd) < 1e-8


def test_suite_reports_failures_instead_of_raising():
    reps = identity_suite(1j, sample_count=5, tolerance=1e-30)
    assert reps and not any(r.passed for r in reps if r.samples)
