from dataclasses import replace

import numpy as np
import pytest

from elliptic_dkp import hodograph as hg
from elliptic_dkp.errors import NoConvergence, OrderExceeded, PoleProximity, SingularJacobian
from elliptic_dkp.loewner import random_u


@pytest.fixture(scope="module")
def manufactured(n2):
    sym, star = n2.manufactured
    return n2.field, sym, n2.speeds, star


def test_manufactured_point_solves_relation(manufactured):
    f, sym, sp, star = manufactured
    t = star.times(sp.K)
    assert t[1] == pytest.approx(0.01)
    assert np.max(np.abs(hg.hodograph_residual(star.lam, sym, sp, t))) < 1e-12


@pytest.mark.parametrize("offset", [1, -1, 5])
def test_recovery_from_neighbour(manufactured, offset):
    f, sym, sp, star = manufactured
    seed = replace(star, lam=f.lam[len(f) // 2 + offset])
    got = hg.hodograph_solve(f, sym, sp, seed)
    assert got.converged and np.max(np.abs(got.lam - star.lam)) < 1e-9
    assert got.residual < hg.NEWTON_TOL and got.offdiag < 1e-8


def test_newton_failures(manufactured):
    f, sym, sp, star = manufactured
    with pytest.raises(NoConvergence):
        hg.hodograph_solve(f, sym, sp, replace(star, lam=f.lam[0]), max_iter=0)
    const = hg.SymmetrySolution.constant_solution(f, 1.0)
    with pytest.raises(SingularJacobian):
        hg.hodograph_solve(f, const, sp, hg.TimePoint(0.0, (), star.lam))


def test_timepoint_helpers():
    p = hg.TimePoint(0.5, (0.1, 0.2))
    assert list(p.times(3)) == [0.5, 0.1, 0.2, 0.0]
    assert p.moved(0, 0.1).t0 == pytest.approx(0.6)
    assert p.moved(4, 1.0).t == (0.1, 0.2, 0.0, 1.0)
    with pytest.raises(OrderExceeded):
        hg.TimePoint(0.0, (0.0, 0.0, 1.0)).times(2)
    assert len(hg.t_grid(p, 0.01, (1, 2))) == 27


def test_symmetry_solution(n2):
    f = n2.field
    sym = n2.base_symmetry
    assert hg.check_symmetry(f, sym).passed
    rep = hg.symmetry_path_independence(f, sym, [0.0, 0.0], n2.scenario.step)
    assert rep.passed, rep.line()
    # own-direction data R_i = lambda_i on the axes
    lat = f.lattice(sym.nodes)
    assert np.allclose(lat[:, 0, 0], f.axes[0] - f.axes[0][0], atol=1e-12)


def test_speeds_are_symmetries(n2):
    # every phi_{., n} solves the same linear system as R
    f, sp = n2.field, n2.speeds
    for n in (1, 2, 3):
        sym = hg.SymmetrySolution.constant_solution(f, 0.0).plus_speed(sp, n, 1.0, f)
        scale = max(1.0, float(np.abs(sym.nodes).max()))
        assert hg.check_symmetry(f, sym).max_residual < 1e-6 * scale


def test_evolution_law(manufactured):
    f, sym, sp, star = manufactured
    rep = hg.check_hydro_evolution(f, sym, sp, star, 0.002)
    assert rep.passed and rep.max_residual < 1e-6, rep.line()


def test_offdiagonal_on_grid(manufactured, tmp_path):
    f, sym, sp, star = manufactured
    pts = [hg.hodograph_solve(f, sym, sp, replace(q, lam=star.lam)) for q in hg.t_grid(star, 0.002)]
    off, res = hg.check_offdiagonal(pts, f.tau[0])
    assert off.passed and res.passed
    hg.write_timepoints_csv(pts, tmp_path / "t.csv", sp.K, f.N)
    rows = (tmp_path / "t.csv").read_text().splitlines()
    assert len(rows) == 10 and rows[0].startswith("t0,t1,")


def test_dkp_equations(manufactured):
    f, sym, sp, star = manufactured
    eq, ratio, perm = hg.check_dkp_e12(f, sym, sp, star)
    assert eq.passed and eq.max_residual < 1e-5, eq.line()
    assert ratio.passed, ratio.note
    assert perm.passed, perm.line()


def test_nabla_order_guard(manufactured):
    f, sym, sp, star = manufactured
    with pytest.raises(OrderExceeded):
        hg.nabla(f, sym, sp, star, 100.0, lambda lam: 0.0, K=sp.K + 1)


def test_curve(n2, rng):
    f = n2.field
    s, c = f.final_state(), f.u_field(len(f) - 1)
    u = random_u(rng, s.tau, [0.0], 100)
    rep = hg.check_curve_d5(c, s, u)
    assert rep.passed and rep.samples == 100
    with pytest.raises(PoleProximity):
        hg.check_curve_d5(c, s, [0.0])


def test_curve_terms_individually_large():
    terms = hg.curve_terms(np.array([0.3 + 0.2j]), 0.5, 1j)
    assert max(abs(t[0]) for t in terms) > 1


def test_conserved(n2):
    reps = hg.check_conserved(n2.field, K=6)
    bad = [r.line() for r in reps if not r.passed]
    assert not bad, bad


def test_density_series_guard():
    with pytest.raises(OrderExceeded):
        hg.conserved_density_series(np.array([0.5, 0.1]), 1j, 3)


def test_density_series_for_pure_pole():
    # u = c1/z: F_0n vanish for odd n since S is odd around the expansion
    F = hg.conserved_density_series(np.array([0.5] + [0.0] * 7), 1j, 6)
    assert np.allclose(F[1::2], 0, atol=1e-14)
    assert abs(F[2]) > 1e-3
