import json

import numpy as np
import pytest

from elliptic_dkp import loewner as lw
from elliptic_dkp.errors import CollisionError, ConfigError, PoleProximity


def test_gt_cross_derivatives(n2):
    rep = lw.check_gt_cross(n2.field, fd_order=4)
    assert rep.passed, rep.line()
    assert rep.samples > 0


def test_loewner_compatibility_analytic(n2):
    rep = lw.check_loewner_compat(n2.field, samples=50)
    assert rep.passed and rep.max_residual < 1e-9, rep.line()


def test_loewner_compatibility_fd(n2):
    rep = lw.check_loewner_compat_fd(n2.field, samples=10, fd_order=4)
    assert rep.passed, rep.line()


def test_reality_preserved(n2):
    rep = lw.check_field_reality(n2.field)
    assert rep.passed and rep.max_residual < 1e-10


def test_s_difference_derivative(n2):
    rep = lw.check_f201(n2.field, 4.0, 10.0)
    assert rep.passed, rep.line()
    with pytest.raises(PoleProximity):
        lw.check_f201(n2.field, 6.0, 6.0)


def test_samples_follow_series(n2):
    # |u(z) - sum c_k z^-k| is bounded by the truncated tail
    f = n2.field
    worst = max(f.u_field(i).consistency(z_min=10.0) for i in range(len(f)))
    assert worst < 1e-7
    assert np.isfinite(f.diagnostics["series_tail"])


def test_extension_matches_stored_samples(n2):
    f = n2.field
    i = len(f) - 1
    stored = f.u[i, 0]
    via_ext = f.extension.u_at(f.lam[i], complex(f.z[0]))[0]
    assert abs(stored - via_ext) < 1e-8


def test_series_rate_matches_pointwise_rhs():
    s = lw.GTState.make(1j, [0.2, 0.6], [0.12j, 0.08j])
    coeffs = np.array([0.5, 0.03, -0.01, 0.004, 0, 0, 0, 0, 0, 0])
    c = lw.ULaurent.from_coeffs(coeffs)
    z = 12.0
    u = complex(lw.series_value(coeffs, z)[0])
    for j in range(2):
        dc = lw.loewner_rhs_series(c, s, j)
        series = complex(lw.series_value(dc, z)[0])
        point = lw.loewner_rhs_pointwise(u, s, j)
        assert abs(series - point) < 1e-9 * max(1, abs(point))


def test_direction_derivative_off_diagonal_closed_form():
    s = lw.GTState.make(1j, [0.2, 0.6], [0.12j, 0.08j])
    dtau, dxi, dv = lw.gt_direction_derivative(s, 1, lw.DrivingSpec.zero(2))
    assert dtau == s.v[1]
    dx0, _, tjk = lw.gt_cross_data(s, 1, 0)
    assert dxi[0] == pytest.approx(dx0.real)
    assert dv[0] == pytest.approx(tjk)
    assert dxi[1] == 0 and dv[1] == 0


def test_collision_detection():
    with pytest.raises(CollisionError) as exc:
        lw.GTState.make(1j, [0.2, 0.2 + 1e-5], [0.1j, 0.1j]).check_collisions()
    assert exc.value.pair == (0, 1)
    with pytest.raises(CollisionError):
        lw.check_collisions([1.0], 1j)
    # xi differing by a full period also collide
    with pytest.raises(CollisionError):
        lw.check_collisions([0.2, 1.2], 1j)


def test_driving_functions():
    f = lw.DrivingFunction("sinusoidal", a=0.3, b=0.1, omega=2.0, phase=0.4)
    x = np.linspace(0, 0.5, 2001)
    trap = np.trapezoid(f(x), x) if hasattr(np, "trapezoid") else np.trapz(f(x), x)
    assert f.integral(0.0, 0.5) == pytest.approx(trap, abs=1e-7)
    lin = lw.DrivingFunction.from_config({"kind": "linear", "a": 1.0, "b": 2.0})
    assert lin.integral(0, 1) == pytest.approx(2.0)
    assert lw.DrivingFunction.from_config(0.5)(3.0) == 0.5
    with pytest.raises(ConfigError):
        lw.DrivingFunction("cubic")
    with pytest.raises(ConfigError):
        lw.DrivingFunction.from_config({"slope": 1})
    with pytest.raises(ConfigError):
        lw.DrivingSpec.from_config({"d": [0.0]}, 2)
    spec = lw.DrivingSpec.from_config({"d": [0.1, 0.0], "w": [0.0, 0.2]}, 2)
    assert lw.DrivingSpec.from_config(spec.to_config(), 2) == spec


def test_central_diff_orders():
    x = np.linspace(0, 1, 11)
    h = x[1] - x[0]
    d2 = lw.central_diff(x ** 2, 0, h, 2)
    d4 = lw.central_diff(x ** 4, 0, h, 4)
    assert np.isnan(d2[0]) and np.isnan(d4[1]) and not np.isnan(d4[2])
    assert np.allclose(d2[1:-1], 2 * x[1:-1], atol=1e-13)
    assert np.allclose(d4[2:-2], 4 * x[2:-2] ** 3, atol=1e-12)
    m = lw.interior_mask((5, 5))
    assert m.sum() == 9 and not m[0, 2]


def test_staircase_reaches_corner_and_is_path_independent(n2):
    sc = n2.scenario
    L = sc.spacing * (sc.nodes - 1)
    rep = lw.path_independence(n2.initial, n2.u0, sc.driving, [L, L], sc.step, n2.field.extension)
    assert rep.passed and rep.max_residual < 1e-7, rep.line()
    # the lattice corner agrees with the staircase endpoint
    f = n2.field
    run = lw.integrate_staircase(n2.initial, n2.u0, [(0, L), (1, L)], sc.driving, sc.step, f.extension)
    assert abs(run.tau[-1] - f.tau[-1]) < 1e-12
    assert np.allclose(run.xi[-1], f.xi[-1], atol=1e-12)


def test_driven_field_stays_compatible():
    spec = lw.DrivingSpec.from_config({"d": [0.5, {"kind": "linear", "a": -0.2, "b": 1.0}], "w": [0.1, 0.0]}, 2)
    s0 = lw.GTState.make(1j, [0.2, 0.6], [0.12j, 0.08j])
    u0 = lw.ULaurent.from_coeffs([0.5, 0, 0, 0, 0, 0, 0, 0], [6.0, 10.0])
    f = lw.build_field(s0, u0, spec, 5, 0.02, 1e-3)
    assert lw.check_gt_cross(f, fd_order=4).passed
    assert lw.check_loewner_compat(f, samples=10).passed
    assert lw.check_field_reality(f).passed
    # own-direction rate follows the driving data on the first axis
    xi0 = f.lattice(f.xi)[:, 0, 0]
    assert np.allclose(np.diff(xi0) / 0.02, 0.5, atol=1e-12)


def test_field_serialization(n2, tmp_path):
    f = n2.field
    f.write_json(tmp_path / "f.json")
    f.write_csv(tmp_path / "f.csv")
    doc = json.loads((tmp_path / "f.json").read_text())
    assert doc["N"] == 2 and len(doc["nodes"]) == len(f)
    rows = (tmp_path / "f.csv").read_text().splitlines()
    assert len(rows) == len(f) + 1 and rows[0].startswith("lambda1,lambda2,im_tau")
