"""Acceptance criteria; one PASS/FAIL line per criterion is printed in the terminal summary."""
import subprocess
import sys
import time

import numpy as np
import pytest

from elliptic_dkp import cli
from elliptic_dkp.identities import identity_suite
from elliptic_dkp.loewner import check_gt_cross, check_loewner_compat, path_independence
from elliptic_dkp.metric import check_gamma_routes
from elliptic_dkp.scenario import Pipeline, Scenario

from conftest import ACCEPTANCE


def _record(k, reports, extra=True, detail=""):
    ok = bool(extra) and all(r.passed for r in reports)
    worst = max((r.max_residual / r.tolerance for r in reports if r.samples and r.tolerance), default=0.0)
    ACCEPTANCE[k] = (ok, f"{len(reports)} checks, worst residual/tol {worst:.2e}" + (f"; {detail}" if detail else ""))
    bad = [r.line() for r in reports if not r.passed]
    assert ok, bad or detail


def _suite(name, scenario="default-n2"):
    _, results = cli.run(cli.RunConfig(Scenario.named(scenario), (name,)), None)
    return results[name]


def test_ac1_identity_catalogue():
    reports, times = [], []
    for tau in (0.8j, 1j, 1.5j):
        t = time.perf_counter()
        reps = identity_suite(tau, sample_count=100, seed=0, tolerance=1e-10)
        times.append(time.perf_counter() - t)
        assert len(reps) >= 20
        assert all(r.samples >= 100 for r in reps if r.identity_name != "theta1_prime_at_zero")
        reports += reps
    _record(1, reports, max(times) < 5.0, f"slowest tau {max(times):.2f} s")


def test_ac2_gibbons_tsarev():
    t = time.perf_counter()
    p = Pipeline(Scenario.named("default-n2"))
    reps = [check_gt_cross(p.field, tolerance=1e-5, fd_order=4), check_loewner_compat(p.field, 50, tolerance=1e-9)]
    dt = time.perf_counter() - t
    _record(2, reps, dt < 10.0, f"{dt:.2f} s")


def test_ac3_path_independence(n2):
    sc = n2.scenario
    L = sc.spacing * (sc.nodes - 1)
    rep = path_independence(n2.initial, n2.u0, sc.driving, [L] * sc.N, step=1e-3, extension=n2.field.extension,
                            tolerance=1e-7)
    _record(3, [rep])


def test_ac4_christoffel_routes(n2, n3):
    reps = []
    for p in (n2, n3):
        assert len(p.scenario.z_samples) >= 4
        spread, route = check_gamma_routes(p.field, spread_tol=1e-9, route_tol=1e-8)
        assert spread.samples > 0 and route.samples == len(p.field) * p.field.N * (p.field.N - 1)
        reps += [spread, route]
    _record(4, reps)


def test_ac5_metric_suite_n3():
    t = time.perf_counter()
    reps = _suite("metric", "default-n3")
    dt = time.perf_counter() - t
    names = {r.identity_name for r in reps}
    assert {"christoffel_from_log_metric", "semi_hamiltonian_symmetry", "christoffel_curvature_relation",
            "egorov_symmetry", "metric_potential"} <= names
    assert not any(r.note.startswith("skipped") for r in reps)
    _record(5, reps, dt < 30.0, f"{dt:.2f} s")


def test_ac6_hodograph():
    reps = {r.identity_name: r for r in _suite("hodograph")}
    assert reps["manufactured_solution_recovery"].tolerance == 1e-9
    assert reps["hydrodynamic_evolution"].tolerance == 1e-6
    assert reps["hodograph_offdiagonal_matrix"].tolerance == 1e-8
    _record(6, list(reps.values()))


def test_ac7_dkp():
    eq, ratio, perm = _suite("dkp")
    r = float(ratio.note.split("ratio=")[1].split()[0])
    _record(7, [eq, ratio, perm], 3.5 <= r <= 4.5 and eq.tolerance == 1e-5 and perm.tolerance == 1e-5,
            f"halving ratio {r:.3f}")


def test_ac8_curve():
    (rep,) = _suite("curve")
    assert rep.samples == 100
    _record(8, [rep])


def test_ac9_conserved():
    reps = {r.identity_name: r for r in _suite("conserved")}
    assert reps["density_constant_term"].tolerance == 1e-11
    _record(9, list(reps.values()))


def test_ac10_full_pipeline(tmp_path):
    outs, times, codes = [], [], []
    for k in range(2):
        out = tmp_path / f"run{k}"
        t = time.perf_counter()
        proc = subprocess.run([sys.executable, "-m", "elliptic_dkp", "run", "--scenario", "default-n2", "--suites",
                               "all", "--out", str(out)], capture_output=True, text=True,
                              env={"OMP_NUM_THREADS": "1", "OPENBLAS_NUM_THREADS": "1", "MKL_NUM_THREADS": "1",
                                   "PATH": "/usr/bin:/bin"})
        times.append(time.perf_counter() - t)
        codes.append(proc.returncode)
        outs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    same = outs[0] == outs[1]
    ok = codes == [0, 0] and max(times) < 60.0 and same and "summary.json" in outs[0]
    ACCEPTANCE[10] = (ok, f"exit {codes}, {max(times):.1f} s, {len(outs[0])} files, identical={same}")
    assert ok, proc.stdout[-2000:] + proc.stderr[-2000:]
