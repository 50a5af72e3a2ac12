import io
import json
import subprocess
import sys

import pytest

from elliptic_dkp import cli
from elliptic_dkp.errors import ConfigError
from elliptic_dkp.report import ResidualReport
from elliptic_dkp.scenario import SHIPPED, Pipeline, Scenario


def _cfg(suites, **kw):
    return cli.RunConfig(Scenario.named("default-n2"), tuple(suites), **kw)


def test_config_validation():
    with pytest.raises(ConfigError):
        _cfg([])
    with pytest.raises(ConfigError):
        _cfg(["identities", "nonsense"])
    with pytest.raises(ConfigError):
        _cfg(["gt"], tolerances={"nonsense": 1e-3})
    with pytest.raises(ConfigError):
        _cfg(["gt"], tolerances={"gt": 0.0})
    with pytest.raises(ConfigError):
        _cfg(["gt"], format="xml")
    assert _cfg(["curve", "identities", "gt"]).suites == ("identities", "gt", "curve")


def test_main_exit_codes(capsys):
    assert cli.main(["run", "--suites", ""]) == 2
    assert "config error" in capsys.readouterr().err
    assert cli.main(["run", "--tau", "-1", "--suites", "identities"]) == 2
    assert cli.main(["run", "--scenario", "default-n9"]) == 2
    assert cli.main(["scenarios"]) == 0
    assert capsys.readouterr().out.split() == list(SHIPPED)
    with pytest.raises(SystemExit):
        cli.main(["run", "--tol", "gt"])


def test_identities_suite_needs_no_integration():
    cfg = _cfg(["identities"])
    out = io.StringIO()
    status, results = cli.run(cfg, out)
    assert status == 0 and len(results["identities"]) >= 20
    assert "PASS" in out.getvalue().splitlines()[-1]


def test_identities_run_builds_no_field(monkeypatch):
    seen = []
    orig = Pipeline.field.func
    monkeypatch.setattr(Pipeline, "field", property(lambda self: seen.append(1) or orig(self)))
    status, _ = cli.run(_cfg(["identities"]), None)
    assert status == 0 and not seen


def test_tau_override_moves_identity_suite():
    args = cli.build_parser().parse_args(["run", "--suites", "identities", "--tau", "1.5"])
    cfg = cli.config_from_args(args)
    _, results = cli.run(cfg, None)
    assert {r.tau for r in results["identities"]} == {1.5}


def test_tolerance_override_can_fail_a_suite():
    status, results = cli.run(_cfg(["curve"], tolerances={"curve": 1e-30}), None)
    assert status == 1 and not results["curve"][0].passed
    assert results["curve"][0].tolerance == 1e-30


def test_domain_errors_become_failure_reports(monkeypatch):
    from elliptic_dkp.errors import NoConvergence

    def boom(p, cfg):
        raise NoConvergence("no luck")

    monkeypatch.setitem(cli.RUNNERS, "curve", boom)
    status, results = cli.run(_cfg(["curve"]), None)
    assert status == 1 and results["curve"][0].note.startswith("error: NoConvergence")


def test_emit_report_empty_and_both(tmp_path):
    paths = cli.emit_report([], "both", tmp_path / "sub" / "empty")
    doc = json.loads(paths[0].read_text())
    assert doc == {"summary": {"passed": True, "reports": 0, "failures": []}}
    assert paths[1].read_text().startswith("identity_name,tau,")
    rep = ResidualReport.from_residuals("x", 1j, [1.0], 0.5)
    doc = json.loads(cli.emit_report([rep], "json", tmp_path / "one")[0].read_text())
    assert doc["summary"]["failures"] == ["x"] and doc["reports"][0]["pass"] is False


def test_output_files_and_determinism(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        status, _ = cli.run(_cfg(["gamma", "curve"], output=out, format="both"), None)
        assert status == 0
    names = sorted(p.name for p in a.iterdir())
    assert {"summary.json", "gamma.json", "gamma.csv", "curve.json", "field.json", "field.csv",
            "faber.csv"} <= set(names)
    for n in names:
        assert (a / n).read_bytes() == (b / n).read_bytes(), n


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "elliptic_dkp", "scenarios"], capture_output=True, text=True)
    assert out.returncode == 0 and "default-n2" in out.stdout


# -- scenarios


def test_shipped_scenarios_load():
    for name in SHIPPED:
        sc = Scenario.named(name)
        assert sc.name == name and sc.nodes == 5
        assert Scenario.from_dict(sc.to_dict(), name) == sc


def test_scenario_file_and_errors(tmp_path):
    good = Scenario.named("default-n2").to_dict()
    path = tmp_path / "s.json"
    path.write_text(json.dumps(good))
    assert Scenario.load(path).xi0 == (0.2, 0.6)
    path.write_text("{not json")
    with pytest.raises(ConfigError):
        Scenario.load(path)
    for patch in ({"xi0": [0.2]}, {"u0_coeffs": [-1.0]}, {"z_samples": []}, {"grid": {"spacing": 0.0}},
                  {"step": -1}, {"v0": ["x", 1]}, {"tau0": [1, 2, 3]}):
        with pytest.raises(ConfigError):
            Scenario.from_dict({**good, **patch})
    bad = dict(good)
    del bad["N"]
    with pytest.raises(ConfigError):
        Scenario.from_dict(bad)
    with pytest.raises(ConfigError):
        Scenario.named("nope")


def test_grid_extent_and_tau_override():
    obj = Scenario.named("default-n2").to_dict()
    obj["grid"] = {"spacing": 0.01, "extent": 0.05}
    sc = Scenario.from_dict(obj)
    assert sc.nodes == 6
    assert sc.with_tau(1.3).tau0 == 1.3j


def test_random_streams_are_independent():
    p = Pipeline(Scenario.named("default-n2"))
    assert p.random(0, 1).uniform() == p.random(0, 1).uniform()
    assert p.random(0, 1).uniform() != p.random(0, 2).uniform()
