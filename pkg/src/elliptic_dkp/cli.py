"""Command-line runner for the verification suites.

Example::

    elliptic-dkp run --scenario default-n2 --suites all --out reports
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, EllipticDKPError, NotEnoughAxes
from .report import ResidualReport
from .scenario import SHIPPED, Pipeline, Scenario

log = logging.getLogger("elliptic_dkp")

SUITES = ("identities", "gt", "gamma", "metric", "hodograph", "dkp", "conserved", "curve")
FORMATS = ("json", "csv", "both")


@dataclass
class RunConfig:
    scenario: Scenario
    suites: tuple
    tolerances: dict = field(default_factory=dict)
    output: Path | None = None
    format: str = "json"
    seed: int = 0
    identity_tau: float | None = None

    def __post_init__(self):
        if not self.suites:
            raise ConfigError("no suites requested")
        unknown = [s for s in self.suites if s not in SUITES]
        if unknown:
            raise ConfigError(f"unknown suite(s): {', '.join(unknown)}")
        for name, tol in self.tolerances.items():
            if name not in SUITES:
                raise ConfigError(f"tolerance override for unknown suite {name!r}")
            if not tol > 0:
                raise ConfigError(f"tolerance for {name} must be positive")
        if self.format not in FORMATS:
            raise ConfigError(f"format must be one of {', '.join(FORMATS)}")
        # dependency order
        self.suites = tuple(s for s in SUITES if s in self.suites)


# ---------------------------------------------------------------------------
# suites


def _skipped(name, tau, why):
    return ResidualReport(name, float(np.imag(tau)), 0, 0.0, 0.0, 0.0, True, f"skipped: {why}")


def suite_identities(p: Pipeline, cfg: RunConfig):
    from .identities import identity_suite
    tau = 1j * cfg.identity_tau if cfg.identity_tau is not None else p.scenario.tau0
    return identity_suite(tau, sample_count=100, seed=cfg.seed)


def suite_gt(p: Pipeline, cfg: RunConfig):
    from .loewner import (check_f201, check_field_reality, check_gt_cross, check_loewner_compat,
                          check_loewner_compat_fd, path_independence)
    f, sc = p.field, p.scenario
    zs = sc.z_samples
    lengths = [sc.spacing * (sc.nodes - 1)] * sc.N
    reps = [
        check_gt_cross(f),
        check_loewner_compat(f, seed=cfg.seed),
        check_loewner_compat_fd(f, seed=cfg.seed),
        path_independence(p.initial, p.u0, sc.driving, lengths, sc.step, f.extension),
        check_field_reality(f),
    ]
    if len(zs) >= 2:
        reps.append(check_f201(f, zs[0], zs[1]))
    return reps


def suite_gamma(p: Pipeline, cfg: RunConfig):
    from .metric import check_q_difference, check_gamma_routes, check_reality, faber_consistency, faber_speeds
    f = p.field
    K = min(p.scenario.speed_order, f.M)
    table = faber_speeds(f.u_field(len(f) - 1), f.final_state(), K)
    p.faber = table
    fab = ResidualReport.from_residuals("faber_generating_function", f.tau[-1], [faber_consistency(table)], 1e-10)
    return [*check_gamma_routes(f), check_reality(f), check_q_difference(p.scenario.tau0, seed=cfg.seed), fab]


def suite_metric(p: Pipeline, cfg: RunConfig):
    from .metric import check_curvature, check_egorov, check_gamma_log, check_potential, check_tsarev
    f = p.field
    reps = [check_gamma_log(f), check_egorov(f), check_potential(f)]
    for name, fn in (("semi_hamiltonian_symmetry", check_tsarev), ("christoffel_curvature_relation", check_curvature)):
        try:
            out = fn(f)
        except NotEnoughAxes as exc:
            out = _skipped(name, f.tau[0], str(exc))
        reps.extend(out if isinstance(out, list) else [out])
    return reps


def suite_hodograph(p: Pipeline, cfg: RunConfig):
    from dataclasses import replace
    from .hodograph import (check_hydro_evolution, check_offdiagonal, check_symmetry, hodograph_solve,
                            symmetry_path_independence, t_grid)
    f, sp = p.field, p.speeds
    sym, star = p.manufactured
    R0 = p.scenario.hodograph.get("R0", [0.0] * f.N)
    neighbour = f.lam[len(f) // 2 + 1]
    rec = hodograph_solve(f, sym, sp, replace(star, lam=neighbour))
    recovery = ResidualReport.from_residuals("manufactured_solution_recovery", f.tau[0], np.abs(rec.lam - star.lam),
                                             1e-9, f"newton_iters={rec.newton_iters}")
    h = float(p.scenario.hodograph.get("h", 0.002))
    pts = [hodograph_solve(f, sym, sp, replace(q, lam=star.lam)) for q in t_grid(star, h)]
    p.timepoints = pts
    return [
        check_symmetry(f, p.base_symmetry),
        symmetry_path_independence(f, p.base_symmetry, R0, p.scenario.step),
        recovery,
        check_hydro_evolution(f, sym, sp, star, h),
        *check_offdiagonal(pts, f.tau[0]),
    ]


def suite_dkp(p: Pipeline, cfg: RunConfig):
    from .hodograph import check_dkp_e12
    from .scenario import _complex
    d = p.scenario.dkp
    sym, star = p.manufactured
    triple = tuple(_complex(z) for z in d.get("triple", (30.0, -40.0, 25 + 25j)))
    return check_dkp_e12(p.field, sym, p.speeds, star, _complex(d.get("z1", 100.0)), _complex(d.get("z2", 6.0)),
                         K=min(6, p.speeds.K), h=float(d.get("h", 0.02)), triple=triple)


def suite_conserved(p: Pipeline, cfg: RunConfig):
    from .hodograph import check_conserved
    return check_conserved(p.field, K=min(6, p.field.M), seed=cfg.seed)


def suite_curve(p: Pipeline, cfg: RunConfig):
    from .hodograph import check_curve_d5
    from .loewner import random_u
    f = p.field
    s, c = f.final_state(), f.u_field(len(f) - 1)
    u = random_u(p.random(cfg.seed, 8), s.tau, [0.0], 100)
    return [check_curve_d5(c, s, u)]


RUNNERS = {
    "identities": suite_identities, "gt": suite_gt, "gamma": suite_gamma, "metric": suite_metric,
    "hodograph": suite_hodograph, "dkp": suite_dkp, "conserved": suite_conserved, "curve": suite_curve,
}


# ---------------------------------------------------------------------------
# emission


def _summary(reports):
    return {
        "passed": all(r.passed for r in reports),
        "reports": len(reports),
        "failures": [r.identity_name for r in reports if not r.passed],
    }


def emit_report(reports, fmt, path):
    """Write ``reports`` to ``path.json`` and/or ``path.csv``; returns the written paths."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    written = []
    if fmt in ("json", "both"):
        out = path.with_suffix(".json")
        doc = {"summary": _summary(reports)}
        if reports:
            doc["reports"] = [r.to_dict() for r in reports]
        out.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        written.append(out)
    if fmt in ("csv", "both"):
        out = path.with_suffix(".csv")
        with open(out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["identity_name", "tau", "samples", "max_residual", "rms_residual", "tolerance", "pass", "note"])
            for r in reports:
                w.writerow([r.identity_name, repr(r.tau), r.samples, repr(r.max_residual), repr(r.rms_residual),
                            repr(r.tolerance), r.passed, r.note])
        written.append(out)
    return written


def run(cfg: RunConfig, stream=sys.stdout):
    """Run the configured suites; returns ``(exit_status, {suite: [reports]})``."""
    p = Pipeline(cfg.scenario)
    results = {}
    for suite in cfg.suites:
        t = time.perf_counter()
        try:
            reps = list(RUNNERS[suite](p, cfg))
        except EllipticDKPError as exc:
            reps = [ResidualReport.failure(suite, cfg.scenario.tau0, 0.0, f"error: {type(exc).__name__}: {exc}")]
        if suite in cfg.tolerances:
            reps = [r.with_tolerance(cfg.tolerances[suite]) for r in reps]
        results[suite] = reps
        log.info("suite %s finished in %.2f s", suite, time.perf_counter() - t)
        if stream is not None:
            for r in reps:
                print(f"{suite:>10} {r.line()}" + (f" ({r.note})" if r.note else ""), file=stream)
    ok = all(r.passed for reps in results.values() for r in reps)
    if cfg.output is not None:
        out = Path(cfg.output)
        for suite, reps in results.items():
            emit_report(reps, cfg.format, out / suite)
        summary = {"scenario": cfg.scenario.name, "seed": cfg.seed, "passed": ok,
                   "suites": {s: _summary(r) for s, r in results.items()}}
        out.mkdir(parents=True, exist_ok=True)
        (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
        if "field" in p.__dict__:
            p.field.write_json(out / "field.json")
            if cfg.format in ("csv", "both"):
                p.field.write_csv(out / "field.csv")
        if getattr(p, "faber", None) is not None:
            p.faber.write_csv(out / "faber.csv")
        if getattr(p, "timepoints", None):
            from .hodograph import write_timepoints_csv
            write_timepoints_csv(p.timepoints, out / "timepoints.csv", p.speeds.K, p.field.N)
    if stream is not None:
        print(f"{'PASS' if ok else 'FAIL'}: {sum(len(r) for r in results.values())} checks in "
              f"{len(results)} suite(s)", file=stream)
    return (0 if ok else 1), results


# ---------------------------------------------------------------------------
# argument parsing


def _tol(text):
    name, sep, value = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected SUITE=VALUE, got {text!r}")
    try:
        return name.strip(), float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad tolerance {value!r}") from None


def build_parser():
    ap = argparse.ArgumentParser(prog="elliptic-dkp", description="Verification suites for elliptic dDKP solutions.")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run verification suites")
    src = r.add_mutually_exclusive_group()
    src.add_argument("--scenario", default="default-n2", help=f"shipped scenario ({', '.join(SHIPPED)})")
    src.add_argument("--config", type=Path, help="scenario JSON file")
    r.add_argument("--suites", default="all", help="comma-separated suite names or 'all'")
    r.add_argument("--tau", type=float, help="imaginary part of the modular parameter")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--out", type=Path, help="directory for report files")
    r.add_argument("--format", choices=FORMATS, default="json")
    r.add_argument("--tol", type=_tol, action="append", default=[], metavar="SUITE=VALUE")
    r.add_argument("-v", "--verbose", action="store_true")
    sub.add_parser("scenarios", help="list shipped scenarios")
    return ap


def config_from_args(args):
    scenario = Scenario.load(args.config) if args.config else Scenario.named(args.scenario)
    if args.tau is not None:
        if args.tau <= 0:
            raise ConfigError("--tau must be positive")
        scenario = scenario.with_tau(args.tau)
    names = [s.strip() for s in args.suites.split(",") if s.strip()]
    suites = SUITES if names == ["all"] else tuple(names)
    return RunConfig(scenario, suites, dict(args.tol), args.out, args.format, args.seed,
                     identity_tau=args.tau)


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "scenarios":
        for name in SHIPPED:
            print(name)
        return 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = config_from_args(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    status, _ = run(cfg)
    return status


if __name__ == "__main__":
    sys.exit(main())
