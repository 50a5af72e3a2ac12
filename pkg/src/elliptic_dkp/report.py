"""Residual reports shared by all verification suites."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ResidualReport:
    """Outcome of one numerical check.

    ``tau`` is the imaginary part of the modular parameter the check ran at.
    """

    identity_name: str
    tau: float
    samples: int
    max_residual: float
    rms_residual: float
    tolerance: float
    passed: bool
    note: str = ""

    @classmethod
    def from_residuals(cls, name, tau, residuals, tolerance, note=""):
        r = np.abs(np.asarray(residuals, dtype=complex)).ravel()
        if r.size == 0:
            return cls(name, _imag(tau), 0, 0.0, 0.0, float(tolerance), True, note or "no samples")
        finite = bool(np.all(np.isfinite(r)))
        mx = float(np.max(r)) if finite else float("nan")
        rms = float(np.sqrt(np.mean(r * r))) if finite else float("nan")
        return cls(name, _imag(tau), int(r.size), mx, rms, float(tolerance), finite and mx < tolerance, note)

    @classmethod
    def failure(cls, name, tau, tolerance, note):
        return cls(name, _imag(tau), 0, float("nan"), float("nan"), float(tolerance), False, note)

    def with_tolerance(self, tolerance):
        ok = bool(np.isfinite(self.max_residual)) and self.max_residual < tolerance
        if self.samples == 0 and not self.note.startswith("error"):
            ok = self.passed
        return ResidualReport(self.identity_name, self.tau, self.samples, self.max_residual,
                              self.rms_residual, float(tolerance), ok, self.note)

    def to_dict(self):
        d = {
            "identity_name": self.identity_name,
            "tau": self.tau,
            "samples": self.samples,
            "max_residual": _jsonable(self.max_residual),
            "rms_residual": _jsonable(self.rms_residual),
            "tolerance": self.tolerance,
            "pass": self.passed,
        }
        if self.note:
            d["note"] = self.note
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    def line(self):
        flag = "PASS" if self.passed else "FAIL"
        return f"[{flag}] {self.identity_name}: max={self.max_residual:.3e} tol={self.tolerance:.1e} n={self.samples}"


def _imag(tau):
    return float(np.imag(complex(tau))) if np.iscomplexobj(tau) or isinstance(tau, complex) else float(tau)


def _jsonable(x):
    return None if not np.isfinite(x) else x


def scaled(terms):
    """Residual of ``sum(terms) == 0`` relative to the largest term (floored at 1)."""
    terms = [np.asarray(t, dtype=complex) for t in terms]
    total = sum(terms)
    scale = np.maximum(1.0, np.max(np.abs(np.stack(np.broadcast_arrays(*terms))), axis=0))
    return np.abs(total) / scale
