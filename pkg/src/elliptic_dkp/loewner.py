"""Elliptic Löwner flows coupled to the Gibbons-Tsarev system.

State variables at a point of lambda-space are ``tau``, the driving points
``xi_j`` and ``v_j = d tau / d lambda_j``.  Off-diagonal derivatives
(``d/d lambda_k`` of ``xi_j``, ``v_j`` for ``j != k``) are fixed by the
Gibbons-Tsarev equations; the own-direction derivatives are free data.

Own-direction data are supplied only on the coordinate axes through the base
point (a Goursat problem).  Prescribing ``d xi_k / d lambda_k`` as a function
of ``lambda_k`` everywhere over-determines the system, so the off-axis values
are recovered from a compatible extension: a spectral Picard solve of the
integrated Goursat problem on a Chebyshev tensor grid.  The RK4 staircase
then uses that extension only for the two own-direction derivatives.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .elliptic import log_theta_derivs, s_derivs
from .errors import CollisionError, ConfigError, NoConvergence, PoleProximity
from .report import ResidualReport
from .series import laurent_powers
from .spectral import ChebGrid
from .theta import PI, ModularParam, zero_distance

C4 = 1.0 / (4j * PI)
C2 = 1.0 / (2j * PI)
COLLISION_TOL = 1e-3
POLE_TOL = 1e-8
Z_MIN = 3.0
_FACT = np.array([math.factorial(k) for k in range(40)], dtype=float)


# ---------------------------------------------------------------------------
# state types


@dataclass(frozen=True)
class GTState:
    """Reduction state at one point of lambda-space."""

    tau: complex
    xi: np.ndarray
    v: np.ndarray
    lam: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "tau", complex(self.tau))
        object.__setattr__(self, "xi", np.asarray(self.xi, dtype=float))
        object.__setattr__(self, "v", np.asarray(self.v, dtype=complex))
        lam = np.zeros(self.xi.size) if self.lam is None else np.asarray(self.lam, dtype=float)
        object.__setattr__(self, "lam", lam)

    @classmethod
    def make(cls, tau, xi, v, lam=None):
        xi = np.asarray(xi, dtype=float)
        return cls(tau, xi, v, np.zeros(xi.size) if lam is None else lam)

    @property
    def N(self):
        return self.xi.size

    @property
    def modular(self):
        return ModularParam(self.tau)

    def check_collisions(self, tol=COLLISION_TOL):
        check_collisions(self.xi, self.tau, tol)


def check_collisions(xi, tau, tol=COLLISION_TOL):
    """Raise CollisionError when driving points approach each other or 0 modulo (1, tau/2)."""
    half = complex(tau) / 2
    N = len(xi)
    for j in range(N):
        if zero_distance(1, xi[j], half) < tol:
            raise CollisionError(f"xi_{j + 1} within {tol:g} of a lattice point", (j, None))
        for k in range(j + 1, N):
            if zero_distance(1, xi[j] - xi[k], half) < tol:
                raise CollisionError(f"xi_{j + 1} and xi_{k + 1} collide (tolerance {tol:g})", (j, k))


@dataclass(frozen=True)
class ULaurent:
    """Coefficients ``c_1..c_M`` of ``u(z)`` plus pointwise samples ``u(z_s)``."""

    coeffs: np.ndarray
    z: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=complex))
    u: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=complex))

    def __post_init__(self):
        object.__setattr__(self, "coeffs", np.asarray(self.coeffs, dtype=float))
        object.__setattr__(self, "z", np.asarray(self.z, dtype=complex).ravel())
        object.__setattr__(self, "u", np.asarray(self.u, dtype=complex).ravel())

    @classmethod
    def from_coeffs(cls, coeffs, z=()):
        """Seed samples from the series itself (exact for a finite Laurent polynomial)."""
        coeffs = np.asarray(coeffs, dtype=float)
        z = np.asarray(z, dtype=complex)
        return cls(coeffs, z, series_value(coeffs, z))

    @property
    def M(self):
        return self.coeffs.size

    @property
    def samples(self):
        return list(zip(self.z.tolist(), self.u.tolist()))

    def series_value(self, z):
        return series_value(self.coeffs, z)

    def consistency(self, z_min=Z_MIN):
        """Largest ``|u(z) - sum c_k z**-k|`` over samples with ``|z| >= z_min``."""
        sel = np.abs(self.z) >= z_min
        if not np.any(sel):
            return 0.0
        return float(np.max(np.abs(self.u[sel] - self.series_value(self.z[sel]))))


def series_value(coeffs, z):
    """``sum_k c_k z**-k`` for coefficients along the last axis of ``coeffs``."""
    coeffs = np.asarray(coeffs)
    z = np.asarray(z, dtype=complex)
    k = np.arange(1, coeffs.shape[-1] + 1)
    return coeffs @ (z.ravel()[:, None] ** (-k)).T


@dataclass(frozen=True)
class DrivingFunction:
    """Closed-form function of one variable from a small catalogue.

    ``constant``: ``a``; ``linear``: ``a + b*x``;
    ``sinusoidal``: ``a*sin(omega*x + phase) + b``.
    """

    kind: str = "constant"
    a: float = 0.0
    b: float = 0.0
    omega: float = 1.0
    phase: float = 0.0

    def __post_init__(self):
        if self.kind not in ("constant", "linear", "sinusoidal"):
            raise ConfigError(f"unknown driving kind {self.kind!r}")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "constant":
            return np.full_like(x, self.a)
        if self.kind == "linear":
            return self.a + self.b * x
        return self.a * np.sin(self.omega * x + self.phase) + self.b

    def integral(self, x0, x):
        """Integral from ``x0`` to ``x``."""
        x = np.asarray(x, dtype=float)

        def prim(t):
            if self.kind == "constant":
                return self.a * t
            if self.kind == "linear":
                return self.a * t + 0.5 * self.b * t * t
            return -self.a * np.cos(self.omega * t + self.phase) / self.omega + self.b * t

        return prim(x) - prim(np.asarray(x0, dtype=float))

    @classmethod
    def from_config(cls, obj):
        if isinstance(obj, (int, float)):
            return cls("constant", float(obj))
        try:
            return cls(**obj)
        except TypeError as exc:
            raise ConfigError(f"bad driving function {obj!r}: {exc}") from None

    def to_config(self):
        return {"kind": self.kind, "a": self.a, "b": self.b, "omega": self.omega, "phase": self.phase}


@dataclass(frozen=True)
class DrivingSpec:
    """Own-direction data on the coordinate axes through the base point.

    ``d[k](lambda_k)`` is ``d xi_k / d lambda_k`` (real) and
    ``1j * w[k](lambda_k)`` is ``d v_k / d lambda_k`` (imaginary), both along
    the ``lambda_k`` axis with the other coordinates at their base values.
    """

    d: tuple
    w: tuple

    @classmethod
    def zero(cls, N):
        return cls(tuple(DrivingFunction() for _ in range(N)), tuple(DrivingFunction() for _ in range(N)))

    @property
    def N(self):
        return len(self.d)

    def xi_rate(self, k, lam_k):
        return self.d[k](lam_k)

    def v_rate(self, k, lam_k):
        return 1j * self.w[k](lam_k)

    @classmethod
    def from_config(cls, obj, N):
        if obj is None:
            return cls.zero(N)
        d = obj.get("d", [0.0] * N)
        w = obj.get("w", [0.0] * N)
        if len(d) != N or len(w) != N:
            raise ConfigError("driving d and w need one entry per axis")
        return cls(tuple(DrivingFunction.from_config(x) for x in d), tuple(DrivingFunction.from_config(x) for x in w))

    def to_config(self):
        return {"d": [f.to_config() for f in self.d], "w": [f.to_config() for f in self.w]}


# ---------------------------------------------------------------------------
# elementary right-hand sides


def _log1(x, tau_half, order):
    return log_theta_derivs(x, tau_half, order, (1,))[1]


def gt_offdiag(tau, xi, v, k):
    """Off-diagonal GT derivatives along ``lambda_k``, vectorized over leading axes.

    Returns ``(dxi, dv)`` with the ``k``-th component set to zero.
    """
    half = np.asarray(tau) / 2
    xk = xi[..., k : k + 1]
    diffs = xk - xi
    diffs[..., k] = 0.25  # placeholder for the unused self-difference
    L = _log1(np.concatenate([diffs, xk], axis=-1), half[..., None], 2)
    zeta, wp = L[..., 1], -L[..., 2]
    vk = v[..., k : k + 1]
    dxi = C4 * (zeta[..., :-1] - zeta[..., -1:]) * vk
    dv = C2 * wp[..., :-1] * v * vk
    dxi[..., k] = 0.0
    dv[..., k] = 0.0
    return dxi, dv


def zeta1_taylor(x, tau_half, order):
    """``zeta_1^(m)(x, tau/2) / m!`` for ``m = 0..order`` along the last axis."""
    L = _log1(x, tau_half, order + 1)
    m = np.arange(order + 1)
    return L[..., 1:] / _FACT[m]


def series_rate(coeffs, xi_j, v_j, tau):
    """``d c_n / d lambda_j`` for ``n = 1..M`` (vectorized over leading axes)."""
    coeffs = np.asarray(coeffs)
    M = coeffs.shape[-1]
    T = zeta1_taylor(np.asarray(xi_j), np.asarray(tau) / 2, M)  # (..., M+1)
    P = laurent_powers(coeffs, M)  # (..., M+1, M+1) rows m, cols n
    acc = np.einsum("...m,...mn->...n", T[..., 1:], P[..., 1:, 1:])
    return -C4 * np.asarray(v_j)[..., None] * acc


def gt_direction_derivative(s: GTState, k: int, spec, collision_tol=COLLISION_TOL):
    """d/d lambda_k of ``(tau, xi, v)``.

    Parameters
    ----------
    s : GTState
    k : int
        Axis index (0-based).
    spec : DrivingSpec or CompatibleExtension
        Source of the own-direction derivatives.  A DrivingSpec is evaluated
        at ``lambda_k`` (exact on the axis through the base point); an
        extension is interpolated at ``s.lam``.

    Returns
    -------
    tuple
        ``(dtau, dxi, dv)``.
    """
    check_collisions(s.xi, s.tau, collision_tol)
    dxi, dv = gt_offdiag(np.asarray(s.tau), s.xi.astype(complex), s.v, k)
    if isinstance(spec, DrivingSpec):
        dxi[k] = spec.xi_rate(k, s.lam[k])
        dv[k] = spec.v_rate(k, s.lam[k])
    else:
        p, w = spec.diagonal(s.lam, k)
        dxi[k], dv[k] = p, w
    return complex(s.v[k]), dxi.real, dv


def loewner_rhs_pointwise(u, s: GTState, j: int):
    """du/d lambda_j from the half-modulus form of the elliptic Löwner equation."""
    half = s.tau / 2
    u = np.asarray(u, dtype=complex)
    if np.any(zero_distance(1, u + s.xi[j], half) < POLE_TOL):
        raise PoleProximity("u + xi_j is too close to a lattice point")
    L = _log1(np.append(np.ravel(u) + s.xi[j], s.xi[j]), half, 1)
    z = L[..., 1]
    out = C4 * (-z[:-1] + z[-1]) * s.v[j]
    return complex(out[0]) if u.ndim == 0 else out.reshape(u.shape)


def loewner_rhs_series(c: ULaurent, s: GTState, j: int, M=None):
    """d c_m / d lambda_j for ``m = 1..M`` by Taylor expansion of the Löwner right-hand side."""
    coeffs = c.coeffs if isinstance(c, ULaurent) else np.asarray(c, dtype=float)
    M = coeffs.size if M is None else M
    if M > coeffs.size:
        coeffs = np.concatenate([coeffs, np.zeros(M - coeffs.size)])
    if zero_distance(1, s.xi[j], s.tau / 2) < POLE_TOL:
        raise PoleProximity("xi_j is too close to a lattice point")
    return series_rate(coeffs[:M], s.xi[j], s.v[j], s.tau).real


# ---------------------------------------------------------------------------
# compatible extension (Goursat data -> full lambda box)


def _goursat(grid, fields, own, base, rhs, tol, max_iter):
    """Picard iteration of the integrated Goursat problem.

    A field with own axis ``k`` is its axis data plus integrals along the
    remaining axes in ascending order; a field with ``own = None`` is its
    base value plus integrals along every axis.  Each integral along axis
    ``j`` is restricted to ``lambda = 0`` on the axes still to be traversed.
    """
    N = grid.ndim
    for it in range(max_iter):
        derivs = [rhs(fields, j) for j in range(N)]
        new = {}
        delta = 0.0
        for name, old in fields.items():
            k = own[name]
            axes = [j for j in range(N) if j != k]
            acc = base[name]
            for pos, j in enumerate(axes):
                acc = acc + grid.restrict_zero(grid.integrate(derivs[j][name], j), axes[pos + 1 :])
            acc = np.array(acc)
            scale = 1.0 + float(np.max(np.abs(acc)))
            delta = max(delta, float(np.max(np.abs(acc - old))) / scale)
            new[name] = acc
        fields = new
        if delta < tol:
            return fields, it + 1
    raise NoConvergence(f"Goursat iteration did not converge (last update {delta:.2e})")


class CompatibleExtension:
    """Spectral solution of the GT system and Löwner flows on a lambda box.

    Parameters
    ----------
    initial : GTState
        Base point; the box is ``initial.lam + [0, L_1] x ... x [0, L_N]``.
    u0 : ULaurent
        Series and samples at the base point.
    spec : DrivingSpec
        Own-direction data on the axes through the base point.
    lengths : sequence of float
    nodes : int
        Chebyshev-Lobatto nodes per axis.
    """

    def __init__(self, initial: GTState, u0: ULaurent, spec: DrivingSpec, lengths, nodes=12,
                 tol=1e-15, max_iter=80):
        self.initial = initial
        self.spec = spec
        self.N = initial.N
        if spec.N != self.N:
            raise ConfigError("driving spec and state have different N")
        self.grid = ChebGrid([max(float(L), 1e-6) for L in lengths], nodes)
        self.tol = tol
        self.max_iter = max_iter
        self.base = np.asarray(initial.lam, dtype=float)
        self._solve_state()
        self.M = u0.M
        self._u_cache = {}
        self._solve_series(u0)
        self.diag = [np.stack([self.grid.diff(self.xi[..., k], k), self.grid.diff(self.v[..., k], k)], axis=-1)
                     for k in range(self.N)]

    # -- solves --------------------------------------------------------
    def _solve_state(self):
        g, N, s0 = self.grid, self.N, self.initial
        coords = g.coords()
        fields, own, base = {"tau": np.full(g.shape, s0.tau, dtype=complex)}, {"tau": None}, {}
        base["tau"] = fields["tau"].copy()
        for k in range(N):
            lk = self.base[k] + coords[k]
            base[f"xi{k}"] = s0.xi[k] + self.spec.d[k].integral(self.base[k], lk) + 0j
            base[f"v{k}"] = s0.v[k] + 1j * self.spec.w[k].integral(self.base[k], lk)
            fields[f"xi{k}"] = base[f"xi{k}"].copy()
            fields[f"v{k}"] = base[f"v{k}"].copy()
            own[f"xi{k}"] = own[f"v{k}"] = k

        def rhs(f, j):
            tau = f["tau"]
            xi = np.stack([f[f"xi{k}"] for k in range(N)], axis=-1)
            v = np.stack([f[f"v{k}"] for k in range(N)], axis=-1)
            dxi, dv = gt_offdiag(tau, xi, v, j)
            out = {"tau": v[..., j]}
            for k in range(N):
                if k != j:
                    out[f"xi{k}"] = dxi[..., k]
                    out[f"v{k}"] = dv[..., k]
            return out

        fields, self.state_iterations = _goursat(g, fields, own, base, rhs, self.tol, self.max_iter)
        self.tau = fields["tau"]
        self.xi = np.stack([fields[f"xi{k}"].real for k in range(N)], axis=-1)
        self.v = np.stack([fields[f"v{k}"] for k in range(N)], axis=-1)

    def _flow_solve(self, init, rate):
        g = self.grid
        fields = {"f": np.broadcast_to(init, g.shape + np.shape(init)).astype(complex)}

        def rhs(f, j):
            return {"f": rate(f["f"], j)}

        out, _ = _goursat(g, fields, {"f": None}, {"f": fields["f"].copy()}, rhs, self.tol, self.max_iter)
        return out["f"]

    def _solve_series(self, u0):
        tau, xi, v = self.tau, self.xi, self.v
        self.coeffs = self._flow_solve(u0.coeffs, lambda c, j: series_rate(c, xi[..., j], v[..., j], tau)).real
        for z, u in zip(u0.z, u0.u):
            self._u_cache[complex(z)] = self._solve_u(np.array([u]))[..., 0]

    def _solve_u(self, u_init):
        tau, xi, v = self.tau, self.xi, self.v
        half = tau / 2

        def rate(u, j):
            xj = xi[..., j : j + 1]
            L = _log1(np.concatenate([u + xj, xj], axis=-1), half[..., None], 1)
            z = L[..., 1]
            return C4 * (-z[..., :-1] + z[..., -1:]) * v[..., j : j + 1]

        return self._flow_solve(u_init, rate)

    def ensure_z(self, zs):
        """Solve the pointwise flow for additional spectral-parameter values."""
        new = [complex(z) for z in np.atleast_1d(zs) if complex(z) not in self._u_cache]
        if new:
            u0 = series_value(self.coeffs[(0,) * self.N], np.array(new))
            sol = self._solve_u(u0)
            for i, z in enumerate(new):
                self._u_cache[z] = sol[..., i]

    # -- evaluation ----------------------------------------------------
    def _local(self, lam):
        s = np.asarray(lam, dtype=float) - self.base
        if not self.grid.contains(s, slack=1e-9):
            raise ValueError(f"lambda {lam} outside the extension box")
        return s

    def diagonal(self, lam, k):
        """Own-direction derivatives ``(d xi_k/d lambda_k, d v_k/d lambda_k)`` at ``lam``."""
        out = self.grid.interp(self.diag[k], self._local(lam))
        return out[0].real, out[1]

    def state(self, lam) -> GTState:
        s = self._local(lam)
        packed = np.concatenate([self.tau[..., None], self.xi.astype(complex), self.v], axis=-1)
        out = self.grid.interp(packed, s)
        N = self.N
        return GTState(complex(out[0]), out[1 : 1 + N].real, out[1 + N :], np.asarray(lam, dtype=float))

    def coeffs_at(self, lam):
        return self.grid.interp(self.coeffs, self._local(lam)).real

    def u_at(self, lam, z):
        self.ensure_z(z)
        s = self._local(lam)
        return np.array([self.grid.interp(self._u_cache[complex(zz)], s) for zz in np.atleast_1d(z)])

    def u_grid(self, z):
        self.ensure_z([z])
        return self._u_cache[complex(z)]

    def tabulate(self, fn):
        """Evaluate ``fn(tau, xi, v, coeffs)`` on the spectral grid."""
        return fn(self.tau, self.xi, self.v, self.coeffs)

    def interp(self, F, lam):
        return self.grid.interp(F, self._local(lam))


# ---------------------------------------------------------------------------
# fixed-step staircase integration


class _Layout:
    def __init__(self, N, M, S):
        self.N, self.M, self.S = N, M, S
        self.xi = slice(1, 1 + N)
        self.v = slice(1 + N, 1 + 2 * N)
        self.c = slice(1 + 2 * N, 1 + 2 * N + M)
        self.u = slice(1 + 2 * N + M, 1 + 2 * N + M + S)
        self.size = 1 + 2 * N + M + S

    def pack(self, s: GTState, coeffs, u):
        y = np.empty(self.size, dtype=complex)
        y[0] = s.tau
        y[self.xi] = s.xi
        y[self.v] = s.v
        y[self.c] = coeffs
        y[self.u] = u
        return y


class _Stepper:
    def __init__(self, layout, closure, collision_tol=COLLISION_TOL):
        self.lay = layout
        self.closure = closure
        self.collision_tol = collision_tol

    def rhs(self, lam, y, k):
        lay = self.lay
        N, M = lay.N, lay.M
        tau = y[0]
        half = tau / 2
        xi = y[lay.xi]
        v = y[lay.v]
        u = y[lay.u]
        xk = xi[k]
        diffs = xk - xi
        diffs[k] = 0.25  # placeholder for the unused self-difference
        if np.any(zero_distance(1, xi.real, half) < self.collision_tol):
            j = int(np.argmin(zero_distance(1, xi.real, half)))
            raise CollisionError(f"xi_{j + 1} reached a lattice point", (j, None))
        dist = zero_distance(1, diffs.real, half)
        if np.any(dist < self.collision_tol):
            j = int(np.argmin(dist))
            raise CollisionError(f"xi_{min(j, k) + 1} and xi_{max(j, k) + 1} collide", (min(j, k), max(j, k)))
        if u.size and np.any(zero_distance(1, u + xk, half) < POLE_TOL):
            raise PoleProximity("u + xi_k reached a lattice point")
        order = max(2, M + 1)
        Lk = _log1(np.array([xk]), half, order)[0]
        L = _log1(np.concatenate([diffs, u + xk]), half, 2)
        zeta, wp = L[:, 1], -L[:, 2]
        d = np.zeros_like(y)
        vk = v[k]
        d[0] = vk
        d[lay.xi] = C4 * (zeta[:N] - Lk[1]) * vk
        d[lay.v] = C2 * wp[:N] * v * vk
        p, w = self.closure(lam, k)
        d[lay.xi.start + k] = p
        d[lay.v.start + k] = w
        if M:
            T = Lk[2 : M + 2] / _FACT[1 : M + 1]
            P = laurent_powers(y[lay.c], M)
            d[lay.c] = -C4 * vk * (T @ P[1:, 1:])
        if u.size:
            d[lay.u] = C4 * (-zeta[N:] + Lk[1]) * vk
        return d

    def segment(self, lam, y, k, target, step, record_spacing=None, origin=None):
        """Integrate along axis ``k`` to ``lambda_k = target``; returns recorded nodes."""
        lam = np.array(lam, dtype=float)
        length = target - lam[k]
        if length < -1e-15:
            raise ValueError("staircase segments must move in the positive direction")
        nsteps = int(math.ceil(abs(length) / step - 1e-9)) if length > 0 else 0
        h = length / nsteps if nsteps else 0.0
        recorded = []
        e = np.zeros_like(lam)
        e[k] = 1.0
        start = lam[k]
        for i in range(nsteps):
            k1 = self.rhs(lam, y, k)
            k2 = self.rhs(lam + 0.5 * h * e, y + 0.5 * h * k1, k)
            k3 = self.rhs(lam + 0.5 * h * e, y + 0.5 * h * k2, k)
            k4 = self.rhs(lam + h * e, y + h * k3, k)
            y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            lam = lam.copy()
            lam[k] = start + (i + 1) * h
            if record_spacing:
                r = (lam[k] - origin[k]) / record_spacing
                if abs(r - round(r)) < 1e-9:
                    recorded.append((lam.copy(), y.copy()))
        return lam, y, recorded


@dataclass
class HydroField:
    """States and u-data at a set of lambda-nodes.

    When ``shape`` is set the nodes form a rectangular lattice in C order
    with per-axis node lists ``axes`` and uniform ``spacing``.
    """

    lam: np.ndarray
    tau: np.ndarray
    xi: np.ndarray
    v: np.ndarray
    coeffs: np.ndarray
    z: np.ndarray
    u: np.ndarray
    shape: tuple | None = None
    axes: tuple | None = None
    spacing: float | None = None
    extension: CompatibleExtension | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def N(self):
        return self.lam.shape[1]

    @property
    def M(self):
        return self.coeffs.shape[1]

    def __len__(self):
        return self.lam.shape[0]

    def state(self, i) -> GTState:
        return GTState(complex(self.tau[i]), self.xi[i], self.v[i], self.lam[i])

    @property
    def states(self):
        return [self.state(i) for i in range(len(self))]

    def u_field(self, i) -> ULaurent:
        return ULaurent(self.coeffs[i], self.z, self.u[i])

    @property
    def u_fields(self):
        return [self.u_field(i) for i in range(len(self))]

    def final_state(self):
        return self.state(len(self) - 1)

    def lattice(self, values):
        """Reshape per-node values to ``shape + trailing``."""
        if self.shape is None:
            raise ValueError("field nodes do not form a lattice")
        values = np.asarray(values)
        return values.reshape(tuple(self.shape) + values.shape[1:])

    def u_at_nodes(self, z):
        """u(z) at every node: stored samples, else interpolated from the extension."""
        z = complex(z)
        hit = np.flatnonzero(np.abs(self.z - z) < 1e-14)
        if hit.size:
            return self.u[:, hit[0]]
        if self.extension is None:
            raise ValueError(f"z = {z} is not a sampled value and the field has no extension")
        return np.array([self.extension.u_at(l, z)[0] for l in self.lam])

    def to_dict(self):
        return {
            "N": self.N,
            "M": self.M,
            "shape": list(self.shape) if self.shape else None,
            "spacing": self.spacing,
            "z_samples": [[zz.real, zz.imag] for zz in self.z],
            "nodes": [
                {
                    "lambda": self.lam[i].tolist(),
                    "tau": [self.tau[i].real, self.tau[i].imag],
                    "xi": self.xi[i].tolist(),
                    "v": [[x.real, x.imag] for x in self.v[i]],
                    "coeffs": self.coeffs[i].tolist(),
                    "u": [[x.real, x.imag] for x in self.u[i]],
                }
                for i in range(len(self))
            ],
        }

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)

    def write_csv(self, path):
        N, M, S = self.N, self.M, self.z.size
        head = [f"lambda{k + 1}" for k in range(N)] + ["im_tau"] + [f"xi{k + 1}" for k in range(N)]
        head += [f"im_v{k + 1}" for k in range(N)] + [f"c{m + 1}" for m in range(M)]
        for s in range(S):
            head += [f"re_u{s + 1}", f"im_u{s + 1}"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(head)
            for i in range(len(self)):
                row = list(self.lam[i]) + [self.tau[i].imag] + list(self.xi[i]) + list(self.v[i].imag)
                row += list(self.coeffs[i])
                for x in self.u[i]:
                    row += [x.real, x.imag]
                w.writerow([repr(float(x)) for x in row])


def _field_from_records(records, lay, z, **kw):
    lam = np.array([r[0] for r in records], dtype=float)
    Y = np.array([r[1] for r in records])
    xi = Y[:, lay.xi]
    v = Y[:, lay.v]
    diag = {
        "max_imag_xi": float(np.max(np.abs(xi.imag))),
        "max_real_tau": float(np.max(np.abs(Y[:, 0].real))),
        "max_real_v": float(np.max(np.abs(v.real))),
        "max_imag_coeffs": float(np.max(np.abs(Y[:, lay.c].imag))) if lay.M else 0.0,
    }
    if lay.M:
        diag["series_tail"] = float(np.max(np.abs(Y[:, lay.c][:, -1].real)) / Z_MIN ** lay.M)
    return HydroField(lam, Y[:, 0].imag * 1j, xi.real, v.imag * 1j, Y[:, lay.c].real, np.asarray(z, dtype=complex),
                      Y[:, lay.u], diagnostics=diag, **kw)


def _path_box(initial, path):
    N = initial.N
    hi = np.array(initial.lam, dtype=float)
    lam = hi.copy()
    for axis, target in path:
        lam[axis] = target
        hi = np.maximum(hi, lam)
    return hi - initial.lam


def integrate_staircase(initial: GTState, u0: ULaurent, path: Sequence, spec: DrivingSpec, step=1e-3,
                        extension: CompatibleExtension | None = None, record_spacing=None, nodes=12):
    """Fixed-step RK4 along axis-aligned segments.

    Parameters
    ----------
    initial, u0 : GTState, ULaurent
    path : sequence of (axis, target) pairs
        Each segment moves ``lambda_axis`` to ``target`` (nondecreasing).
    spec : DrivingSpec
    step : float
        RK4 step (shortened uniformly per segment to land on the target).
    extension : CompatibleExtension, optional
        Own-direction closure; built on the box spanned by the path if omitted.
    record_spacing : float, optional
        Record a node whenever ``lambda - initial.lam`` crosses a multiple of
        this spacing along the current axis; by default the end of every
        segment is recorded.

    Returns
    -------
    HydroField
        Nodes in the order visited, starting with the initial state.
    """
    initial.check_collisions()
    if extension is None:
        box = _path_box(initial, path)
        extension = CompatibleExtension(initial, u0, spec, np.maximum(box, 1e-3), nodes)
    lay = _Layout(initial.N, u0.M, u0.z.size)
    stepper = _Stepper(lay, extension.diagonal)
    y = lay.pack(initial, u0.coeffs, u0.u)
    lam = np.array(initial.lam, dtype=float)
    records = [(lam.copy(), y.copy())]
    for axis, target in path:
        lam, y, rec = stepper.segment(lam, y, int(axis), float(target), step, record_spacing, initial.lam)
        if record_spacing is None:
            rec = [(lam.copy(), y.copy())]
        records.extend(rec)
    return _field_from_records(records, lay, u0.z, extension=extension)


def build_field(initial: GTState, u0: ULaurent, spec: DrivingSpec, nodes_per_axis=5, spacing=0.02, step=1e-3,
                spectral_nodes=12):
    """Tabulate a rectangular lattice by staircase sweeps from the base node.

    Every node is reached by the path axis 1, then axis 2, ..., so each
    recorded value is an RK4 trajectory endpoint.
    """
    N = initial.N
    initial.check_collisions()
    L = spacing * (nodes_per_axis - 1)
    ext = CompatibleExtension(initial, u0, spec, [L] * N, spectral_nodes)
    lay = _Layout(N, u0.M, u0.z.size)
    stepper = _Stepper(lay, ext.diagonal)
    front = [(np.array(initial.lam, dtype=float), lay.pack(initial, u0.coeffs, u0.u))]
    for k in range(N):
        nxt = []
        for lam, y in front:
            _, _, rec = stepper.segment(lam, y, k, lam[k] + L, step, spacing, initial.lam)
            nxt.append((lam, y))
            nxt.extend(rec)
        front = nxt
    # C order: last axis fastest
    front.sort(key=lambda r: tuple(np.round((r[0] - initial.lam) / spacing).astype(int)))
    axes = tuple(initial.lam[k] + spacing * np.arange(nodes_per_axis) for k in range(N))
    return _field_from_records(front, lay, u0.z, shape=(nodes_per_axis,) * N, axes=axes, spacing=spacing,
                               extension=ext)


# ---------------------------------------------------------------------------
# compatibility checks


def gt_cross_data(s: GTState, j, k):
    """GT closed forms: ``(d xi_k/d lambda_j, d xi_j/d lambda_k, d^2 tau/d lambda_j d lambda_k)``."""
    half = s.tau / 2
    L = _log1(np.array([s.xi[j] - s.xi[k], s.xi[j], s.xi[k] - s.xi[j], s.xi[k]]), half, 2)
    z, wp = L[:, 1], -L[:, 2]
    dxk_dj = C4 * (z[0] - z[1]) * s.v[j]
    dxj_dk = C4 * (z[2] - z[3]) * s.v[k]
    tjk = C2 * wp[0] * s.v[j] * s.v[k]
    return complex(dxk_dj), complex(dxj_dk), complex(tjk)


def f_jk_evaluate(s: GTState, cross, u, j, k):
    """Löwner compatibility function ``F_jk(u)`` from its four-term closed form.

    Parameters
    ----------
    cross : tuple
        ``(d xi_k/d lambda_j, d xi_j/d lambda_k, d^2 tau/d lambda_j d lambda_k)``,
        e.g. from :func:`gt_cross_data` or grid finite differences.
    """
    half = s.tau / 2
    xj, xk = s.xi[j], s.xi[k]
    u = np.asarray(u, dtype=complex)
    if np.any(zero_distance(1, u + xj, half) < POLE_TOL) or np.any(zero_distance(1, u + xk, half) < POLE_TOL):
        raise PoleProximity("u too close to -xi_j or -xi_k")
    uf = np.ravel(u)
    n = uf.size
    L = _log1(np.concatenate([uf + xk, uf + xj, [xk, xj]]), half, 3)
    z, wp, wpp = L[:, 1], -L[:, 2], -L[:, 3]
    zuk, zuj, zk, zj = z[:n], z[n : 2 * n], z[-2], z[-1]
    puk, puj, pk, pj = wp[:n], wp[n : 2 * n], wp[-2], wp[-1]
    ppuk, ppuj, ppk, ppj = wpp[:n], wpp[n : 2 * n], wpp[-2], wpp[-1]
    F1jk = C4 * (puk - pk)
    F1kj = C4 * (puj - pj)
    F2 = C4 * (-zuk + zk + zuj - zj)
    G = (0.5 * C4 ** 2 * (ppuk - ppuj - ppk + ppj)
         + C4 ** 2 * (zuk - zuj + zj) * puk
         - C4 ** 2 * (zuj - zuk + zk) * puj
         + C4 ** 2 * (-zk * pk + zj * pj))
    dxk_dj, dxj_dk, tjk = cross
    vj, vk = s.v[j], s.v[k]
    out = F1jk * dxk_dj * vk - F1kj * dxj_dk * vj + F2 * tjk + G * vj * vk
    return complex(out[0]) if u.ndim == 0 else out.reshape(u.shape)


_STENCILS = {2: (np.array([-1.0, 0.0, 1.0]) / 2), 4: (np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12)}


def central_diff(F, axis, h, order=2):
    """Central differences (order 2 or 4) along a lattice axis; entries without a full stencil are NaN."""
    if order not in _STENCILS:
        raise ValueError("order must be 2 or 4")
    w = _STENCILS[order]
    r = order // 2
    F = np.moveaxis(np.asarray(F), axis, 0)
    out = np.full(F.shape, np.nan, dtype=np.result_type(F, float))
    n = F.shape[0]
    if n > 2 * r:
        acc = sum(c * F[o : n - 2 * r + o] for o, c in enumerate(w) if c)
        out[r : n - r] = acc / h
    return np.moveaxis(out, 0, axis)


def interior_mask(shape, width=1, axes=None):
    """Nodes at least ``width`` away from the lattice boundary along ``axes`` (default all)."""
    m = np.ones(shape, dtype=bool)
    for ax, n in enumerate(shape):
        if axes is not None and ax not in axes:
            continue
        idx = [slice(None)] * len(shape)
        idx[ax] = slice(0, width)
        m[tuple(idx)] = False
        idx[ax] = slice(max(n - width, 0), n)
        m[tuple(idx)] = False
    return m


def fd_of_s(field: HydroField, values, axis):
    """Central difference along ``axis`` of ``S(values)`` on the lattice, branch-safe."""
    V = field.lattice(values)
    tau = field.lattice(field.tau)
    h = field.spacing
    out = np.full(V.shape, np.nan, dtype=complex)
    sl = [slice(None)] * V.ndim
    lo, mid, hi = list(sl), list(sl), list(sl)
    lo[axis], mid[axis], hi[axis] = slice(0, -2), slice(1, -1), slice(2, None)
    # the tau change across the stencil enters through both endpoints
    dS = (_s_at(V[tuple(hi)], tau[tuple(hi)]) - _s_at(V[tuple(lo)], tau[tuple(lo)]))
    dS = dS - 2j * PI * np.round(dS.imag / (2 * PI))
    out[tuple(mid)] = dS / (2 * h)
    return out


def _s_at(x, tau):
    return s_derivs(x, tau, 0)[..., 0]


def check_f201(field: HydroField, z1, z2, tolerance=1e-5):
    """Grid check of the lambda-derivative of ``S(u(z1) - u(z2))`` and its large-z2 limit.

    Returns
    -------
    ResidualReport
        Combined residual of both forms over lattice-interior nodes and all axes.
    """
    if field.shape is None:
        raise ValueError("check_f201 needs a lattice field")
    if abs(complex(z1) - complex(z2)) < 1e-12:
        raise PoleProximity("z1 = z2 puts S at its logarithmic singularity u1 - u2 = 0")
    u1 = field.u_at_nodes(z1)
    u2 = field.u_at_nodes(z2)
    tau = field.tau
    mask = interior_mask(field.shape).ravel()
    res = []
    for j in range(field.N):
        fd_pair = fd_of_s(field, u1 - u2, j).ravel()
        fd_one = fd_of_s(field, u1, j).ravel()
        S1 = s_derivs(np.stack([u1 + field.xi[:, j], u2 + field.xi[:, j], field.xi[:, j] + 0j]), tau, 1)[..., 1]
        closed_pair = C4 * S1[0] * S1[1] * field.v[:, j]
        closed_one = C4 * S1[2] * S1[0] * field.v[:, j]
        res.append((fd_pair - closed_pair)[mask])
        res.append((fd_one - closed_one)[mask])
    return ResidualReport.from_residuals("s_difference_lambda_derivative", field.tau[0], np.concatenate(res),
                                         tolerance)


def _pairs(N):
    return [(j, k) for j in range(N) for k in range(N) if j != k]


def check_gt_cross(field: HydroField, tolerance=1e-5, fd_order=2):
    """Grid differences of ``xi``, ``v`` and ``tau`` against the Gibbons-Tsarev closed forms.

    Covers ``d_j xi_k``, both orders ``d_j v_k`` and ``d_k v_j``, the mixed
    second difference of ``tau`` and ``d_k tau = v_k``.
    """
    h = field.spacing
    tau, xi, v = field.lattice(field.tau), field.lattice(field.xi), field.lattice(field.v)
    res = []
    for j, k in _pairs(field.N):
        cross = field.lattice(np.array([gt_cross_data(s, j, k) for s in field.states]))
        dxk = central_diff(xi[..., k], j, h, fd_order)
        dvk = central_diff(v[..., k], j, h, fd_order)
        dvj = central_diff(v[..., j], k, h, fd_order)
        dtt = central_diff(central_diff(tau, k, h, fd_order), j, h, fd_order)
        for fd, ref in ((dxk, cross[..., 0]), (dvk, cross[..., 2]), (dvj, cross[..., 2]), (dtt, cross[..., 2])):
            ok = ~np.isnan(fd)
            res.append(np.abs(fd - ref)[ok])
    for k in range(field.N):
        fd = central_diff(tau, k, h, fd_order)
        res.append(np.abs(fd - v[..., k])[~np.isnan(fd)])
    return ResidualReport.from_residuals("gibbons_tsarev_cross_derivatives", field.tau[0], np.concatenate(res),
                                         tolerance)


def random_u(rng, tau, xi, count, exclusion=0.05):
    """Random ``u`` in the fundamental cell at modulus ``tau/2`` away from every ``-xi_j``."""
    t = float(np.imag(tau)) / 2
    out = []
    while sum(a.size for a in out) < count:
        u = rng.uniform(0, 1, 4 * count) + 1j * t * rng.uniform(0, 1, 4 * count)
        ok = np.ones(u.shape, dtype=bool)
        for x in np.atleast_1d(xi):
            ok &= zero_distance(1, u + x, tau / 2) >= exclusion
        out.append(u[ok])
    return np.concatenate(out)[:count]


def check_loewner_compat(field: HydroField, samples=50, seed=0, tolerance=1e-9):
    """``F_jk(u) = 0`` with the Gibbons-Tsarev data substituted analytically, at random ``u`` per node."""
    rng = np.random.default_rng(seed)
    res = []
    for s in field.states:
        u = random_u(rng, s.tau, s.xi, samples)
        for j, k in _pairs(s.N):
            if j < k:
                res.append(np.abs(f_jk_evaluate(s, gt_cross_data(s, j, k), u, j, k)))
    return ResidualReport.from_residuals("loewner_compatibility_analytic", field.tau[0], np.concatenate(res),
                                         tolerance)


def check_loewner_compat_fd(field: HydroField, samples=50, seed=0, tolerance=1e-5, fd_order=2):
    """``F_jk(u) = 0`` with cross data taken from grid differences."""
    rng = np.random.default_rng(seed)
    h = field.spacing
    tau, xi = field.lattice(field.tau), field.lattice(field.xi)
    res = []
    for j, k in _pairs(field.N):
        if j > k:
            continue
        dxk = central_diff(xi[..., k], j, h, fd_order).ravel()
        dxj = central_diff(xi[..., j], k, h, fd_order).ravel()
        dtt = central_diff(central_diff(tau, k, h, fd_order), j, h, fd_order).ravel()
        for n in np.flatnonzero(~(np.isnan(dxk) | np.isnan(dxj) | np.isnan(dtt))):
            s = field.state(n)
            u = random_u(rng, s.tau, s.xi, samples)
            res.append(np.abs(f_jk_evaluate(s, (dxk[n], dxj[n], dtt[n]), u, j, k)))
    return ResidualReport.from_residuals("loewner_compatibility_finite_difference", field.tau[0],
                                         np.concatenate(res) if res else [], tolerance)


def path_independence(initial: GTState, u0: ULaurent, spec: DrivingSpec, lengths, step=1e-3, extension=None,
                      tolerance=1e-7):
    """Integrate to the far corner along the axis orders ``0, 1, ..`` and its reverse and compare.

    Returns
    -------
    ResidualReport
        Componentwise differences of ``tau``, ``xi`` and the u-samples.
    """
    N = initial.N
    corner = np.asarray(initial.lam, dtype=float) + np.asarray(lengths, dtype=float)
    if extension is None:
        extension = CompatibleExtension(initial, u0, spec, lengths)
    fwd = integrate_staircase(initial, u0, [(k, corner[k]) for k in range(N)], spec, step, extension)
    bwd = integrate_staircase(initial, u0, [(k, corner[k]) for k in reversed(range(N))], spec, step, extension)
    a, b = fwd.final_state(), bwd.final_state()
    res = np.concatenate([[abs(a.tau - b.tau)], np.abs(a.xi - b.xi), np.abs(fwd.u[-1] - bwd.u[-1])])
    return ResidualReport.from_residuals("staircase_path_independence", initial.tau, res, tolerance)


def check_field_reality(field: HydroField, tolerance=1e-10):
    """Stored imaginary residue of ``xi``, ``c`` and real residue of ``tau``, ``v`` along the sweep."""
    d = field.diagnostics
    keys = ("max_imag_xi", "max_real_tau", "max_real_v", "max_imag_coeffs")
    return ResidualReport.from_residuals("reality_preservation", field.tau[0], [d[k] for k in keys if k in d],
                                         tolerance)
