"""Faber speeds, Christoffel symbols, the diagonal metric and its potential.

With ``Q(u, xi) = S'(u + xi) / S'(xi)`` the characteristic speeds are the
coefficients of ``Q(u(z), xi_j) - 1 = sum_k phi_{j,k} z**-k / k``; they are
obtained by composing the Taylor series of ``S'`` about ``xi_j`` with the
Laurent coefficients of ``u(z)``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .elliptic import check_s_poles, s_derivs, s_prime_dtau_heat
from .errors import CollisionError, DegenerateDenominator, NotEnoughAxes, OrderExceeded
from .identities import q_difference_terms, h_terms
from .loewner import (C4, COLLISION_TOL, GTState, HydroField, ULaurent, central_diff, gt_offdiag,
                      loewner_rhs_pointwise, series_value)
from .report import ResidualReport, scaled
from .series import laurent_powers
from .theta import PI, as_tau, theta_table, zero_distance

_FACT = np.array([float(np.prod(np.arange(1, k + 1))) for k in range(40)])
DEGENERATE_TOL = 1e-12


def q_generating(u, xi, m):
    """Generating function ``S'(u + xi) / S'(xi)``."""
    tau = as_tau(m)
    u = np.asarray(u, dtype=complex)
    check_s_poles(u + xi, tau)
    check_s_poles(xi, tau)
    d = s_derivs(np.stack(np.broadcast_arrays(u + xi, np.asarray(xi, dtype=complex))), tau, 1)[..., 1]
    out = d[0] / d[1]
    return complex(out) if out.ndim == 0 else out


def faber_matrix(coeffs, K):
    """``W[m, k] = k * [z**-k] u**m / m!`` so that ``Phi_k'(w) = sum_m S^(m+1)(w) W[m, k]``."""
    P = laurent_powers(coeffs, K)[..., :, : K + 1]
    k = np.arange(K + 1)
    return P * k / _FACT[: K + 1][:, None]


def speeds_array(coeffs, xi, tau, K):
    """Speeds ``phi_{j,k}`` for ``k = 0..K`` (``phi_{j,0} = 1``), vectorized over leading axes.

    ``coeffs`` has shape ``(..., M)``, ``xi`` ``(..., N)``, ``tau`` ``(...)``.
    """
    coeffs = np.asarray(coeffs)
    if K > coeffs.shape[-1]:
        raise OrderExceeded(f"speed order {K} exceeds series order {coeffs.shape[-1]}")
    W = faber_matrix(coeffs[..., :K], K)  # (..., K+1, K+1)
    Sd = s_derivs(np.asarray(xi, dtype=complex), np.asarray(tau)[..., None], K + 1)  # (..., N, K+2)
    phi = np.einsum("...jm,...mk->...jk", Sd[..., 1:], W) / Sd[..., 1:2]
    phi[..., 0] = 1.0
    return phi


@dataclass(frozen=True)
class FaberTable:
    """Characteristic speeds ``phi_{j,k}`` for ``k <= K`` at one state.

    ``speeds`` has shape ``(N, K)`` with column ``k-1`` holding ``phi_{j,k}``.
    """

    K: int
    speeds: np.ndarray
    coeffs: np.ndarray
    tau: complex
    xi: np.ndarray

    def phi_prime(self, w):
        """``Phi_k'(w)`` for ``k = 1..K``, shape ``(K,) + w.shape``."""
        w = np.asarray(w, dtype=complex)
        W = faber_matrix(self.coeffs[: self.K], self.K)
        Sd = s_derivs(w, self.tau, self.K + 1)
        out = np.einsum("...m,mk->...k", Sd[..., 1:], W)[..., 1:]
        return np.moveaxis(out, -1, 0)

    def with_unit(self):
        """Speeds with the ``phi_{j,0} = 1`` column prepended."""
        return np.concatenate([np.ones((self.speeds.shape[0], 1)), self.speeds], axis=1)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["j", "k", "phi"])
            for j in range(self.speeds.shape[0]):
                for k in range(self.K):
                    w.writerow([j + 1, k + 1, repr(float(self.speeds[j, k]))])


def faber_speeds(c: ULaurent, s: GTState, K: int) -> FaberTable:
    """Speeds ``phi_{j,k} = Phi_k'(xi_j) / S'(xi_j)`` by series composition."""
    coeffs = c.coeffs if isinstance(c, ULaurent) else np.asarray(c, dtype=float)
    if K > coeffs.size:
        raise OrderExceeded(f"K = {K} exceeds the series order M = {coeffs.size}")
    check_s_poles(s.xi, s.tau)
    phi = speeds_array(coeffs, s.xi, s.tau, K)
    return FaberTable(K, phi[:, 1:].real, coeffs.copy(), s.tau, s.xi.copy())


def laurent_coefficients_on_circle(fn, radius, K, nodes=128):
    """``[z**-k] fn(z)`` for ``k = 0..K`` by the trapezoid rule on ``|z| = radius``."""
    z = radius * np.exp(2j * PI * np.arange(nodes) / nodes)
    vals = fn(z)
    k = np.arange(K + 1)
    return (vals[..., None, :] * z[None, :] ** k[:, None]).mean(axis=-1)


def faber_consistency(table: FaberTable, radius=8.0):
    """Largest relative mismatch between ``phi_{j,k}/k`` and the Laurent coefficients of ``Q(u(z), xi_j) - 1``."""
    out = 0.0
    for j, xj in enumerate(table.xi):
        def fn(z):
            return q_generating(series_value(table.coeffs, z), xj, table.tau) - 1.0

        co = laurent_coefficients_on_circle(fn, radius, table.K)
        k = np.arange(1, table.K + 1)
        ref = table.speeds[j] / k
        out = max(out, float(np.max(np.abs(co[1:] - ref) / np.maximum(1.0, np.abs(ref)))))
    return out


def gamma_matrix(tau, xi, v):
    """Closed-form ``Gamma_ij`` for all pairs (zero diagonal), vectorized over leading axes."""
    xi = np.asarray(xi, dtype=complex)
    N = xi.shape[-1]
    diff = xi[..., :, None] - xi[..., None, :]
    eye = np.eye(N, dtype=bool)
    diff = np.where(eye, 0.25, diff)  # placeholder on the unused diagonal
    tau = np.asarray(tau)
    S2d = s_derivs(diff, tau[..., None, None], 2)[..., 2]
    S1 = s_derivs(xi, tau[..., None], 1)[..., 1]
    G = -C4 * (S1[..., None, :] / S1[..., :, None]) * S2d * np.asarray(v)[..., None, :]
    return np.where(eye, 0.0, G)


def gamma_closed(s: GTState, i, j):
    """``Gamma_ij = -(1/4 pi i) (S'(xi_j)/S'(xi_i)) S''(xi_i - xi_j) v_j`` (returned complex)."""
    if i == j:
        raise ValueError("Gamma_ij needs i != j")
    if zero_distance(1, s.xi[i] - s.xi[j], s.tau / 2) < COLLISION_TOL:
        raise CollisionError(f"xi_{i + 1} and xi_{j + 1} collide", (i, j))
    return complex(gamma_matrix(s.tau, s.xi, s.v)[i, j])


def _ratio_parts(s: GTState, u, i, j):
    """Numerator (chain rule) and denominator of the z-independent ratio."""
    u = np.asarray(u, dtype=complex)
    xi, tau, vj = s.xi, s.tau, s.v[j]
    args = np.stack(np.broadcast_arrays(u + xi[i], u + xi[j], xi[i] + 0j, xi[j] + 0j))
    Sd = s_derivs(args, tau, 2)
    sdp = s_prime_dtau_heat(args, tau)
    S1ui, S1uj, S1i, S1j = Sd[0, ..., 1], Sd[1, ..., 1], Sd[2, ..., 1], Sd[3, ..., 1]
    S2ui, S2i = Sd[0, ..., 2], Sd[2, ..., 2]
    du = loewner_rhs_pointwise(u, s, j)
    dxi, _ = gt_offdiag(np.asarray(tau), xi.astype(complex), s.v, j)
    dxi_i = dxi[i]
    num = ((S2ui * (du + dxi_i) + sdp[0] * vj) / S1i
           - S1ui * (S2i * dxi_i + sdp[2] * vj) / S1i ** 2)
    den = S1uj / S1j - S1ui / S1i
    return num, den


def gamma_from_ratio(s: GTState, u, i, j, z=None):
    """``d_j Q(u(z), xi_i) / (Q(u(z), xi_j) - Q(u(z), xi_i))`` with an analytic numerator.

    Parameters
    ----------
    u : complex or ULaurent
        The value ``u(z)``, or a ULaurent whose sample at ``z`` is used.
    """
    if isinstance(u, ULaurent):
        hit = np.flatnonzero(np.abs(u.z - complex(z)) < 1e-14)
        if not hit.size:
            raise ValueError(f"z = {z} is not among the samples")
        u = u.u[hit[0]]
    if i == j:
        raise ValueError("ratio needs i != j")
    if np.all(s.v[j] == 0):
        return 0j
    num, den = _ratio_parts(s, u, i, j)
    if np.any(np.abs(den) < DEGENERATE_TOL):
        raise DegenerateDenominator("Q(u, xi_j) - Q(u, xi_i) vanishes at this z")
    out = num / den
    return complex(out) if np.ndim(out) == 0 else out


def metric_g(s: GTState, i):
    """``g_i = (1/4 pi i) S'(xi_i)**2 v_i`` (returned complex; the imaginary part is a diagnostic)."""
    check_s_poles(s.xi[i], s.tau)
    S1 = s_derivs(complex(s.xi[i]), s.tau, 1)[1]
    return complex(C4 * S1 ** 2 * s.v[i])


def metric_array(tau, xi, v):
    S1 = s_derivs(np.asarray(xi, dtype=complex), np.asarray(tau)[..., None], 1)[..., 1]
    return C4 * S1 ** 2 * np.asarray(v)


def potential_array(coeffs, tau):
    th = theta_table(np.zeros_like(tau), tau, 0)
    return np.log(PI * np.asarray(coeffs)[..., 0] * th[1, 0] * th[2, 0])


def potential_from_c1(c: ULaurent, s: GTState):
    """``G = log R`` with ``R = pi c_1 theta_2(0) theta_3(0)``."""
    coeffs = c.coeffs if isinstance(c, ULaurent) else np.asarray(c, dtype=float)
    return float(potential_array(coeffs, np.asarray(s.tau)).real)


@dataclass(frozen=True)
class MetricData:
    gamma: np.ndarray
    g: np.ndarray
    potential_G: float

    @classmethod
    def at(cls, c: ULaurent, s: GTState):
        return cls(gamma_matrix(s.tau, s.xi, s.v), metric_array(s.tau, s.xi, s.v), potential_from_c1(c, s))


# ---------------------------------------------------------------------------
# grid checks


FD_ORDER = 4


def _lat(field: HydroField, values):
    return field.lattice(values)


def _report(name, field, residuals, tol, note=""):
    return ResidualReport.from_residuals(name, field.tau[0], residuals, tol, note)


def _fd(field, F, axis, order):
    return central_diff(F, axis, field.spacing, order)


def _covered(*fds):
    """Entries where every finite-difference stencil fits inside the lattice."""
    ok = np.ones(np.shape(fds[0]), dtype=bool)
    for f in fds:
        ok &= ~np.isnan(f)
    return ok


def _collect(pieces):
    return np.concatenate([np.ravel(p) for p in pieces]) if pieces else np.array([])


def check_gamma_log(field: HydroField, tolerance=1e-5, fd_order=FD_ORDER):
    """``Gamma_ij = (1/2) d_j log g_i`` by central differences."""
    g = _lat(field, metric_array(field.tau, field.xi, field.v))
    G = _lat(field, gamma_matrix(field.tau, field.xi, field.v))
    res = []
    for i in range(field.N):
        logg = np.log(g[..., i])
        for j in range(field.N):
            if i != j:
                fd = 0.5 * _fd(field, logg, j, fd_order)
                res.append((fd - G[..., i, j])[_covered(fd)])
    return _report("christoffel_from_log_metric", field, _collect(res), tolerance)


def check_egorov(field: HydroField, tolerance=1e-5, fd_order=FD_ORDER):
    """``d_k g_i = d_i g_k`` by central differences."""
    g = _lat(field, metric_array(field.tau, field.xi, field.v))
    res = []
    for i in range(field.N):
        for k in range(i + 1, field.N):
            a = _fd(field, g[..., i], k, fd_order)
            b = _fd(field, g[..., k], i, fd_order)
            res.append((a - b)[_covered(a, b)])
    return _report("egorov_symmetry", field, _collect(res), tolerance)


def check_potential(field: HydroField, tolerance=1e-5, fd_order=FD_ORDER):
    """``g_i = d_i log R`` with ``R = pi c_1 theta_2(0) theta_3(0)``."""
    g = _lat(field, metric_array(field.tau, field.xi, field.v))
    G = _lat(field, potential_array(field.coeffs, field.tau))
    res = []
    for i in range(field.N):
        fd = _fd(field, G, i, fd_order)
        res.append((fd - g[..., i])[_covered(fd)])
    return _report("metric_potential", field, _collect(res), tolerance)


def _triples(N):
    return [(i, j, k) for i in range(N) for j in range(N) for k in range(N) if len({i, j, k}) == 3]


def check_tsarev(field: HydroField, tolerance=1e-5, fd_order=FD_ORDER):
    """``d_k Gamma_ij = d_j Gamma_ik`` for distinct ``i, j, k`` (needs N >= 3)."""
    if field.N < 3:
        raise NotEnoughAxes("the Tsarev symmetry needs at least three axes")
    G = _lat(field, gamma_matrix(field.tau, field.xi, field.v))
    res = []
    for i, j, k in _triples(field.N):
        a = _fd(field, G[..., i, j], k, fd_order)
        b = _fd(field, G[..., i, k], j, fd_order)
        res.append((a - b)[_covered(a, b)])
    return _report("semi_hamiltonian_symmetry", field, _collect(res), tolerance)


def check_curvature(field: HydroField, tolerance=1e-5, h_tolerance=1e-9, fd_order=FD_ORDER):
    """Curvature relation by finite differences plus the analytic h-function at the field's triples.

    Returns
    -------
    list of ResidualReport
        ``[finite-difference relation, h-function]``.
    """
    if field.N < 3:
        raise NotEnoughAxes("the curvature relation needs at least three axes")
    G = _lat(field, gamma_matrix(field.tau, field.xi, field.v))
    res = []
    for i, j, k in _triples(field.N):
        lhs = _fd(field, G[..., i, j], k, fd_order)
        rhs = G[..., i, j] * G[..., j, k] + G[..., i, k] * G[..., k, j] - G[..., i, k] * G[..., i, j]
        res.append((lhs - rhs)[_covered(lhs)])
    fd = _report("christoffel_curvature_relation", field, _collect(res), tolerance)
    hres = []
    for i, j, k in _triples(field.N):
        hres.append(scaled(h_terms(field.xi[:, i] + 0j, field.xi[:, j] + 0j, field.xi[:, k] + 0j, field.tau)))
    hrep = _report("curvature_h_function_on_field", field, _collect(hres), h_tolerance)
    return [fd, hrep]


def check_gamma_routes(field: HydroField, spread_tol=1e-9, route_tol=1e-8):
    """z-independence of the ratio route and agreement with the closed form at every node.

    Returns
    -------
    list of ResidualReport
        ``[relative spread across z, |ratio - closed|]``.
    """
    spread, route, skipped = [], [], 0
    for n in range(len(field)):
        s = field.state(n)
        G = gamma_matrix(s.tau, s.xi, s.v)
        for i in range(field.N):
            for j in range(field.N):
                if i == j:
                    continue
                num, den = _ratio_parts(s, field.u[n], i, j)
                ok = np.abs(den) >= DEGENERATE_TOL
                skipped += int(np.sum(~ok))
                vals = num[ok] / den[ok]
                if vals.size == 0:
                    continue
                ref = max(abs(G[i, j]), 1e-300)
                spread.append(np.max(np.abs(vals - vals[0])) / ref)
                route.append(np.max(np.abs(vals - G[i, j])))
    note = f"{skipped} degenerate z-samples skipped" if skipped else ""
    return [_report("christoffel_ratio_z_independence", field, spread, spread_tol, note),
            _report("christoffel_ratio_vs_closed_form", field, route, route_tol, note)]


def check_q_difference(tau, samples=100, seed=0, tolerance=1e-10):
    """Factorized form of ``Q(u, xi_j) - Q(u, xi_i)`` against direct subtraction on random points."""
    from .identities import singular_distance

    rng = np.random.default_rng(seed)
    t = float(np.imag(tau))
    got = []
    while sum(a.size for a in got) < samples:
        u, xi, xj = (rng.uniform(0, 1, 4 * samples) + 1j * t * rng.uniform(0, 1, 4 * samples) for _ in range(3))
        ok = np.ones(u.shape, dtype=bool)
        for g in (u, xi, xj, u + xi, u + xj, xj - xi, u + xi + xj):
            ok &= singular_distance(g, tau) >= 0.05
        got.append(scaled(q_difference_terms(u[ok], xi[ok], xj[ok], tau)))
    res = np.concatenate(got)[:samples]
    return ResidualReport.from_residuals("generating_function_difference_factorization", tau, res, tolerance)


def check_reality(field: HydroField, tolerance=1e-10):
    """Imaginary parts of g_i and Gamma_ij (real for real xi and imaginary tau, v)."""
    g = metric_array(field.tau, field.xi, field.v)
    G = gamma_matrix(field.tau, field.xi, field.v)
    res = np.concatenate([np.abs(g.imag).ravel(), np.abs(G.imag).ravel()])
    return _report("metric_and_christoffel_reality", field, res, tolerance)
