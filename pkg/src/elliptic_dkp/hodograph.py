"""Symmetry solutions, the hodograph relation and the dispersionless DKP checks.

Everything here lives on the Chebyshev grid of a field's compatible
extension: speeds ``phi_{i,n}`` and symmetry solutions ``R_i`` are tabulated
there, so values and lambda-derivatives at arbitrary points come from
spectral interpolation.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field as dc_field, replace

import numpy as np

from .elliptic import s_derivs
from .errors import NoConvergence, OrderExceeded, SingularJacobian
from .identities import f_terms
from .loewner import (CompatibleExtension, DrivingFunction, HydroField, ULaurent, _goursat, central_diff)
from .metric import FD_ORDER, gamma_matrix, metric_array, speeds_array
from .report import ResidualReport, scaled
from .series import laurent_powers, log_series
from .theta import PI, as_tau, theta_table

_FACT = np.array([float(np.prod(np.arange(1, k + 1))) for k in range(40)])
NEWTON_TOL = 1e-10
NEWTON_MAX_ITER = 50
SINGULAR_COND = 1e12


def _branch_safe(dS):
    return dS - 2j * PI * np.round(np.imag(dS) / (2 * PI))


# ---------------------------------------------------------------------------
# speeds on the spectral grid


class SpeedField:
    """``phi_{i,n}`` for ``n = 0..K`` tabulated on a compatible extension."""

    def __init__(self, ext: CompatibleExtension, K: int):
        if K > ext.M:
            raise OrderExceeded(f"K = {K} exceeds the series order M = {ext.M}")
        self.ext = ext
        self.K = K
        self.table = speeds_array(ext.coeffs, ext.xi, ext.tau, K).real  # grid + (N, K+1)
        self.dtable = [ext.grid.diff(self.table, j) for j in range(ext.N)]

    @classmethod
    def from_field(cls, field: HydroField, K=6):
        return cls(field.extension, K)

    def values(self, lam):
        """``phi[i, n]`` at ``lam``."""
        return self.ext.interp(self.table, lam)

    def jacobian(self, lam):
        """``d phi[i, n] / d lambda_j`` as an array ``[i, n, j]``."""
        s = self.ext._local(lam)
        return np.stack([self.ext.grid.interp(d, s) for d in self.dtable], axis=-1)

    def at_nodes(self, field: HydroField):
        return speeds_array(field.coeffs, field.xi, field.tau, self.K).real


# ---------------------------------------------------------------------------
# symmetry solutions


@dataclass
class SymmetrySolution:
    """Solution ``R_i`` of ``d_j R_i = Gamma_ij (R_j - R_i)``.

    ``grid`` holds ``R`` on the extension's spectral grid (``None`` for the
    constant solution), ``nodes`` the values at the field's lattice nodes.
    """

    ext: CompatibleExtension
    nodes: np.ndarray
    grid: np.ndarray | None = None
    constant: float | None = None
    dgrid: list = dc_field(default_factory=list)

    def __post_init__(self):
        if self.grid is not None and not self.dgrid:
            self.dgrid = [self.ext.grid.diff(self.grid, j) for j in range(self.ext.N)]

    @property
    def N(self):
        return self.ext.N

    @classmethod
    def constant_solution(cls, field: HydroField, c: float):
        return cls(field.extension, np.full((len(field), field.N), float(c)), constant=float(c))

    def R(self, lam):
        if self.grid is None:
            return np.full(self.N, self.constant)
        return self.ext.interp(self.grid, lam)

    def jacobian(self, lam):
        """``d R_i / d lambda_j`` as ``[i, j]``."""
        if self.grid is None:
            return np.zeros((self.N, self.N))
        s = self.ext._local(lam)
        return np.stack([self.ext.grid.interp(d, s) for d in self.dgrid], axis=-1)

    def plus_speed(self, speeds: SpeedField, n: int, b: float, field: HydroField):
        """``R + b * phi_{., n}``, again a solution since the speeds solve the same system."""
        grid = (self.grid if self.grid is not None else np.full(speeds.table.shape[:-1], self.constant))
        grid = grid + b * speeds.table[..., n]
        nodes = self.nodes + b * speeds.at_nodes(field)[..., n]
        return SymmetrySolution(self.ext, nodes, grid)

    def shifted(self, a: float):
        grid = None if self.grid is None else self.grid + a
        const = None if self.constant is None else self.constant + a
        return SymmetrySolution(self.ext, self.nodes + a, grid, const)


def _gamma_table(ext):
    return gamma_matrix(ext.tau, ext.xi, ext.v).real


def _symmetry_rhs(G, R, k):
    out = G[..., :, k] * (R[..., k : k + 1] - R)
    out[..., k] = 0.0
    return out


def _rk4_axis(rhs, lam, y, k, target, step, record_spacing=None, origin=None):
    """Fixed-step RK4 of ``dy/d lambda_k = rhs(lam, y)``; records on multiples of ``record_spacing``."""
    lam = np.array(lam, dtype=float)
    span = target - lam[k]
    n = max(1, int(np.ceil(abs(span) / step - 1e-9)))
    h = span / n
    recorded = []
    for i in range(n):
        e = np.zeros_like(lam)
        e[k] = 1.0
        k1 = rhs(lam, y)
        k2 = rhs(lam + 0.5 * h * e, y + 0.5 * h * k1)
        k3 = rhs(lam + 0.5 * h * e, y + 0.5 * h * k2)
        k4 = rhs(lam + h * e, y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        lam = lam.copy()
        lam[k] = lam[k] + h if i < n - 1 else target
        if record_spacing is not None:
            q = (lam[k] - origin[k]) / record_spacing
            if abs(q - round(q)) < 1e-9:
                recorded.append((lam.copy(), y.copy()))
    return lam, y, recorded


class _SymmetryFlow:
    def __init__(self, ext, grid_R):
        self.ext = ext
        self.G = _gamma_table(ext)
        self.diag = np.stack([ext.grid.diff(grid_R[..., k], k) for k in range(ext.N)], axis=-1)

    def rhs(self, k):
        def f(lam, R):
            s = self.ext._local(lam)
            G = self.ext.grid.interp(self.G, s)
            out = _symmetry_rhs(G, R, k)
            out[k] = self.ext.grid.interp(self.diag[..., k], s)
            return out
        return f


def integrate_symmetry(field: HydroField, R0, diagonal=None, step=1e-3):
    """Integrate the symmetry system over the field's lattice.

    Parameters
    ----------
    field : HydroField
        Lattice field with a compatible extension.
    R0 : array_like
        ``R`` at the base node.
    diagonal : sequence of DrivingFunction, optional
        ``d R_i / d lambda_i`` along the axes through the base node (default 0).
    step : float
        RK4 step of the lattice sweep.

    Notes
    -----
    The diagonal data are Goursat data: off the axes, ``d R_i / d lambda_i``
    comes from the spectral solve, which also provides ``R`` for Newton.
    """
    ext = field.extension
    N = field.N
    R0 = np.asarray(R0, dtype=float)
    if diagonal is None:
        diagonal = [DrivingFunction("constant", 0.0)] * N
    g = ext.grid
    coords = g.coords()
    G = _gamma_table(ext)
    fields, own, base = {}, {}, {}
    for k in range(N):
        lk = ext.base[k] + coords[k]
        base[f"R{k}"] = R0[k] + diagonal[k].integral(ext.base[k], lk) + 0j
        fields[f"R{k}"] = base[f"R{k}"].copy()
        own[f"R{k}"] = k

    def rhs(f, j):
        R = np.stack([f[f"R{k}"] for k in range(N)], axis=-1)
        d = _symmetry_rhs(G, R, j)
        return {f"R{k}": d[..., k] for k in range(N) if k != j}

    sol, _ = _goursat(g, fields, own, base, rhs, ext.tol, ext.max_iter)
    grid_R = np.stack([sol[f"R{k}"].real for k in range(N)], axis=-1)
    nodes = _sweep_lattice(field, _SymmetryFlow(ext, grid_R), R0, step)
    return SymmetrySolution(ext, nodes, grid_R)


def _sweep_lattice(field, flow, R0, step):
    N = field.N
    h = field.spacing
    L = h * (field.shape[0] - 1)
    origin = field.lam[0]
    front = [(origin.copy(), R0.copy())]
    for k in range(N):
        nxt = []
        for lam, y in front:
            _, _, rec = _rk4_axis(flow.rhs(k), lam, y, k, lam[k] + L, step, h, origin)
            nxt.append((lam, y))
            nxt.extend(rec)
        front = nxt
    front.sort(key=lambda r: tuple(np.round((r[0] - origin) / h).astype(int)))
    return np.array([y for _, y in front])


def symmetry_path_independence(field: HydroField, sym: SymmetrySolution, R0, step=1e-3, tolerance=1e-7):
    """Two staircase orders to the far lattice corner must give the same ``R``."""
    flow = _SymmetryFlow(sym.ext, sym.grid)
    corner = field.lam[-1]
    out = []
    for order in (range(field.N), reversed(range(field.N))):
        lam, y = field.lam[0].copy(), np.asarray(R0, dtype=float).copy()
        for k in order:
            lam, y, _ = _rk4_axis(flow.rhs(k), lam, y, k, corner[k], step)
        out.append(y)
    return ResidualReport.from_residuals("symmetry_path_independence", field.tau[0], np.abs(out[0] - out[1]),
                                         tolerance)


def check_symmetry(field: HydroField, sym: SymmetrySolution, tolerance=1e-5, fd_order=FD_ORDER, gamma=None):
    """Lattice differences of ``R`` against ``Gamma_ij (R_j - R_i)``."""
    G = field.lattice(gamma_matrix(field.tau, field.xi, field.v).real if gamma is None else gamma)
    R = field.lattice(sym.nodes)
    res = []
    for i in range(field.N):
        for j in range(field.N):
            if i != j:
                fd = central_diff(R[..., i], j, field.spacing, fd_order)
                ok = ~np.isnan(fd)
                res.append((fd - G[..., i, j] * (R[..., j] - R[..., i]))[ok])
    return ResidualReport.from_residuals("symmetry_system", field.tau[0], np.concatenate(res), tolerance)


# ---------------------------------------------------------------------------
# hodograph relation


@dataclass(frozen=True)
class TimePoint:
    """Times ``t_0, t_1..t_K`` and the Riemann invariants solving the hodograph relation."""

    t0: float
    t: tuple
    lam: np.ndarray | None = None
    converged: bool = False
    newton_iters: int = 0
    residual: float = float("nan")
    offdiag: float = float("nan")

    def times(self, K):
        t = np.zeros(K + 1)
        t[0] = self.t0
        n = min(K, len(self.t))
        t[1 : n + 1] = self.t[:n]
        if np.any(np.asarray(self.t[n:]) != 0):
            raise OrderExceeded("nonzero times beyond the speed order")
        return t

    def moved(self, n, dt):
        """Copy with ``t_n`` shifted by ``dt`` (``n = 0`` is ``t_0``)."""
        if n == 0:
            return replace(self, t0=self.t0 + dt)
        t = list(self.t) + [0.0] * max(0, n - len(self.t))
        t[n - 1] += dt
        return replace(self, t=tuple(t))

    def to_row(self):
        lam = [] if self.lam is None else list(self.lam)
        return [self.t0, *self.t, *lam, self.newton_iters]


def hodograph_residual(lam, sym, speeds, t):
    return speeds.values(lam) @ t - sym.R(lam)


def hodograph_matrix(lam, sym, speeds, t):
    """``M_ij = d_j R_i - sum_n t_n d_j phi_{i,n}``."""
    return sym.jacobian(lam) - np.einsum("inj,n->ij", speeds.jacobian(lam), t)


def hodograph_solve(field: HydroField, sym: SymmetrySolution, speeds: SpeedField, seed: TimePoint,
                    tol=NEWTON_TOL, max_iter=NEWTON_MAX_ITER) -> TimePoint:
    """Damped Newton for ``t_0 + sum_n phi_{i,n}(lambda) t_n = R_i(lambda)``.

    The seed's ``lam`` (default: the centre of the lattice) starts the
    iteration.  Steps are halved until the residual decreases and the
    iterate stays inside the extension box.
    """
    t = seed.times(speeds.K)
    lam = np.array(seed.lam if seed.lam is not None else field.lam[len(field) // 2], dtype=float)
    F = hodograph_residual(lam, sym, speeds, t)
    norm = np.max(np.abs(F))
    for it in range(max_iter + 1):
        if norm < tol:
            M = hodograph_matrix(lam, sym, speeds, t)
            try:  # one undamped polishing step, kept only if it helps
                trial = lam + np.linalg.solve(M, F)
                if sym.ext.grid.contains(trial - sym.ext.base, slack=1e-9):
                    Ft = hodograph_residual(trial, sym, speeds, t)
                    if np.max(np.abs(Ft)) < norm:
                        lam, F, norm = trial, Ft, float(np.max(np.abs(Ft)))
                        M = hodograph_matrix(lam, sym, speeds, t)
            except np.linalg.LinAlgError:
                pass
            off = float(np.max(np.abs(M - np.diag(np.diag(M))))) if sym.N > 1 else 0.0
            return replace(seed, lam=lam, converged=True, newton_iters=it, residual=float(norm), offdiag=off)
        if it == max_iter:
            break
        M = hodograph_matrix(lam, sym, speeds, t)
        if not np.all(np.isfinite(M)) or np.linalg.cond(M) > SINGULAR_COND:
            raise SingularJacobian(f"hodograph Jacobian is singular at lambda = {lam}")
        step = np.linalg.solve(M, F)  # J = -M
        alpha = 1.0
        while True:
            trial = lam + alpha * step
            if sym.ext.grid.contains(trial - sym.ext.base, slack=1e-9):
                Ft = hodograph_residual(trial, sym, speeds, t)
                nt = np.max(np.abs(Ft))
                if nt < norm or alpha < 2 ** -20:
                    break
            elif alpha < 2 ** -20:
                raise NoConvergence("Newton iterate left the lambda box")
            alpha *= 0.5
        lam, F, norm = trial, Ft, nt
    raise NoConvergence(f"hodograph Newton did not converge in {max_iter} iterations (residual {norm:.2e})")


def manufactured_solution(field: HydroField, base: SymmetrySolution, speeds: SpeedField, t1=0.01, center=None):
    """Symmetry solution and times for which ``center`` solves the hodograph relation.

    Times ``t_0..t_{N-1}`` are fixed by the ``N`` equations at ``center``;
    ``b * phi_{., 1}`` is added to ``R`` so that ``t_1`` equals the target.
    """
    N = field.N
    if N - 1 > speeds.K:
        raise OrderExceeded("need K >= N - 1 for the manufactured solution")
    lam = np.array(field.lam[len(field) // 2] if center is None else center, dtype=float)
    phi = speeds.values(lam)[:, :N]
    t = np.linalg.solve(phi, base.R(lam))
    if N == 1:
        t = np.append(t, 0.0)
    b = t1 - t[1]
    sym = base.plus_speed(speeds, 1, b, field)
    t[1] = t1
    point = TimePoint(float(t[0]), tuple(float(x) for x in t[1:]), lam, True, 0, 0.0)
    return sym, point


def solve_near(field, sym, speeds, point: TimePoint, n, dt, tol=1e-13):
    """Re-solve the hodograph relation after shifting ``t_n`` by ``dt``, seeded at ``point``."""
    return hodograph_solve(field, sym, speeds, point.moved(n, dt), tol=tol)


_T_STENCIL = {2: ((1, 0.5), (-1, -0.5)), 4: ((1, 2 / 3), (-1, -2 / 3), (2, -1 / 12), (-2, 1 / 12))}


def t_derivative(field, sym, speeds, point, n, h, fn=None, order=2):
    """Central difference (order 2 or 4) in ``t_n`` of ``fn`` along the hodograph.

    ``fn(lam_a, lam_b)`` returns the difference of the observed quantity
    between two solved points; by default the quantity is lambda itself.
    """
    pts = {m: solve_near(field, sym, speeds, point, n, m * h).lam for m, _ in _T_STENCIL[order]}
    if fn is None:
        def fn(a, b):
            return a - b
    out = 0.0
    for m, w in _T_STENCIL[order]:
        if m > 0:
            out = out + w * fn(pts[m], pts[-m])
    return out / h


def step_for(speeds, lam, n, h):
    """FD step in ``t_n`` scaled so that ``lambda`` moves by about ``h``."""
    if n == 0:
        return h
    return h / max(1.0, float(np.max(np.abs(speeds.values(lam)[:, n]))))


def write_timepoints_csv(points, path, K, N):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t0"] + [f"t{n}" for n in range(1, K + 1)] + [f"lambda{i + 1}" for i in range(N)] + ["iters"])
        for p in points:
            t = list(p.t) + [0.0] * (K - len(p.t))
            lam = list(p.lam) if p.lam is not None else [float("nan")] * N
            w.writerow([repr(float(x)) for x in [p.t0, *t[:K], *lam]] + [p.newton_iters])


def t_grid(center: TimePoint, h=0.002, orders=(1,)):
    """Tensor grid of times around ``center`` in ``t_0`` and the listed ``t_n``."""
    pts = []
    shifts = np.array([-h, 0.0, h])
    axes = [0, *orders]
    for idx in np.ndindex(*(3,) * len(axes)):
        p = center
        for ax, i in zip(axes, idx):
            if shifts[i]:
                p = p.moved(ax, shifts[i])
        pts.append(p)
    return pts


def check_hydro_evolution(field, sym, speeds, center: TimePoint, h=0.002, orders=None, tolerance=1e-6,
                          fd_order=4):
    """``d lambda_i / d t_n = phi_{i,n} d lambda_i / d t_0`` by central differences through re-solves.

    The step in ``t_n`` is ``h / max(1, |phi_{., n}|)`` so every direction moves lambda by a similar amount.
    """
    if orders is None:
        orders = [1, 2] if speeds.K >= 2 else [1]
    if h == 0:
        return ResidualReport.from_residuals("hydrodynamic_evolution", field.tau[0], [], tolerance)
    lam = center.lam
    phi = speeds.values(lam)
    d0 = t_derivative(field, sym, speeds, center, 0, h, order=fd_order)
    res = []
    for n in orders:
        dn = t_derivative(field, sym, speeds, center, n, step_for(speeds, lam, n, h), order=fd_order)
        res.append(np.abs(dn - phi[:, n] * d0))
    return ResidualReport.from_residuals("hydrodynamic_evolution", field.tau[0], np.concatenate(res), tolerance)


def check_offdiagonal(points, tau, tolerance=1e-8):
    """Off-diagonal ``M_ij`` and hodograph residuals at converged points."""
    res = [p.offdiag for p in points]
    hod = [p.residual for p in points]
    return [ResidualReport.from_residuals("hodograph_offdiagonal_matrix", tau, res, tolerance),
            ResidualReport.from_residuals("hodograph_residual", tau, hod, NEWTON_TOL)]


# ---------------------------------------------------------------------------
# dispersionless DKP


def _s_of_u(ext, zs, sign):
    """``lam -> S(sum_a sign_a u(z_a))`` using the extension."""
    zs = list(np.atleast_1d(zs))
    ext.ensure_z(zs)

    def f(lam):
        s = ext._local(lam)
        u = sum(sg * ext.grid.interp(ext.u_grid(z), s) for z, sg in zip(zs, sign))
        tau = ext.grid.interp(ext.tau, s)
        return s_derivs(u, tau, 0)[0]
    return f


def nabla(field, sym, speeds, point, z, fn, K=6, h=1e-3):
    """``(d_t0 + sum_{k<=K} z**-k / k d_tk) fn`` by central differences through re-solves."""
    if K > speeds.K:
        raise OrderExceeded(f"K = {K} exceeds the tabulated speed order {speeds.K}")

    def diff(a, b):
        return _branch_safe(fn(a) - fn(b))

    out = t_derivative(field, sym, speeds, point, 0, h, diff)
    for k in range(1, K + 1):
        hk = step_for(speeds, point.lam, k, h)
        out = out + complex(z) ** (-k) / k * t_derivative(field, sym, speeds, point, k, hk, diff)
    return out


def dkp_equation_residual(field, sym, speeds, point, z1, z2, K=6, h=1e-3):
    ext = sym.ext
    lhs = nabla(field, sym, speeds, point, z1, _s_of_u(ext, [z2], [1]), K, h)
    diff = _s_of_u(ext, [z1, z2], [1, -1])
    rhs = t_derivative(field, sym, speeds, point, 0, h, lambda a, b: _branch_safe(diff(a) - diff(b)))
    return abs(lhs - rhs)


def dkp_permutation_residual(field, sym, speeds, point, z1, z2, z3, K=6, h=1e-3):
    ext = sym.ext
    a = nabla(field, sym, speeds, point, z1, _s_of_u(ext, [z2, z3], [1, -1]), K, h)
    b = nabla(field, sym, speeds, point, z2, _s_of_u(ext, [z1, z3], [1, -1]), K, h)
    c = nabla(field, sym, speeds, point, z3, _s_of_u(ext, [z1, z2], [1, -1]), K, h)
    return max(abs(a - b), abs(b - c), abs(a - c))


def check_dkp_e12(field, sym, speeds, point, z1=100.0, z2=6.0, K=6, h=0.02, tolerance=1e-5,
                  ratio_range=(3.5, 4.5), triple=(30.0, -40.0, 25 + 25j)):
    """Both sides of the single-equation form, the step-halving ratio and the three-fold symmetry.

    Returns
    -------
    list of ResidualReport
        ``[equation residual at h, step-halving ratio, permutation symmetry]``.
    """
    r1 = dkp_equation_residual(field, sym, speeds, point, z1, z2, K, h)
    r2 = dkp_equation_residual(field, sym, speeds, point, z1, z2, K, h / 2)
    ratio = r1 / r2 if r2 > 0 else float("inf")
    lo, hi = ratio_range
    tau = field.tau[0]
    rep = ResidualReport.from_residuals("dkp_single_equation", tau, [r1], tolerance)
    conv = ResidualReport(
        "dkp_step_halving_ratio", float(np.imag(tau)), 1, abs(ratio - 4.0), abs(ratio - 4.0), max(4.0 - lo, hi - 4.0),
        bool(lo <= ratio <= hi), f"ratio={ratio:.4f} residuals={r1:.3e},{r2:.3e}")
    sym3 = ResidualReport.from_residuals("dkp_permutation_symmetry", tau,
                                         [dkp_permutation_residual(field, sym, speeds, point, *triple, K=K, h=h)], tolerance)
    return [rep, conv, sym3]


# ---------------------------------------------------------------------------
# algebraic curve


def curve_terms(u, c1, tau):
    """Terms of ``p**2 - R**2 (w + 1/w) - V`` on the elliptic parametrization."""
    u = np.asarray(u, dtype=complex)
    th = theta_table(u, tau, 0)[:, 0]
    z0 = theta_table(np.zeros(1), tau, 0)[:, 0, 0]
    gamma = PI * c1
    R = gamma * z0[1] * z0[2]
    V = -gamma ** 2 * (z0[1] ** 4 + z0[2] ** 4)
    p = c1 * s_derivs(u, tau, 1)[..., 1]
    w = th[3] ** 2 / th[0] ** 2
    return [p ** 2, -R ** 2 * w, -R ** 2 / w, -V * np.ones_like(u)]


def check_curve_d5(c: ULaurent, s, u_samples, tolerance=1e-10):
    """Pointwise residual of the curve relation at the given ``u``."""
    coeffs = c.coeffs if isinstance(c, ULaurent) else np.asarray(c, dtype=float)
    from .elliptic import check_s_poles
    check_s_poles(np.asarray(u_samples, dtype=complex), s.tau)
    res = scaled(curve_terms(u_samples, coeffs[0], s.tau))
    return ResidualReport.from_residuals("algebraic_curve", s.tau, res, tolerance)


# ---------------------------------------------------------------------------
# conserved densities


def _even_part_taylor(tau, order):
    """Taylor coefficients about 0 of ``log(theta_1(w)/w) - log theta_4(w)``."""
    tab = theta_table(np.zeros(1), tau, order + 1)[:, :, 0]
    n = np.arange(order + 1)
    a1 = tab[0, n + 1] / _FACT[n + 1]
    a4 = tab[3, n] / _FACT[n]
    return log_series(a1) - log_series(a4)


def conserved_density_series(c, m, K):
    """``F_00`` and ``F_0n`` (``n = 1..K``) from ``S(u(z)) = -log z + F_00 + sum_n F_0n z**-n / n``."""
    coeffs = c.coeffs if isinstance(c, ULaurent) else np.asarray(c, dtype=float)
    if K > coeffs.size:
        raise OrderExceeded(f"K = {K} exceeds the series order M = {coeffs.size}")
    tau = as_tau(m)
    A = _even_part_taylor(tau, K)
    P = laurent_powers(coeffs[:K], K)
    comp = A @ P  # [z**-n] A(u(z))
    # log(u z / c1) = log(1 + sum_k (c_{k+1}/c_1) z**-k)
    rel = np.zeros(K + 1)
    rel[0] = 1.0
    rel[1:] = np.concatenate([coeffs[1:K + 1], np.zeros(max(0, K + 1 - coeffs.size))])[:K] / coeffs[0]
    lg = log_series(rel)
    out = (comp + lg).real
    out[0] = np.log(coeffs[0]) + out[0]
    out[1:] *= np.arange(1, K + 1)
    return out


def densities_on_field(field: HydroField, K):
    return np.array([conserved_density_series(field.coeffs[n], field.tau[n], K) for n in range(len(field))])


def check_conserved(field: HydroField, K=6, fd_order=FD_ORDER, tolerance=1e-5, f_tolerance=1e-9, samples=50,
                    seed=0):
    """Density fluxes, the second-derivative relation for ``S(u(z))`` and the analytic f-function.

    Returns
    -------
    list of ResidualReport
        ``[densities vs g phi, second-derivative relation, f-function, F_00 consistency]``.
    """
    h = field.spacing
    F = field.lattice(densities_on_field(field, K))
    g = field.lattice(metric_array(field.tau, field.xi, field.v).real)
    phi = field.lattice(speeds_array(field.coeffs, field.xi, field.tau, K).real)
    res = []
    for j in range(field.N):
        for n in range(K + 1):
            fd = central_diff(F[..., n], j, h, fd_order)
            ok = ~np.isnan(fd)
            ref = g[..., j] * phi[..., j, n]
            res.append((np.abs(fd - ref) / np.maximum(1.0, np.abs(ref)))[ok])
    dens = ResidualReport.from_residuals("conserved_density_flux", field.tau[0], np.concatenate(res), tolerance,
                                         "scaled by max(1, |g_j phi_jn|)")

    G = field.lattice(gamma_matrix(field.tau, field.xi, field.v))
    tau = field.lattice(field.tau)
    res = []
    for a in range(field.z.size):
        P = field.lattice(field.u[:, a])
        S = s_derivs(P, tau, 0)[..., 0]
        d1 = [_fd_branch(S, i, h, fd_order) for i in range(field.N)]
        for i in range(field.N):
            for j in range(field.N):
                if i == j:
                    continue
                d2 = central_diff(d1[i], j, h, fd_order)
                rhs = G[..., i, j] * d1[i] + G[..., j, i] * d1[j]
                r = d2 - rhs
                res.append(np.abs(r[~np.isnan(r)]))
    second = ResidualReport.from_residuals("log_u_second_derivative_relation", field.tau[0], np.concatenate(res),
                                           tolerance)

    rng = np.random.default_rng(seed)
    from .loewner import random_u
    res = []
    for n in range(len(field)):
        s = field.state(n)
        u = random_u(rng, s.tau, s.xi, samples)
        for i in range(field.N):
            for j in range(field.N):
                if i < j:
                    res.append(scaled(f_terms(s.xi[i] + 0j, s.xi[j] + 0j, u, s.tau)))
    fchk = ResidualReport.from_residuals("conserved_f_function_on_field", field.tau[0], np.concatenate(res),
                                         f_tolerance)
    th = theta_table(np.zeros_like(field.tau), field.tau, 0)
    ref = np.log(PI * field.coeffs[:, 0] * th[1, 0] * th[2, 0]).real
    f00 = ResidualReport.from_residuals("density_constant_term", field.tau[0],
                                        np.abs(F.reshape(len(field), -1)[:, 0] - ref), 1e-11)
    return [dens, second, fchk, f00]


def _fd_branch(S, axis, h, order):
    """Central difference of a principal-branch log field, unwrapping ``2 pi i`` jumps."""
    S = np.moveaxis(S, axis, 0)
    n = S.shape[0]
    ref = S[n // 2]
    Sw = ref + _branch_safe(S - ref)
    return central_diff(np.moveaxis(Sw, 0, axis), axis, h, order)
