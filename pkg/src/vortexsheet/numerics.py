"""
Weighted Sobolev norms, the explicit x-march for the effective linear
problem, its residual sets, the PP trace and the energy-ratio monitor.

Discretization (shared with the nonlinear residuals of nash_moser):

* the equation at level k (array index i = k + 1, k = 0..Nx-1) uses the
  centered x difference, so it fixes level i + 1 (leapfrog);
* interior rows j = 1..Ny-2 are solved for all four components;
* at y = 0 only the projections q.E = 0 are used, where q runs over the
  three generalized left eigenvectors of (A_b, A1) with non-positive
  eigenvalue (two characteristic, one outgoing), frozen from a
  reference state;
* the remaining two unknowns at y = 0 come from the boundary rows at the
  new level: u_l row1 - u_r row2 (free of d_x phi) and row3;
* phi advances by row 1 at level k (leapfrog);
* the top row y = Ymax carries Dirichlet data.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .euler_core import DomainError
from .geometry import HalfSpaceGrid, StepSizeError, d_centered
from .linearized import (Background, BoundaryOperatorData, apply_boundary,
                         apply_effective_operator, assemble_boundary_operator, mv)


class ClosureError(DomainError):
    pass


# ---------------------------------------------------------------
# Norms


@dataclass(frozen=True)
class WeightedNormSpec:
    s: int = 0
    gamma: float = 1.0
    domain: str = "interior"   # interior | boundary | tangential

    def __post_init__(self):
        if not 0 <= self.s <= 3:
            raise DomainError("unsupported Sobolev order (0..3)")
        if self.domain not in ("interior", "boundary", "tangential"):
            raise DomainError(f"unknown domain {self.domain!r}")


def _derivs(u, axes_h, s):
    """All mixed difference derivatives of order <= s (multi-index sums)."""
    out = [u]
    frontier = [(u, 0)]
    for _ in range(s):
        nxt = []
        for f, start in frontier:
            for a in range(start, len(axes_h)):
                ax, h, periodic = axes_h[a]
                if periodic:
                    d = (np.roll(f, -1, ax) - np.roll(f, 1, ax)) / (2 * h)
                else:
                    d = d_centered(f, h, ax)
                nxt.append((d, a))
                out.append(d)
        frontier = nxt
    return out


def weighted_norm(u, grid: HalfSpaceGrid, spec: WeightedNormSpec) -> float:
    """
    Discrete H^s norm of e^{-gamma x} u on the physical levels (x >= 0).

    interior fields: trailing axes (x, y, z); boundary fields: (x, z);
    'tangential' is the L^2_y(H^s) norm of an interior field (x and z
    derivatives only).  Leading axes are summed over.
    """
    u = np.asarray(u)
    if spec.domain == "boundary":
        x = grid.x[:, None]
        w = np.exp(-spec.gamma * x)[1:]
        v = u[..., 1:, :] * w
        axes = [(-2, grid.hx, False), (-1, grid.hz, True)]
        cell = grid.hx * grid.hz
    else:
        x = grid.x[:, None, None]
        w = np.exp(-spec.gamma * x)[1:]
        v = u[..., 1:, :, :] * w
        axes = [(-3, grid.hx, False), (-1, grid.hz, True)]
        if spec.domain == "interior":
            axes.insert(1, (-2, grid.hy, False))
        cell = grid.hx * grid.hy * grid.hz
    total = sum(np.sum(np.abs(d) ** 2) for d in _derivs(v, axes, spec.s))
    return float(np.sqrt(total * cell))


# ---------------------------------------------------------------
# Problem data


@dataclass
class LinearizedProblem:
    bg: Background
    f: np.ndarray                   # (2, 4, NxL, Ny, Nz)
    g: np.ndarray                   # (3, NxL, Nz)
    top: np.ndarray | None = None   # (2, 4, NxL, Nz) Dirichlet data at y = Ymax
    projector: np.ndarray | None = None
    include_C: bool = True
    include_bbar: bool = True

    @property
    def grid(self) -> HalfSpaceGrid:
        return self.bg.grid


def outgoing_projector(bg: Background) -> np.ndarray:
    """
    Rows q with q A_b = lambda q A1, lambda <= 0, at y = 0.

    Returns an array (2, 3, 4, NxL, Nz) ordered by increasing lambda.
    """
    A1 = bg.A[0][..., 0, :].real            # (2,4,4,NxL,Nz)
    Ab = bg.Ab[..., 0, :].real
    A1 = np.moveaxis(np.moveaxis(A1, 1, -1), 1, -1)   # (2,NxL,Nz,4,4)
    Ab = np.moveaxis(np.moveaxis(Ab, 1, -1), 1, -1)
    Lc = np.linalg.cholesky(A1)
    Li = np.linalg.inv(Lc)
    K = Li @ Ab @ np.swapaxes(Li, -1, -2)
    K = 0.5 * (K + np.swapaxes(K, -1, -2))
    lam, Y = np.linalg.eigh(K)
    Q = np.swapaxes(Li, -1, -2) @ Y        # columns are q vectors
    Q = Q[..., :3]                          # (2,NxL,Nz,4,3)
    return np.moveaxis(np.moveaxis(Q, -1, 1), -1, 2)   # (2,3,4,NxL,Nz)


def cfl_number(bg: Background) -> float:
    """h_x (max |lambda_y| / h_y + max |lambda_z| / h_z) over the grid."""
    g = bg.grid
    A1, _, A3 = bg.A
    mov = lambda M: np.moveaxis(np.moveaxis(M.real, 1, -1), 1, -1)
    A1i = np.linalg.inv(mov(A1))
    ly = np.abs(np.linalg.eigvals(A1i @ mov(bg.Ab))).max()
    lz = np.abs(np.linalg.eigvals(A1i @ mov(A3))).max()
    return float(g.hx * (ly / g.hy + lz / g.hz))


# ---------------------------------------------------------------
# Residual sets


def residual_sets(E, projector):
    """
    Split a level residual field E (2,4,NxL,Ny,Nz) into the discrete
    equation sets: interior rows 1..Ny-2 and the projected y = 0 rows,
    both at levels 0..Nx-1 (indices 1..NxL-2).
    """
    inner = E[:, :, 1:-1, 1:-1, :]
    b = np.einsum("skc...,sc...->sk...", projector[..., 1:-1, :], E[:, :, 1:-1, 0, :])
    return inner, b


def boundary_residual_sets(Bres):
    """Rows 1-2 at levels 0..Nx-1 and row 3 at levels 0..Nx."""
    return Bres[:2, 1:-1], Bres[2, 1:]


def flat_norm(*parts, kind: str = "max") -> float:
    vals = np.concatenate([np.abs(np.asarray(p)).ravel() for p in parts])
    if vals.size == 0:
        return 0.0
    return float(vals.max() if kind == "max" else np.sqrt(np.mean(vals ** 2)))


# ---------------------------------------------------------------
# March


@dataclass
class MarchResult:
    U: np.ndarray
    phi: np.ndarray
    W: np.ndarray
    diagnostics: dict = field(default_factory=dict)


def march_linearized(problem: LinearizedProblem, cfl_limit: float = 1.0,
                     check_cfl: bool = True, diagnostics: bool = True) -> MarchResult:
    """
    Explicit leapfrog march of the effective linear problem in x.

    Returns the good unknowns U, the front trace phi, W = T U and residual
    diagnostics.  Raises StepSizeError on CFL violation and ClosureError
    when the boundary closure is singular.
    """
    bg, g = problem.bg, problem.grid
    if check_cfl:
        cfl = cfl_number(bg)
        if cfl > cfl_limit:
            raise StepSizeError(f"CFL number {cfl:.3f} exceeds {cfl_limit}")
    B = assemble_boundary_operator(bg)
    Q = outgoing_projector(bg) if problem.projector is None else problem.projector
    dtype = np.result_type(bg.U, problem.f, problem.g, float)
    U = np.zeros((2, 4) + g.shape, dtype=dtype)
    phi = np.zeros(g.bshape, dtype=dtype)
    top = problem.top
    if top is not None:
        U[:, :, :2, -1, :] = top[:, :, :2]

    A1, _, A3 = bg.A
    Ab = bg.Ab
    Cm = bg.C_matrix if problem.include_C else None
    # inverse with layout (2, NxL, Ny, Nz, 4, 4)
    A1inv = np.linalg.inv(np.moveaxis(np.moveaxis(A1, 1, -1), 1, -1))
    hx2 = 2 * g.hx
    Ub = bg.U[..., 0, :]                 # (2,4,NxL,Nz)
    ur, wr = Ub[0, 0], Ub[0, 2]
    ul, wl = Ub[1, 0], Ub[1, 2]
    bbar = B.b_bar if problem.include_bbar else np.zeros_like(B.b_bar)
    M = B.M_underline
    nz = g.Nz

    for i in range(1, g.NxL - 1):
        Ui = U[:, :, i]
        R = problem.f[:, :, i] - mv(Ab[:, :, :, i], g.dy(Ui)) - mv(A3[:, :, :, i], g.dz(Ui))
        if Cm is not None:
            R = R - mv(Cm[:, :, :, i], Ui)
        # interior rows
        inc = np.einsum("syzij,sjyz->siyz", A1inv[:, i], R)
        U[:, :, i + 1, 1:-1] = U[:, :, i - 1, 1:-1] + hx2 * inc[:, :, 1:-1]
        if top is not None:
            U[:, :, i + 1, -1] = top[:, :, i + 1]
        # front trace: row 1 at level i
        st = np.concatenate([Ui[0, :, 0], Ui[1, :, 0]], axis=0)   # (8,Nz)
        phi_z = (np.roll(phi[i], -1) - np.roll(phi[i], 1)) / (2 * g.hz)
        r1 = problem.g[0, i] - wr[i] * phi_z - bbar[0, i] * phi[i] - np.einsum("jz,jz->z", M[0, :, i], st)
        phi[i + 1] = phi[i - 1] + hx2 * r1 / ur[i]
        # boundary closure at level i + 1
        n = i + 1
        Mat = np.zeros((nz, 8, 8), dtype=dtype)
        rhs = np.zeros((nz, 8), dtype=dtype)
        for s in range(2):
            A1s = A1[s, :, :, i, 0]                 # (4,4,Nz)
            for k in range(3):
                q = Q[s, k, :, i]                    # (4,Nz)
                row = np.einsum("cz,cdz->zd", q, A1s)
                Mat[:, 3 * s + k, 4 * s:4 * s + 4] = row
                rhs[:, 3 * s + k] = np.einsum("zd,dz->z", row, U[s, :, i - 1, 0]) \
                    + hx2 * np.einsum("cz,cz->z", q, R[s, :, 0])
        phi_zn = (np.roll(phi[n], -1) - np.roll(phi[n], 1)) / (2 * g.hz)
        comb = ul[n][:, None] * M[0, :, n].T - ur[n][:, None] * M[1, :, n].T
        Mat[:, 6] = comb
        rhs[:, 6] = ul[n] * problem.g[0, n] - ur[n] * problem.g[1, n] \
            - (ul[n] * wr[n] - ur[n] * wl[n]) * phi_zn \
            - (ul[n] * bbar[0, n] - ur[n] * bbar[1, n]) * phi[n]
        Mat[:, 7] = M[2, :, n].T
        rhs[:, 7] = problem.g[2, n] - bbar[2, n] * phi[n]
        try:
            cond = np.linalg.cond(Mat.real)
            if not np.all(np.isfinite(cond)) or cond.max() > 1e12:
                raise ClosureError(f"boundary closure near-singular at level {n}")
            sol = np.linalg.solve(Mat, rhs[..., None])[..., 0]
        except np.linalg.LinAlgError as exc:
            raise ClosureError(f"boundary closure singular at level {n}") from exc
        U[0, :, n, 0] = sol[:, :4].T
        U[1, :, n, 0] = sol[:, 4:].T

    from .linearized import Diagonalizer
    W = Diagonalizer(bg).to_W(U)
    res = MarchResult(U, phi, W)
    if diagnostics:
        res.diagnostics = solution_residuals(U, phi, problem, B, Q)
    return res


def solution_residuals(U, phi, problem: LinearizedProblem,
                       B: BoundaryOperatorData | None = None, Q=None) -> dict:
    """Max-norm residuals of the discrete interior and boundary equation sets."""
    bg = problem.bg
    B = B or assemble_boundary_operator(bg)
    Q = outgoing_projector(bg) if Q is None else Q
    E = apply_effective_operator(U, bg, problem.include_C) - problem.f
    inner, bproj = residual_sets(E, Q)
    Br = apply_boundary(B, U, phi, bg.grid, problem.include_bbar) - problem.g
    b12, b3 = boundary_residual_sets(Br)
    return {"interior_max": flat_norm(inner, bproj), "boundary_max": flat_norm(b12, b3)}


# ---------------------------------------------------------------
# PP trace and energy ratio


@dataclass
class PPTrace:
    plus: np.ndarray    # (2, nx, Nz)
    minus: np.ndarray


def trace_pp(U, psi_x, psi_z) -> PPTrace:
    """(psi_x U_1 - U_2 + psi_z U_3, U_4) per side at y = 0."""
    U = np.asarray(U)
    if U.ndim == 5:
        U = U[..., 0, :]
    out = []
    for s in range(2):
        out.append(np.stack([psi_x * U[s, 0] - U[s, 1] + psi_z * U[s, 2], U[s, 3]]))
    return PPTrace(out[0], out[1])


def energy_ratio(U, phi, f, g, bg: Background, gamma_list=(4, 8, 16)) -> list:
    """
    LHS = gamma |U|^2 + |PP U|_{y=0}|^2 + |phi|_{H^1}^2 and
    RHS = gamma^-3 |f|^2_{L^2_y(H^1)} + gamma^-2 |g|^2_{H^1}, all weighted
    by e^{-gamma x}; one row per gamma.  Zero data reports 'vacuous'.
    """
    grid = bg.grid
    psi_x = bg.Psi_x[0, :, 0, :]
    psi_z = bg.Psi_z[0, :, 0, :]
    pp = trace_pp(U, psi_x, psi_z)
    rows = []
    for gm in gamma_list:
        n0 = lambda a, d: weighted_norm(a, grid, WeightedNormSpec(0, gm, d))
        n1 = lambda a, d: weighted_norm(a, grid, WeightedNormSpec(1, gm, d))
        lhs = gm * n0(U, "interior") ** 2 + n0(np.stack([pp.plus, pp.minus]), "boundary") ** 2 \
            + n1(phi, "boundary") ** 2
        rhs = gm ** -3 * n1(f, "tangential") ** 2 + gm ** -2 * n1(g, "boundary") ** 2
        if rhs == 0 and lhs == 0:
            rows.append({"gamma": gm, "lhs": 0.0, "rhs": 0.0, "ratio": None, "status": "vacuous"})
        else:
            rows.append({"gamma": gm, "lhs": lhs, "rhs": rhs,
                         "ratio": lhs / rhs if rhs > 0 else float("inf"), "status": "ok"})
    return rows


# ---------------------------------------------------------------
# Manufactured solutions at the planar background


@dataclass(frozen=True)
class ManufacturedSolution:
    """
    U*_{s,c} = a_{s,c} x^3 (1 - y/Ymax)^4 cos(2 pi z / Z + phase_{s,c}),
    phi* = a_phi x^3 cos(2 pi z / Z + phase_phi).
    """

    amps: tuple = ((1.0, 0.5, -0.7, 0.8), (0.6, -0.4, 0.9, 0.8))
    phases: tuple = ((0.0, 0.7, 1.3, 2.1), (0.4, 1.9, 2.6, 2.1))
    amp_phi: float = 0.5
    phase_phi: float = 0.3

    def _profiles(self, grid: HalfSpaceGrid):
        X, Y, Zc = grid.mesh()
        k = 2 * np.pi / grid.Z
        Xp = np.maximum(X, 0.0)
        yp = 1 - Y / grid.Ymax
        return X, Xp, Y, Zc, k, yp

    def fields(self, grid: HalfSpaceGrid):
        """Exact U*, its x, y, z derivatives (each (2,4,NxL,Ny,Nz)) and phi*, phi*_x, phi*_z."""
        X, Xp, Y, Zc, k, yp = self._profiles(grid)
        a = np.asarray(self.amps)[:, :, None, None, None]
        ph = np.asarray(self.phases)[:, :, None, None, None]
        c = np.cos(k * Zc + ph)
        s = np.sin(k * Zc + ph)
        U = a * Xp ** 3 * yp ** 4 * c
        Ux = a * 3 * Xp ** 2 * yp ** 4 * c
        Uy = a * Xp ** 3 * (-4 / grid.Ymax) * yp ** 3 * c
        Uz = -a * Xp ** 3 * yp ** 4 * k * s
        xb = np.maximum(grid.x, 0.0)[:, None]
        zb = grid.z[None, :]
        phi = self.amp_phi * xb ** 3 * np.cos(k * zb + self.phase_phi)
        phix = self.amp_phi * 3 * xb ** 2 * np.cos(k * zb + self.phase_phi)
        phiz = -self.amp_phi * xb ** 3 * k * np.sin(k * zb + self.phase_phi)
        return U, (Ux, Uy, Uz), phi, (phix, phiz)

    def problem(self, bg: Background) -> tuple[LinearizedProblem, np.ndarray, np.ndarray]:
        """Exact sources for a planar background; returns (problem, U*, phi*)."""
        grid = bg.grid
        U, (Ux, Uy, Uz), phi, (phix, phiz) = self.fields(grid)
        A1, _, A3 = bg.A
        f = mv(A1, Ux) + mv(bg.Ab, Uy) + mv(A3, Uz) + bg.C_apply(U)
        B = assemble_boundary_operator(bg)
        st = np.concatenate([U[0, :, :, 0], U[1, :, :, 0]], axis=0)
        g = B.b_underline[:, 0] * phix + B.b_underline[:, 1] * phiz \
            + np.einsum("ij...,j...->i...", B.M_underline, st) + B.b_bar * phi
        top = U[:, :, :, -1, :]
        return LinearizedProblem(bg, f, g, top=top), U, phi


def mms_errors(sol: MarchResult, U_exact, phi_exact, grid: HalfSpaceGrid) -> dict:
    cell = grid.hx * grid.hy * grid.hz
    e = sol.U[:, :, 1:] - U_exact[:, :, 1:]
    ep = sol.phi[1:] - phi_exact[1:]
    return {"U_l2": float(np.sqrt(np.sum(np.abs(e) ** 2) * cell)),
            "U_max": float(np.abs(e).max()),
            "phi_l2": float(np.sqrt(np.sum(np.abs(ep) ** 2) * grid.hx * grid.hz)),
            "phi_max": float(np.abs(ep).max())}


def convergence_order(hs, errs) -> float:
    """Least-squares slope of log(err) against log(h)."""
    return float(np.polyfit(np.log(hs), np.log(errs), 1)[0])


def mms_study(sheet, base: HalfSpaceGrid, levels: int = 3, mms: ManufacturedSolution | None = None):
    """Run the manufactured problem on successively refined grids."""
    from .linearized import planar_background
    mms = mms or ManufacturedSolution()
    rows = []
    grid = base
    for _ in range(levels):
        bg = planar_background(sheet, grid)
        prob, Ue, pe = mms.problem(bg)
        sol = march_linearized(prob)
        err = mms_errors(sol, Ue, pe, grid)
        # exact solution inserted into the discrete boundary operator
        B = assemble_boundary_operator(bg)
        bres = apply_boundary(B, Ue, pe, grid) - prob.g
        err["bc_truncation"] = float(np.abs(bres[:, 1:-1]).max())
        rows.append({"grid": grid.to_dict(), "h": grid.hx, **err, **sol.diagnostics,
                     "energy": energy_ratio(sol.U, sol.phi, prob.f, prob.g, bg)})
        grid = grid.refined(2)
    hs = [r["h"] for r in rows]
    order = convergence_order(hs, [r["U_l2"] for r in rows])
    order_phi = convergence_order(hs, [r["phi_l2"] for r in rows])
    order_bc = convergence_order(hs, [r["bc_truncation"] for r in rows])
    return {"rows": rows, "order_U": order, "order_phi": order_phi, "order_bc": order_bc}
