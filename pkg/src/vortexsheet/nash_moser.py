"""
Compatible initial data, the approximate solution (U^a, Psi^a) and the
smoothed Newton (Nash-Moser-Hormander) iteration for the perturbation
(V, Phi) with its error ledger and telescoping source recursions.

All operators are the discrete ones of geometry/linearized/numerics, so
the bookkeeping identities hold to round-off:

    N(V, Phi) = L(U^a + V, Psi^a + Phi)(U^a + V)        interior
    Bnd(V, phi)  = boundary conditions at (U^a + V, psi^a + phi)
    Eik(V, Phi)  = eikonal defect at (U^a + V, Psi^a + Phi)

Directional derivatives of N and Bnd are taken by complex step.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .euler_core import DomainError, GasModel, flux_matrix_arrays
from .geometry import (FrontField, HalfSpaceGrid, d_centered,
                       extend_front_initial, extension, transport_leapfrog)
from .linearized import (Background, apply_L, apply_effective_operator,
                         assemble_boundary_operator)
from .numerics import (LinearizedProblem, boundary_residual_sets, flat_norm,
                       march_linearized, outgoing_projector, residual_sets)
from .smoothing import (Axis, PairSmoother, SmoothingOperator, SpectralGrid, chi,
                        make_schedule)
from .stability import PlanarVortexSheet, weak_stability_verdict

CSTEP = 1e-30
MATCH_TOL = 1e-10


class DivergenceError(RuntimeError):
    def __init__(self, msg, ledger=None):
        super().__init__(msg)
        self.ledger = ledger


# ---------------------------------------------------------------
# Jets and compatibility


def _dy(F, h):
    return d_centered(F, h, -2)


def _dz(F, h):
    return (np.roll(F, -1, -1) - np.roll(F, 1, -1)) / (2 * h)


def _psi_rate(U, Psi, hz):
    """(v - Psi_z w) / u."""
    return (U[..., 1, :, :] - _dz(Psi, hz) * U[..., 2, :, :]) / U[..., 0, :, :]


def _u_rate(U, Psi, Psi_x, grid: HalfSpaceGrid, gas: GasModel):
    """-A1^{-1}(A_b dy U + A3 dz U) with A_b built from (Psi_x, dy Psi, dz Psi)."""
    A1, A2, A3 = flux_matrix_arrays(np.moveaxis(U, -3, 0), gas)
    py = _dy(Psi, grid.hy)[..., None, None]
    pz = _dz(Psi, grid.hz)[..., None, None]
    Ab = (A2 - Psi_x[..., None, None] * A1 - pz * A3) / py
    Uy = np.moveaxis(_dy(U, grid.hy), -3, -1)[..., None]
    Uz = np.moveaxis(_dz(U, grid.hz), -3, -1)[..., None]
    r = -np.linalg.solve(A1, Ab @ Uy + A3 @ Uz)[..., 0]
    return np.moveaxis(r, -1, -3)


def taylor_jets(U0, Psi0, grid: HalfSpaceGrid, gas: GasModel, k: int,
                M: int = 24, radius: float = 0.1):
    """
    x-derivatives at x = 0 by the recursions
        d_x^{j+1} Psi = d_x^j ((v - Psi_z w)/u),
        d_x^{j+1} U   = d_x^j (-A1^{-1}(A_b d_y U + A3 d_z U)),
    with discrete tangential derivatives.  Taylor coefficients of the
    nonlinear right-hand sides come from Cauchy integrals on |t| = radius.

    Returns (U_jets [k+1], Psi_jets [k+2]) as lists of derivative arrays.
    """
    t = radius * np.exp(2j * np.pi * np.arange(M) / M)
    Uj = [np.asarray(U0, dtype=float)]
    Pj = [np.asarray(Psi0, dtype=float)]

    def series(coefs, order):
        shp = (M,) + (1,) * coefs[0].ndim
        tt = t.reshape(shp)
        return sum(coefs[m] * tt ** m / math.factorial(m) for m in range(order + 1))

    def coef(F, j):
        w = np.exp(-2j * np.pi * j * np.arange(M) / M).reshape((M,) + (1,) * (F.ndim - 1))
        return (np.mean(F * w, axis=0) / radius ** j).real * math.factorial(j)

    for j in range(k + 1):
        Us = series(Uj, j)
        Ps = series(Pj, j)
        Pj.append(coef(_psi_rate(Us, Ps, grid.hz), j))
        # Psi_x series: sum_m Psi_{m+1} t^m / m!
        Pxs = series(Pj[1:], j)
        if j < k:
            Uj.append(coef(_u_rate(Us, Ps, Pxs, grid, gas), j))
    return Uj, Pj


@dataclass
class CompatibleData:
    U0: np.ndarray            # (2, 4, Ny, Nz) full state at x = 0
    Psi0: np.ndarray          # (2, Ny, Nz)
    U_jets: list              # d_x^j U, j = 0..k
    Psi_jets: list            # d_x^j Psi, j = 0..k+1
    order: int                # largest j <= k with matching traces
    requested: int
    mismatch: dict
    background: np.ndarray    # (2, 4) constant states
    gas: GasModel
    grid: HalfSpaceGrid
    ell: float

    @property
    def zero(self) -> bool:
        return bool(np.all(self.U0 == self.background[:, :, None, None])
                    and np.all(np.abs(self.Psi0[0] - self.grid.y[:, None]) == 0))


def _trace_mismatch(Uj, Pj, k):
    out = {}
    for j in range(len(Pj)):
        out[f"psi_{j}"] = float(np.abs(Pj[j][0, 0] - Pj[j][1, 0]).max())
    for j in range(k + 1):
        out[f"p_{j}"] = float(np.abs(Uj[j][0, 3, 0] - Uj[j][1, 3, 0]).max())
    return out


def build_compatible_traces(U0_tilde, psi0, sheet: PlanarVortexSheet, grid: HalfSpaceGrid,
                            k: int = 1, ell: float | None = None, newton_iter: int = 6):
    """
    Jets of (U, Psi) at x = 0 and the achieved compatibility order.

    The initial v is set to Psi_0z w so that d_x Psi vanishes at x = 0.
    For j = 1..k the minus side receives corrections
    y^j chi(y/ell) c_j(z)/j! on v and y^j chi(y/ell) d_j(z)/j! on p, fixed by
    Newton so that d_x^j p and d_x^{j+1} Psi match across y = 0.  Raises
    DomainError when a side is not supersonic.
    """
    gas = sheet.gas
    ell = grid.Ymax / 3 if ell is None else ell
    Ub = np.array([[sheet.u_r, 0.0, sheet.w_r, sheet.p_bar],
                   [sheet.u_l, 0.0, sheet.w_l, sheet.p_bar]])
    U0 = Ub[:, :, None, None] + np.asarray(U0_tilde, dtype=float)
    Pp, Pm = extend_front_initial(psi0, grid, ell)
    Psi0 = np.stack([Pp, Pm])
    rho = gas.density_from_pressure(U0[:, 3])
    c2 = gas.sound_speed_sq(U0[:, 3])
    if np.any(U0[:, 0] ** 2 <= c2) or np.any(U0[:, 0] <= 0) or np.any(rho <= 0):
        raise DomainError("initial state is not supersonic in x")
    U0[:, 1] = _dz(Psi0, grid.hz) * U0[:, 2]
    y = grid.y[:, None]
    prof = chi(y / ell)
    nz = grid.Nz

    def assemble(params):
        U = U0.copy()
        for j in range(1, k + 1):
            c = params[2 * (j - 1)]
            d = params[2 * (j - 1) + 1]
            w = y ** j * prof / math.factorial(j)
            U[1, 1] = U[1, 1] + w * c
            U[1, 3] = U[1, 3] + w * d
        return U

    def mismatch_vec(params):
        U = assemble(params)
        Uj, Pj = taylor_jets(U, Psi0, grid, gas, k)
        out = []
        for j in range(1, k + 1):
            out.append(Uj[j][0, 3, 0] - Uj[j][1, 3, 0])
            out.append(Pj[j + 1][0, 0] - Pj[j + 1][1, 0])
        return np.concatenate(out) if out else np.zeros(0)

    params = np.zeros((2 * k, nz))
    if k >= 1 and np.abs(U0[0, 3, 0] - U0[1, 3, 0]).max() <= MATCH_TOL:
        for _ in range(newton_iter):
            r = mismatch_vec(params)
            if np.abs(r).max() < 1e-14:
                break
            n = params.size
            J = np.empty((r.size, n))
            step = 1e-4
            flat = params.ravel()
            for col in range(n):
                pp = flat.copy()
                pp[col] += step
                J[:, col] = (mismatch_vec(pp.reshape(params.shape)) - r) / step
            params = (flat - np.linalg.solve(J, r)).reshape(params.shape)
    U = assemble(params)
    Uj, Pj = taylor_jets(U, Psi0, grid, gas, k)
    mm = _trace_mismatch(Uj, Pj, k)
    order = -1
    for j in range(k + 1):
        if mm[f"psi_{j}"] <= MATCH_TOL and mm[f"p_{j}"] <= MATCH_TOL:
            order = j
        else:
            break
    return CompatibleData(U, Psi0, Uj, Pj, order, k, mm, Ub, gas, grid, ell)


# ---------------------------------------------------------------
# Approximate solution


@dataclass
class ApproximateSolution:
    U: np.ndarray           # (2, 4, NxL, Ny, Nz)
    Psi: np.ndarray         # (2, NxL, Ny, Nz) with shared trace
    f_a: np.ndarray         # (2, 4, NxL, Ny, Nz)
    grid: HalfSpaceGrid
    gas: GasModel
    report: dict = field(default_factory=dict)

    @property
    def psi(self):
        return self.Psi[0, :, 0, :]

    @property
    def front(self) -> FrontField:
        return FrontField.from_sides(self.Psi[0], self.Psi[1], 2.0 / 3.0)


def build_approximate_solution(data: CompatibleData, grid: HalfSpaceGrid | None = None,
                               x_cutoff: float | None = None,
                               slope_bound: float = 2.0 / 3.0) -> ApproximateSolution:
    """
    x-polynomial extension of the jets with a smooth x cutoff; v^a from the
    discrete eikonal identity; f_a = -L(U^a, Psi^a)U^a for x > 0.
    """
    grid = grid or data.grid
    if data.order < 1 and not data.zero:
        raise DomainError("compatibility order >= 1 required")
    x_cutoff = grid.X / 2 if x_cutoff is None else x_cutoff
    if x_cutoff < grid.hx:
        raise DomainError("x cutoff shorter than one step")
    x = grid.x
    cut = chi(np.maximum(x, 0.0) / x_cutoff)
    Ub = data.background
    pert = data.U0 - Ub[:, :, None, None]
    U = np.broadcast_to(Ub[:, :, None, None, None], (2, 4) + grid.shape).copy()
    poly = sum(((data.U_jets[j] if j else pert)[:, :, None] * (x ** j / math.factorial(j))[:, None, None]
                for j in range(len(data.U_jets))))
    U += cut[:, None, None] * poly
    sgn = np.array([1.0, -1.0])[:, None, None, None]
    ybase = sgn * grid.y[None, None, :, None]
    tilde = [data.Psi_jets[0] - sgn[:, 0] * grid.y[None, :, None]] + list(data.Psi_jets[1:])
    Pp = sum(tilde[j][:, None] * (x ** j / math.factorial(j))[:, None, None]
             for j in range(len(tilde)))
    Psi = ybase + cut[:, None, None] * Pp
    rep = {"psi_trace_gap": float(np.abs(Psi[0, :, 0] - Psi[1, :, 0]).max()),
           "p_trace_gap": float(np.abs(U[0, 3, :, 0] - U[1, 3, :, 0]).max())}
    Psi[1, :, 0] = Psi[0, :, 0]
    U[1, 3, :, 0] = U[0, 3, :, 0]
    U[:, 1] = grid.dx(Psi) * U[:, 0] + grid.dz(Psi) * U[:, 2]
    py = grid.dy(Psi)
    margin = float(min(py[0].min(), (-py[1]).min()))
    rep["slope_min"] = margin
    if margin < slope_bound:
        raise DomainError(f"slope bound {slope_bound:.4f} violated (min {margin:.4f})")
    bg = Background(U, Psi, grid, data.gas)
    LU = apply_L(U, bg)
    f_a = np.zeros_like(U)
    f_a[:, :, 2:] = -LU[:, :, 2:]
    rep["L_at_x0_max"] = float(np.abs(LU[:, :, 1, :-1]).max())
    rep["f_a_max"] = float(np.abs(f_a).max())
    rep["eikonal_max"] = float(np.abs(bg.eikonal_residual()).max())
    return ApproximateSolution(U, Psi, f_a, grid, data.gas, rep)


# ---------------------------------------------------------------
# Nonlinear operators


class Operators:
    """Discrete nonlinear maps around an approximate solution."""

    def __init__(self, approx: ApproximateSolution):
        self.a = approx
        self.grid = approx.grid
        self.gas = approx.gas
        bg0 = Background(approx.U, approx.Psi, approx.grid, approx.gas)
        self.Q = outgoing_projector(bg0)
        self.N0 = apply_L(approx.U, bg0)

    def background(self, V, Phi) -> Background:
        return Background(self.a.U + V, self.a.Psi + Phi, self.grid, self.gas)

    def N(self, V, Phi):
        U = self.a.U + V
        return apply_L(U, self.background(V, Phi))

    def interior_residual(self, V, Phi):
        """L(U^a+V, Psi^a+Phi)(U^a+V) - L(U^a, Psi^a)U^a - f_a."""
        return self.N(V, Phi) - self.N0 - self.a.f_a

    def Bnd(self, V, phi):
        g = self.grid
        U = (self.a.U + V)[..., 0, :]
        psi = self.a.psi + phi
        px, pz = g.dx_b(psi), g.dz_b(psi)
        return np.stack([px * U[0, 0] - U[0, 1] + pz * U[0, 2],
                         px * U[1, 0] - U[1, 1] + pz * U[1, 2],
                         U[0, 3] - U[1, 3]])

    def Eik(self, V, Phi):
        g = self.grid
        U = self.a.U + V
        P = self.a.Psi + Phi
        return U[:, 0] * g.dx(P) - U[:, 1] + U[:, 2] * g.dz(P)

    def dN(self, V, Phi, dV, dPhi):
        return (self.N(V + 1j * CSTEP * dV, Phi + 1j * CSTEP * dPhi)).imag / CSTEP

    def dBnd(self, V, phi, dV, dphi):
        return (self.Bnd(V + 1j * CSTEP * dV, phi + 1j * CSTEP * dphi)).imag / CSTEP

    def dEik(self, V, Phi, dV, dPhi):
        return (self.Eik(V + 1j * CSTEP * dV, Phi + 1j * CSTEP * dPhi)).imag / CSTEP

    def interior_sets(self, E):
        return residual_sets(E, self.Q)

    def interior_norm(self, E, kind="max"):
        return flat_norm(*self.interior_sets(E), kind=kind)

    def boundary_norm(self, B, kind="max"):
        return flat_norm(*boundary_residual_sets(B), kind=kind)


# ---------------------------------------------------------------
# Smoothers on the iteration grid


class GridSmoothers:
    """
    S_theta for interior fields (x odd/even, y even, z periodic), boundary
    fields (x odd/even, z periodic) and the trace-matched pair smoother
    for front functions.  The ghost level is left at zero.
    """

    def __init__(self, grid: HalfSpaceGrid, scale: float, ell: float):
        self.grid = grid
        ax = Axis(grid.Nx + 1, grid.hx, "odd_even")
        self.igrid = SpectralGrid([ax, Axis(grid.Ny, grid.hy, "even"),
                                   Axis(grid.Nz, grid.hz, "periodic")])
        self.bgrid = SpectralGrid([ax, Axis(grid.Nz, grid.hz, "periodic")])
        self.scale = scale
        self.ell = ell

    @staticmethod
    def auto_scale(grid: HalfSpaceGrid, theta_identity: float) -> float:
        ax = Axis(grid.Nx + 1, grid.hx, "odd_even")
        ig = SpectralGrid([ax, Axis(grid.Ny, grid.hy, "even"), Axis(grid.Nz, grid.hz, "periodic")])
        return ig.xi_max / theta_identity * (1 + 1e-12)

    def S(self, u, theta):
        out = np.zeros_like(u)
        out[..., 1:, :, :] = SmoothingOperator(self.igrid, theta, self.scale).apply(u[..., 1:, :, :])
        return out

    def Sb(self, u, theta):
        out = np.zeros_like(u)
        out[..., 1:, :] = SmoothingOperator(self.bgrid, theta, self.scale).apply(u[..., 1:, :])
        return out

    def Sp(self, u, theta):
        ps = PairSmoother(SmoothingOperator(self.igrid, theta, self.scale),
                          SmoothingOperator(self.bgrid, theta, self.scale),
                          self.grid.y, self.ell)
        out = np.zeros_like(u)
        out[..., 1:, :, :] = ps.apply(u[..., 1:, :, :])
        return out

    def is_identity(self, theta) -> bool:
        return self.igrid.xi_max <= self.scale * theta


# ---------------------------------------------------------------
# Iteration


@dataclass
class NMConfig:
    theta0: float = 2.0
    N: int = 8
    scale: float | str = "auto"
    identity_step: int | None = None
    alpha: float = 8.0
    s0: float = 3.0
    s1: float = 14.0
    decrease_factor: float = 0.1
    divergence_window: int = 3
    ell: float | None = None
    check_verdict: bool = True


@dataclass
class IterationState:
    V: np.ndarray
    Phi: np.ndarray
    phi: np.ndarray
    E: np.ndarray           # accumulated interior errors
    Et: np.ndarray          # accumulated boundary errors
    H: np.ndarray           # accumulated eikonal defects minus extended boundary rows
    f: np.ndarray           # current interior source
    g: np.ndarray
    h: np.ndarray
    fsum: np.ndarray
    gsum: np.ndarray
    hsum: np.ndarray
    n: int = 0


def modified_state(V, Phi, phi, theta, approx: ApproximateSolution, sm: GridSmoothers):
    """
    V_{n+1/2}: components 1, 3, 4 smoothed, component 2 chosen so the
    eikonal defect of (U^a + V_{n+1/2}, Psi^a + S Phi) vanishes.

    Returns (V_half, S Phi, S phi, S V).
    """
    g = approx.grid
    SV = sm.S(V, theta)
    SPhi = sm.Sp(Phi, theta)
    Sphi = sm.Sb(phi, theta)
    SPhi[:, :, 0, :] = Sphi
    Ps = approx.Psi + SPhi
    Vh = SV.copy()
    Vh[:, 1] = g.dx(Ps) * Vh[:, 0] + g.dz(Ps) * Vh[:, 2] \
        + approx.U[:, 0] * g.dx(SPhi) + approx.U[:, 2] * g.dz(SPhi)
    return Vh, SPhi, Sphi, SV


def _H_norms(sm: GridSmoothers, dV, dPhi, orders=(0, 1, 2, 3)):
    out = {}
    for s in orders:
        a = sm.igrid.sobolev_norm(dV[..., 1:, :, :], s)
        b = sm.igrid.sobolev_norm(dPhi[..., 1:, :, :], s)
        out[s] = float(np.sqrt(np.sum(a ** 2) + np.sum(b ** 2)))
    return out


def compute_errors(ops: Operators, st: IterationState, step: dict) -> dict:
    """
    Four-way splits of the interior, boundary and eikonal increments.

    e1..e3, et1..et3 are exact differences of complex-step derivatives;
    e4 and et4 are the exact remainders of the good-unknown substitution
    (et4 equals b_bar * dphi); eb uses the closed forms.  Diagnostics
    compare e4 with the zero-order commutator form.
    """
    V, Phi, phi = st.V, st.Phi, st.phi
    dV, dPhi, dphi, dVt = step["dV"], step["dPhi"], step["dphi"], step["dVt"]
    SV, SPhi, Sphi, Vh = step["SV"], step["SPhi"], step["Sphi"], step["Vh"]
    bg = step["bg"]
    V1, Phi1, phi1 = V + dV, Phi + dPhi, phi + dphi
    N1, N0 = ops.N(V1, Phi1), ops.N(V, Phi)
    L_n = ops.dN(V, Phi, dV, dPhi)
    L_s = ops.dN(SV, SPhi, dV, dPhi)
    L_h = ops.dN(Vh, SPhi, dV, dPhi)
    Le = apply_effective_operator(dVt, bg)
    e = [N1 - N0 - L_n, L_n - L_s, L_s - L_h, L_h - Le]
    LU = apply_L(ops.a.U + Vh, bg)
    e4_formula = (dPhi / bg.Psi_y)[:, None] * ops.grid.dy(LU)

    B1, B0 = ops.Bnd(V1, phi1), ops.Bnd(V, phi)
    Bp_n = ops.dBnd(V, phi, dV, dphi)
    Bp_s = ops.dBnd(SV, Sphi, dV, dphi)
    Bp_h = ops.dBnd(Vh, Sphi, dV, dphi)
    Bp_t = ops.dBnd(Vh, Sphi, dVt, dphi)
    et = [B1 - B0 - Bp_n, Bp_n - Bp_s, Bp_s - Bp_h, Bp_h - Bp_t]
    B = assemble_boundary_operator(bg)
    et4_formula = B.b_bar * dphi

    g = ops.grid
    rV, rPhi = V - SV, Phi - SPhi
    eb1 = g.dx(dPhi) * dV[:, 0] + g.dz(dPhi) * dV[:, 2]
    eb2 = g.dx(dPhi) * rV[:, 0] + g.dz(dPhi) * rV[:, 2] \
        + g.dx(rPhi) * dV[:, 0] + g.dz(rPhi) * dV[:, 2]
    eb3 = g.dx(dPhi) * (SV - Vh)[:, 0] + g.dz(dPhi) * (SV - Vh)[:, 2]
    Psi_s = ops.a.Psi + SPhi
    Uy = bg.dU[1]
    eb4 = dPhi / bg.Psi_y * (g.dx(Psi_s) * Uy[:, 0] - Uy[:, 1] + g.dz(Psi_s) * Uy[:, 2])
    eb = [eb1, eb2, eb3, eb4]
    eb_exact = ops.Eik(V1, Phi1) - ops.Eik(V, Phi) - ops.dEik(Vh, SPhi, dVt, dPhi)
    return {
        "e": e, "et": et, "eb": eb,
        "e4_formula_gap": float(np.abs((e[3] - e4_formula)[:, :, 1:-1]).max()),
        "et4_formula_gap": float(np.abs(et[3] - et4_formula)[:, 1:].max()),
        "eb_closed_form_gap": float(np.abs(sum(eb) - eb_exact)[:, 1:-1].max()),
        "N1": N1,
    }


def quadratic_error(ops: Operators, V, Phi, dV, dPhi, ts=(1.0, 0.5, 0.25)) -> dict:
    """
    |N(V + t dV, Phi + t dPhi) - N(V, Phi) - t N'(dV, dPhi)| over the
    interior equation sets for each t, with the fitted log-log slope.
    """
    N0 = ops.N(V, Phi)
    L = ops.dN(V, Phi, dV, dPhi)
    errs = [ops.interior_norm(ops.N(V + t * dV, Phi + t * dPhi) - N0 - t * L) for t in ts]
    slope = float(np.polyfit(np.log(ts), np.log(errs), 1)[0])
    return {"t": list(ts), "errors": errs, "slope": slope}


def _rel(a, b):
    den = max(float(np.abs(b).max()), 1e-300)
    return float(np.abs(a - b).max()) / den


def accumulate_sources(st: IterationState, errs: dict, n: int, sched, sm: GridSmoothers,
                       f_a: np.ndarray, grid: HalfSpaceGrid, ell: float):
    """
    Update accumulated errors with step n and return the sources of step n+1:
        f_{n+1} = (S_{n+1} - S_n)(f_a - E_n) - S_{n+1} e_n,
        g_{n+1} = -S_{n+1} Et_{n+1} + S_n Et_n,
        h_{n+1} = -S~_{n+1} H_{n+1} + S~_n H_n,
    with E_{n+1} = E_n + e_n and H collecting eb - E(et rows 1, 2).
    """
    th_n, th_1 = sched.thetas[n], sched.thetas[n + 1]
    e = sum(errs["e"])
    et = sum(errs["et"])
    eb = sum(errs["eb"])
    E_old, Et_old, H_old = st.E, st.Et, st.H
    E_new = E_old + e
    Et_new = Et_old + et
    H_new = H_old + eb - extension(et[:2], grid, ell)
    f = sm.S(f_a - E_old, th_1) - sm.S(f_a - E_old, th_n) - sm.S(e, th_1)
    g = -sm.Sb(Et_new, th_1) + sm.Sb(Et_old, th_n)
    h = -sm.Sp(H_new, th_1) + sm.Sp(H_old, th_n)
    return E_new, Et_new, H_new, f, g, h


def iterate_once(ops: Operators, st: IterationState, sched, sm: GridSmoothers,
                 ell: float) -> dict:
    """
    One step: modified state, linear solve for (dVt, dphi), the two
    transport problems for dPhi, and the good-unknown inversion for dV.
    """
    n = st.n
    th = sched.thetas[n]
    a = ops.a
    g = ops.grid
    Vh, SPhi, Sphi, SV = modified_state(st.V, st.Phi, st.phi, th, a, sm)
    bg = ops.background(Vh, SPhi)
    constraint = ops.Bnd(Vh, Sphi)[:2]
    prob = LinearizedProblem(bg, st.f, st.g, projector=ops.Q, include_bbar=False)
    sol = march_linearized(prob, diagnostics=True)
    dVt, dphi = sol.U, sol.phi
    Uh = a.U + Vh
    Ps = a.Psi + SPhi
    Eg = extension(st.g[:2], g, ell)
    rhs = Eg + st.h + dVt[:, 1] - g.dx(Ps) * dVt[:, 0] - g.dz(Ps) * dVt[:, 2]
    dPhi = transport_leapfrog(Uh[:, 0], Uh[:, 2], 0.0, rhs, g)
    trace_gap = float(np.abs(dPhi[:, :, 0, :] - dphi[None]).max())
    dPhi[:, :, 0, :] = dphi
    dV = dVt + (dPhi / bg.Psi_y)[:, None] * bg.dU[1]
    return {"dV": dV, "dPhi": dPhi, "dphi": dphi, "dVt": dVt, "Vh": Vh, "SPhi": SPhi,
            "Sphi": Sphi, "SV": SV, "bg": bg, "trace_gap": trace_gap,
            "constraint_max": float(np.abs(constraint[:, 1:]).max()),
            "linear_diag": sol.diagnostics}


@dataclass
class RunResult:
    ledger: list
    converged: bool
    status: str
    initial: dict
    final: dict
    summary: dict


def run(approx: ApproximateSolution, sheet: PlanarVortexSheet | None = None,
        config: NMConfig | None = None, ledger_arrays: bool = False) -> RunResult:
    """
    Execute N steps of the iteration and monitor residual decay.

    Success means the interior and boundary residuals after the last step
    are at most decrease_factor times their values after the first step.
    Raises DivergenceError if the interior residual grows over
    divergence_window consecutive steps.
    """
    cfg = config or NMConfig()
    t0 = time.time()
    if sheet is not None and cfg.check_verdict:
        v = weak_stability_verdict(sheet)
        if not v.stable:
            raise DomainError(f"background verdict {v.verdict.value}; iteration requires WeaklyStable")
    grid = approx.grid
    ell = grid.Ymax / 3 if cfg.ell is None else cfg.ell
    sched = make_schedule(cfg.theta0, cfg.N + 1)
    n_id = cfg.N // 2 if cfg.identity_step is None else cfg.identity_step
    scale = GridSmoothers.auto_scale(grid, sched.thetas[n_id]) if cfg.scale == "auto" else float(cfg.scale)
    sm = GridSmoothers(grid, scale, ell)
    ops = Operators(approx)
    zeros = np.zeros_like(approx.U)
    zphi = np.zeros((2,) + grid.shape)
    zb = np.zeros(grid.bshape)
    R0 = ops.interior_norm(ops.interior_residual(zeros, zphi))
    B0 = ops.boundary_norm(ops.Bnd(zeros, zb))
    initial = {"interior": R0, "boundary": B0}
    if R0 == 0.0 and B0 == 0.0:
        return RunResult([], True, "converged_at_step_0", initial, initial,
                         {"steps": 0, "scale": scale, "wall_time": time.time() - t0})

    f0 = sm.S(approx.f_a, sched.thetas[0])
    st = IterationState(zeros.copy(), zphi.copy(), zb.copy(), zeros.copy(),
                        np.zeros((3,) + grid.bshape), zphi.copy(),
                        f0, np.zeros((3,) + grid.bshape), zphi.copy(),
                        f0.copy(), np.zeros((3,) + grid.bshape), zphi.copy())
    ledger = []
    growth = 0
    prev = None
    status = "completed"
    for n in range(cfg.N):
        th = float(sched.thetas[n])
        step = iterate_once(ops, st, sched, sm, ell)
        errs = compute_errors(ops, st, step)
        V1 = st.V + step["dV"]
        Phi1 = st.Phi + step["dPhi"]
        phi1 = st.phi + step["dphi"]
        Phi1[:, :, 0, :] = phi1
        Rint = ops.interior_residual(V1, Phi1)
        Rb = ops.Bnd(V1, phi1)
        # predicted residuals from the bookkeeping identities
        e_n = sum(errs["e"])
        pred_int = sm.S(approx.f_a - st.E, th) - (approx.f_a - st.E) + e_n
        pred_b = st.Et - sm.Sb(st.Et, th) + sum(errs["et"])
        E, Et, H, f, g, h = accumulate_sources(st, errs, n, sched, sm, approx.f_a, grid, ell)
        fsum = st.fsum + f
        gsum = st.gsum + g
        hsum = st.hsum + h
        th1 = float(sched.thetas[n + 1])
        tele_f = _rel(fsum + sm.S(E, th1), sm.S(approx.f_a, th1))
        tele_g = _rel(gsum, -sm.Sb(Et, th1))
        tele_h = _rel(hsum, -sm.Sp(H, th1))
        norms = _H_norms(sm, step["dV"], step["dPhi"])
        delta_n = float(sched.deltas[n])
        entry = {
            "n": n, "theta": th, "Delta": delta_n,
            "smoother_identity": sm.is_identity(th),
            "increment_norms": norms,
            "dphi_max": float(np.abs(step["dphi"]).max()),
            "normalized_increments": {s: norms[s] * th ** (cfg.alpha + 1 - s) / delta_n for s in norms},
            "interior_residual": ops.interior_norm(Rint),
            "boundary_residual": ops.boundary_norm(Rb),
            "interior_residual_l2": ops.interior_norm(Rint, "rms"),
            "eikonal_residual": float(np.abs(ops.Eik(V1, Phi1)[:, 1:-1]).max()),
            "interior_identity_gap": ops.interior_norm(Rint - pred_int),
            "boundary_identity_gap": ops.boundary_norm(Rb - pred_b),
            "errors": {f"e{j + 1}": float(np.abs(errs["e"][j][:, :, 1:-1]).max()) for j in range(4)},
            "errors_boundary": {f"et{j + 1}": float(np.abs(errs["et"][j][:, 1:]).max()) for j in range(4)},
            "errors_eikonal": {f"eb{j + 1}": float(np.abs(errs["eb"][j][:, 1:-1]).max()) for j in range(4)},
            "e4_formula_gap": errs["e4_formula_gap"],
            "et4_formula_gap": errs["et4_formula_gap"],
            "eb_closed_form_gap": errs["eb_closed_form_gap"],
            "sources": {"f": float(np.abs(st.f).max()), "g": float(np.abs(st.g).max()),
                        "h": float(np.abs(st.h).max()),
                        "h_trace": float(np.abs(st.h[:, :, 0, :]).max())},
            "telescoping": {"f": tele_f, "g": tele_g, "h": tele_h},
            "modified_state_constraint": step["constraint_max"],
            "trace_gap": step["trace_gap"],
            "linear_solve": step["linear_diag"],
        }
        if ledger_arrays:
            entry["arrays"] = {"dV": step["dV"], "dPhi": step["dPhi"], "dphi": step["dphi"],
                               "e": errs["e"], "et": errs["et"], "eb": errs["eb"]}
        ledger.append(entry)
        st = IterationState(V1, Phi1, phi1, E, Et, H, f, g, h, fsum, gsum, hsum, n + 1)
        r = entry["interior_residual"]
        if prev is not None and r > prev:
            growth += 1
            if growth >= cfg.divergence_window:
                raise DivergenceError(f"residual grew over {growth} consecutive steps", ledger)
        else:
            growth = 0
        prev = r
    first, last = ledger[0], ledger[-1]
    ok = (last["interior_residual"] <= cfg.decrease_factor * first["interior_residual"]
          and last["boundary_residual"] <= cfg.decrease_factor * first["boundary_residual"])
    final = {"interior": last["interior_residual"], "boundary": last["boundary_residual"]}
    summary = {
        "steps": len(ledger), "scale": scale, "identity_step": n_id,
        "first": {"interior": first["interior_residual"], "boundary": first["boundary_residual"]},
        "final": final,
        "interior_ratio": last["interior_residual"] / max(first["interior_residual"], 1e-300),
        "boundary_ratio": last["boundary_residual"] / max(first["boundary_residual"], 1e-300),
        "max_telescoping": max(max(e["telescoping"].values()) for e in ledger),
        "max_constraint": max(e["modified_state_constraint"] for e in ledger),
        "max_trace_gap": max(e["trace_gap"] for e in ledger),
        "decay_fit": decay_fit(ledger, cfg.alpha),
        "wall_time": time.time() - t0,
    }
    return RunResult(ledger, bool(ok), "converged" if ok else status, initial, final, summary)


def decay_fit(ledger, alpha: float) -> dict:
    """Log-log slope of the normalized increments against theta_k, per order s."""
    out = {}
    if len(ledger) < 2:
        return out
    th = np.log([e["theta"] for e in ledger])
    for s in ledger[0]["normalized_increments"]:
        q = np.array([e["normalized_increments"][s] for e in ledger])
        mask = q > 0
        if mask.sum() >= 2:
            out[str(s)] = float(np.polyfit(th[mask], np.log(q[mask]), 1)[0])
    return out


# ---------------------------------------------------------------
# Reference data


def bump(z, Z):
    """Smooth periodic bump with maximum 1."""
    return 0.25 * (1 - np.cos(2 * np.pi * z / Z)) ** 2


def reference_perturbation(grid: HalfSpaceGrid, delta: float, ell: float | None = None):
    """
    Small initial perturbation of size delta: front bump psi0 and bumps in
    u, w, p (common p trace on both sides).  Returns (U0_tilde, psi0).
    """
    ell = grid.Ymax / 3 if ell is None else ell
    z = grid.z
    prof = chi(grid.y / ell)[:, None]
    Ut = np.zeros((2, 4, grid.Ny, grid.Nz))
    Ut[0, 0] = 0.5 * delta * prof * bump(z + 0.1 * grid.Z, grid.Z)
    Ut[1, 0] = -0.4 * delta * prof * bump(z - 0.2 * grid.Z, grid.Z)
    Ut[0, 2] = 0.3 * delta * prof * bump(z + 0.25 * grid.Z, grid.Z)
    Ut[1, 2] = -0.2 * delta * prof * bump(z, grid.Z)
    Ut[:, 3] = 0.2 * delta * prof * bump(z - 0.15 * grid.Z, grid.Z)
    psi0 = delta * bump(z, grid.Z)
    return Ut, psi0


def default_grid() -> HalfSpaceGrid:
    return HalfSpaceGrid(X=1.0, Nx=32, Ymax=1.5, Ny=16, Z=1.0, Nz=16)
