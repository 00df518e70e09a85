"""
Effective linearized operators around a two-phase background.

Conventions: two-phase vector fields have shape (2, 4, *S) with side
index 0 = plus (y > 0 before flattening, background U_r) and 1 = minus
(U_l); scalar two-phase fields have shape (2, *S); matrix fields have
shape (2, 4, 4, *S).  Spatial shape S is (NxL, Ny, Nz) of a
HalfSpaceGrid and all derivatives use its stencils.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .euler_core import DomainError, GasModel, flux_matrix_arrays, flux_matrix_jvp
from .geometry import DegeneracyError, HalfSpaceGrid


def mv(M, V):
    """Matrix field times vector field: (2,4,4,*S) x (2,4,*S) -> (2,4,*S)."""
    return np.einsum("sij...,sj...->si...", M, V)


def mm(A, B):
    return np.einsum("sij...,sjk...->sik...", A, B)


def _to_first(mats):
    # (..., 4, 4) with leading side axis moved after -> (2, 4, 4, *S)
    return np.moveaxis(np.moveaxis(mats, -2, 1), -1, 2)


def flux_fields(U, gas: GasModel):
    """A1, A2, A3 on a two-phase field U (2, 4, *S), each (2, 4, 4, *S)."""
    Uc = np.moveaxis(np.asarray(U), 1, 0)
    return tuple(_to_first(A) for A in flux_matrix_arrays(Uc, gas))


def flux_jvp_fields(U, dU, gas: GasModel):
    Uc = np.moveaxis(np.asarray(U), 1, 0)
    dUc = np.moveaxis(np.asarray(dU), 1, 0)
    return tuple(_to_first(A) for A in flux_matrix_jvp(Uc, dUc, gas))


class Background:
    """
    Frozen background (U_{r,l}, Psi_{r,l}) on a grid with cached
    derivatives and coefficient matrices.
    """

    def __init__(self, U, Psi, grid: HalfSpaceGrid, gas: GasModel, kappa0: float = 0.0):
        self.U = np.asarray(U)
        self.Psi = np.asarray(Psi)
        self.grid = grid
        self.gas = gas
        if self.U.shape != (2, 4) + grid.shape or self.Psi.shape != (2,) + grid.shape:
            raise DomainError("background shapes do not match the grid")
        sgn = self.Psi_y * np.array([1.0, -1.0]).reshape(2, 1, 1, 1)
        if np.min(sgn.real) <= kappa0:
            raise DegeneracyError("front slope d_y Psi degenerates")

    @cached_property
    def Psi_x(self):
        return self.grid.dx(self.Psi)

    @cached_property
    def Psi_y(self):
        return self.grid.dy(self.Psi)

    @cached_property
    def Psi_z(self):
        return self.grid.dz(self.Psi)

    @cached_property
    def dU(self):
        g = self.grid
        return g.dx(self.U), g.dy(self.U), g.dz(self.U)

    @cached_property
    def A(self):
        return flux_fields(self.U, self.gas)

    @cached_property
    def Ab(self):
        A1, A2, A3 = self.A
        px, py, pz = (q[:, None, None] for q in (self.Psi_x, self.Psi_y, self.Psi_z))
        return (A2 - px * A1 - pz * A3) / py

    def C_apply(self, V):
        """C(U, grad U, grad Psi) V for a two-phase field V."""
        dA1, dA2, dA3 = flux_jvp_fields(self.U, V, self.gas)
        Ux, Uy, Uz = self.dU
        px, py, pz = (q[:, None, None] for q in (self.Psi_x, self.Psi_y, self.Psi_z))
        Mb = (dA2 - px * dA1 - pz * dA3) / py
        return mv(dA1, Ux) + mv(dA3, Uz) + mv(Mb, Uy)

    @cached_property
    def C_matrix(self):
        cols = []
        for k in range(4):
            e = np.zeros_like(self.U)
            e[:, k] = 1.0
            cols.append(self.C_apply(e))
        return np.stack(cols, axis=2)

    def eikonal_residual(self):
        u, v, w = self.U[:, 0], self.U[:, 1], self.U[:, 2]
        return u * self.Psi_x - v + w * self.Psi_z


def planar_background(sheet, grid: HalfSpaceGrid) -> Background:
    """Constant states of a planar sheet with Psi^+- = +-y."""
    U = np.zeros((2, 4) + grid.shape)
    U[0, 0], U[0, 2], U[0, 3] = sheet.u_r, sheet.w_r, sheet.p_bar
    U[1, 0], U[1, 2], U[1, 3] = sheet.u_l, sheet.w_l, sheet.p_bar
    _, Y, _ = grid.mesh()
    Psi = np.stack([Y, -Y])
    return Background(U, Psi, grid, sheet.gas)


# ---------------------------------------------------------------
# Good unknowns and the interior operator


def good_unknown(U_pert, Phi, bg: Background):
    """U_+- = U^+- - (Phi^+- / d_y Psi) d_y U_{r,l}."""
    return U_pert - (Phi / bg.Psi_y)[:, None] * bg.dU[1]


def from_good_unknown(U_good, Phi, bg: Background):
    return U_good + (Phi / bg.Psi_y)[:, None] * bg.dU[1]


def apply_L(V, bg: Background):
    """L(U, grad Psi) V = A1 d_x V + A_b d_y V + A3 d_z V."""
    A1, _, A3 = bg.A
    g = bg.grid
    return mv(A1, g.dx(V)) + mv(bg.Ab, g.dy(V)) + mv(A3, g.dz(V))


def apply_effective_operator(V, bg: Background, include_C: bool = True):
    """L'_e V = L V + C V."""
    out = apply_L(V, bg)
    if include_C:
        out = out + bg.C_apply(V)
    return out


def boundary_matrix_rank(bg: Background, rel_tol: float = 1e-6) -> dict:
    """
    Numerical rank of A_b at y = 0 (physical levels).

    Returns dict with min/max rank, the largest third singular value relative
    to sigma_max and an ok flag (rank 2 everywhere).
    """
    Ab = bg.Ab[:, :, :, 1:, 0, :]                      # (2,4,4,nx,Nz)
    Ab = np.moveaxis(np.moveaxis(Ab, 1, -1), 1, -1)    # (2,nx,Nz,4,4)
    sv = np.linalg.svd(Ab.real, compute_uv=False)
    rank = np.sum(sv > rel_tol * sv[..., :1], axis=-1)
    gap = sv[..., 2] / sv[..., 0]
    return {"min_rank": int(rank.min()), "max_rank": int(rank.max()),
            "max_sigma3_rel": float(gap.max()),
            "min_sigma2_rel": float((sv[..., 1] / sv[..., 0]).min()),
            "ok": bool(rank.min() == 2 and rank.max() == 2)}


# ---------------------------------------------------------------
# Boundary operator


@dataclass
class BoundaryOperatorData:
    b_underline: np.ndarray   # (3, 2, nx, Nz)
    b_bar: np.ndarray         # (3, nx, Nz)
    M_underline: np.ndarray   # (3, 8, nx, Nz)

    @property
    def M_reduced(self):
        """Columns of M acting on the y-normal components (2, 4, 6, 8)."""
        return self.M_underline[:, [1, 3, 5, 7]]


def assemble_boundary_operator(bg: Background) -> BoundaryOperatorData:
    U0 = bg.U[..., 0, :]              # (2,4,nx,Nz)
    psi_x = bg.Psi_x[0, :, 0, :]
    psi_z = bg.Psi_z[0, :, 0, :]
    nx, nz = psi_x.shape
    b = np.zeros((3, 2, nx, nz), dtype=U0.dtype)
    b[0, 0], b[0, 1] = U0[0, 0], U0[0, 2]
    b[1, 0], b[1, 1] = U0[1, 0], U0[1, 2]
    M = np.zeros((3, 8, nx, nz), dtype=np.result_type(psi_x, float))
    M[0, 0], M[0, 1], M[0, 2] = psi_x, -1.0, psi_z
    M[1, 4], M[1, 5], M[1, 6] = psi_x, -1.0, psi_z
    M[2, 3], M[2, 7] = 1.0, -1.0
    dyU = bg.dU[1][..., 0, :] / bg.Psi_y[:, None, ..., 0, :]
    stacked = np.concatenate([dyU[0], dyU[1]], axis=0)  # (8,nx,Nz)
    bbar = np.einsum("ij...,j...->i...", M, stacked)
    return BoundaryOperatorData(b, bbar, M)


def apply_boundary(B: BoundaryOperatorData, U_trace, phi, grid: HalfSpaceGrid,
                   include_bbar: bool = True):
    """
    B'_e(U, phi) = b grad phi + b_bar phi + M U|_{y=0}.

    U_trace: (2, 4, nx, Nz) or a full field (its y = 0 slice is taken).
    """
    U_trace = np.asarray(U_trace)
    if U_trace.ndim == 5:
        U_trace = U_trace[..., 0, :]
    stacked = np.concatenate([U_trace[0], U_trace[1]], axis=0)
    px, pz = grid.dx_b(phi), grid.dz_b(phi)
    out = B.b_underline[:, 0] * px + B.b_underline[:, 1] * pz
    out = out + np.einsum("ij...,j...->i...", B.M_underline, stacked)
    if include_bbar:
        out = out + B.b_bar * phi
    return out


# ---------------------------------------------------------------
# Characteristic diagonalization


def T_inverse(psi_x, psi_z):
    """T(grad Psi)^{-1} as a (4, 4, ...) field."""
    psi_x = np.asarray(psi_x)
    psi_z = np.asarray(psi_z)
    br = np.sqrt(1 + psi_x ** 2 + psi_z ** 2)
    one = np.ones_like(br)
    zero = np.zeros_like(br)
    return np.array([
        [one, zero, -psi_x, -psi_x],
        [psi_x, psi_z, one, one],
        [zero, one, -psi_z, -psi_z],
        [zero, zero, br, -br],
    ])


def T_matrix(psi_x, psi_z):
    """Closed-form inverse of T_inverse."""
    psi_x = np.asarray(psi_x)
    psi_z = np.asarray(psi_z)
    b2 = 1 + psi_x ** 2 + psi_z ** 2
    br = np.sqrt(b2)
    zero = np.zeros_like(br)
    return np.array([
        [(1 + psi_z ** 2) / b2, psi_x / b2, -psi_x * psi_z / b2, zero],
        [-psi_x * psi_z / b2, psi_z / b2, (1 + psi_x ** 2) / b2, zero],
        [-psi_x / (2 * b2), 1 / (2 * b2), -psi_z / (2 * b2), 1 / (2 * br)],
        [-psi_x / (2 * b2), 1 / (2 * b2), -psi_z / (2 * b2), -1 / (2 * br)],
    ])


def A0_diag(psi_x, psi_y, psi_z):
    br = np.sqrt(1 + psi_x ** 2 + psi_z ** 2)
    one = np.ones_like(br)
    return np.array([one, one, psi_y / br, -psi_y / br])


class Diagonalizer:
    """T, T^{-1}, A0 and the transformed coefficients for a background."""

    def __init__(self, bg: Background):
        self.bg = bg
        px, pz = bg.Psi_x, bg.Psi_z
        self.Tinv = np.moveaxis(T_inverse(px, pz), 2, 0)   # (2,4,4,*S)
        self.T = np.moveaxis(T_matrix(px, pz), 2, 0)
        self.A0 = np.moveaxis(A0_diag(px, bg.Psi_y, pz), 1, 0)  # (2,4,*S)

    def to_W(self, U):
        return mv(self.T, U)

    def to_U(self, W):
        return mv(self.Tinv, W)

    def _A0T(self, M):
        return self.A0[:, :, None] * mm(self.T, mm(M, self.Tinv))

    @cached_property
    def A1r(self):
        return self._A0T(self.bg.A[0])

    @cached_property
    def A3r(self):
        return self._A0T(self.bg.A[2])

    @cached_property
    def Lambda(self):
        """A0 T A_b T^{-1}; equals diag(0, 0, 1, 1) under the eikonal constraint."""
        return self._A0T(self.bg.Ab)

    @cached_property
    def Cr(self):
        g, bg = self.bg.grid, self.bg
        A1, _, A3 = bg.A
        Ti = self.Tinv
        inner = mm(A1, g.dx(Ti)) + mm(A3, g.dz(Ti)) + mm(bg.Ab, g.dy(Ti)) \
            + mm(bg.C_matrix, Ti)
        return mm(self.T, inner)

    @cached_property
    def A0Cr(self):
        return self.A0[:, :, None] * self.Cr

    def apply_pb(self, W):
        """A1^r d_x W + Lambda d_y W + A3^r d_z W + A0 C^r W."""
        g = self.bg.grid
        return mv(self.A1r, g.dx(W)) + mv(self.Lambda, g.dy(W)) + mv(self.A3r, g.dz(W)) \
            + mv(self.A0Cr, W)

    def source_to_F(self, f):
        return self.A0 * mv(self.T, f)


def diagonalize(U_good, bg: Background):
    return Diagonalizer(bg).to_W(U_good)


def undiagonalize(W, bg: Background):
    return Diagonalizer(bg).to_U(W)


# ---------------------------------------------------------------
# Vorticities and normal-derivative reconstruction


@dataclass
class VorticityPair:
    xi_plus: np.ndarray
    zeta_plus: np.ndarray
    xi_minus: np.ndarray
    zeta_minus: np.ndarray

    @property
    def xi(self):
        return np.stack([self.xi_plus, self.xi_minus])

    @property
    def zeta(self):
        return np.stack([self.zeta_plus, self.zeta_minus])

    @classmethod
    def from_arrays(cls, xi, zeta):
        return cls(xi[0], zeta[0], xi[1], zeta[1])


def vorticity_fields(U_good, bg: Background) -> VorticityPair:
    """
    xi = (d_x - Psi_x/Psi_y d_y) v - d_y u / Psi_y,
    zeta = (d_z - Psi_z/Psi_y d_y) v - d_y w / Psi_y, per side.
    """
    g = bg.grid
    u, v, w = U_good[:, 0], U_good[:, 1], U_good[:, 2]
    vy = g.dy(v)
    xi = g.dx(v) - bg.Psi_x / bg.Psi_y * vy - g.dy(u) / bg.Psi_y
    zeta = g.dz(v) - bg.Psi_z / bg.Psi_y * vy - g.dy(w) / bg.Psi_y
    return VorticityPair.from_arrays(xi, zeta)


def vorticity_transport_residual(pair: VorticityPair, U_good, bg: Background, f) -> dict:
    """
    Residual of rho (u d_x + w d_z) xi - [(d_x - Psi_x/Psi_y d_y) f~_2 - d_y f~_1 / Psi_y]
    and the zeta analogue, with f~ = f - C U.

    The lower-order coupling terms that vanish at a planar background with
    flat fronts are not modeled, so the residual is a consistency monitor
    whose size is the discretization error there.  Norms exclude the
    ghost level and the x end levels.
    """
    g = bg.grid
    ft = f - bg.C_apply(U_good)
    rho = bg.gas.density_from_pressure(bg.U[:, 3])
    uu, ww = bg.U[:, 0], bg.U[:, 2]
    px, py, pz = bg.Psi_x, bg.Psi_y, bg.Psi_z
    out = {}
    for name, q, d_t, i_t, p_t in (("xi", pair.xi, g.dx, 0, px), ("zeta", pair.zeta, g.dz, 2, pz)):
        lhs = rho * (uu * g.dx(q) + ww * g.dz(q))
        rhs = d_t(ft[:, 1]) - p_t / py * g.dy(ft[:, 1]) - g.dy(ft[:, i_t]) / py
        r = (lhs - rhs)[:, 2:-1]
        out[name] = r
        out[name + "_max"] = float(np.abs(r).max())
    return out


def S_matrix(bg: Background):
    """Coefficient of (xi, zeta) in the d_y W representation, (2, 4, 2, *S)."""
    px, py, pz = bg.Psi_x, bg.Psi_y, bg.Psi_z
    b2 = 1 + px ** 2 + pz ** 2
    f = py / b2
    z = np.zeros_like(px)
    return np.array([[-(1 + pz ** 2) * f, px * pz * f],
                     [px * pz * f, -(1 + px ** 2) * f],
                     [z, z], [z, z]]).transpose(2, 0, 1, *range(3, 3 + px.ndim - 1))


def reconstruct_normal_derivatives(W, pair: VorticityPair, bg: Background, F,
                                   diag: Diagonalizer | None = None):
    """
    d_y W from tangential derivatives, the vorticities and the source.

    Rows 1-2 solve the 2x2 system obtained from the vorticity definitions
    (matrix [[1+Psi_x^2, Psi_x Psi_z], [Psi_x Psi_z, 1+Psi_z^2]]); rows 3-4
    are the characteristic rows of the diagonalized equations.  The result
    is affine in (W, F, xi, zeta) and linear when W = 0 is allowed.
    """
    g = bg.grid
    D = diag or Diagonalizer(bg)
    px, py, pz = bg.Psi_x, bg.Psi_y, bg.Psi_z
    Ti = D.Tinv
    v = mv(Ti, W)[:, 1]
    tW = mv(g.dy(Ti), W)                       # (d_y T^{-1}) W
    R1 = py * (g.dx(v) - pair.xi) - tW[:, 0] - px * tW[:, 1]
    R2 = py * (g.dz(v) - pair.zeta) - tW[:, 2] - pz * tW[:, 1]
    b2 = 1 + px ** 2 + pz ** 2
    dyW = np.empty_like(W)
    dyW[:, 0] = ((1 + pz ** 2) * R1 - px * pz * R2) / b2
    dyW[:, 1] = ((1 + px ** 2) * R2 - px * pz * R1) / b2
    rest = F - mv(D.A1r, g.dx(W)) - mv(D.A3r, g.dz(W)) - mv(D.A0Cr, W)
    dyW[:, 2:] = rest[:, 2:]
    return dyW
