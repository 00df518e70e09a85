"""
Half-space grids, discrete stencils, front functions Psi^+- and the
eikonal transport u Psi_x - v + w Psi_z = 0.

Layout of marched fields: the x axis has Nx + 2 levels, index 0 is a
ghost level at x = -hx and index i holds x = (i - 1) hx.  y runs over
[0, Ymax] with Ny points (y = 0 at index 0); z is periodic on [0, Z).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .euler_core import DomainError
from .smoothing import chi, chi_prime


class StepSizeError(DomainError):
    pass


class DegeneracyError(DomainError):
    pass


@dataclass(frozen=True)
class HalfSpaceGrid:
    X: float = 1.0
    Nx: int = 32
    Ymax: float = 1.5
    Ny: int = 16
    Z: float = 1.0
    Nz: int = 16

    def __post_init__(self):
        if self.X <= 0 or self.Ymax <= 0 or self.Z <= 0:
            raise DomainError("grid extents must be positive")
        if min(self.Nx, self.Ny, self.Nz) < 3:
            raise DomainError("grid needs at least three points per axis")

    @property
    def hx(self) -> float:
        return self.X / self.Nx

    @property
    def hy(self) -> float:
        return self.Ymax / (self.Ny - 1)

    @property
    def hz(self) -> float:
        return self.Z / self.Nz

    @property
    def NxL(self) -> int:
        return self.Nx + 2

    @property
    def x(self) -> np.ndarray:
        """x coordinates of all levels including the ghost."""
        return (np.arange(self.NxL) - 1) * self.hx

    @property
    def y(self) -> np.ndarray:
        return np.arange(self.Ny) * self.hy

    @property
    def z(self) -> np.ndarray:
        return np.arange(self.Nz) * self.hz

    @property
    def shape(self) -> tuple:
        return (self.NxL, self.Ny, self.Nz)

    @property
    def bshape(self) -> tuple:
        return (self.NxL, self.Nz)

    def mesh(self):
        return np.meshgrid(self.x, self.y, self.z, indexing="ij")

    def refined(self, factor: int = 2) -> "HalfSpaceGrid":
        return HalfSpaceGrid(self.X, self.Nx * factor, self.Ymax, (self.Ny - 1) * factor + 1,
                             self.Z, self.Nz * factor)

    def to_dict(self) -> dict:
        return {"X": self.X, "Nx": self.Nx, "Ymax": self.Ymax, "Ny": self.Ny,
                "Z": self.Z, "Nz": self.Nz}

    # -----------------------------------------------------------
    # Stencils.  Interior axes are (x, y, z) = (-3, -2, -1); boundary
    # fields use (x, z) = (-2, -1).

    def dx(self, F, axis: int = -3):
        return d_centered(F, self.hx, axis)

    def dy(self, F, axis: int = -2):
        return d_centered(F, self.hy, axis)

    def dz(self, F, axis: int = -1):
        return (np.roll(F, -1, axis) - np.roll(F, 1, axis)) / (2 * self.hz)

    def dx_b(self, f):
        return self.dx(f, axis=-2)

    def dz_b(self, f):
        return self.dz(f, axis=-1)


def d_centered(F, h: float, axis: int):
    """Centered difference with second-order one-sided closures at both ends."""
    F = np.moveaxis(np.asarray(F), axis, -1)
    out = np.empty_like(F)
    out[..., 1:-1] = (F[..., 2:] - F[..., :-2]) / (2 * h)
    out[..., 0] = (-3 * F[..., 0] + 4 * F[..., 1] - F[..., 2]) / (2 * h)
    out[..., -1] = (3 * F[..., -1] - 4 * F[..., -2] + F[..., -3]) / (2 * h)
    return np.moveaxis(out, -1, axis)


# ---------------------------------------------------------------
# Front fields


@dataclass
class FrontField:
    """
    Psi^+- on the grid with one shared trace psi at y = 0.

    Only the y > 0 rows are stored per side, so the trace identity holds
    by construction.
    """

    psi: np.ndarray                 # (..., nx, Nz)
    plus_rows: np.ndarray           # (..., nx, Ny-1, Nz)
    minus_rows: np.ndarray
    kappa0: float = 0.5
    report: dict = field(default_factory=dict)

    @classmethod
    def from_sides(cls, Psi_plus, Psi_minus, kappa0: float = 0.5, psi=None):
        psi = Psi_plus[..., 0, :] if psi is None else psi
        return cls(np.array(psi), np.array(Psi_plus[..., 1:, :]),
                   np.array(Psi_minus[..., 1:, :]), kappa0)

    @property
    def Psi_plus(self):
        return np.concatenate([self.psi[..., None, :], self.plus_rows], axis=-2)

    @property
    def Psi_minus(self):
        return np.concatenate([self.psi[..., None, :], self.minus_rows], axis=-2)

    @property
    def Psi(self):
        return np.stack([self.Psi_plus, self.Psi_minus])

    def slope_margin(self, hy: float) -> float:
        """min(d_y Psi^+, -d_y Psi^-) - kappa0 with the module stencil."""
        dp = d_centered(self.Psi_plus, hy, -2)
        dm = d_centered(self.Psi_minus, hy, -2)
        return float(min(dp.min(), (-dm).min()) - self.kappa0)


def support_radius(initial_radius: float, X: float, max_slope: float) -> float:
    """Support radius of the extended front perturbation over [0, X]."""
    return float(initial_radius + X * max_slope + 1.0)


def extend_front_initial(psi0, grid: HalfSpaceGrid, ell: float | None = None,
                         slope_bound: float = 5.0 / 6.0, kappa0: float = 0.5):
    """
    Psi_0^+- = +-y + chi(y/ell) psi0(z) on the y-z grid.

    Returns (Psi0_plus, Psi0_minus) of shape (Ny, Nz).  Raises DomainError
    when +-d_y Psi_0^+- >= slope_bound fails, analytically or on the grid.
    """
    psi0 = np.asarray(psi0, dtype=float)
    if psi0.shape != (grid.Nz,):
        raise DomainError("psi0 must be sampled on the z grid")
    ell = grid.Ymax / 3 if ell is None else ell
    y = grid.y[:, None]
    bump = chi(y / ell) * psi0[None, :]
    slope_dev = np.abs(chi_prime(y / ell) / ell * psi0[None, :]).max()
    Pp, Pm = y + bump, -y + bump
    dp = d_centered(Pp, grid.hy, 0)
    dm = d_centered(Pm, grid.hy, 0)
    if 1.0 - slope_dev < slope_bound or dp.min() < slope_bound or (-dm).max() < slope_bound \
            or (-dm).min() < slope_bound:
        raise DomainError(f"psi0 too large: slope bound {slope_bound:.4f} violated")
    return Pp, Pm


def extension(g, grid: HalfSpaceGrid, ell: float | None = None):
    """E g = chi(y/ell) g: lift boundary data (..., nx, Nz) into (..., nx, Ny, Nz)."""
    ell = grid.Ymax / 3 if ell is None else ell
    return np.asarray(g)[..., None, :] * chi(grid.y / ell)[:, None]


# ---------------------------------------------------------------
# Eikonal transport


def _minmod(a, b):
    return np.where(a * b > 0, np.sign(a) * np.minimum(np.abs(a), np.abs(b)), 0.0)


def _upwind_dz(P, w, hz):
    """MUSCL-minmod upwind approximation of d_z P along the last axis."""
    dl = P - np.roll(P, 1, -1)
    dr = np.roll(P, -1, -1) - P
    s = _minmod(dl, dr)
    # reconstructed face values at j+1/2
    left = P + 0.5 * s                       # from cell j
    right = np.roll(P - 0.5 * s, -1, -1)     # from cell j+1
    face = np.where(w >= 0, left, right)
    # w may vary along z: use the upwind face at j-1/2 as well
    face_m = np.where(w >= 0, np.roll(left, 1, -1), P - 0.5 * s)
    return (face - face_m) / hz


def _eikonal_rhs(P, u, v, w, hz):
    return (v - w * _upwind_dz(P, w, hz)) / u


@dataclass
class EikonalReport:
    steps: list
    max_residual: float
    l2_residual: float
    trace_mismatch: float


def solve_eikonal(vel, Psi_init, grid: HalfSpaceGrid, kappa0: float = 0.5,
                  cfl: float = 0.9, check_slopes: bool = True):
    """
    March u Psi_x - v + w Psi_z = 0 in x on each side with SSP-RK2 and
    MUSCL-minmod upwinding in z.  y is a parameter.

    Args:
        vel: velocities (2, 3, Nx+1, Ny, Nz) as (u, v, w) per side, on the
            physical levels x_0 .. x_Nx (no ghost).
        Psi_init: (2, Ny, Nz) initial fronts.

    Returns:
        (FrontField on the physical levels, EikonalReport)
    """
    vel = np.asarray(vel, dtype=float)
    u, v, w = vel[:, 0], vel[:, 1], vel[:, 2]
    if np.any(u <= 0):
        raise DomainError("u must be positive for the x-march")
    hx, hz = grid.hx, grid.hz
    courant = hx * np.max(np.abs(w / u)) / hz
    if courant > cfl:
        raise StepSizeError(f"CFL number {courant:.3f} exceeds {cfl}")
    nx = grid.Nx + 1
    Psi = np.empty((2, nx, grid.Ny, grid.Nz))
    Psi[:, 0] = Psi_init
    steps = []
    for k in range(nx - 1):
        P = Psi[:, k]
        k1 = _eikonal_rhs(P, u[:, k], v[:, k], w[:, k], hz)
        P1 = P + hx * k1
        k2 = _eikonal_rhs(P1, u[:, k + 1], v[:, k + 1], w[:, k + 1], hz)
        Psi[:, k + 1] = 0.5 * (P + P1 + hx * k2)
        if check_slopes:
            dp = d_centered(Psi[0, k + 1], grid.hy, 0)
            dm = d_centered(Psi[1, k + 1], grid.hy, 0)
            if dp.min() < kappa0 or (-dm).min() < kappa0:
                raise DegeneracyError(f"slope bound kappa0={kappa0} lost at step {k + 1}")
        steps.append({"step": k + 1, "x": (k + 1) * hx,
                      "max_abs_dpsi": float(np.abs(Psi[:, k + 1] - Psi_init).max())})
    front = FrontField.from_sides(Psi[0], Psi[1], kappa0)
    res = eikonal_residual(vel, front, grid)
    rep = EikonalReport(steps, res["max"], res["l2"],
                        float(np.abs(Psi[0, :, 0] - Psi[1, :, 0]).max()))
    front.report = {"max_residual": rep.max_residual, "l2_residual": rep.l2_residual,
                    "trace_mismatch": rep.trace_mismatch}
    return front, rep


def eikonal_residual(vel, front: FrontField, grid: HalfSpaceGrid) -> dict:
    """
    u Psi_x - v + w Psi_z per side with second-order centered stencils
    (one-sided at the x ends) on the physical levels.

    Returns dict with per-side fields and L2/max norms.
    """
    vel = np.asarray(vel, dtype=float)
    Psi = front.Psi
    px = d_centered(Psi, grid.hx, -3)
    pz = (np.roll(Psi, -1, -1) - np.roll(Psi, 1, -1)) / (2 * grid.hz)
    r = vel[:, 0] * px - vel[:, 1] + vel[:, 2] * pz
    cell = grid.hx * grid.hy * grid.hz
    per_side_l2 = [float(np.sqrt(np.sum(r[i] ** 2) * cell)) for i in range(2)]
    per_side_max = [float(np.abs(r[i]).max()) for i in range(2)]
    return {"field": r, "l2": float(np.hypot(*per_side_l2)), "max": max(per_side_max),
            "l2_per_side": per_side_l2, "max_per_side": per_side_max}


def characteristics_oracle(Psi0_fn, u: float, v: float, w: float, x, y, z):
    """Closed form Psi(x, y, z) = Psi0(y, z - (w/u) x) + (v/u) x for constant data."""
    return Psi0_fn(y, z - (w / u) * x) + (v / u) * x


def oracle_study(grid: HalfSpaceGrid, u: float = 2.0, v: float = 0.3, w: float = 1.0,
                 amp: float = 0.05):
    """
    Constant-coefficient eikonal march against the characteristics closed
    form, Psi0 = +-y + amp sin(2 pi z/Z) e^{-y}, same (u, v, w) on both
    sides so the traces stay shared.

    Returns (front, report, errors) with max, L1 and L2 errors.
    """
    nx = grid.Nx + 1
    x = np.arange(nx) * grid.hx
    k = 2 * np.pi / grid.Z
    vel = np.empty((2, 3, nx, grid.Ny, grid.Nz))
    vel[:, 0], vel[:, 1], vel[:, 2] = u, v, w
    fns = [lambda Y, Zc, s=s: s * Y + amp * np.sin(k * Zc) * np.exp(-Y) for s in (1.0, -1.0)]
    Yg, Zg = np.meshgrid(grid.y, grid.z, indexing="ij")
    init = np.stack([f(Yg, Zg) for f in fns])
    front, rep = solve_eikonal(vel, init, grid)
    X3, Y3, Z3 = np.meshgrid(x, grid.y, grid.z, indexing="ij")
    exact = np.stack([characteristics_oracle(fns[0], u, v, w, X3, Y3, Z3),
                      characteristics_oracle(fns[1], u, v, w, X3, Y3, Z3)])
    err = front.Psi - exact
    cell = grid.hx * grid.hy * grid.hz
    errors = {"max": float(np.abs(err).max()), "l1": float(np.abs(err).sum() * cell),
              "l2": float(np.sqrt((err ** 2).sum() * cell))}
    return front, rep, errors


def transport_leapfrog(a, b, c, r, grid: HalfSpaceGrid, xaxis: int = -3):
    """
    Solve a D_x P + b D_z P + c P = r by the leapfrog march.

    Equation at level k (array index i = k + 1, k = 0..Nx-1) fixes index
    i + 1; indices 0 and 1 hold zero data.  Arrays have the full
    (..., NxL, *, Nz) layout; D_x is centered and D_z periodic centered,
    matching HalfSpaceGrid.dx/dz at the interior levels.  Use xaxis=-2
    for boundary fields.
    """
    a = np.broadcast_to(a, np.shape(r))
    b = np.broadcast_to(b, np.shape(r))
    c = np.broadcast_to(c, np.shape(r))
    P = np.zeros(np.shape(r), dtype=np.result_type(a, b, c, r, float))
    ax = xaxis
    P = np.moveaxis(P, ax, 0)
    A, B, C, R = (np.moveaxis(q, ax, 0) for q in (a, b, c, r))
    h2 = 2 * grid.hx
    for i in range(1, grid.NxL - 1):
        Pz = (np.roll(P[i], -1, -1) - np.roll(P[i], 1, -1)) / (2 * grid.hz)
        P[i + 1] = P[i - 1] + h2 * (R[i] - B[i] * Pz - C[i] * P[i]) / A[i]
    return np.moveaxis(P, 0, ax)
