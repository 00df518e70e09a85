"""
Gas model, state algebra and the symmetric flux matrices of steady
isentropic Euler flow in three dimensions.

States are U = (u, v, w, p) with the density recovered from the
pressure through the polytropic law p = K rho**gamma.  Array helpers
accept a leading component axis of length 4 and arbitrary trailing grid
axes, and work for complex input (complex-step differentiation).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class DomainError(ValueError):
    """Raised when an input lies outside the domain of an operation."""


@dataclass(frozen=True)
class GasModel:
    """Polytropic pressure law p = K rho**gamma."""

    K: float = 1.0
    gamma: float = 2.0
    kind: str = "polytropic"

    def __post_init__(self):
        if self.kind != "polytropic":
            raise DomainError(f"unsupported gas law {self.kind!r}")
        if not self.K > 0:
            raise DomainError("K must be positive")
        if not self.gamma > 1:
            raise DomainError("gamma must exceed 1")

    def pressure_from_density(self, rho):
        return self.K * rho ** self.gamma

    def density_from_pressure(self, p):
        return (p / self.K) ** (1.0 / self.gamma)

    def dp_drho(self, rho):
        return self.gamma * self.K * rho ** (self.gamma - 1.0)

    def sound_speed_sq(self, p):
        # c^2 = p'(rho) = gamma p / rho
        return self.gamma * p / self.density_from_pressure(p)

    def pressure_for_sound_speed(self, c: float) -> float:
        """Pressure at which the sonic speed equals ``c``."""
        rho = (c * c / (self.gamma * self.K)) ** (1.0 / (self.gamma - 1.0))
        return float(self.pressure_from_density(rho))


@dataclass(frozen=True)
class FlowState:
    u: float
    v: float
    w: float
    p: float
    gas: GasModel = field(default_factory=GasModel)

    def __post_init__(self):
        if not self.p > 0:
            raise DomainError("pressure must be positive")

    @property
    def rho(self) -> float:
        return float(self.gas.density_from_pressure(self.p))

    @property
    def c(self) -> float:
        return float(np.sqrt(self.gas.sound_speed_sq(self.p)))

    @property
    def supersonic_x(self) -> bool:
        return self.u > self.c

    def as_array(self) -> np.ndarray:
        return np.array([self.u, self.v, self.w, self.p], dtype=float)

    @classmethod
    def from_array(cls, U, gas: GasModel) -> "FlowState":
        u, v, w, p = (float(a) for a in U)
        return cls(u, v, w, p, gas)


@dataclass(frozen=True)
class JumpResidual:
    rh: np.ndarray
    mass_flux_plus: float
    mass_flux_minus: float
    pressure_jump: float
    tol: float = 1e-12

    @property
    def is_contact(self) -> bool:
        return (abs(self.mass_flux_plus) <= self.tol
                and abs(self.mass_flux_minus) <= self.tol
                and abs(self.pressure_jump) <= self.tol)


def sonic_speed(state: FlowState, gas: GasModel | None = None) -> float:
    """
    Sonic speed c = sqrt(p'(rho)) at the density matching the state pressure.

    Raises DomainError for non-positive pressure.
    """
    gas = gas or state.gas
    if not state.p > 0:
        raise DomainError("pressure must be positive")
    rho = gas.density_from_pressure(state.p)
    return float(np.sqrt(gas.dp_drho(rho)))


# ---------------------------------------------------------------
# Flux matrices on arrays


def _coefficients(U, gas: GasModel):
    u, v, w, p = U[0], U[1], U[2], U[3]
    rho = gas.density_from_pressure(p)
    inv_rc2 = 1.0 / (gas.gamma * p)  # 1/(rho c^2)
    return u, v, w, p, rho, inv_rc2


def flux_matrix_arrays(U, gas: GasModel):
    """
    A1, A2, A3 evaluated on a field U of shape (4, ...).

    Returns three arrays of shape (..., 4, 4).
    """
    U = np.asarray(U)
    u, v, w, p, rho, inv_rc2 = _coefficients(U, gas)
    shape = U.shape[1:] + (4, 4)
    mats = []
    for k, vel in enumerate((u, v, w)):
        A = np.zeros(shape, dtype=np.result_type(U, float))
        for i in range(3):
            A[..., i, i] = rho * vel
        A[..., k, 3] = 1.0
        A[..., 3, k] = 1.0
        A[..., 3, 3] = vel * inv_rc2
        mats.append(A)
    return tuple(mats)


def flux_matrix_jvp(U, dU, gas: GasModel):
    """
    Directional derivatives (grad A_k(U) . dU) for k = 1, 2, 3.

    U and dU have shape (4, ...); the outputs have shape (..., 4, 4).
    """
    U = np.asarray(U)
    dU = np.asarray(dU)
    u, v, w, p, rho, inv_rc2 = _coefficients(U, gas)
    drho = rho * inv_rc2 * dU[3]  # rho'(p) = 1/c^2 = rho/(gamma p)
    dinv = -inv_rc2 / p * dU[3]
    shape = np.broadcast_shapes(U.shape[1:], dU.shape[1:]) + (4, 4)
    out = []
    for k, vel in enumerate((u, v, w)):
        dvel = dU[k]
        A = np.zeros(shape, dtype=np.result_type(U, dU, float))
        diag = rho * dvel + vel * drho
        for i in range(3):
            A[..., i, i] = diag
        A[..., 3, 3] = dvel * inv_rc2 + vel * dinv
        out.append(A)
    return tuple(out)


def flux_matrices(state: FlowState, gas: GasModel | None = None):
    """Symmetric matrices A1, A2, A3 of the steady system at one state."""
    gas = gas or state.gas
    if not state.rho > 0:
        raise DomainError("density must be positive")
    return flux_matrix_arrays(state.as_array(), gas)


def check_hyperbolic_x(state: FlowState, gas: GasModel | None = None,
                       rtol: float = 1e-12) -> bool:
    """True iff A1 is positive definite (smallest eigenvalue above rtol*|A1|)."""
    A1, _, _ = flux_matrices(state, gas)
    lam = np.linalg.eigvalsh(A1)
    return bool(lam[0] > rtol * np.abs(lam).max())


def rh_residual(Uplus: FlowState, Uminus: FlowState, psi_x: float, psi_z: float,
                gas: GasModel | None = None, tol: float = 1e-12) -> JumpResidual:
    """
    Rankine-Hugoniot residual across the front y = psi(x, z).

    The flux combination psi_x F1 - F2 + psi_z F3 of the conserved mass and
    momentum is differenced across the front (plus minus minus).
    """
    gas = gas or Uplus.gas

    def flux(s: FlowState):
        rho = s.rho
        U = np.array([s.u, s.v, s.w])
        F = np.empty((3, 4))
        for k in range(3):
            F[k, 0] = rho * U[k]
            F[k, 1:] = rho * U[k] * U
            F[k, 1 + k] += s.p
        return psi_x * F[0] - F[1] + psi_z * F[2]

    def mass(s: FlowState):
        return s.rho * (psi_x * s.u - s.v + psi_z * s.w)

    return JumpResidual(
        rh=flux(Uplus) - flux(Uminus),
        mass_flux_plus=float(mass(Uplus)),
        mass_flux_minus=float(mass(Uminus)),
        pressure_jump=float(Uplus.p - Uminus.p),
        tol=tol,
    )
