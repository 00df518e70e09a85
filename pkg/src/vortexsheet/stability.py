"""
Planar vortex-sheet backgrounds and their algebraic weak-stability test.

A planar sheet is two constant states (u, 0, w, p_bar) above and below
y = 0 sharing the pressure.  The verdict runs, in order: the supersonic
test, the non-parallel test, a rigid rotation of the tangential (u, w)
frame that makes w_r w_l < 0, and then the three lines of conditions on
the rotated states.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .euler_core import DomainError, FlowState, GasModel

REL_TOL = 1e-10


class Verdict(str, enum.Enum):
    WEAKLY_STABLE = "WeaklyStable"
    UNSTABLE = "Unstable"
    PARALLEL_UNSTABLE = "ParallelUnstable"
    NOT_SUPERSONIC = "NotSupersonic"


@dataclass(frozen=True)
class PlanarVortexSheet:
    u_r: float
    w_r: float
    u_l: float
    w_l: float
    p_bar: float
    gas: GasModel = field(default_factory=GasModel)

    def __post_init__(self):
        if not self.p_bar > 0:
            raise DomainError("p_bar must be positive")

    @property
    def rho_bar(self) -> float:
        return float(self.gas.density_from_pressure(self.p_bar))

    @property
    def c_bar(self) -> float:
        return float(np.sqrt(self.gas.sound_speed_sq(self.p_bar)))

    @property
    def nondegenerate(self) -> bool:
        return (self.u_r - self.u_l) ** 2 + (self.w_r - self.w_l) ** 2 != 0

    def state(self, side: str) -> FlowState:
        if side in ("r", "+"):
            return FlowState(self.u_r, 0.0, self.w_r, self.p_bar, self.gas)
        if side in ("l", "-"):
            return FlowState(self.u_l, 0.0, self.w_l, self.p_bar, self.gas)
        raise ValueError(f"unknown side {side!r}")

    def swapped(self) -> "PlanarVortexSheet":
        return PlanarVortexSheet(self.u_l, self.w_l, self.u_r, self.w_r, self.p_bar, self.gas)

    def rotated(self, beta: float) -> "PlanarVortexSheet":
        """Sheet seen in the tangential frame rotated by ``beta``."""
        cb, sb = np.cos(beta), np.sin(beta)
        return PlanarVortexSheet(
            cb * self.u_r + sb * self.w_r, -sb * self.u_r + cb * self.w_r,
            cb * self.u_l + sb * self.w_l, -sb * self.u_l + cb * self.w_l,
            self.p_bar, self.gas)

    @classmethod
    def with_sound_speed(cls, u_r, w_r, u_l, w_l, c_bar=1.0, gas: GasModel | None = None):
        gas = gas or GasModel()
        return cls(u_r, w_r, u_l, w_l, gas.pressure_for_sound_speed(c_bar), gas)


@dataclass
class StabilityVerdict:
    verdict: Verdict
    theta_l: float
    theta_r: float
    min_value: float
    condition_flags: dict
    rotation_angle: float = 0.0
    argmin_theta: float = float("nan")
    marginal: bool = False

    @property
    def stable(self) -> bool:
        return self.verdict is Verdict.WEAKLY_STABLE

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict.value,
            "theta_l": self.theta_l,
            "theta_r": self.theta_r,
            "min_value": self.min_value,
            "argmin_theta": self.argmin_theta,
            "rotation_angle": self.rotation_angle,
            "marginal": self.marginal,
            "condition_flags": dict(self.condition_flags),
        }


def check_supersonic(sheet: PlanarVortexSheet) -> bool:
    c = sheet.c_bar
    return bool(sheet.u_r > c and sheet.u_l > c)


def theta_bounds(sheet: PlanarVortexSheet) -> tuple[float, float]:
    if sheet.u_r <= 0 or sheet.u_l <= 0:
        raise DomainError("tangential u must be positive on both sides")
    a_r = float(np.arctan(sheet.w_r / sheet.u_r))
    a_l = float(np.arctan(sheet.w_l / sheet.u_l))
    return min(a_r, a_l), max(a_r, a_l)


def g_theta(sheet: PlanarVortexSheet, theta):
    """The quantity minimized in the second line of the conditions."""
    c2 = sheet.c_bar ** 2
    s, c = np.sin(theta), np.cos(theta)
    dl = sheet.u_l * s - sheet.w_l * c
    dr = sheet.u_r * s - sheet.w_r * c
    with np.errstate(divide="ignore"):
        return c2 / dl ** 2 + c2 / dr ** 2


def min_theta_scan(sheet: PlanarVortexSheet, n_grid: int = 1024,
                   return_curve: bool = False):
    """
    Minimize g over the open interval (theta_l, theta_r).

    Coarse scan on n_grid points of the interval clipped by 1e-9 of its
    width at both ends, then golden-section polishing around the best
    grid point.

    Returns:
        (min_value, argmin_theta) or, with return_curve, also (thetas, g).
    """
    tl, tr = theta_bounds(sheet)
    if not tr > tl:
        raise DomainError("empty theta interval (parallel tangential fields)")
    eps = 1e-9 * (tr - tl)
    th = np.linspace(tl + eps, tr - eps, n_grid)
    g = g_theta(sheet, th)
    i = int(np.argmin(g))
    best_t, best_g = float(th[i]), float(g[i])
    lo, hi = float(th[max(i - 1, 0)]), float(th[min(i + 1, n_grid - 1)])
    t, gv = _golden(lambda t: float(g_theta(sheet, t)), lo, hi)
    if gv < best_g:
        best_t, best_g = t, gv
    if return_curve:
        return best_g, best_t, th, g
    return best_g, best_t


def _golden(f, a: float, b: float, xtol: float = 1e-13):
    """Golden-section search for a unimodal f on [a, b]."""
    r = 0.5 * (np.sqrt(5.0) - 1.0)
    c, d = b - r * (b - a), a + r * (b - a)
    fc, fd = f(c), f(d)
    while b - a > xtol * max(1.0, abs(a) + abs(b)):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - r * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + r * (b - a)
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)


def rotation_for_sign_condition(sheet: PlanarVortexSheet) -> float:
    """
    Rotation angle making w_r w_l < 0 in the rotated tangential frame.

    Zero when the sign condition already holds; otherwise the bisector of
    the two velocity directions, which puts them on opposite sides of the
    new u axis.
    """
    if sheet.w_r * sheet.w_l < 0:
        return 0.0
    a_r = np.arctan2(sheet.w_r, sheet.u_r)
    a_l = np.arctan2(sheet.w_l, sheet.u_l)
    return float(0.5 * (a_r + a_l))


def _strict_less(a: float, b: float) -> tuple[bool, bool]:
    """(a < b, marginal) with the relative tolerance on the gap."""
    tol = REL_TOL * max(abs(a), abs(b), 1e-300)
    return a < b - tol, abs(a - b) <= tol


def weak_stability_verdict(sheet: PlanarVortexSheet, n_grid: int = 1024) -> StabilityVerdict:
    c = sheet.c_bar
    flags = {
        "supersonic": check_supersonic(sheet),
        "nondegenerate": bool(sheet.nondegenerate),
        "non_parallel": False,
        "sign_condition": False,
        "line1": False,
        "line2": False,
        "line3": False,
    }
    nan = float("nan")
    if not flags["supersonic"]:
        return StabilityVerdict(Verdict.NOT_SUPERSONIC, nan, nan, nan, flags)

    cross = sheet.u_l * sheet.w_r - sheet.u_r * sheet.w_l
    scale = np.hypot(sheet.u_l, sheet.w_l) * np.hypot(sheet.u_r, sheet.w_r)
    flags["non_parallel"] = bool(abs(cross) > REL_TOL * scale)
    if not (flags["non_parallel"] and flags["nondegenerate"]):
        tl, tr = theta_bounds(sheet)
        return StabilityVerdict(Verdict.PARALLEL_UNSTABLE, tl, tr, nan, flags)

    beta = rotation_for_sign_condition(sheet)
    rs = sheet.rotated(beta) if beta else sheet
    flags["sign_condition"] = bool(rs.w_r * rs.w_l < 0)
    marginal = False

    c2 = c * c
    ok_a, m_a = _strict_less(c2 / rs.u_r ** 2 + c2 / rs.u_l ** 2, 1.0)
    ok_b, m_b = _strict_less(c2, rs.w_r ** 2)
    ok_c, m_c = _strict_less(c2, rs.w_l ** 2)
    flags["line1"] = bool(ok_a and ok_b and ok_c and rs.u_r > 0 and rs.u_l > 0)
    marginal |= m_a or m_b or m_c

    if rs.u_r > 0 and rs.u_l > 0:
        tl, tr = theta_bounds(rs)
        gmin, targ = min_theta_scan(rs, n_grid)
    else:
        tl = tr = gmin = targ = nan
    ok, m = _strict_less(gmin, 1.0) if np.isfinite(gmin) else (False, False)
    flags["line2"] = bool(ok)
    marginal |= m

    lhs = (rs.u_l * rs.w_r - rs.u_r * rs.w_l) ** 2
    rhs = 2 * (c * rs.u_l + c * rs.u_r) ** 2 + 2 * (c * rs.w_l + c * rs.w_r) ** 2
    gap = abs(lhs - rhs)
    flags["line3"] = bool(gap > REL_TOL * max(lhs, rhs))
    marginal |= not flags["line3"]

    stable = all(flags.values())
    return StabilityVerdict(Verdict.WEAKLY_STABLE if stable else Verdict.UNSTABLE,
                            tl, tr, gmin, flags, rotation_angle=beta,
                            argmin_theta=targ, marginal=bool(marginal))


def reference_sheet(gas: GasModel | None = None) -> PlanarVortexSheet:
    """c_bar = 1, (u, w)_r = (3, 2), (u, w)_l = (3, -2)."""
    return PlanarVortexSheet.with_sound_speed(3.0, 2.0, 3.0, -2.0, 1.0, gas)
