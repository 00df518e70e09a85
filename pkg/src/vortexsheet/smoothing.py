"""
Frequency-cutoff smoothing operators S_theta, spectral Sobolev norms and
the theta_n schedule.

Fields live on tensor grids; each smoothed axis is extended to a periodic
sequence before the FFT:

    periodic   used as is
    even       mirrored about both end points (cosine series)
    odd_even   odd about the first point, even about the last one

The multiplier is chi(|xi| / (scale * theta)) with chi = 1 on [0, 1], 0 on
[2, inf) and a quintic smoothstep bridge in between.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .euler_core import DomainError

MODES = ("periodic", "even", "odd_even")


def chi(r):
    """C^2 cutoff: 1 for r <= 1, 0 for r >= 2."""
    t = np.clip(np.asarray(r, dtype=float) - 1.0, 0.0, 1.0)
    return 1.0 - t ** 3 * (10.0 - 15.0 * t + 6.0 * t * t)


def chi_prime(r):
    t = np.asarray(r, dtype=float) - 1.0
    inside = (t > 0) & (t < 1)
    return np.where(inside, -30.0 * t * t * (1.0 - t) ** 2, 0.0)


# ---------------------------------------------------------------
# Schedule


@dataclass(frozen=True)
class SmoothingSchedule:
    theta0: float
    N: int
    thetas: np.ndarray = field(repr=False)
    deltas: np.ndarray = field(repr=False)

    def theta(self, n: int) -> float:
        return float(self.thetas[n])

    def delta(self, n: int) -> float:
        return float(self.deltas[n])


def make_schedule(theta0: float, N: int) -> SmoothingSchedule:
    """theta_n = sqrt(theta0^2 + n) for n <= N and Delta_n = theta_{n+1} - theta_n."""
    if theta0 < 1:
        raise DomainError("theta0 must be >= 1")
    if N < 0:
        raise DomainError("N must be >= 0")
    n = np.arange(N + 2)
    th = np.sqrt(theta0 ** 2 + n)
    # 1/(theta_{n+1} + theta_n) avoids the cancellation in the difference
    deltas = 1.0 / (th[1:] + th[:-1])
    return SmoothingSchedule(float(theta0), int(N), th[: N + 1].copy(), deltas[: N + 1].copy())


# ---------------------------------------------------------------
# Tensor grids and spectral extension


@dataclass(frozen=True)
class Axis:
    n: int
    h: float
    mode: str = "periodic"

    def __post_init__(self):
        if self.mode not in MODES:
            raise DomainError(f"unknown axis mode {self.mode!r}")
        if self.n < 2:
            raise DomainError("axis needs at least two points")

    @property
    def ext_len(self) -> int:
        m = self.n - 1
        return {"periodic": self.n, "even": 2 * m, "odd_even": 4 * m}[self.mode]

    @property
    def multiplicity(self) -> int:
        return {"periodic": 1, "even": 2, "odd_even": 4}[self.mode]

    def freqs(self) -> np.ndarray:
        return 2.0 * np.pi * np.fft.fftfreq(self.ext_len, self.h)

    @property
    def xi_max(self) -> float:
        return float(np.abs(self.freqs()).max())

    def extend(self, u: np.ndarray, axis: int) -> np.ndarray:
        if self.mode == "periodic":
            return u
        u = np.moveaxis(u, axis, -1)
        if self.mode == "odd_even":
            u = u.copy()
            u[..., 0] = 0.0
        e = np.concatenate([u, u[..., -2:0:-1]], axis=-1)
        if self.mode == "odd_even":
            e = np.concatenate([e, -e], axis=-1)
        return np.moveaxis(e, -1, axis)

    def restrict(self, e: np.ndarray, axis: int) -> np.ndarray:
        return np.take(e, np.arange(self.n), axis=axis)


class SpectralGrid:
    """Tensor product of axes occupying the trailing dimensions of a field."""

    def __init__(self, axes: Sequence[Axis]):
        self.axes = tuple(axes)
        grids = np.meshgrid(*[a.freqs() for a in self.axes], indexing="ij")
        self.xi_abs = np.sqrt(sum(g * g for g in grids))
        self.shape = tuple(a.n for a in self.axes)

    @property
    def xi_max(self) -> float:
        return float(self.xi_abs.max())

    def _axes_idx(self):
        d = len(self.axes)
        return tuple(range(-d, 0))

    def forward(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u)
        if u.shape[-len(self.axes):] != self.shape:
            raise DomainError(f"field shape {u.shape} does not end with {self.shape}")
        for i, ax in zip(self._axes_idx(), self.axes):
            u = ax.extend(u, i)
        return np.fft.fftn(u, axes=self._axes_idx())

    def backward(self, U: np.ndarray, real: bool = True) -> np.ndarray:
        e = np.fft.ifftn(U, axes=self._axes_idx())
        for i, ax in zip(self._axes_idx(), self.axes):
            e = ax.restrict(e, i)
        return e.real if real else e

    def multiply(self, u, mult) -> np.ndarray:
        real = not np.iscomplexobj(u)
        return self.backward(self.forward(u) * mult, real=real)

    def sobolev_norm(self, u, s: float) -> np.ndarray:
        """Spectral H^s norm with weight (1 + |xi|^2)^s over the trailing axes."""
        U = self.forward(u)
        n_ext = np.prod([a.ext_len for a in self.axes])
        mult = np.prod([a.multiplicity for a in self.axes])
        vol = np.prod([a.h for a in self.axes])
        w = (1.0 + self.xi_abs ** 2) ** s
        tot = np.sum(w * np.abs(U) ** 2, axis=self._axes_idx())
        return np.sqrt(tot * vol / (n_ext * mult))


@dataclass
class SmoothingOperator:
    """
    S_theta on a spectral grid.

    ``scale`` converts theta to a frequency: the pass band is
    |xi| <= scale * theta.
    """

    grid: SpectralGrid
    theta: float
    scale: float = 1.0

    def multiplier(self, theta: float | None = None) -> np.ndarray:
        th = self.theta if theta is None else theta
        return chi(self.grid.xi_abs / (self.scale * th))

    def apply(self, u, theta: float | None = None) -> np.ndarray:
        return self.grid.multiply(u, self.multiplier(theta))

    __call__ = apply

    def with_theta(self, theta: float) -> "SmoothingOperator":
        return SmoothingOperator(self.grid, theta, self.scale)

    def dtheta_apply(self, u, rel_step: float = 1e-4) -> np.ndarray:
        """d/dtheta S_theta u by a centered difference in theta."""
        d = rel_step * self.theta
        return (self.apply(u, self.theta + d) - self.apply(u, self.theta - d)) / (2 * d)

    def is_identity(self) -> bool:
        return bool(self.grid.xi_max <= self.scale * self.theta)


def apply_smoothing(u, op: SmoothingOperator) -> np.ndarray:
    return op.apply(u)


def y_cutoff(y, ell: float = 1.0):
    """Extension profile chi(y/ell) used for boundary data."""
    return chi(np.abs(y) / ell)


class PairSmoother:
    """
    Smoother for fields on (x, y, z) whose trace at y = 0 is smoothed by
    the boundary smoother:  S~u = S u + E[S_b(u|y=0) - (S u)|y=0].

    E multiplies boundary data by chi(y/ell).  Fields have trailing axes
    (x, y, z); boundary fields have trailing axes (x, z).
    """

    def __init__(self, interior: SmoothingOperator, boundary: SmoothingOperator,
                 y: np.ndarray, ell: float):
        self.interior = interior
        self.boundary = boundary
        self.ext = y_cutoff(y, ell)[:, None]

    def with_theta(self, theta: float) -> "PairSmoother":
        new = object.__new__(PairSmoother)
        new.interior = self.interior.with_theta(theta)
        new.boundary = self.boundary.with_theta(theta)
        new.ext = self.ext
        return new

    def apply(self, u) -> np.ndarray:
        su = self.interior.apply(u)
        corr = self.boundary.apply(u[..., :, 0, :]) - su[..., :, 0, :]
        return su + corr[..., :, None, :] * self.ext

    __call__ = apply


# ---------------------------------------------------------------
# Empirical bound verification


@dataclass
class BoundReport:
    thetas: list
    scale: float
    # family -> "(s,a)" -> list of fitted constants per theta
    constants: dict

    def spread(self, family: str, key: str) -> float:
        c = np.asarray(self.constants[family][key], dtype=float)
        if not np.all(np.isfinite(c)) or np.all(c == 0):
            return 0.0
        m = np.mean(c)
        return float(np.max(np.abs(c - m)) / m)

    def stable_within(self, tol: float = 0.2) -> dict:
        return {fam: {k: self.spread(fam, k) <= tol for k in d}
                for fam, d in self.constants.items()}

    def to_dict(self) -> dict:
        return {"thetas": list(self.thetas), "scale": self.scale,
                "constants": self.constants,
                "spread": {fam: {k: self.spread(fam, k) for k in d}
                           for fam, d in self.constants.items()}}


def mode_samples(grid: SpectralGrid) -> np.ndarray:
    """One real sample per grid frequency (cosines/sines of single modes), stacked."""
    ax = grid.axes[-1]
    n = ax.n
    x = np.arange(n) * ax.h
    L = ax.ext_len * ax.h
    out = []
    kmax = ax.ext_len // 2
    for k in range(kmax + 1):
        if ax.mode == "odd_even":
            if k % 4 == 1 or k % 4 == 3:
                out.append(np.sin(2 * np.pi * k * x / L))
            continue
        out.append(np.cos(2 * np.pi * k * x / L))
        if ax.mode == "periodic" and 0 < k < kmax:
            out.append(np.sin(2 * np.pi * k * x / L))
    return np.array(out)


def verify_bounds(samples: np.ndarray, grid: SpectralGrid, thetas: Sequence[float],
                  orders: Sequence[tuple], scale: float = 1.0,
                  trace_grid: SpectralGrid | None = None,
                  trace_samples: np.ndarray | None = None) -> BoundReport:
    """
    Fitted constants (max ratio over samples) of the four bound families.

    ``samples`` are stacked fields on ``grid``.  The trace family is fitted on
    ``trace_samples`` (jumps u_+ - u_- on the boundary grid, smoothed by the
    trace-matched pair smoother, whose trace equals the boundary smoother of
    the trace).  Zero jumps give the vacuous ratio 0.
    """
    consts = {"smooth": {}, "approx": {}, "dtheta": {}, "trace": {}}
    s_vals = sorted({s for s, _ in orders} | {a for _, a in orders})
    base = grid.sobolev_norm(samples, 0)
    keep = base > 1e-12
    samples = samples[keep]
    norms_u = {a: grid.sobolev_norm(samples, a) for a in s_vals}
    if trace_grid is not None and trace_samples is not None:
        tn = trace_grid.sobolev_norm(trace_samples, 0)
        trace_samples = trace_samples[tn > 1e-12]
        tnorm = {a: trace_grid.sobolev_norm(trace_samples, a) for a in s_vals}

    for s, a in orders:
        for fam in consts:
            consts[fam][f"({s},{a})"] = []
    for th in thetas:
        op = SmoothingOperator(grid, th, scale)
        su = op.apply(samples)
        ru = su - samples
        du = op.dtheta_apply(samples)
        nsu = {s: grid.sobolev_norm(su, s) for s in s_vals}
        nru = {s: grid.sobolev_norm(ru, s) for s in s_vals}
        ndu = {s: grid.sobolev_norm(du, s) for s in s_vals}
        if trace_grid is not None and trace_samples is not None:
            tsu = SmoothingOperator(trace_grid, th, scale).apply(trace_samples)
            ntu = {s: trace_grid.sobolev_norm(tsu, s) for s in s_vals}
        for s, a in orders:
            key = f"({s},{a})"
            ua = norms_u[a]
            consts["smooth"][key].append(float(np.max(nsu[s] / ua) / th ** max(s - a, 0)))
            if s <= a:
                consts["approx"][key].append(float(np.max(nru[s] / ua) / th ** (s - a)))
            consts["dtheta"][key].append(float(np.max(ndu[s] / ua) / th ** (s - a - 1)))
            if trace_grid is not None and trace_samples is not None:
                if len(trace_samples) == 0:
                    consts["trace"][key].append(0.0)
                else:
                    r = ntu[s] / tnorm[a]
                    consts["trace"][key].append(float(np.max(r) / th ** max(s + 1 - a, 0)))
    consts["approx"] = {k: v for k, v in consts["approx"].items() if v}
    if not consts["trace"] or not any(consts["trace"].values()):
        consts.pop("trace")
    return BoundReport(list(map(float, thetas)), float(scale), consts)


def default_bound_check(thetas=(1, 2, 4, 8, 16), scale: float = 4.0,
                        orders=None, n: int = 2048, length: float = 16 * np.pi):
    """
    Bound sweep on a 1D periodic sample grid fine enough that the top
    frequency exceeds 2 * scale * max(theta); the boundary family uses
    the same 1D grid as the boundary grid.
    """
    if orders is None:
        orders = [(s, a) for s in range(4) for a in range(4)]
    grid = SpectralGrid([Axis(n, length / n, "periodic")])
    if grid.xi_max < 2 * scale * max(thetas):
        raise DomainError("sample grid does not resolve the stop band")
    samples = mode_samples(grid)
    return verify_bounds(samples, grid, thetas, orders, scale,
                         trace_grid=grid, trace_samples=samples)
