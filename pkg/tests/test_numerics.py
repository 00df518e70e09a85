import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vortexsheet.euler_core import DomainError
from vortexsheet.geometry import HalfSpaceGrid, StepSizeError
from vortexsheet.linearized import planar_background
from vortexsheet.numerics import (LinearizedProblem, ManufacturedSolution, WeightedNormSpec,
                                  cfl_number, convergence_order, energy_ratio,
                                  march_linearized, outgoing_projector, trace_pp, weighted_norm)


def _random_problem(bg, seed, scale_g=1.0):
    rng = np.random.default_rng(seed)
    g = bg.grid
    f = rng.standard_normal((2, 4) + g.shape)
    gg = scale_g * rng.standard_normal((3,) + g.bshape)
    # zero initial data: boundary sources must vanish on the first two levels
    gg[:, :2] = 0
    return LinearizedProblem(bg, f, gg)


def test_weighted_norm_constant(small_grid):
    g = small_grid
    one = np.ones(g.bshape)
    n = weighted_norm(one, g, WeightedNormSpec(0, 0.0, "boundary"))
    assert n == pytest.approx(np.sqrt((g.Nx + 1) * g.hx * g.Nz * g.hz), rel=1e-12)
    assert weighted_norm(one, g, WeightedNormSpec(2, 0.0, "boundary")) == pytest.approx(n, rel=1e-12)
    assert weighted_norm(one, g, WeightedNormSpec(0, 4.0, "boundary")) < n
    with pytest.raises(DomainError):
        WeightedNormSpec(4)
    with pytest.raises(DomainError):
        WeightedNormSpec(0, 1.0, "volume")


@given(st.integers(0, 2 ** 31 - 1), st.integers(0, 2))
def test_weighted_norm_monotone_in_s(seed, s):
    g = HalfSpaceGrid(X=0.5, Nx=8, Ymax=1, Ny=5, Z=1, Nz=8)
    u = np.random.default_rng(seed).standard_normal(g.shape)
    a = weighted_norm(u, g, WeightedNormSpec(s, 1.0))
    b = weighted_norm(u, g, WeightedNormSpec(s + 1, 1.0))
    assert b >= a
    assert weighted_norm(u, g, WeightedNormSpec(s, 1.0, "tangential")) <= b + 1e-12


def test_projector_rows(sheet, small_grid):
    bg = planar_background(sheet, small_grid)
    Q = outgoing_projector(bg)
    assert Q.shape == (2, 3, 4) + small_grid.bshape
    A1 = bg.A[0][0, :, :, 3, 0, 2]
    Ab = bg.Ab[0, :, :, 3, 0, 2]
    for k in range(3):
        q = Q[0, k, :, 3, 2]
        lam = (q @ Ab @ q) / (q @ A1 @ q)
        assert np.allclose(q @ Ab, lam * (q @ A1), atol=1e-12)
        assert lam <= 1e-12


def test_zero_data_zero_solution(sheet, small_grid):
    bg = planar_background(sheet, small_grid)
    z = LinearizedProblem(bg, np.zeros((2, 4) + small_grid.shape), np.zeros((3,) + small_grid.bshape))
    r = march_linearized(z)
    assert np.all(r.U == 0) and np.all(r.phi == 0)
    assert all(row["status"] == "vacuous" for row in energy_ratio(r.U, r.phi, z.f, z.g, bg))


def test_march_linear_and_residuals_roundoff(sheet, small_grid):
    bg = planar_background(sheet, small_grid)
    p1, p2 = _random_problem(bg, 1), _random_problem(bg, 2)
    r1, r2 = march_linearized(p1), march_linearized(p2)
    p3 = LinearizedProblem(bg, p1.f + 2 * p2.f, p1.g + 2 * p2.g)
    r3 = march_linearized(p3)
    scale = np.abs(r3.U).max()
    assert np.abs(r3.U - r1.U - 2 * r2.U).max() < 1e-10 * scale
    assert np.abs(r3.phi - r1.phi - 2 * r2.phi).max() < 1e-10 * np.abs(r3.phi).max()
    assert r3.diagnostics["interior_max"] < 1e-9 * scale
    assert r3.diagnostics["boundary_max"] < 1e-9 * scale


def test_march_causality(sheet, small_grid):
    bg = planar_background(sheet, small_grid)
    p = _random_problem(bg, 3)
    k0 = 8
    p.f[:, :, :k0] = 0
    p.g[:, :k0] = 0
    r = march_linearized(p)
    assert np.all(r.U[:, :, :k0] == 0) and np.all(r.phi[:k0] == 0)
    assert np.abs(r.U[:, :, k0 + 1:]).max() > 0


def test_cfl_violation(sheet):
    g = HalfSpaceGrid(X=4.0, Nx=8, Ymax=1, Ny=9, Z=1, Nz=16)
    bg = planar_background(sheet, g)
    assert cfl_number(bg) > 1
    with pytest.raises(StepSizeError):
        march_linearized(_random_problem(bg, 0))


def test_pp_trace_planar():
    U = np.random.default_rng(4).standard_normal((2, 4, 5, 6))
    pp = trace_pp(U, np.zeros((5, 6)), np.zeros((5, 6)))
    assert np.array_equal(pp.plus[0], -U[0, 1]) and np.array_equal(pp.minus[1], U[1, 3])
    px, pz = np.full((5, 6), 0.2), np.full((5, 6), -0.3)
    pp = trace_pp(U, px, pz)
    assert np.allclose(pp.plus[0], 0.2 * U[0, 0] - U[0, 1] - 0.3 * U[0, 2])


def test_energy_ratio_rows(sheet, small_grid):
    bg = planar_background(sheet, small_grid)
    p = _random_problem(bg, 5)
    r = march_linearized(p)
    rows = energy_ratio(r.U, r.phi, p.f, p.g, bg)
    assert [row["gamma"] for row in rows] == [4, 8, 16]
    assert all(row["status"] == "ok" and row["ratio"] > 0 for row in rows)


def test_manufactured_problem_consistent(sheet, small_grid):
    bg = planar_background(sheet, small_grid)
    prob, Ue, pe = ManufacturedSolution().problem(bg)
    assert np.all(Ue[:, :, :2] == 0) and np.all(pe[:2] == 0)
    sol = march_linearized(prob)
    assert sol.diagnostics["interior_max"] < 1e-10
    bg2 = planar_background(sheet, small_grid.refined())
    prob2, Ue2, _ = ManufacturedSolution().problem(bg2)
    sol2 = march_linearized(prob2)
    assert np.abs(sol2.U - Ue2).max() < 0.5 * np.abs(sol.U - Ue).max()


def test_convergence_order_exact():
    hs = np.array([0.1, 0.05, 0.025])
    assert convergence_order(hs, 3 * hs ** 2) == pytest.approx(2.0)
