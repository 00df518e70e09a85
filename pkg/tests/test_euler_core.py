import numpy as np
import pytest
import sympy as sp
from hypothesis import given
from hypothesis import strategies as st

from vortexsheet.euler_core import (DomainError, FlowState, GasModel, check_hyperbolic_x,
                                    flux_matrices, flux_matrix_arrays, flux_matrix_jvp,
                                    rh_residual, sonic_speed)

finite = dict(allow_nan=False, allow_infinity=False)
gases = st.builds(GasModel, st.floats(0.2, 5.0), st.floats(1.05, 3.0))


def test_sonic_speed_examples():
    g = GasModel(1.0, 2.0)
    assert sonic_speed(FlowState(0, 0, 0, g.pressure_from_density(1.0), g)) == pytest.approx(np.sqrt(2), rel=1e-14)
    assert sonic_speed(FlowState(0, 0, 0, g.pressure_from_density(0.5), g)) == pytest.approx(1.0, rel=1e-14)
    with pytest.raises(DomainError):
        FlowState(1, 0, 0, 0.0, g)
    with pytest.raises(DomainError):
        FlowState(1, 0, 0, -1.0, g)


def test_sound_speed_symbolic():
    rho, K, gam = sp.symbols("rho K gamma", positive=True)
    p = K * rho ** gam
    c2 = sp.diff(p, rho)
    assert sp.simplify(c2 - gam * p / rho) == 0
    g = GasModel(1.7, 1.4)
    for r in (0.1, 1.0, 3.0):
        pv = g.pressure_from_density(r)
        expect = float(c2.subs({rho: r, K: 1.7, gam: 1.4}))
        assert g.sound_speed_sq(pv) == pytest.approx(expect, rel=1e-12)


@given(gases, st.floats(1e-3, 1e3))
def test_density_roundtrip(g, r):
    assert g.density_from_pressure(g.pressure_from_density(r)) == pytest.approx(r, rel=1e-12)


@given(gases, st.floats(1e-3, 1e3), st.floats(1e-3, 1e3))
def test_pressure_law_increasing(g, r1, r2):
    if r1 < r2:
        assert g.pressure_from_density(r1) < g.pressure_from_density(r2)
    assert g.dp_drho(r1) > 0


@given(gases, st.floats(0.01, 100.0))
def test_c2_identity(g, p):
    rho = g.density_from_pressure(p)
    assert g.sound_speed_sq(p) == pytest.approx(g.gamma * p / rho, rel=1e-12)


def _symbolic_matrices():
    u, v, w, rho, c = sp.symbols("u v w rho c", positive=True)
    e = 1 / (rho * c ** 2)
    A1 = sp.Matrix([[rho * u, 0, 0, 1], [0, rho * u, 0, 0], [0, 0, rho * u, 0], [1, 0, 0, u * e]])
    A2 = sp.Matrix([[rho * v, 0, 0, 0], [0, rho * v, 0, 1], [0, 0, rho * v, 0], [0, 1, 0, v * e]])
    A3 = sp.Matrix([[rho * w, 0, 0, 0], [0, rho * w, 0, 0], [0, 0, rho * w, 1], [0, 0, 1, w * e]])
    return (u, v, w, rho, c), (A1, A2, A3)


def test_flux_matrices_match_symbolic():
    syms, mats = _symbolic_matrices()
    g = GasModel(1.0, 2.0)
    s = FlowState(2.5, -0.3, 0.7, 1.3, g)
    vals = dict(zip(syms, (s.u, s.v, s.w, s.rho, s.c)))
    for A, As in zip(flux_matrices(s), mats):
        assert np.allclose(A, np.array(As.subs(vals), dtype=float), rtol=1e-13, atol=1e-14)


def test_v_zero_zeroes_A2_diagonal():
    A1, A2, A3 = flux_matrices(FlowState(2.0, 0.0, 1.0, 1.0))
    assert np.all(np.diag(A2) == 0)
    assert A2[1, 3] == 1 and A2[3, 1] == 1


@given(st.floats(-5, 5, **finite), st.floats(-5, 5, **finite), st.floats(-5, 5, **finite),
       st.floats(0.05, 10), gases)
def test_symmetry(u, v, w, p, g):
    for A in flux_matrices(FlowState(u, v, w, p, g)):
        assert np.array_equal(A, A.T)


@given(st.floats(0.05, 10), st.floats(1.01, 5), st.floats(-3, 3), gases)
def test_supersonic_spd_subsonic_indefinite(p, ratio, w, g):
    c = np.sqrt(g.sound_speed_sq(p))
    assert check_hyperbolic_x(FlowState(ratio * c, 0.1, w, p, g))
    assert not check_hyperbolic_x(FlowState(c / ratio, 0.1, w, p, g))


def test_hyperbolic_examples():
    g = GasModel()
    p = 1.0
    c = np.sqrt(g.sound_speed_sq(p))
    assert check_hyperbolic_x(FlowState(2 * c, 0, 0, p, g))
    assert not check_hyperbolic_x(FlowState(c / 2, 0, 0, p, g))
    assert not check_hyperbolic_x(FlowState(c, 0, 0, p, g))


def test_schur_complement_oracle():
    rng = np.random.default_rng(3)
    g = GasModel()
    for _ in range(200):
        p = rng.uniform(0.1, 4)
        s = FlowState(rng.uniform(0.05, 4), 0, 0, p, g)
        schur = s.u / (s.rho * s.c ** 2) - 1 / (s.rho * s.u)
        assert check_hyperbolic_x(s) == (schur > 0)


def test_jvp_matches_complex_step():
    rng = np.random.default_rng(0)
    g = GasModel(1.3, 1.6)
    U = np.array([2.0, 0.2, -0.4, 1.1])[:, None] + 0.1 * rng.standard_normal((4, 5))
    dU = rng.standard_normal((4, 5))
    h = 1e-30
    cs = [A.imag / h for A in flux_matrix_arrays(U + 1j * h * dU, g)]
    for a, b in zip(flux_matrix_jvp(U, dU, g), cs):
        assert np.allclose(a, b, rtol=1e-12, atol=1e-13)


def test_rh_identical_states_flat_front():
    s = FlowState(2.0, 0.0, -0.2, 1.0)
    r = rh_residual(s, s, 0.0, 0.0)
    assert np.all(r.rh == 0) and r.pressure_jump == 0
    assert r.mass_flux_plus == 0 and r.mass_flux_minus == 0 and r.is_contact


@given(st.floats(-0.5, 0.5), st.floats(-0.5, 0.5), st.floats(1.5, 4), st.floats(1.5, 4),
       st.floats(-2, 2), st.floats(-2, 2), st.floats(0.2, 3))
def test_contact_states_zero_residual(px, pz, up, um, wp, wm, p):
    g = GasModel()
    sp_ = FlowState(up, px * up + pz * wp, wp, p, g)
    sm = FlowState(um, px * um + pz * wm, wm, p, g)
    r = rh_residual(sp_, sm, px, pz)
    scale = 1 + max(abs(up), abs(um), abs(wp), abs(wm)) ** 2
    assert np.abs(r.rh).max() <= 1e-12 * scale
    assert r.is_contact


def test_pressure_jump_not_contact():
    a = FlowState(2.0, 0.0, 1.0, 1.0)
    b = FlowState(2.0, 0.0, -1.0, 1.2)
    r = rh_residual(a, b, 0.0, 0.0)
    assert r.pressure_jump == pytest.approx(-0.2)
    assert not r.is_contact
