import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vortexsheet.euler_core import DomainError
from vortexsheet.smoothing import (Axis, PairSmoother, SmoothingOperator, SpectralGrid, chi,
                                   chi_prime, make_schedule, mode_samples, verify_bounds)


def test_chi_profile():
    r = np.linspace(0, 3, 3001)
    c = chi(r)
    assert np.all(c[r <= 1] == 1) and np.all(c[r >= 2] == 0)
    assert np.all(np.diff(c) <= 0)
    h = 1e-6
    rr = np.linspace(0.5, 2.5, 41)
    assert np.allclose((chi(rr + h) - chi(rr - h)) / (2 * h), chi_prime(rr), atol=1e-6)


@given(st.floats(1, 20), st.integers(0, 50))
def test_schedule(theta0, N):
    s = make_schedule(theta0, N)
    n = np.arange(N + 1)
    assert np.allclose(s.thetas, np.sqrt(theta0 ** 2 + n), rtol=1e-14)
    assert s.theta(0) == theta0
    th = np.sqrt(theta0 ** 2 + np.arange(N + 2))
    assert np.allclose(s.deltas, np.diff(th), rtol=1e-9)
    assert np.all(s.deltas <= 1 / (2 * s.thetas) + 1e-15)


def test_schedule_rejects():
    with pytest.raises(DomainError):
        make_schedule(0.5, 3)
    with pytest.raises(DomainError):
        make_schedule(2, -1)
    with pytest.raises(DomainError):
        Axis(8, 0.1, "weird")


def _grid(mode="periodic", n=64):
    return SpectralGrid([Axis(n, 2 * np.pi / n if mode == "periodic" else np.pi / (n - 1), mode)])


def test_pass_band_exact_and_stop_band_killed():
    g = _grid()
    x = np.arange(64) * g.axes[0].h
    op = SmoothingOperator(g, theta=4.0)
    low, high = np.cos(3 * x), np.sin(20 * x)
    assert np.allclose(op(low), low, atol=1e-13)
    assert np.abs(op(high)).max() < 1e-13
    assert SmoothingOperator(g, theta=100.0).is_identity()
    u = np.random.default_rng(0).standard_normal(64)
    assert np.allclose(SmoothingOperator(g, theta=100.0)(u), u, atol=1e-13)


@pytest.mark.parametrize("mode", ["periodic", "even", "odd_even"])
def test_linear_and_contractive(mode):
    g = _grid(mode, 33 if mode != "periodic" else 32)
    rng = np.random.default_rng(1)
    u, v = rng.standard_normal((2, g.shape[0]))
    if mode == "odd_even":
        u[0] = v[0] = 0
    op = SmoothingOperator(g, 3.0)
    assert np.allclose(op(2 * u + v), 2 * op(u) + op(v), atol=1e-12)
    for s in (0, 1, 2):
        assert g.sobolev_norm(op(u), s) <= g.sobolev_norm(u, s) * (1 + 1e-12)


def test_odd_even_keeps_zero_end():
    g = _grid("odd_even", 17)
    u = np.random.default_rng(2).standard_normal(17)
    u[0] = 0
    assert abs(SmoothingOperator(g, 2.0)(u)[0]) < 1e-14


@pytest.mark.parametrize("mode", ["periodic", "even"])
def test_l2_norm_matches_quadrature(mode):
    g = _grid(mode, 33 if mode == "even" else 32)
    u = np.cos(np.arange(g.shape[0]) * g.axes[0].h * 2)
    h = g.axes[0].h
    if mode == "periodic":
        quad = np.sqrt(np.sum(u ** 2) * h)
    else:
        w = np.ones_like(u)
        w[0] = w[-1] = 0.5
        quad = np.sqrt(np.sum(w * u ** 2) * h)
    assert g.sobolev_norm(u, 0) == pytest.approx(quad, rel=1e-12)


def test_dtheta_matches_multiplier_derivative():
    g = _grid()
    u = np.random.default_rng(3).standard_normal(64)
    op = SmoothingOperator(g, 5.0)
    d = op.dtheta_apply(u)
    h = 1e-3
    fd = (op.apply(u, 5 + h) - op.apply(u, 5 - h)) / (2 * h)
    assert np.allclose(d, fd, atol=1e-5)


def test_pair_smoother_trace_is_boundary_smoothing():
    ny, nz, nx = 9, 16, 17
    y = np.linspace(0, 1, ny)
    gi = SpectralGrid([Axis(nx, 0.05, "odd_even"), Axis(ny, y[1], "even"), Axis(nz, 1 / nz)])
    gb = SpectralGrid([Axis(nx, 0.05, "odd_even"), Axis(nz, 1 / nz)])
    ps = PairSmoother(SmoothingOperator(gi, 2.0), SmoothingOperator(gb, 2.0), y, ell=0.3)
    u = np.random.default_rng(4).standard_normal((nx, ny, nz))
    u[0] = 0
    out = ps(u)
    assert np.allclose(out[:, 0], SmoothingOperator(gb, 2.0)(u[:, 0]), atol=1e-13)
    far = y > 0.6
    assert np.allclose(out[:, far], SmoothingOperator(gi, 2.0)(u)[:, far], atol=1e-13)


def test_mode_samples_cover_frequencies():
    g = _grid()
    s = mode_samples(g)
    assert s.shape == (64, 64)
    assert np.linalg.matrix_rank(s) == 64


def test_interior_families_stable():
    g = SpectralGrid([Axis(512, 4 * np.pi / 512)])
    rep = verify_bounds(mode_samples(g), g, (1, 2, 4, 8), [(0, 1), (1, 0), (2, 1), (1, 1)], scale=4.0)
    for fam in ("smooth", "approx", "dtheta"):
        assert all(rep.stable_within(0.2)[fam].values()), rep.to_dict()["spread"][fam]
