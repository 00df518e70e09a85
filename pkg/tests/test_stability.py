from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vortexsheet.euler_core import DomainError
from vortexsheet.stability import (PlanarVortexSheet, Verdict, check_supersonic, g_theta,
                                   min_theta_scan, rotation_for_sign_condition,
                                   theta_bounds, weak_stability_verdict)


def mk(ur, wr, ul, wl, c=1.0):
    return PlanarVortexSheet.with_sound_speed(ur, wr, ul, wl, c)


def brute_force_verdict(ur, wr, ul, wl, c, n=10 ** 6):
    """
    Independent evaluator: exact rational arithmetic for the algebraic
    lines, a dense theta grid for the minimum.  Returns (stable, min, flags).
    """
    if not (ur > c and ul > c):
        return False, None, {"supersonic": False}
    if ul * wr - ur * wl == 0 or (ur - ul) ** 2 + (wr - wl) ** 2 == 0:
        return False, None, {"non_parallel": False}
    if wr * wl >= 0:
        beta = 0.5 * (np.arctan2(wr, ur) + np.arctan2(wl, ul))
        cb, sb = np.cos(beta), np.sin(beta)
        ur, wr = cb * ur + sb * wr, -sb * ur + cb * wr
        ul, wl = cb * ul + sb * wl, -sb * ul + cb * wl
    F = Fraction
    C, UR, WR, UL, WL = (F(x) for x in (c, ur, wr, ul, wl))
    line1 = C ** 2 / UR ** 2 + C ** 2 / UL ** 2 < 1 and WR ** 2 > C ** 2 and WL ** 2 > C ** 2
    line3 = (UL * WR - UR * WL) ** 2 != 2 * (C * UL + C * UR) ** 2 + 2 * (C * WL + C * WR) ** 2
    a, b = sorted((np.arctan(wl / ul), np.arctan(wr / ur)))
    th = np.linspace(a, b, n + 2)[1:-1]
    s, co = np.sin(th), np.cos(th)
    g = c * c / (ul * s - wl * co) ** 2 + c * c / (ur * s - wr * co) ** 2
    gmin = float(g.min())
    flags = {"line1": bool(line1), "line2": gmin < 1, "line3": bool(line3),
             "sign": wr * wl < 0}
    return all(flags.values()), gmin, flags


def test_reference_sheet_weakly_stable(sheet):
    v = weak_stability_verdict(sheet)
    assert v.verdict == Verdict.WEAKLY_STABLE
    assert v.min_value <= 0.5 + 1e-6
    assert v.min_value == pytest.approx(0.5, abs=1e-12)
    assert all(v.condition_flags.values())
    assert v.rotation_angle == 0.0


def test_reference_line3_values():
    ur = ul = 3
    wr, wl, c = 2, -2, 1
    assert (ul * wr - ur * wl) ** 2 == 144
    assert 2 * (c * ul + c * ur) ** 2 + 2 * (c * wl + c * wr) ** 2 == 72


def test_check_supersonic_examples():
    assert check_supersonic(mk(3, 2, 3, -2))
    assert not check_supersonic(mk(0.5, 2, 3, -2))
    assert not check_supersonic(mk(1.0, 2, 3, -2))


def test_theta_bounds_examples():
    tl, tr = theta_bounds(mk(3, 2, 3, -2))
    assert tr == pytest.approx(np.arctan(2 / 3)) and tl == pytest.approx(-np.arctan(2 / 3))
    tl, tr = theta_bounds(mk(1, 0, 1, 1))
    assert tl == pytest.approx(0) and tr == pytest.approx(np.pi / 4)
    tl, tr = theta_bounds(mk(2, 1, 4, 2))
    assert tl == tr
    with pytest.raises(DomainError):
        theta_bounds(mk(-1, 1, 2, 1))


def test_min_scan_examples(sheet):
    assert float(g_theta(sheet, 0.0)) == pytest.approx(0.5)
    m, t = min_theta_scan(sheet)
    th = np.linspace(*theta_bounds(sheet), 10 ** 5 + 2)[1:-1]
    dense = g_theta(sheet, th).min()
    assert abs(m - dense) <= 1e-8
    tl, tr = theta_bounds(sheet)
    assert g_theta(sheet, tr - 1e-9) > 1e10
    with pytest.raises(DomainError):
        min_theta_scan(mk(2, 1, 4, 2))


def test_not_supersonic_and_parallel():
    assert weak_stability_verdict(mk(0.9, 2, 3, -2)).verdict == Verdict.NOT_SUPERSONIC
    assert weak_stability_verdict(mk(2, 1, 4, 2)).verdict == Verdict.PARALLEL_UNSTABLE
    assert weak_stability_verdict(mk(3, 2, 3, 2)).verdict == Verdict.PARALLEL_UNSTABLE


def test_rotation_path():
    s = mk(3, 2, 3, 1)
    beta = rotation_for_sign_condition(s)
    r = s.rotated(beta)
    assert r.w_r * r.w_l < 0
    v = weak_stability_verdict(s)
    assert v.rotation_angle == pytest.approx(beta)
    assert v.condition_flags["sign_condition"]
    ok, _, flags = brute_force_verdict(3, 2, 3, 1, 1.0)
    assert v.stable == ok


sheets = st.tuples(st.floats(0.5, 8), st.floats(-6, 6), st.floats(0.5, 8), st.floats(-6, 6),
                   st.floats(0.3, 2))


@given(sheets)
def test_swap_symmetry(p):
    ur, wr, ul, wl, c = p
    s = mk(ur, wr, ul, wl, c)
    a, b = weak_stability_verdict(s), weak_stability_verdict(s.swapped())
    if not (a.marginal or b.marginal):
        assert a.verdict == b.verdict
    if ur > 0 and ul > 0:
        th = np.linspace(-1.2, 1.2, 7)
        assert np.allclose(g_theta(s, th), g_theta(s.swapped(), th))


@given(sheets, st.floats(0.1, 10))
def test_scaling_invariance(p, lam):
    ur, wr, ul, wl, c = p
    a = weak_stability_verdict(mk(ur, wr, ul, wl, c))
    b = weak_stability_verdict(mk(lam * ur, lam * wr, lam * ul, lam * wl, lam * c))
    if not (a.marginal or b.marginal):
        assert a.condition_flags == b.condition_flags


@given(st.floats(1.5, 6), st.floats(0.2, 5), st.floats(1.5, 6), st.floats(0.2, 5),
       st.floats(0.3, 1.2))
def test_g_at_zero_for_opposite_signs(ur, wr, ul, wl, c):
    s = mk(ur, wr, ul, -wl, c)
    tl, tr = theta_bounds(s)
    assert tl < 0 < tr
    assert float(g_theta(s, 0.0)) == pytest.approx(c * c / wl ** 2 + c * c / wr ** 2, rel=1e-12)


def test_random_sheets_against_brute_force():
    rng = np.random.default_rng(11)
    checked = 0
    for _ in range(30):
        ur, ul = rng.uniform(1.05, 5, 2)
        wr, wl = rng.uniform(-4, 4, 2)
        v = weak_stability_verdict(mk(ur, wr, ul, wl))
        ok, gmin, _ = brute_force_verdict(ur, wr, ul, wl, 1.0, n=10 ** 5)
        if v.marginal or (gmin is not None and abs(gmin - 1) < 1e-4):
            continue
        assert v.stable == ok
        checked += 1
    assert checked >= 25
