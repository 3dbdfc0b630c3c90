import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, strategies as st

from fbms.catenary import (CatenoidParams, arcosh_clamped, catenary_slope, catenary_x,
                           catenoid_from_inner, integrate_log_r, integrate_v, ode_exit,
                           polar_radius, sgn, sphere_exit, tangency_points, v_ode_rhs)
from fbms.errors import DomainError, NoExit

beta_ab = st.floats(0.05, 0.5 * math.pi)
alpha_ab = st.floats(0.05, math.pi / 3)


def test_quarter_pi_params():
    p = catenoid_from_inner(math.pi / 4, math.pi / 4)
    assert p.a == pytest.approx(math.sqrt(2) / 2, abs=1e-15)
    assert p.b == pytest.approx(math.sqrt(2) / 2, abs=1e-15)


def test_right_angle_kills_arcosh_term():
    beta = 0.7
    p = catenoid_from_inner(beta, 0.5 * math.pi - beta)
    assert p.b == math.cos(beta)


def test_two_sevenths_params_against_mpmath():
    mp.mp.dps = 30
    t = 2 * mp.pi / 7
    a_ref = mp.sin(t) * mp.sin(2 * t)
    b_ref = mp.cos(t) - a_ref * mp.acosh(1 / mp.sin(2 * t))
    p = catenoid_from_inner(2 * math.pi / 7, 2 * math.pi / 7)
    assert p.a == pytest.approx(float(a_ref), abs=1e-14)
    assert p.b == pytest.approx(float(b_ref), abs=1e-14)
    # the inner point lies on the catenary
    assert catenary_x(p, math.cos(2 * math.pi / 7)) == pytest.approx(math.sin(2 * math.pi / 7), abs=1e-14)


def test_slope_at_inner_point():
    beta, alpha = 0.6, 0.4
    p = catenoid_from_inner(beta, alpha)
    assert catenary_slope(p, math.cos(beta)) == pytest.approx(math.tan(alpha + beta - 0.5 * math.pi),
                                                             abs=1e-12)


def test_domain_errors():
    with pytest.raises(DomainError):
        catenoid_from_inner(0.5, -0.1)
    with pytest.raises(DomainError):
        catenoid_from_inner(0.5, math.pi - 0.5)
    with pytest.raises(DomainError):
        CatenoidParams(0.0, 0.0)


def test_catenary_x_at_neck():
    p = CatenoidParams(0.3, -0.2)
    assert catenary_x(p, -0.2) == 0.3


def test_quoted_crossings():
    x1 = catenary_x(catenoid_from_inner(math.pi / 4, math.pi / 4), 0.0)
    x2 = catenary_x(catenoid_from_inner(2 * math.pi / 7, 2 * math.pi / 7), 0.0)
    assert abs(x1 - 1.0911) < 5e-4
    assert abs(x2 - 0.8996) < 5e-4
    assert x1 == pytest.approx(math.sqrt(2) * math.cosh(1) / 2, abs=1e-15)


def test_exit_sides():
    assert sphere_exit(math.pi / 4, math.pi / 4).beta_ex < 0.5 * math.pi
    assert sphere_exit(2 * math.pi / 7, 2 * math.pi / 7).beta_ex > 0.5 * math.pi


@given(st.floats(0.01, math.pi - 0.01), st.floats(0.0, 1.0))
def test_raw_inputs_exit_or_raise(beta, frac):
    # outside the graphical assumption the result is either a valid arc or NoExit
    alpha = (math.pi - beta) * (0.01 + 0.98 * frac)
    try:
        arc = sphere_exit(beta, alpha)
    except NoExit:
        return
    assert arc.endpoint_residual() < 1e-10
    assert arc.beta_ex > arc.beta_in


def test_arcosh_clamp():
    assert arcosh_clamped(1.0 - 1e-15) == 0.0
    with pytest.raises(DomainError):
        arcosh_clamped(0.9)


def test_sgn_threshold():
    assert sgn(1e-13) == 0 and sgn(-1e-11) == -1 and sgn(2.0) == 1


@given(beta_ab, alpha_ab)
def test_endpoints_on_circle(beta, alpha):
    arc = sphere_exit(beta, alpha)
    assert arc.endpoint_residual() < 1e-12
    assert 0 < arc.beta_in < arc.beta_ex < math.pi
    assert arc.alpha_ex < 0.5 * math.pi


@given(beta_ab, alpha_ab)
def test_sign_identity(beta, alpha):
    arc = sphere_exit(beta, alpha)
    s1 = sgn(arc.alpha_in - arc.alpha_ex, 1e-10)
    s2 = sgn(arc.b, 1e-10)
    s3 = sgn(math.pi - arc.beta_in - arc.beta_ex, 1e-10)
    assert s1 == s2 == s3


@given(beta_ab, alpha_ab)
def test_both_neck_formulas(beta, alpha):
    arc = sphere_exit(beta, alpha)
    a_ex = math.sin(arc.beta_ex) * math.sin(arc.beta_ex - arc.alpha_ex)
    assert abs(arc.a - a_ex) < 1e-10


def test_ode_rhs_values():
    assert v_ode_rhs(0.3, 0.0) == -2.0
    assert v_ode_rhs(0.5 * math.pi, 1.5) == pytest.approx(-2 * (1.5 ** 2 + 1), abs=1e-15)


def test_integrate_v_initial_value():
    assert integrate_v(0.6, 0.4, 0.6) == math.tan(0.4)


def test_log_r_returns_to_zero():
    arc = sphere_exit(0.7, 0.5)
    v, q = integrate_log_r(0.7, 0.5, arc.beta_ex)
    assert abs(q) < 1e-8
    assert abs(v + math.tan(arc.alpha_ex)) < 1e-6


def test_v_zero_at_min_radius():
    arc = sphere_exit(math.pi / 4, math.pi / 4)
    beta = np.linspace(arc.beta_in, arc.beta_ex, 20001)
    r, _ = polar_radius(arc.params, beta)
    b_min = beta[np.argmin(r)]
    from fbms.rootfind import brent
    b_zero = brent(lambda b: integrate_v(arc.beta_in, arc.alpha_in, b), arc.beta_in + 1e-6,
                   arc.beta_ex - 1e-6, xtol=1e-10)
    assert abs(b_zero - b_min) < 2 * (beta[1] - beta[0])


@given(beta_ab, alpha_ab)
def test_v_strictly_decreasing(beta, alpha):
    arc = sphere_exit(beta, alpha)
    grid = np.linspace(arc.beta_in, arc.beta_ex, 40)
    v = [integrate_v(beta, alpha, b) for b in grid]
    assert np.all(np.diff(v) < 0)


@given(beta_ab, alpha_ab)
def test_radial_graph_log_convex(beta, alpha):
    arc = sphere_exit(beta, alpha)
    grid = np.linspace(arc.beta_in, arc.beta_ex, 400)
    r, dr = polar_radius(arc.params, grid)
    assert np.all(r > 0) and np.all(r <= 1 + 1e-12)
    lr = np.log(r)
    assert np.all(np.diff(lr, 2) > -1e-12)
    # dr/dbeta = -v r
    mid = len(grid) // 2
    v = integrate_v(beta, alpha, grid[mid])
    assert dr[mid] == pytest.approx(-v * r[mid], rel=1e-6, abs=1e-9)


def test_ode_exit_matches_closed_form(random_arcs):
    for arc in random_arcs[:40]:
        b, a = ode_exit(arc.beta_in, arc.alpha_in)
        assert abs(b - arc.beta_ex) < 1e-6
        assert abs(a - arc.alpha_ex) < 1e-6


def test_tangency_symmetric_neck():
    mp.mp.dps = 30
    tstar = float(mp.findroot(lambda t: t * mp.tanh(t) - 1, 1.2))
    assert tstar == pytest.approx(1.19968, abs=1e-5)
    p = CatenoidParams(0.4, 0.0)
    tp = tangency_points(p)
    assert tp.y_top_plus == pytest.approx(0.4 * tstar, abs=1e-12)
    assert tp.y_top_minus == pytest.approx(-tp.y_top_plus, abs=1e-12)


@given(st.floats(0.2, 1.5), st.floats(-1.0, 1.0))
def test_tangent_lines_pass_through_origin(a, b):
    p = CatenoidParams(a, b)
    tp = tangency_points(p)
    assert tp.y_top_minus < tp.y_top_plus
    for y in (tp.y_top_minus, tp.y_top_plus):
        x = catenary_x(p, y)
        h = 1e-6
        dxdy = (catenary_x(p, y + h) - catenary_x(p, y - h)) / (2 * h)
        # the ray slope x/y equals the tangent slope dx/dy
        assert x == pytest.approx(y * dxdy, rel=1e-6, abs=1e-8)
