"""Catenoids about the y-axis clipped to the unit ball.

A catenoid is stored through its profile curve x = a cosh((y - b)/a) in the
half plane x > 0.  Latitudes beta are measured from the north pole, so a point
on the unit circle is (sin beta, cos beta).  Contact angles follow the usual
convention: alpha_in is measured at the upper circle against the arc of the
sphere running south, alpha_ex at the lower circle against the arc running
north.

Two independent routes to the exit data are provided.  ``sphere_exit`` uses
the closed form of (a, b) plus a bracketed root find; ``ode_exit`` integrates
the first order equation satisfied by v = d/dbeta log(1/r) and never looks at
the closed form.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._accel import njit
from .errors import DomainError, NoExit, StepFailure
from .rootfind import brent, expand_bracket

SIGN_EPS = 1e-12
ROOT_XTOL = 1e-13
ODE_RTOL = 1e-9


def sgn(x: float, eps: float = SIGN_EPS) -> int:
    if abs(x) < eps:
        return 0
    return 1 if x > 0 else -1


def arcosh_clamped(x: float) -> float:
    # roundoff below 1 is absorbed, anything further below is a real error
    if x < 1.0 - 1e-14:
        raise DomainError(f"arcosh argument {x} < 1")
    if x <= 1.0:
        return 0.0
    return math.log(x + math.sqrt(max(x * x - 1.0, 0.0)))


@dataclass(frozen=True)
class CatenoidParams:
    a: float
    b: float

    def __post_init__(self):
        if not self.a > 0:
            raise DomainError(f"neck radius must be positive, got {self.a}")


@dataclass(frozen=True)
class TangencyPair:
    y_top_minus: float
    y_top_plus: float


@dataclass(frozen=True)
class CatenoidArc:
    beta_in: float
    alpha_in: float
    beta_ex: float
    alpha_ex: float
    params: CatenoidParams

    @property
    def a(self) -> float:
        return self.params.a

    @property
    def b(self) -> float:
        return self.params.b

    def mirrored(self) -> "CatenoidArc":
        """Image under the reflection y -> -y."""
        return CatenoidArc(math.pi - self.beta_ex, self.alpha_ex,
                           math.pi - self.beta_in, self.alpha_in,
                           CatenoidParams(self.params.a, -self.params.b))

    def endpoint_residual(self) -> float:
        res = 0.0
        for beta in (self.beta_in, self.beta_ex):
            y = math.cos(beta)
            x = catenary_x(self.params, y)
            res = max(res, abs(x * x + y * y - 1.0))
        return res

    def to_dict(self) -> dict:
        return {"beta_in": self.beta_in, "alpha_in": self.alpha_in,
                "beta_ex": self.beta_ex, "alpha_ex": self.alpha_ex,
                "a": self.params.a, "b": self.params.b}


def _check_inner(beta_in: float, alpha_in: float) -> None:
    if not 0.0 < beta_in < math.pi:
        raise DomainError(f"beta_in={beta_in} outside (0, pi)")
    if not 0.0 < alpha_in < math.pi - beta_in:
        raise DomainError(f"alpha_in={alpha_in} outside (0, pi - beta_in)")


def catenoid_from_inner(beta_in: float, alpha_in: float) -> CatenoidParams:
    """Catenary through (sin beta_in, cos beta_in) meeting the sphere at angle alpha_in."""
    _check_inner(beta_in, alpha_in)
    s = math.sin(alpha_in + beta_in)
    a = math.sin(beta_in) * s
    sign = sgn(alpha_in + beta_in - 0.5 * math.pi)
    b = math.cos(beta_in)
    if sign != 0:
        b -= sign * a * arcosh_clamped(1.0 / s)
    return CatenoidParams(a, b)


def catenary_x(params: CatenoidParams, y):
    return params.a * np.cosh((y - params.b) / params.a)


def catenary_slope(params: CatenoidParams, y):
    """dx/dy along the profile."""
    return np.sinh((y - params.b) / params.a)


def _clip(u: float) -> float:
    return min(300.0, max(-300.0, u))


def sphere_exit(beta_in: float, alpha_in: float) -> CatenoidArc:
    """Closed-form catenoid plus the lower intersection with the unit circle."""
    params = catenoid_from_inner(beta_in, alpha_in)
    a, b = params.a, params.b

    # u is clipped so that thin necks far from the origin do not overflow;
    # clipping keeps the sign pattern the bracketing relies on
    def r2(y):
        x = a * math.cosh(_clip((y - b) / a))
        return x * x + y * y - 1.0

    def dr2(y):
        u = _clip((y - b) / a)
        return a * math.cosh(u) * math.sinh(u) + y

    # r^2 is convex in y; its minimiser splits the two circle crossings
    lo, hi = min(0.0, b), max(0.0, b)
    if lo == hi:
        y_min = 0.0
    else:
        y_min = brent(dr2, lo, hi, xtol=ROOT_XTOL)
    y_in = math.cos(beta_in)
    if r2(y_min) >= 0.0 or y_min >= y_in:
        raise NoExit(f"catenoid through beta_in={beta_in}, alpha_in={alpha_in} does not re-enter the ball")
    lo, hi = expand_bracket(r2, y_min, -0.5)
    y_ex = brent(r2, lo, min(hi, y_min), xtol=ROOT_XTOL)
    x_ex = a * math.cosh((y_ex - b) / a)
    beta_ex = math.atan2(x_ex, y_ex)
    alpha_ex = beta_ex - 0.5 * math.pi - math.atan(math.sinh((y_ex - b) / a))
    return CatenoidArc(beta_in, alpha_in, beta_ex, alpha_ex, params)


def v_ode_rhs(beta: float, v: float) -> float:
    return -v * (v * v + 1.0) / math.tan(beta) - 2.0 * (v * v + 1.0)


@njit(cache=True)
def _rhs(beta, v):
    w = v * v + 1.0
    return -math.cos(beta) / math.sin(beta) * v * w - 2.0 * w


@njit(cache=True)
def _rk4(beta, v, q, h):
    # state (v, q) with q = log r, dq/dbeta = -v
    k1 = _rhs(beta, v)
    l1 = -v
    k2 = _rhs(beta + 0.5 * h, v + 0.5 * h * k1)
    l2 = -(v + 0.5 * h * k1)
    k3 = _rhs(beta + 0.5 * h, v + 0.5 * h * k2)
    l3 = -(v + 0.5 * h * k2)
    k4 = _rhs(beta + h, v + h * k3)
    l4 = -(v + h * k3)
    return (v + h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0,
            q + h * (l1 + 2.0 * l2 + 2.0 * l3 + l4) / 6.0)


@njit(cache=True)
def _double_step(beta, v, q, h):
    v1, q1 = _rk4(beta, v, q, h)
    vh, qh = _rk4(beta, v, q, 0.5 * h)
    v2, q2 = _rk4(beta + 0.5 * h, vh, qh, 0.5 * h)
    err = max(abs(v2 - v1) / max(1.0, abs(v2)), abs(q2 - q1) / max(1.0, abs(q2))) / 15.0
    # local extrapolation
    return v2 + (v2 - v1) / 15.0, q2 + (q2 - q1) / 15.0, err


@njit(cache=True)
def _integrate(beta0, v0, beta_stop, rtol, stop_on_exit):
    """Adaptive RK4 with step doubling.

    Returns (beta, v, q, status).  status 0 = reached beta_stop, 1 = log r
    returned to zero (exit circle found), -1 = step size underflow.
    """
    beta = beta0
    v = v0
    q = 0.0
    h = 1e-3
    hmin = 1e-14
    went_inside = False
    nsteps = 0
    while beta < beta_stop:
        if beta + h > beta_stop:
            h = beta_stop - beta
        vn, qn, err = _double_step(beta, v, q, h)
        if not (err <= rtol) or not math.isfinite(vn):
            fac = 0.9 * (rtol / err) ** 0.2 if err > 0 and math.isfinite(err) else 0.1
            h *= max(0.1, min(0.5, fac))
            if h < hmin:
                return beta, v, q, -1
            continue
        if stop_on_exit and went_inside and qn >= 0.0:
            # refine the crossing inside [beta, beta+h] by bisection on the step length
            lo = 0.0
            hi = h
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                vm, qm, _e = _double_step(beta, v, q, mid)
                if qm < 0.0:
                    lo = mid
                else:
                    hi = mid
            vm, qm, _e = _double_step(beta, v, q, 0.5 * (lo + hi))
            return beta + 0.5 * (lo + hi), vm, qm, 1
        if qn < 0.0:
            went_inside = True
        beta += h
        v = vn
        q = qn
        nsteps += 1
        fac = 0.9 * (rtol / err) ** 0.2 if err > 0 else 4.0
        h *= max(0.2, min(4.0, fac))
        if nsteps > 1000000:
            return beta, v, q, -1
    return beta, v, q, 0


def integrate_v(beta_in: float, alpha_in: float, beta_target: float,
                rtol: float = ODE_RTOL) -> float:
    """v(beta_target) from the initial value v(beta_in) = tan(alpha_in)."""
    _check_inner(beta_in, alpha_in)
    if beta_target < beta_in:
        raise DomainError("beta_target must not precede beta_in")
    if beta_target == beta_in:
        return math.tan(alpha_in)
    _, v, _, status = _integrate(beta_in, math.tan(alpha_in), beta_target, rtol, False)
    if status < 0:
        raise StepFailure(f"step control failed integrating from {beta_in} to {beta_target}")
    return float(v)


def integrate_log_r(beta_in: float, alpha_in: float, beta_target: float,
                    rtol: float = ODE_RTOL) -> tuple[float, float]:
    """(v, log r) at beta_target along the ODE trajectory."""
    _check_inner(beta_in, alpha_in)
    if beta_target == beta_in:
        return math.tan(alpha_in), 0.0
    _, v, q, status = _integrate(beta_in, math.tan(alpha_in), beta_target, rtol, False)
    if status < 0:
        raise StepFailure(f"step control failed integrating from {beta_in} to {beta_target}")
    return float(v), float(q)


def ode_exit(beta_in: float, alpha_in: float, rtol: float = ODE_RTOL) -> tuple[float, float]:
    """(beta_ex, alpha_ex) located where log r returns to 0 along the ODE."""
    _check_inner(beta_in, alpha_in)
    beta, v, _, status = _integrate(beta_in, math.tan(alpha_in), math.pi - 1e-9, rtol, True)
    if status < 0:
        raise StepFailure(f"step control failed from beta_in={beta_in}, alpha_in={alpha_in}")
    if status == 0:
        raise NoExit("ODE trajectory did not return to the unit circle")
    return float(beta), float(math.atan(-v))


def tangency_points(params: CatenoidParams) -> TangencyPair:
    """Points where a line through the origin touches the profile curve."""
    a, b = params.a, params.b

    def g(y):
        return 1.0 - (y / a) * math.tanh((y - b) / a)

    def dg(y):
        u = (y - b) / a
        return math.sinh(u) * math.cosh(u) + y / a

    lo, hi = min(0.0, b), max(0.0, b)
    y0 = 0.0 if lo == hi else brent(dg, lo, hi, xtol=1e-15)
    lo1, hi1 = expand_bracket(g, y0, -a)
    lo2, hi2 = expand_bracket(g, y0, a)
    return TangencyPair(brent(g, lo1, hi1, xtol=1e-15), brent(g, lo2, hi2, xtol=1e-15))


@njit(cache=True)
def _polar_kernel(a, b, beta, out_r, out_dr):
    # first crossing of the ray at angle beta with the profile curve, r in (0, 1]
    for i in range(beta.shape[0]):
        sb = math.sin(beta[i])
        cb = math.cos(beta[i])
        lo = 0.0
        hi = 1.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            g = mid * sb - a * math.cosh((mid * cb - b) / a)
            if g < 0.0:
                lo = mid
            else:
                hi = mid
            if hi - lo < 1e-16:
                break
        r = 0.5 * (lo + hi)
        # two Newton polish steps
        for _ in range(2):
            u = (r * cb - b) / a
            g = r * sb - a * math.cosh(u)
            dg = sb - cb * math.sinh(u)
            if dg != 0.0:
                rn = r - g / dg
                if lo <= rn <= hi:
                    r = rn
        u = (r * cb - b) / a
        f_beta = r * cb + r * sb * math.sinh(u)
        f_r = sb - cb * math.sinh(u)
        out_r[i] = r
        out_dr[i] = -f_beta / f_r


def polar_radius(params: CatenoidParams, beta) -> tuple[np.ndarray, np.ndarray]:
    """r(beta) and dr/dbeta of the radial graph of the profile arc inside the ball."""
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    r = np.empty_like(beta)
    dr = np.empty_like(beta)
    _polar_kernel(params.a, params.b, beta, r, dr)
    return r, dr
