"""Desingularizing surfaces and the assembled initial surfaces.

Coordinate conventions.  A desingularizing surface is built in model
coordinates around the z-axis from the x <= 0 half of a Scherk surface.  The
core passes through the maps

    Z_y (rotate the upper wing) -> D (push the boundary onto a cylinder)
    -> R_{pi/2 - beta} -> B_tau (wrap the z-axis into a circle)

and a homothety H_i places it at the circle C_i of the configuration.  In the
physical picture the configuration is rotationally symmetric about the
y-axis; angles about that axis are tau * z.

Wings are labelled by the quadrant of the Scherk surface they come from:
wing 2 (upper, x < 0 < y) joins the annulus or disc above a circle, wing 3
(lower, x, y < 0) the annulus or disc below.  In physical terms wing 2 is the
"-" wing and wing 3 the "+" wing.
"""
from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from . import scherk
from .configuration import Configuration, shoot
from .errors import (GuardFailure, MatchFailure, NumericalFailure, ResolutionError,
                     ValidationError)
from .mesh import Mesh, grid_triangles, orient_consistently, weld, zipper
from .rootfind import brent

log = logging.getLogger(__name__)

DELTA_S = 0.1
MESH_A = 3.0  # wing offset of the Scherk chart used for meshes
C_D = 2.0
EPS_PRIME = 0.1
DELTA_PHI = 0.3
KAPPA = 4.0  # clustering of core rows towards the boundary
WELD_TOL = 1e-9
FD_STEP = 1e-5
F_CUTOFF_S = 40.0  # beyond this the wing graph is below roundoff
GLUINGS = ("trim", "overlap")


# ---------------------------------------------------------------- elementary maps

def _stack(x, y, z):
    return np.stack(np.broadcast_arrays(x, y, z), axis=-1)


def rot_z(phi, p) -> np.ndarray:
    """Rotation about the z-axis; phi may be an array broadcasting over points."""
    p = np.asarray(p, dtype=float)
    c, s = np.cos(phi), np.sin(phi)
    return _stack(c * p[..., 0] - s * p[..., 1], s * p[..., 0] + c * p[..., 1], p[..., 2])


def rot2(phi: float) -> np.ndarray:
    c, s = math.cos(phi), math.sin(phi)
    return np.array([[c, -s], [s, c]])


def apply2(M: np.ndarray, p) -> np.ndarray:
    """Apply a 2x2 matrix to the (x, y) part of points."""
    p = np.asarray(p, dtype=float)
    return _stack(M[0, 0] * p[..., 0] + M[0, 1] * p[..., 1],
                  M[1, 0] * p[..., 0] + M[1, 1] * p[..., 1], p[..., 2])


def bend(tau: float, p) -> np.ndarray:
    """Wrap the z-direction around a circle of radius 1/tau in the xz-plane."""
    if tau < 0:
        raise ValidationError("tau must be nonnegative")
    p = np.asarray(p, dtype=float)
    if tau == 0:
        return p.copy()
    r = 1.0 / tau + p[..., 0]
    t = tau * p[..., 2]
    return _stack(r * np.cos(t) - 1.0 / tau, p[..., 1], r * np.sin(t))


def sphere_membership(tau: float, beta: float, p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    sb = math.sin(beta)
    return ((p[..., 0] + 1.0 / tau) ** 2 + (p[..., 1] + math.cos(beta) / (tau * sb)) ** 2
            + p[..., 2] ** 2 - (1.0 / (tau * sb)) ** 2)


def cylinder_membership(tau: float, beta: float, p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    rho = 1.0 / (tau * math.sin(beta))
    return (p[..., 0] + rho) ** 2 + p[..., 1] ** 2 - rho * rho


def homothety(tau: float, beta: float, q) -> np.ndarray:
    """Map bent coordinates onto the physical picture: the bend image of the z-axis goes to C_i."""
    q = np.asarray(q, dtype=float)
    sb = math.sin(beta)
    return _stack(tau * sb * (q[..., 0] + 1.0 / tau), tau * sb * q[..., 1] + math.cos(beta),
                  tau * sb * q[..., 2])


def reflect_y(p) -> np.ndarray:
    p = np.array(p, dtype=float, copy=True)
    p[..., 1] *= -1.0
    return p


# ---------------------------------------------------------------- boundary adjustment

def saddle_width(theta: float) -> float:
    """|x| of the Scherk surface at y = z = 0."""
    st, ct = math.sin(theta), math.cos(theta)
    arg = (1.0 + ct * ct) / (st * st)
    return st * math.log(arg + math.sqrt(arg * arg - 1.0))


def default_eps_d(theta: float, c_d: float = C_D) -> float:
    # slab half-width c_d*eps_d kept to a quarter of the core's x-extent
    return min(0.35, 0.25 * saddle_width(theta)) / c_d


def _shear_profile(x, ce):
    """Lambda(x) and Lambda'(x): the linear shear factor on [-ce, 0] faded out by -2ce."""
    x = np.asarray(x, dtype=float)
    ps, dps = scherk.psi_derivatives(-2 * ce, -ce, x)
    lin = 1.0 + x / (2 * ce)
    return lin * ps, ps / (2 * ce) + lin * dps


def deform_D(beta: float, tau: float, p, eps_d: float, c_d: float = C_D) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    sb = math.sin(beta)
    if tau == 0 or sb < 1e-15:
        return p.copy()
    rho = 1.0 / (tau * sb)
    ce = c_d * eps_d
    y = p[..., 1]
    w = np.sqrt(np.maximum(rho * rho - y * y, 0.0)) - rho
    mu = scherk.psi(2 * c_d, c_d, np.abs(y))
    lam, _ = _shear_profile(p[..., 0], ce)
    return _stack(p[..., 0] + lam * mu * w, y, p[..., 2])


def deform_D_stretch(beta: float, tau: float, p, eps_d: float, c_d: float = C_D) -> np.ndarray:
    """d x' / d x of deform_D; positive everywhere means the map is injective along x."""
    p = np.asarray(p, dtype=float)
    sb = math.sin(beta)
    if tau == 0 or sb < 1e-15:
        return np.ones(p.shape[:-1])
    rho = 1.0 / (tau * sb)
    y = p[..., 1]
    w = np.sqrt(np.maximum(rho * rho - y * y, 0.0)) - rho
    mu = scherk.psi(2 * c_d, c_d, np.abs(y))
    _, dlam = _shear_profile(p[..., 0], c_d * eps_d)
    return 1.0 + dlam * mu * w


def z_y_diffeo(phi: float, delta_theta: float, p) -> np.ndarray:
    """Rotate the upper wings by phi (sign following x), identity near x = 0 and for y <= 0."""
    if abs(phi) > 2 * delta_theta:
        raise ValidationError(f"|phi|={abs(phi)} exceeds 2*delta_theta")
    p = np.asarray(p, dtype=float)
    if phi == 0.0:
        return p.copy()
    x0 = 0.5 * math.sin(2 * delta_theta)
    x1 = math.sin(9 * delta_theta)
    chi = scherk.psi(x0, x1, np.abs(p[..., 0])) * scherk.psi(0.0, x1, p[..., 1])
    return rot_z(phi * chi * np.sign(p[..., 0]), p)


# ---------------------------------------------------------------- parameters

WING_MINUS, WING_PLUS = 2, 3


def default_delta_theta(alpha_plus: float) -> float:
    return min(alpha_plus, 0.5 * math.pi - alpha_plus) / 30.0


@dataclass(frozen=True)
class DesingParams:
    """Parameters of one desingularizing surface plus the numerical knobs it needs."""
    alpha_minus: float
    alpha_plus: float
    beta: float
    phi_minus: float = 0.0
    phi_plus: float = 0.0
    tau: float = 0.05
    a: Optional[float] = None  # wing offset of the Scherk chart, MESH_A when None
    delta_s: float = DELTA_S
    delta_theta: Optional[float] = None
    eps_d: Optional[float] = None
    c_d: float = C_D
    phi_bound: float = DELTA_PHI

    def __post_init__(self):
        if self.delta_theta is None:
            object.__setattr__(self, "delta_theta", default_delta_theta(self.alpha_plus))
        d = self.delta_theta
        if not 30 * d - 1e-12 <= self.alpha_plus <= 0.5 * math.pi - 30 * d + 1e-12:
            raise ValidationError(f"alpha+={self.alpha_plus} outside [30 dtheta, pi/2 - 30 dtheta]")
        if abs(self.alpha_plus - self.alpha_minus) > d:
            raise ValidationError("|alpha+ - alpha-| exceeds delta_theta")
        if not d <= self.beta <= math.pi - d:
            raise ValidationError(f"beta={self.beta} outside [dtheta, pi - dtheta]")
        if max(abs(self.phi_minus), abs(self.phi_plus)) > self.phi_bound:
            raise ValidationError("wing angles exceed phi_bound")
        if self.tau < 0:
            raise ValidationError("tau must be nonnegative")
        if self.tau > 0:
            m = 1.0 / self.tau
            if abs(m - round(m)) > 1e-9 * m:
                raise ValidationError(f"1/tau={m} is not an integer")
        if self.a is None:
            object.__setattr__(self, "a", MESH_A)
        if self.eps_d is None:
            object.__setattr__(self, "eps_d", default_eps_d(self.alpha_plus, self.c_d))

    @property
    def theta(self) -> float:
        return self.alpha_plus

    @property
    def m(self) -> int:
        return int(round(1.0 / self.tau))

    @property
    def phi_z(self) -> float:
        return self.alpha_plus - self.alpha_minus

    def frame(self, wing: int) -> np.ndarray:
        """2x2 linear part (including R_{pi/2-beta}) taking quadrant one to the given wing."""
        R = rot2(0.5 * math.pi - self.beta)
        if wing == WING_MINUS:
            return R @ rot2(-self.phi_z) @ np.diag([-1.0, 1.0])
        if wing == WING_PLUS:
            return -R
        raise ValidationError("wing must be 2 or 3")

    def wing_angle(self, wing: int) -> float:
        return -self.phi_minus if wing == WING_MINUS else self.phi_plus

    def pivot(self, wing: int) -> np.ndarray:
        return pivot_point(self.theta, self.a, self.frame(wing))

    def eta(self, wing: int) -> float:
        return wing_direction(self.theta, self.frame(wing), self.wing_angle(wing))


def pivot_point(theta: float, a: float, frame: np.ndarray) -> np.ndarray:
    """(r0, y0): where the pivot line of the framed asymptotic half plane meets z = 0."""
    st, ct = math.sin(theta), math.cos(theta)
    b = scherk.b_theta(theta)
    return frame @ np.array([a * st - b * ct, a * ct + b * st])


def wing_direction(theta: float, frame: np.ndarray, phi: float) -> float:
    e = frame @ np.array([math.sin(theta), math.cos(theta)])
    return math.atan2(e[1], e[0]) + phi


# ---------------------------------------------------------------- wing maps

def wing_map_A(theta: float, phi: float, frame: np.ndarray, tau: float, s, z,
               a: float) -> np.ndarray:
    """Bent asymptotic half plane: a catenoid (or plane) through the pivot circle."""
    r0, y0 = pivot_point(theta, a, frame)
    eta = wing_direction(theta, frame, phi)
    s = np.asarray(s, dtype=float)
    z = np.asarray(z, dtype=float)
    if tau == 0:
        return _stack(r0 + s * math.cos(eta), y0 + s * math.sin(eta), z)
    c = r0 + 1.0 / tau
    R = c * (np.cosh(tau * s) + math.cos(eta) * np.sinh(tau * s))
    Y = y0 + s * (1.0 + r0 * tau) * math.sin(eta)
    return _stack(R * np.cos(tau * z) - 1.0 / tau, Y, R * np.sin(tau * z))


def wing_normal_A(theta: float, phi: float, frame: np.ndarray, tau: float, s, z,
                  a: float) -> np.ndarray:
    r0, _ = pivot_point(theta, a, frame)
    eta = wing_direction(theta, frame, phi)
    s = np.asarray(s, dtype=float)
    z = np.asarray(z, dtype=float)
    det = np.sign(np.linalg.det(frame))
    dR = np.sinh(tau * s) + math.cos(eta) * np.cosh(tau * s)
    dY = math.sin(eta) * np.ones_like(dR)
    nrm = np.hypot(dR, dY)
    nr, ny = -det * dY / nrm, det * dR / nrm
    return _stack(nr * np.cos(tau * z), ny, nr * np.sin(tau * z))


def _graph(theta: float, a: float, s, z) -> np.ndarray:
    s, z = np.broadcast_arrays(np.asarray(s, dtype=float), np.asarray(z, dtype=float))
    out = np.zeros(s.shape)
    near = s < F_CUTOFF_S
    if np.any(near):
        out[near] = scherk.wing_graph(theta, a, s[near], z[near])
    return out


def bent_scherk_wing(params: DesingParams, wing: int, s, z) -> np.ndarray:
    """B_tau of the framed Scherk wing, in bent coordinates."""
    s = np.asarray(s, dtype=float)
    z = np.asarray(z, dtype=float)
    F = scherk.wing_point(params.theta, params.a, s, z)
    return bend(params.tau, apply2(params.frame(wing), F))


def wing_map_F(params: DesingParams, wing: int, s, z, gluing: str = "trim") -> np.ndarray:
    """Glued wing: bent Scherk wing for s <= 1/3, graph over wing_map_A for s >= 2/3."""
    th, tau, a = params.theta, params.tau, params.a
    fr, ph = params.frame(wing), params.wing_angle(wing)
    s = np.asarray(s, dtype=float)
    z = np.asarray(z, dtype=float)
    s, z = np.broadcast_arrays(s, z)
    f = _graph(th, a, s, z)
    A = wing_map_A(th, ph, fr, tau, s, z, a)
    nu = wing_normal_A(th, ph, fr, tau, s, z, a)
    cut = graph_cutoff(params.delta_s, tau, s, gluing)
    far = A + (cut * f)[..., None] * nu
    w = np.asarray(scherk.psi(1.0, 0.0, s))
    out = far.copy()
    near = w > 0
    if np.any(near):
        out[near] = (w[near, None] * bent_scherk_wing(params, wing, s[near], z[near])
                     + (1 - w[near, None]) * far[near])
    return out


def graph_cutoff(delta_s: float, tau: float, s, gluing: str = "trim") -> np.ndarray:
    s = np.asarray(s, dtype=float)
    if gluing == "overlap" or tau == 0:
        return np.ones(s.shape)
    return np.asarray(scherk.psi(4 * delta_s / tau, 3 * delta_s / tau, s))


# ---------------------------------------------------------------- core chart

def _ray_solve(theta: float, omega, depth, iters: int = 64):
    """(y, z) on the ray from (0, pi) at angle omega where the half surface has depth |x|."""
    st = math.sin(theta)
    omega = np.asarray(omega, dtype=float)
    depth = np.abs(np.asarray(depth, dtype=float))
    omega, depth = np.broadcast_arrays(omega, depth)
    target = st * st * (np.cosh(depth / st) - 1.0)
    dy, dz = np.cos(omega), np.sin(omega)
    # stay inside z >= 0 where the level function is monotone along the ray
    hi = np.minimum(8.0, math.pi / np.maximum(-dz, 1e-300))
    lo = np.zeros(omega.shape)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        below = scherk.hole_level(theta, mid * dy, math.pi + mid * dz) < target
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    d = 0.5 * (lo + hi)
    return d * dy, math.pi + d * dz


def core_model_point(theta: float, x, omega) -> np.ndarray:
    """Point of the Scherk surface with coordinate x on the ray omega (mirrored for x > 0)."""
    x = np.asarray(x, dtype=float)
    y, z = _ray_solve(theta, omega, x)
    return _stack(x, y, z)


def core_map(params: DesingParams, p) -> np.ndarray:
    # on x < 0 this turns wing 2 by -(alpha+ - alpha-), matching its frame
    q = z_y_diffeo(params.phi_z, params.delta_theta, p)
    q = deform_D(params.beta, params.tau, q, params.eps_d, params.c_d)
    q = apply2(rot2(0.5 * math.pi - params.beta), q)
    return bend(params.tau, q)


def core_phys(params: DesingParams, x, omega) -> np.ndarray:
    return homothety(params.tau, params.beta,
                     core_map(params, core_model_point(params.theta, x, omega)))


@dataclass
class CoreGrid:
    x: np.ndarray  # (rows, cols) model x <= 0
    omega: np.ndarray  # (cols,)
    n_half: int
    n_left: int

    @property
    def shape(self):
        return self.x.shape

    def top_columns(self) -> np.ndarray:
        # top seam column j carries z index n_half - j
        return np.arange(self.n_half + 1)

    def bottom_columns(self) -> np.ndarray:
        return np.arange(self.n_half + self.n_left, 2 * self.n_half + self.n_left + 1)


def core_grid(params: DesingParams, n_half: int, n_rows: int, spacing: float,
              kappa: float = KAPPA) -> CoreGrid:
    th, a = params.theta, params.a
    st, ct = math.sin(th), math.cos(th)
    b = scherk.b_theta(th)
    z = np.linspace(0.0, math.pi, n_half + 1)
    f0 = _graph(th, a, np.zeros_like(z), z)
    y_seam = a * ct + (b + f0) * st
    n_left = max(2, int(math.ceil(2 * y_seam[0] / spacing)))
    y_left = np.linspace(y_seam[0], -y_seam[0], n_left + 1)
    oy = np.concatenate([y_seam[::-1], y_left[1:-1], -y_seam])
    oz = np.concatenate([z[::-1], np.zeros(n_left - 1), z])
    omega = np.arctan2(oz - math.pi, oy)
    depth_out = scherk.graph_depth(th, oy, oz)
    xi = np.linspace(0.0, 1.0, n_rows + 1)
    prof = np.sinh(kappa * xi) / math.sinh(kappa)
    x = -prof[:, None] * depth_out[None, :]
    return CoreGrid(x, omega, n_half, n_left)


# ---------------------------------------------------------------- resolution

@dataclass(frozen=True)
class Resolution:
    z_per_period: int = 16
    s_samples: int = 20

    def __post_init__(self):
        if self.z_per_period < 8 or self.z_per_period % 2:
            raise ResolutionError("need an even number >= 8 of samples per period")
        if self.s_samples < 4:
            raise ResolutionError("need at least 4 rows across the core")

    @property
    def n_half(self) -> int:
        return self.z_per_period // 2

    @property
    def spacing(self) -> float:
        return 2 * math.pi / self.z_per_period


def as_resolution(res) -> Resolution:
    if res is None:
        return Resolution()
    if isinstance(res, Resolution):
        return res
    if isinstance(res, dict):
        return Resolution(**res)
    raise ValidationError("resolution must be a Resolution or a dict")


# ---------------------------------------------------------------- pieces in physical space

class Piece:
    """One desingularizing surface placed at its circle; mirrors delegate to their source."""

    def __init__(self, index: int, params: Optional[DesingParams] = None,
                 source: Optional["Piece"] = None):
        self.index = index
        self.params = params
        self.source = source

    @property
    def mirrored(self) -> bool:
        return self.source is not None

    def _p(self) -> DesingParams:
        return self.source.params if self.mirrored else self.params

    @property
    def tau(self) -> float:
        return self._p().tau

    @property
    def beta(self) -> float:
        p = self._p()
        return math.pi - p.beta if self.mirrored else p.beta

    @property
    def scale(self) -> float:
        return self.tau * math.sin(self.beta)

    @staticmethod
    def _other(wing: int) -> int:
        return WING_PLUS if wing == WING_MINUS else WING_MINUS

    def pivot(self, wing: int) -> np.ndarray:
        """(radius, height) of the pivot circle."""
        if self.mirrored:
            r, y = self.source.pivot(self._other(wing))
            return np.array([r, -y])
        p = self.params
        r0, y0 = p.pivot(wing)
        sb = math.sin(p.beta)
        return np.array([sb * (1.0 + p.tau * r0), math.cos(p.beta) + p.tau * sb * y0])

    def meridian(self, wing: int, s, phi: Optional[float] = None) -> np.ndarray:
        """(radius, height) of wing_map_A at parameter s; phi overrides the wing angle."""
        if self.mirrored:
            out = self.source.meridian(self._other(wing), s, phi)
            out[..., 1] *= -1
            return out
        p = self.params
        ph = p.wing_angle(wing) if phi is None else phi
        r0, y0 = p.pivot(wing)
        eta = wing_direction(p.theta, p.frame(wing), ph)
        s = np.asarray(s, dtype=float)
        sb, t = math.sin(p.beta), p.tau
        R = sb * (1.0 + t * r0) * (np.cosh(t * s) + math.cos(eta) * np.sinh(t * s))
        Y = math.cos(p.beta) + t * sb * (y0 + s * (1.0 + r0 * t) * math.sin(eta))
        return np.stack([R, Y], axis=-1)

    def base_direction(self, wing: int) -> float:
        """Angle in the (radius, height) plane of the unrotated wing direction."""
        if self.mirrored:
            return -self.source.base_direction(self._other(wing))
        p = self.params
        return wing_direction(p.theta, p.frame(wing), 0.0)

    def normal_at_pivot(self, wing: int) -> np.ndarray:
        """Meridian components of the graph direction of the wing at its pivot."""
        if self.mirrored:
            n = self.source.normal_at_pivot(self._other(wing))
            return np.array([n[0], -n[1]])
        p = self.params
        n = wing_normal_A(p.theta, p.wing_angle(wing), p.frame(wing), p.tau, 0.0, 0.0, p.a)
        return np.array([n[0], n[1]])

    def scherk_wing(self, wing: int, s, z) -> np.ndarray:
        if self.mirrored:
            return reflect_y(self.source.scherk_wing(self._other(wing), s, z))
        p = self.params
        return homothety(p.tau, p.beta, bent_scherk_wing(p, wing, s, z))

    def graph(self, wing: int, s, z) -> np.ndarray:
        p = self._p()
        return _graph(p.theta, p.a, s, z)


# ---------------------------------------------------------------- annuli

@dataclass(frozen=True)
class FittedAnnulus:
    a: float
    b: float
    u_top: float
    u_bottom: float

    def point(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        return np.stack([self.a * np.cosh(u), self.b + self.a * u], axis=-1)

    def normal(self, u) -> np.ndarray:
        """Outward (away from the axis) unit normal in the meridian plane."""
        u = np.asarray(u, dtype=float)
        return np.stack([1.0 / np.cosh(u), -np.tanh(u)], axis=-1)

    def signed_distance(self, RY) -> np.ndarray:
        RY = np.asarray(RY, dtype=float)
        return RY[..., 0] - self.a * np.cosh((RY[..., 1] - self.b) / self.a)


def fit_annulus(top, bottom, a0: float, b0: float, tol: float = 1e-14,
                maxiter: int = 100) -> FittedAnnulus:
    """Catenoid about the y-axis through two coaxial circles given as (radius, height)."""
    R1, Y1 = top
    R2, Y2 = bottom
    x = np.array([a0, b0], dtype=float)
    for _ in range(maxiter):
        a, b = x
        u1, u2 = (Y1 - b) / a, (Y2 - b) / a
        F = np.array([a * math.cosh(u1) - R1, a * math.cosh(u2) - R2])
        J = np.array([[math.cosh(u1) - u1 * math.sinh(u1), -math.sinh(u1)],
                      [math.cosh(u2) - u2 * math.sinh(u2), -math.sinh(u2)]])
        dx = np.linalg.solve(J, -F)
        # damp steps that would make the neck radius nonpositive
        t = 1.0
        while x[0] + t * dx[0] <= 0:
            t *= 0.5
        x = x + t * dx
        if np.max(np.abs(dx)) < tol * max(1.0, abs(x[1])):
            break
    a, b = x
    u1, u2 = (Y1 - b) / a, (Y2 - b) / a
    res = max(abs(a * math.cosh(u1) - R1), abs(a * math.cosh(u2) - R2))
    if not res < 1e-12 or not u1 > u2:
        raise NumericalFailure(f"annulus fit failed (residual {res:.2e})")
    return FittedAnnulus(float(a), float(b), float(u1), float(u2))


# ---------------------------------------------------------------- initial surface parameters

@dataclass(frozen=True)
class InitialSurfaceParams:
    k: int
    m: int
    sigma: tuple = ()
    varphi: tuple = ()  # (phi-_1, phi+_1, ..., phi-_k, phi+_k)
    resolution: Resolution = field(default_factory=Resolution)
    gluing: str = "trim"
    a: Optional[float] = None  # common wing offset, MESH_A when None
    delta_s: Optional[float] = None  # fitted to the annuli when None
    eps_prime: float = EPS_PRIME
    eps_d: Optional[float] = None
    phi_bound: float = DELTA_PHI
    xi_bound: Optional[float] = None

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 3:
            raise ValidationError("k must be an integer >= 3")
        if int(self.m) != self.m or self.m < 2:
            raise ValidationError("m must be an integer >= 2")
        if self.gluing not in GLUINGS:
            raise ValidationError(f"gluing must be one of {GLUINGS}")
        object.__setattr__(self, "resolution", as_resolution(self.resolution))
        sig = np.zeros(self.k) if len(self.sigma) == 0 else np.asarray(self.sigma, float)
        if len(sig) != self.k:
            raise ValidationError("sigma must have k entries")
        if np.max(np.abs(sig + sig[::-1])) > 1e-15:
            raise ValidationError("sigma must be antisymmetric: sigma_{k-i+1} = -sigma_i")
        vp = np.zeros(2 * self.k) if len(self.varphi) == 0 else np.asarray(self.varphi, float)
        if len(vp) != 2 * self.k:
            raise ValidationError("varphi must have 2k entries")
        pm = vp.reshape(self.k, 2)
        if np.max(np.abs(pm[:, 0] - pm[::-1, 1])) > 1e-15:
            raise ValidationError("varphi must satisfy phi-_i = phi+_{k-i+1}")
        object.__setattr__(self, "sigma", tuple(sig.tolist()))
        object.__setattr__(self, "varphi", tuple(vp.tolist()))
        bound = self.xi_bound
        if bound is not None:
            size = max(float(np.abs(sig).sum()), float(np.max(np.abs(vp))))
            if size > bound * self.tau:
                raise ValidationError(f"|xi|={size} exceeds xi_bound * tau")

    @property
    def tau(self) -> float:
        return 1.0 / self.m

    def to_dict(self) -> dict:
        return {"k": self.k, "m": self.m, "sigma": list(self.sigma), "varphi": list(self.varphi),
                "resolution": {"z_per_period": self.resolution.z_per_period,
                               "s_samples": self.resolution.s_samples},
                "gluing": self.gluing, "a": self.a, "delta_s": self.delta_s,
                "eps_prime": self.eps_prime, "eps_d": self.eps_d, "phi_bound": self.phi_bound}


def _source_count(k: int) -> int:
    return (k + 1) // 2


@dataclass
class Layout:
    """Everything about an initial surface except the meshes."""
    xi: InitialSurfaceParams
    config: Configuration
    pieces: list
    annuli: list  # index j-1 for annulus j joining pieces j and j+1
    discs: tuple  # (radius, height) of the pivot circles on the top and bottom discs
    delta_s: float
    strip_lengths: np.ndarray  # conformal length S of each annulus strip
    phi_tilde: np.ndarray  # (k, 2): (phi-, phi+)
    match_residual: float
    match_closed_form_gap: float

    @property
    def tau(self) -> float:
        return self.xi.tau

    def phi_plus_phi_tilde(self) -> float:
        vp = np.asarray(self.xi.varphi).reshape(-1, 2)
        return float(np.max(np.abs(vp + self.phi_tilde)))


def _wrap(a: float) -> float:
    return (a + math.pi) % (2 * math.pi) - math.pi


def _needed_direction(layout_annuli, discs, piece_idx: int, wing: int, k: int) -> float:
    """Direction (radius, height) the wing must leave its pivot in to run along A'."""
    if wing == WING_PLUS:
        if piece_idx == k - 1:
            return math.pi
        ann = layout_annuli[piece_idx]
        return math.atan2(-1.0, -math.sinh(ann.u_top))
    if piece_idx == 0:
        return math.pi
    ann = layout_annuli[piece_idx - 1]
    return math.atan2(1.0, math.sinh(ann.u_bottom))


def plan_initial_surface(xi: InitialSurfaceParams) -> Layout:
    """Configuration, desing parameters, fitted annuli and matching angles."""
    k, tau = xi.k, xi.tau
    config = shoot(np.asarray(xi.sigma)[: k // 2], k)
    vp = np.asarray(xi.varphi).reshape(k, 2)
    n_src = _source_count(k)
    pieces: list[Piece] = []
    for i in range(n_src):
        am = config.alpha_minus[i] - vp[i, 0]
        ap = config.alpha_plus[i] - vp[i, 1]
        params = DesingParams(am, ap, config.beta[i], 0.0, 0.0, tau, a=xi.a,
                              delta_s=DELTA_S, eps_d=xi.eps_d, phi_bound=xi.phi_bound)
        pieces.append(Piece(i + 1, params))
    for i in range(n_src, k):
        pieces.append(Piece(i + 1, source=pieces[k - 1 - i]))

    annuli = []
    for j in range(k - 1):
        arc = config.arcs[j]
        annuli.append(fit_annulus(pieces[j].pivot(WING_PLUS), pieces[j + 1].pivot(WING_MINUS),
                                  arc.a, arc.b))
    discs = (pieces[0].pivot(WING_MINUS), pieces[-1].pivot(WING_PLUS))
    S = np.array([(ann.u_top - ann.u_bottom) / tau for ann in annuli])

    # matching angles: unique rotation making each wing catenoid coincide with A'
    phi_t = np.zeros((k, 2))
    gap = 0.0
    res = 0.0
    for i in range(n_src):
        P = pieces[i]
        new = {}
        for wing, col in ((WING_MINUS, 0), (WING_PLUS, 1)):
            need = _needed_direction(annuli, discs, i, wing, k)
            base = P.base_direction(wing)
            closed = _wrap(need - base) if wing == WING_PLUS else _wrap(base - need)
            if i == 0 and wing == WING_MINUS:
                target, s_test = ("disc", discs[0]), 5 * DELTA_S / tau
            elif i == k - 1 and wing == WING_PLUS:
                target, s_test = ("disc", discs[1]), 5 * DELTA_S / tau
            else:
                j = i if wing == WING_PLUS else i - 1
                target, s_test = ("ann", annuli[j]), 0.5 * S[j]
            turn = _match_angle(P, wing, target, s_test, xi.phi_bound)
            # wing 2 turns by -phi-
            phi = -turn if wing == WING_MINUS else turn
            gap = max(gap, abs(phi - closed))
            new[col] = phi
        phi_t[i] = new[0], new[1]
        P.params = replace(P.params, phi_minus=phi_t[i, 0], phi_plus=phi_t[i, 1])
    for i in range(n_src, k):
        phi_t[i] = phi_t[k - 1 - i, ::-1]
    # residual of the matched wing circles against their targets
    for j, ann in enumerate(annuli):
        top = pieces[j].meridian(WING_PLUS, 0.5 * S[j])
        bot = pieces[j + 1].meridian(WING_MINUS, 0.5 * S[j])
        res = max(res, abs(float(ann.signed_distance(top))), abs(float(ann.signed_distance(bot))))
    for d, (P, w) in zip(discs, ((pieces[0], WING_MINUS), (pieces[-1], WING_PLUS))):
        res = max(res, abs(float(P.meridian(w, 5 * DELTA_S / tau)[1] - d[1])))

    delta_s = xi.delta_s
    if delta_s is None:
        delta_s = min(DELTA_S, 0.1 * tau * float(S.min()))
    if xi.gluing == "trim":
        if 8 * delta_s / tau > float(S.min()):
            raise GuardFailure(f"wing bands 2 x 4 delta_s/tau = {8 * delta_s / tau:.2f} exceed the "
                               f"shortest annulus strip {S.min():.2f}")
        if delta_s / tau < 0.2:
            raise GuardFailure(f"delta_s/tau = {delta_s / tau:.3f} < 0.2: the graph cutoff would overlap "
                               "the Scherk blend; increase m or use gluing='overlap'")
    elif S.min() < 2.0:
        raise GuardFailure(f"annulus strip of conformal length {S.min():.2f} < 2 cannot hold two blends")
    for P in pieces[:n_src]:
        P.params = replace(P.params, delta_s=delta_s)
    return Layout(xi, config, pieces, annuli, discs, delta_s, S, phi_t, res, gap)


def _match_angle(P: Piece, wing: int, target, s_test: float, bound: float) -> float:
    kind, obj = target

    def dist(phi):
        RY = P.meridian(wing, s_test, phi)
        if kind == "disc":
            return float(RY[1] - obj[1])
        return float(obj.signed_distance(RY))

    try:
        return brent(dist, -bound, bound, xtol=1e-15)
    except NumericalFailure as exc:
        raise MatchFailure(f"matching angle for piece {P.index} wing {wing} not found in "
                           f"[-{bound}, {bound}]") from exc


# ---------------------------------------------------------------- meshing helpers

@dataclass
class Patch:
    """A piece of the fundamental wedge before welding."""
    vertices: np.ndarray
    triangles: np.ndarray
    normals: np.ndarray
    region: list  # per-vertex region name
    group: list  # per-face group name
    s: np.ndarray
    scale: np.ndarray


def _fd_normal(f, u, v, h=FD_STEP, one_sided_u=None):
    """Unit normal of a chart by centered differences; one_sided_u selects backward in u."""
    if one_sided_u is None:
        du = (f(u + h, v) - f(u - h, v)) / (2 * h)
    else:
        back = np.asarray(one_sided_u, dtype=bool)
        fu = np.where(back[..., None], f(u, v), f(u + h, v))
        bu = np.where(back[..., None], f(u - h, v), f(u - h, v))
        du = (fu - bu) / np.where(back, h, 2 * h)[..., None]
    dv = (f(u, v + h) - f(u, v - h)) / (2 * h)
    n = np.cross(du, dv)
    return n / np.linalg.norm(n, axis=-1, keepdims=True)


def _unit(v):
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


class CoreSurface:
    """Chart (x, omega) of one corrected core, in physical coordinates."""

    def __init__(self, piece: Piece, eps_prime: float):
        self.piece = piece
        self.p = piece.params
        self.eps_prime = eps_prime

    def raw(self, x, omega):
        return core_phys(self.p, x, omega)

    def raw_normal(self, x, omega):
        return _fd_normal(self.raw, np.asarray(x, float), np.asarray(omega, float))

    def boundary_data(self, omega):
        """(Theta, mu) along the boundary: <X, nu> and the conormal stretch of d/dx."""
        omega = np.asarray(omega, dtype=float)
        h = FD_STEP
        z0 = np.zeros_like(omega)
        X0 = self.raw(z0, omega)
        Xx = (self.raw(z0 + h, omega) - self.raw(z0 - h, omega)) / (2 * h)
        Xw = (self.raw(z0, omega + h) - self.raw(z0, omega - h)) / (2 * h)
        nu = _unit(np.cross(Xx, Xw))
        T = _unit(Xw)
        perp = Xx - np.sum(Xx * T, axis=-1, keepdims=True) * T
        return np.sum(X0 * nu, axis=-1), np.linalg.norm(perp, axis=-1), nu

    def collar_width(self) -> float:
        return 0.5 * self.eps_prime * self.p.tau

    def correction(self, x, omega):
        """Normal displacement making the surface meet the sphere orthogonally."""
        Theta, mu, _ = self.boundary_data(omega)
        rho = -np.asarray(x, dtype=float) * mu
        w = self.collar_width()
        cut = scherk.psi(w, 0.5 * w, rho)
        return -rho * Theta / np.sqrt(1.0 - Theta ** 2) * cut

    def corrected(self, x, omega):
        x = np.asarray(x, dtype=float)
        omega = np.asarray(omega, dtype=float)
        X = self.raw(x, omega)
        u = self.correction(x, omega)
        nu = self.raw_normal(x, omega)
        return X + u[..., None] * nu

    def in_collar(self, x, omega) -> np.ndarray:
        _, mu, _ = self.boundary_data(omega)
        return -np.asarray(x) * mu < self.collar_width() * 1.0001


def _core_patch(piece: Piece, res: Resolution, eps_prime: float, correct: bool = True) -> Patch:
    p = piece.params
    grid = core_grid(p, res.n_half, res.s_samples, res.spacing)
    rows, cols = grid.shape
    X_ = np.broadcast_to(grid.x, (rows, cols))
    W_ = np.broadcast_to(grid.omega[None, :], (rows, cols))
    xs, ws = X_.ravel().copy(), W_.ravel().copy()
    surf = CoreSurface(piece, eps_prime)
    V = surf.raw(xs, ws)
    outer = np.zeros(rows * cols, dtype=bool)
    outer[(rows - 1) * cols:] = True
    N = _fd_normal(surf.raw, xs, ws, one_sided_u=None)
    raw_N = N.copy()
    collar = np.zeros(len(xs), dtype=bool)
    if correct and p.tau > 0:
        collar = surf.in_collar(xs, ws)
        if np.any(collar & outer):
            raise GuardFailure("boundary collar reaches the wing seam")
        idx = np.nonzero(collar)[0]
        V[idx] = surf.corrected(xs[idx], ws[idx])
        N[idx] = _fd_normal(surf.corrected, xs[idx], ws[idx], h=1e-4)
    tri = grid_triangles(rows, cols)
    region = [f"core{piece.index}"] * len(V)
    group = [f"desing{piece.index}"] * len(tri)
    stretch = deform_D_stretch(p.beta, p.tau, core_model_point(p.theta, xs, ws), p.eps_d, p.c_d)
    if np.min(stretch) < 0.25:
        raise GuardFailure(f"boundary adjustment folds the core (min stretch {np.min(stretch):.3f})")
    patch = Patch(V, tri, N, region, group, np.zeros(len(V)), np.full(len(V), piece.scale))
    patch.extra = {"x": xs, "omega": ws, "collar": collar, "raw_normal": raw_N,
                   "boundary": np.arange(cols), "min_stretch": float(np.min(stretch))}
    return patch


class Strip:
    """Conformal (s, z) chart of an annulus or disc joined to its wing(s)."""

    def __init__(self, layout: Layout, j: int):
        self.layout = layout
        self.j = j
        k = layout.xi.k
        self.tau = layout.tau
        self.gluing = layout.xi.gluing
        self.delta_s = layout.delta_s
        P = layout.pieces
        if j == 0:
            self.kind = "disc"
            self.ends = [(P[0], WING_MINUS)]
            self.R0, self.Y0 = layout.discs[0]
            self.length = None
        elif j == k:
            self.kind = "disc"
            self.ends = [(P[k - 1], WING_PLUS)]
            self.R0, self.Y0 = layout.discs[1]
            self.length = None
        else:
            self.kind = "annulus"
            self.ends = [(P[j - 1], WING_PLUS), (P[j], WING_MINUS)]
            self.ann = layout.annuli[j - 1]
            self.length = float(layout.strip_lengths[j - 1])
        self.signs = []
        for end, (piece, wing) in enumerate(self.ends):
            at = 0.0 if end == 0 else self.length
            nb = self._base(np.array([at]))[1][0]
            self.signs.append(float(np.sign(np.dot(piece.normal_at_pivot(wing), nb))))

    def _base(self, s):
        """meridian point and outward normal at strip parameter s (measured from end 0)."""
        s = np.asarray(s, dtype=float)
        if self.kind == "disc":
            R = self.R0 * np.exp(-self.tau * s)
            sign = 1.0 if self.j == 0 else -1.0
            return (np.stack([R, np.full_like(R, self.Y0)], -1),
                    np.stack([np.zeros_like(R), np.full_like(R, sign)], -1))
        u = self.ann.u_top - self.tau * s
        return self.ann.point(u), self.ann.normal(u)

    def end_params(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == "disc":
            return [s]
        return [s, self.length - s]

    def evaluate(self, s, z) -> np.ndarray:
        s, z = np.broadcast_arrays(np.asarray(s, float), np.asarray(z, float))
        RY, n = self._base(s)
        th = self.tau * z
        c, sn = np.cos(th), np.sin(th)
        base = _stack(RY[..., 0] * c, RY[..., 1], RY[..., 0] * sn)
        nu = _stack(n[..., 0] * c, n[..., 1], n[..., 0] * sn)
        g = np.zeros(s.shape)
        weights = []
        for end, se in enumerate(self.end_params(s)):
            piece, wing = self.ends[end]
            cut = graph_cutoff(self.delta_s, self.tau, se, self.gluing)
            live = cut > 0
            if np.any(live):
                g[live] += (self.signs[end] * piece.scale * cut[live]
                            * piece.graph(wing, se[live], z[live]))
            weights.append(np.asarray(scherk.psi(1.0, 0.0, se)))
        far = base + g[..., None] * nu
        out = far * (1.0 - sum(weights))[..., None]
        for end, se in enumerate(self.end_params(s)):
            w = weights[end]
            near = w > 0
            if np.any(near):
                piece, wing = self.ends[end]
                out[near] += w[near, None] * piece.scherk_wing(wing, se[near], z[near])
        return out

    def owner(self, s):
        """(end index, distance parameter from that end's pivot)."""
        s = np.asarray(s, dtype=float)
        if self.kind == "disc":
            return np.zeros(s.shape, dtype=int), s
        back = s > 0.5 * self.length
        return back.astype(int), np.where(back, self.length - s, s)


def _strip_patch(strip: Strip, res: Resolution) -> Patch:
    tau = strip.tau
    n_half = res.n_half
    dz = math.pi / n_half
    z = np.linspace(0.0, math.pi, n_half + 1)
    k = strip.layout.xi.k
    if strip.kind == "annulus":
        n_rows = max(3, int(math.ceil(strip.length / dz)))
        s_rows = np.linspace(0.0, strip.length, n_rows + 1)
    else:
        n_rows = max(3, int(math.ceil(math.log(2.0) / (tau * dz))))
        s_rows = np.arange(n_rows + 1) * dz
    S_, Z_ = np.meshgrid(s_rows, z, indexing="ij")
    ss, zz = S_.ravel(), Z_.ravel()
    V = strip.evaluate(ss, zz)
    inner = (S_ > 0) & (S_ < s_rows[-1]) if strip.kind == "annulus" else S_ > 0
    inner = inner.ravel()
    N = np.zeros_like(V)
    N[inner] = _fd_normal(strip.evaluate, ss[inner], zz[inner])
    rows, cols = S_.shape
    tri = grid_triangles(rows, cols)
    owner, dist = strip.owner(ss)
    band = 4 * strip.delta_s / tau
    name = f"annulus{strip.j}" if strip.kind == "annulus" else f"disc{strip.j}"
    region = []
    for o, d in zip(owner, dist):
        piece, wing = strip.ends[o]
        if d <= band:
            region.append(f"wing{'-' if wing == WING_MINUS else '+'}{piece.index}")
        else:
            region.append(name)
    sc = np.array([strip.ends[o][0].scale for o in owner])
    fo, fd = strip.owner(ss[tri].mean(axis=1))
    group = [f"desing{strip.ends[o][0].index}" if d <= band else name for o, d in zip(fo, fd)]
    patch = Patch(V, tri, N, region, group, dist, sc)
    patch.extra = {}
    if strip.kind == "disc":
        _add_fan(patch, strip, s_rows[-1], n_half)
    return patch


def _add_fan(patch: Patch, strip: Strip, s_last: float, n_half: int) -> None:
    """Close the disc wedge with rows coarsening towards the centre."""
    tau = strip.tau
    RY, n = strip._base(np.array([s_last]))
    R_f, Y0 = RY[0]
    width = R_f * math.pi * tau / n_half
    n_fan = max(2, int(math.ceil(R_f / width)))
    radii = R_f * np.arange(n_fan, -1, -1) / n_fan
    base_idx = len(patch.vertices) - (n_half + 1)
    prev = np.arange(base_idx, base_idx + n_half + 1)
    prev_t = np.linspace(0.0, 1.0, n_half + 1)
    new_v, tris = [], []
    count = len(patch.vertices)
    for r in radii[1:]:
        c = max(1, int(round(n_half * r / R_f))) if r > 0 else 0
        t = np.linspace(0.0, 1.0, c + 1) if c else np.array([0.0])
        th = math.pi * tau * t
        pts = np.stack([r * np.cos(th), np.full_like(th, Y0), r * np.sin(th)], -1)
        idx = np.arange(count, count + len(pts))
        count += len(pts)
        new_v.append(pts)
        if c:
            tris.append(zipper(prev, idx, prev_t, t))
        else:
            tris.append(np.stack([prev[1:], prev[:-1], np.full(len(prev) - 1, idx[0])], 1))
        prev, prev_t = idx, t
    V = np.concatenate(new_v)
    nrm = np.tile(np.array([0.0, n[0][1], 0.0]), (len(V), 1))
    name = f"disc{strip.j}"
    patch.vertices = np.concatenate([patch.vertices, V])
    patch.normals = np.concatenate([patch.normals, nrm])
    patch.triangles = np.concatenate([patch.triangles] + tris)
    patch.region += [name] * len(V)
    patch.group += [name] * sum(len(t) for t in tris)
    patch.s = np.concatenate([patch.s, np.full(len(V), s_last)])
    patch.scale = np.concatenate([patch.scale, np.full(len(V), patch.scale[-1])])


# ---------------------------------------------------------------- symmetrization and replication

def _mirror_patch(patch: Patch, k: int) -> Patch:
    def rename(name: str) -> str:
        for pre in ("core", "desing"):
            if name.startswith(pre):
                return f"{pre}{k + 1 - int(name[len(pre):])}"
        if name.startswith("wing"):
            sign = "+" if name[4] == "-" else "-"
            return f"wing{sign}{k + 1 - int(name[5:])}"
        if name.startswith("annulus"):
            return f"annulus{k - int(name[7:])}"
        if name.startswith("disc"):
            return f"disc{k - int(name[4:])}"
        return name

    N = reflect_y(patch.normals)
    return Patch(reflect_y(patch.vertices), patch.triangles[:, ::-1].copy(), N,
                 [rename(r) for r in patch.region], [rename(g) for g in patch.group],
                 patch.s.copy(), patch.scale.copy())


def _merge(patches: Sequence[Patch]):
    off = 0
    V, T, N, R, G, S, C = [], [], [], [], [], [], []
    for p in patches:
        V.append(p.vertices)
        T.append(p.triangles + off)
        N.append(p.normals)
        R += p.region
        G += p.group
        S.append(p.s)
        C.append(p.scale)
        off += len(p.vertices)
    return (np.concatenate(V), np.concatenate(T), np.concatenate(N), R, G,
            np.concatenate(S), np.concatenate(C))


def _angle_plane_project(V: np.ndarray, tau: float, tol: float) -> np.ndarray:
    """Put vertices lying within tol of the wedge's mirror planes exactly on them."""
    V = V.copy()
    on0 = np.abs(V[:, 2]) < tol
    V[on0, 2] = 0.0
    t = math.pi * tau
    n1 = np.array([-math.sin(t), 0.0, math.cos(t)])
    d = V @ n1
    on1 = np.abs(d) < tol
    V[on1] -= d[on1, None] * n1
    return V


def rotation_y(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    # rotate the xz-plane from +x towards +z
    return np.array([[c, 0.0, -s], [0.0, 1.0, 0.0], [s, 0.0, c]])


def reflection_z() -> np.ndarray:
    return np.diag([1.0, 1.0, -1.0])


def group_generators(m: int) -> dict:
    return {"rotation": rotation_y(2 * math.pi / m), "reflection": reflection_z(),
            "equator": np.diag([1.0, -1.0, 1.0])}


def equivariance_residual(V: np.ndarray, m: int) -> float:
    tree = cKDTree(V)
    worst = 0.0
    for g in group_generators(m).values():
        d, _ = tree.query(V @ g.T)
        worst = max(worst, float(d.max()))
    return worst


@dataclass
class Wedge:
    vertices: np.ndarray
    triangles: np.ndarray
    normals: np.ndarray
    region: np.ndarray
    region_names: list
    face_group: np.ndarray
    group_names: list
    s: np.ndarray
    scale: np.ndarray
    orbit: np.ndarray
    z2_shift: float
    mirror_shift: float


def _codes(names: list):
    uniq = sorted(set(names), key=_region_key)
    lut = {n: i for i, n in enumerate(uniq)}
    return np.array([lut[n] for n in names], dtype=np.int64), uniq


def _region_key(name: str):
    import re
    m = re.match(r"([a-z]+)([+-]?)(\d+)", name)
    if not m:
        return (name, 0, "")
    return (m.group(1), int(m.group(3)), m.group(2))


def build_wedge(layout: Layout, correct: bool = True, workers: Optional[int] = None) -> Wedge:
    """Mesh the fundamental wedge (rotation angle in [0, pi m^-1]) of the whole surface."""
    xi = layout.xi
    k, res = xi.k, xi.resolution
    n_src = _source_count(k)
    jobs = [("core", i) for i in range(n_src)] + [("strip", j) for j in range(k // 2 + 1)]
    if workers is None:
        workers = int(os.environ.get("FBMS_THREADS", "1") or 1)

    def run(job):
        kind, i = job
        if kind == "core":
            return _core_patch(layout.pieces[i], res, xi.eps_prime, correct)
        return _strip_patch(Strip(layout, i), res)

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            patches = list(ex.map(run, jobs))
    else:
        patches = [run(j) for j in jobs]
    middle_core = k % 2 == 1
    lower = []
    for job, patch in zip(jobs, patches):
        kind, i = job
        if kind == "core" and middle_core and i == n_src - 1:
            continue
        if kind == "strip" and not middle_core and i == k // 2:
            continue
        lower.append(_mirror_patch(patch, k))
    V, T, N, R, G, S, C = _merge(patches + lower)
    keep, remap, T = weld(V, T, WELD_TOL)
    V, N, S, C = V[keep], N[keep], S[keep], C[keep]
    R = [R[i] for i in keep]
    # Z2 partners inside the wedge
    tree = cKDTree(V)
    d, partner = tree.query(reflect_y(V))
    if d.max() > 1e-7:
        raise NumericalFailure(f"wedge is not symmetric under y -> -y (gap {d.max():.2e})")
    z2_shift = float(0.5 * d.max())
    V = 0.5 * (V + reflect_y(V[partner]))
    Vp = _angle_plane_project(V, layout.tau, 1e-9)
    mirror_shift = float(np.max(np.linalg.norm(Vp - V, axis=1)))
    V = Vp
    orbit = np.minimum(np.arange(len(V)), partner)
    T = orient_consistently(T)
    region, region_names = _codes(R)
    face_group, group_names = _codes(G)
    return Wedge(V, T, N, region, region_names, face_group, group_names, S, C, orbit,
                 z2_shift, mirror_shift)


def _replicate(w: Wedge, m: int, copies: Sequence[tuple]) -> Mesh:
    V, T, N, O, R, G, S, C = [], [], [], [], [], [], [], []
    off = 0
    for g, flip in copies:
        V.append(w.vertices @ g.T)
        N.append(w.normals @ g.T)
        T.append((w.triangles[:, ::-1] if flip else w.triangles) + off)
        O.append(w.orbit)
        R.append(w.region)
        G.append(w.face_group)
        S.append(w.s)
        C.append(w.scale)
        off += len(w.vertices)
    V, T, N = np.concatenate(V), np.concatenate(T), np.concatenate(N)
    keep, remap, T2 = weld(V, T, WELD_TOL)
    good = np.ones(len(T), dtype=bool)
    t = remap[T]
    good = (t[:, 0] != t[:, 1]) & (t[:, 1] != t[:, 2]) & (t[:, 0] != t[:, 2])
    G = np.concatenate(G)[good]
    mesh = Mesh(V[keep], T2, np.concatenate(R)[keep], w.region_names, orbit=np.concatenate(O)[keep],
                normals=N[keep], s=np.concatenate(S)[keep], scale=np.concatenate(C)[keep],
                face_group=G, group_names=w.group_names)
    return mesh


def _orient_outward(mesh: Mesh) -> None:
    """Flip the whole mesh so annuli normals point away from the axis; align vertex normals."""
    fn = mesh.face_normals()
    cen = mesh.vertices[mesh.triangles].mean(axis=1)
    radial = cen.copy()
    radial[:, 1] = 0.0
    ann = np.array([n.startswith("annulus") for n in mesh.group_names])[mesh.face_group]
    if np.any(ann) and np.sum(fn[ann] * radial[ann]) < 0:
        mesh.triangles = mesh.triangles[:, ::-1].copy()
        fn = -fn
    vn = np.zeros_like(mesh.vertices)
    for c in range(3):
        np.add.at(vn, mesh.triangles[:, c], fn)
    if mesh.normals is not None:
        flip = np.sum(vn * mesh.normals, axis=1) < 0
        mesh.normals[flip] *= -1


def halo_copies(m: int) -> list:
    tau = 1.0 / m
    return [(np.eye(3), False), (reflection_z(), True),
            (rotation_y(2 * math.pi * tau) @ reflection_z(), True)]


def full_copies(m: int) -> list:
    out = []
    for l in range(m):
        g = rotation_y(2 * math.pi * l / m)
        out.append((g, False))
        out.append((g @ reflection_z(), True))
    return out


def assemble_initial_surface(xi: InitialSurfaceParams, correct: bool = True,
                             halo_only: bool = False, layout: Optional[Layout] = None) -> Mesh:
    """Mesh the initial surface: pieces, fitted annuli, correction and D_2m x Z2 replication."""
    if layout is None:
        layout = plan_initial_surface(xi)
    wedge = build_wedge(layout, correct)
    copies = halo_copies(xi.m) if halo_only else full_copies(xi.m)
    mesh = _replicate(wedge, xi.m, copies)
    _orient_outward(mesh)
    nw = len(wedge.vertices)
    mesh.meta.update({
        "k": xi.k, "m": xi.m, "tau": xi.tau, "params": xi.to_dict(),
        "delta_s": layout.delta_s, "a": [P.params.a for P in layout.pieces[:_source_count(xi.k)]],
        "phi_tilde": layout.phi_tilde.tolist(),
        "phi_plus_phi_tilde_over_tau": layout.phi_plus_phi_tilde() / xi.tau,
        "match_residual": layout.match_residual,
        "match_closed_form_gap": layout.match_closed_form_gap,
        "strip_lengths": layout.strip_lengths.tolist(),
        "z2_shift": wedge.z2_shift, "mirror_shift": wedge.mirror_shift,
        "wedge_vertices": nw, "corrected": correct, "halo_only": halo_only,
        "sigma": list(xi.sigma),
    })
    resolved = xi.to_dict()
    src = layout.pieces[:_source_count(xi.k)]
    resolved.update(a=[P.params.a for P in src], delta_s=layout.delta_s,
                    eps_d=[P.params.eps_d for P in src],
                    delta_theta=[P.params.delta_theta for P in src])
    mesh.meta["resolved_params"] = resolved
    return mesh


def halo_center_mask(mesh: Mesh) -> np.ndarray:
    """Vertices of the central wedge in a halo mesh (angle in [0, pi/m])."""
    tau = mesh.meta["tau"]
    ang = np.arctan2(mesh.vertices[:, 2], mesh.vertices[:, 0])
    r = np.hypot(mesh.vertices[:, 0], mesh.vertices[:, 2])
    eps = 1e-9
    return (r < eps) | ((ang >= -eps) & (ang <= math.pi * tau + eps))


def bent_rotation(tau: float, angle: float) -> np.ndarray:
    """Affine 3x4 map rotating about the bend axis (the line x = -1/tau, z = 0)."""
    c = np.array([-1.0 / tau, 0.0, 0.0])
    R = rotation_y(angle)
    return np.hstack([R, (c - R @ c)[:, None]])


def _affine(g: np.ndarray, V: np.ndarray) -> np.ndarray:
    return V @ g[:, :3].T + g[:, 3]


def build_desing_mesh(params: DesingParams, resolution=None, periods: Optional[int] = None,
                      gluing: str = "trim") -> Mesh:
    """Mesh one desingularizing surface out to s = 5 delta_s / tau, in bent coordinates.

    ``periods`` Scherk periods are meshed (all 1/tau of them by default; one when tau = 0).
    The Neumann boundary lies on the sphere of sphere_membership.
    """
    res = as_resolution(resolution)
    tau = params.tau
    grid = core_grid(params, res.n_half, res.s_samples, res.spacing)
    rows, cols = grid.shape
    xs = grid.x.ravel()
    ws = np.broadcast_to(grid.omega[None, :], (rows, cols)).ravel()
    core = core_map(params, core_model_point(params.theta, xs, ws))
    patches = [Patch(core, grid_triangles(rows, cols), np.zeros_like(core), ["core"] * len(core),
                     ["desing"] * (2 * (rows - 1) * (cols - 1)), np.zeros(len(core)),
                     np.ones(len(core)))]
    s_end = 5 * params.delta_s / tau if tau > 0 else 5 * params.delta_s
    n_rows = max(3, int(math.ceil(s_end / res.spacing)))
    S_, Z_ = np.meshgrid(np.linspace(0.0, s_end, n_rows + 1),
                         np.linspace(0.0, math.pi, res.n_half + 1), indexing="ij")
    for wing in (WING_MINUS, WING_PLUS):
        V = wing_map_F(params, wing, S_.ravel(), Z_.ravel(), gluing)
        name = "wing-" if wing == WING_MINUS else "wing+"
        reg = ["core" if s == 0 else name for s in S_.ravel()]
        tri = grid_triangles(*S_.shape)
        patches.append(Patch(V, tri, np.zeros_like(V), reg, ["desing"] * len(tri), S_.ravel(),
                             np.ones(len(V))))
    V, T, _, R, _, S, _ = _merge(patches)
    keep, _, T = weld(V, T, WELD_TOL)
    V, S = V[keep], S[keep]
    region, names = _codes([R[i] for i in keep])
    mirror = np.hstack([reflection_z(), np.zeros((3, 1))])
    copies = []
    if tau > 0:
        n_per = params.m if periods is None else periods
        for l in range(n_per):
            g = bent_rotation(tau, 2 * math.pi * l / params.m)
            copies += [(g, False), (g @ np.vstack([mirror, [0, 0, 0, 1]]), True)]
    else:
        n_per = 1 if periods is None else periods
        for l in range(n_per):
            g = np.hstack([np.eye(3), [[0.0], [0.0], [2 * math.pi * l]]])
            copies += [(g, False), (np.hstack([reflection_z(), [[0.0], [0.0], [2 * math.pi * l]]]),
                                    True)]
    Vs, Ts = [], []
    off = 0
    for g, flip in copies:
        Vs.append(_affine(g, V))
        Ts.append((T[:, ::-1] if flip else T) + off)
        off += len(V)
    Vall = np.concatenate(Vs)
    keep, _, Tall = weld(Vall, np.concatenate(Ts), WELD_TOL)
    n_copies = len(copies)
    mesh = Mesh(Vall[keep], orient_consistently(Tall), np.tile(region, n_copies)[keep], names,
                s=np.tile(S, n_copies)[keep])
    mesh.meta.update({"tau": tau, "theta": params.theta, "a": params.a, "beta": params.beta,
                      "delta_s": params.delta_s, "eps_d": params.eps_d, "periods": n_per})
    return mesh


def neumann_boundary(mesh: Mesh) -> np.ndarray:
    """Boundary vertices of a desing mesh that belong to the core (image of x = 0)."""
    return mesh.boundary & (mesh.region == mesh.region_names.index("core"))
