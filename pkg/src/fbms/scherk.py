"""Singly periodic Scherk surfaces and the smooth cutoff functions.

The Scherk surface with wing angle theta is the zero set of

    sin^2(theta) cosh(x / sin theta) - cos^2(theta) cosh(y / cos theta) - cos z.

Its first-quadrant wing is asymptotic to a half plane spanned by e_z and
e[pi/2 - theta] = (sin theta, cos theta, 0), offset along
e'[pi/2 - theta] = (-cos theta, sin theta, 0) by b_theta.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import CalibrationFailure, NoIntersection, OutsideWing, ValidationError

EPSILON = 1e-3
PSI_NODES = 1024


# ---------------------------------------------------------------- cutoffs

def _bump(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = np.abs(s) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - s[inside] ** 2))
    return out


@lru_cache(maxsize=1)
def _psi_table(n: int = PSI_NODES):
    # cumulative integral of the bump over [0, v] on n cells, Gauss-Legendre per cell
    nodes = np.linspace(0.0, 1.0, n + 1)
    gx, gw = np.polynomial.legendre.leggauss(10)
    left, right = nodes[:-1], nodes[1:]
    half = 0.5 * (right - left)
    mid = 0.5 * (right + left)
    pts = mid[:, None] + half[:, None] * gx[None, :]
    cell = (half[:, None] * gw[None, :] * _bump(pts)).sum(axis=1)
    cum = np.concatenate([[0.0], np.cumsum(cell)])
    total = cum[-1]
    return nodes, cum / (2.0 * total), _bump(nodes) / (2.0 * total)


def Psi(t):
    """Smooth step: 0 below -1, 1 above 1, Psi - 1/2 odd."""
    t = np.asarray(t, dtype=float)
    nodes, G, dG = _psi_table()
    v = np.minimum(np.abs(t), 1.0)
    h = nodes[1] - nodes[0]
    i = np.minimum((v / h).astype(int), len(nodes) - 2)
    u = (v - nodes[i]) / h
    # cubic Hermite with exact derivative data
    h00 = 2 * u**3 - 3 * u**2 + 1
    h10 = u**3 - 2 * u**2 + u
    h01 = -2 * u**3 + 3 * u**2
    h11 = u**3 - u**2
    g = h00 * G[i] + h10 * h * dG[i] + h01 * G[i + 1] + h11 * h * dG[i + 1]
    g = np.where(v >= 1.0, 0.5, g)
    out = np.where(t >= 0.0, 0.5 + g, 0.5 - g)
    out = np.where(t == 0.0, 0.5, out)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class Cutoff:
    """psi[lo, hi]: 0 near lo, 1 near hi."""
    lo: float
    hi: float

    def __post_init__(self):
        if self.lo == self.hi:
            raise ValidationError("cutoff endpoints must differ")

    def linear(self, t):
        # L(lo) = -3, L(hi) = 3, written so that swapping lo and hi negates L exactly
        mid = 0.5 * (self.lo + self.hi)
        return 6.0 * (np.asarray(t, dtype=float) - mid) / (self.hi - self.lo)

    def __call__(self, t):
        return Psi(self.linear(t))


def cutoff_eval(c: Cutoff, t):
    return c(t)


def psi(lo: float, hi: float, t):
    return Cutoff(lo, hi)(t)


def psi_derivatives(lo: float, hi: float, t):
    """(psi, dpsi/dt) for psi[lo, hi]."""
    c = Cutoff(lo, hi)
    L = c.linear(t)
    nodes, G, dG = _psi_table()
    dpsi = np.interp(np.minimum(np.abs(L), 1.0), nodes, dG) * (np.abs(L) < 1.0)
    return c(t), dpsi * 6.0 / (hi - lo)


# ---------------------------------------------------------------- surface

@dataclass(frozen=True)
class ScherkAngle:
    theta: float

    def __post_init__(self):
        if not 0.0 < self.theta < 0.5 * math.pi:
            raise ValidationError(f"theta={self.theta} outside (0, pi/2)")

    def check_margin(self, delta_theta: float) -> None:
        if not 10 * delta_theta <= self.theta <= 0.5 * math.pi - 10 * delta_theta:
            raise ValidationError(f"theta={self.theta} violates the 10*delta_theta margin")


def _theta(theta) -> float:
    return theta.theta if isinstance(theta, ScherkAngle) else float(theta)


def scherk_residual(theta, p) -> np.ndarray:
    t = _theta(theta)
    p = np.asarray(p, dtype=float)
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    st, ct = math.sin(t), math.cos(t)
    return st * st * np.cosh(x / st) - ct * ct * np.cosh(y / ct) - np.cos(z)


def b_theta(theta) -> float:
    t = _theta(theta)
    return math.sin(2 * t) * math.log(math.tan(t))


def wing_height(theta, x, z) -> np.ndarray:
    """y >= 0 on the surface above (x, z), valid on the wings and the outer core."""
    t = _theta(theta)
    st, ct = math.sin(t), math.cos(t)
    arg = (st * st * np.cosh(np.asarray(x, dtype=float) / st) - np.cos(z)) / (ct * ct)
    if np.any(arg < 1.0 - 1e-14):
        raise OutsideWing("point lies over the core hole")
    arg = np.maximum(arg, 1.0)
    return ct * np.log(arg + np.sqrt(arg * arg - 1.0))


def graph_depth(theta, y, z) -> np.ndarray:
    """g >= 0 with (-g, y, z) on the surface: the x <= 0 half as a graph over the yz-plane."""
    t = _theta(theta)
    st, ct = math.sin(t), math.cos(t)
    arg = (np.cos(z) + ct * ct * np.cosh(np.asarray(y, dtype=float) / ct)) / (st * st)
    arg = np.maximum(arg, 1.0)
    return st * np.log(arg + np.sqrt(arg * arg - 1.0))


def hole_level(theta, y, z) -> np.ndarray:
    """Positive outside the boundary holes of the half surface, zero on their boundary."""
    t = _theta(theta)
    st, ct = math.sin(t), math.cos(t)
    return np.cos(z) + ct * ct * np.cosh(np.asarray(y, dtype=float) / ct) - st * st


def frame(theta) -> tuple[np.ndarray, np.ndarray]:
    """(e[pi/2 - theta], e'[pi/2 - theta]) as 3-vectors."""
    t = _theta(theta)
    return (np.array([math.sin(t), math.cos(t), 0.0]),
            np.array([-math.cos(t), math.sin(t), 0.0]))


def asymptotic_plane(theta, a: float, s, z) -> np.ndarray:
    e, ep = frame(theta)
    s = np.asarray(s, dtype=float)
    z = np.asarray(z, dtype=float)
    return ((a + s)[..., None] * e + z[..., None] * np.array([0.0, 0.0, 1.0])
            + b_theta(theta) * ep)


def wing_graph(theta, a: float, s, z, bracket: float = 1.0, iters: int = 80) -> np.ndarray:
    """Signed offset f along e'[pi/2 - theta] from the asymptotic plane to the surface."""
    t = _theta(theta)
    s = np.asarray(s, dtype=float)
    z = np.asarray(z, dtype=float)
    s, z = np.broadcast_arrays(s, z)
    if np.any(s < 0):
        raise ValidationError("wing coordinate s must be nonnegative")
    _, ep = frame(t)
    base = asymptotic_plane(t, a, s, z)

    def F(f):
        return scherk_residual(t, base + f[..., None] * ep)

    # the residual grows like exp(distance); normalise so bisection signs stay meaningful
    lo = -bracket * np.ones(s.shape)
    hi = bracket * np.ones(s.shape)
    flo, fhi = F(lo), F(hi)
    if np.any(np.sign(flo) == np.sign(fhi)):
        raise NoIntersection("normal line misses the surface; a is too small")
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        fm = F(mid)
        left = np.sign(fm) == np.sign(flo)
        lo = np.where(left, mid, lo)
        flo = np.where(left, fm, flo)
        hi = np.where(left, hi, mid)
        if np.max(hi - lo) < 1e-16:
            break
    return 0.5 * (lo + hi)


def wing_point(theta, a: float, s, z) -> np.ndarray:
    """F_theta(s, z) on the first-quadrant wing."""
    _, ep = frame(theta)
    f = wing_graph(theta, a, s, z)
    return asymptotic_plane(theta, a, s, z) + f[..., None] * ep


def decay_sup(theta, a: float, s_max: float = 10.0, ns: int = 101, nz: int = 256,
              dtheta: float = 1e-5) -> float:
    """sup of e^s (|f| + |df/dtheta|) over the sample grid."""
    t = _theta(theta)
    s = np.linspace(0.0, s_max, ns)
    z = np.linspace(0.0, 2 * math.pi, nz, endpoint=False)
    S, Z = np.meshgrid(s, z, indexing="ij")
    f = wing_graph(t, a, S, Z)
    fp = wing_graph(t + dtheta, a, S, Z)
    fm = wing_graph(t - dtheta, a, S, Z)
    dfd = (fp - fm) / (2 * dtheta)
    return float(np.max(np.exp(S) * (np.abs(f) + np.abs(dfd))))


def calibrate_a(theta, epsilon: float = EPSILON, a_grid=None, include_offset: bool = True) -> float:
    """Smallest grid value a meeting the sampled decay bound and |b_theta| <= epsilon a."""
    if not 0.0 < epsilon <= 1e-3 and include_offset:
        raise ValidationError("epsilon must lie in (0, 1e-3]")
    t = _theta(theta)
    if a_grid is None:
        a_grid = np.concatenate([np.arange(1.0, 20.0, 0.25), np.arange(20.0, 1000.0 + 1e-9, 5.0)])
    bt = abs(b_theta(t))
    for a in a_grid:
        if include_offset and bt > epsilon * a:
            continue
        try:
            if decay_sup(t, a) <= epsilon:
                return float(a)
        except NoIntersection:
            continue
    raise CalibrationFailure(f"no a <= {a_grid[-1]} meets epsilon={epsilon} at theta={t}")


def core_boundary(theta, n: int = 64) -> np.ndarray:
    """One boundary circle of the x <= 0 half surface, sampled in the yz-plane around z = pi.

    Returns an (n, 3) array of points with x = 0.
    """
    if n < 16:
        raise ValidationError("need at least 16 samples per circle")
    t = _theta(theta)
    st, ct = math.sin(t), math.cos(t)
    # parametrise by the angle around (0, pi); radius from bisection on the level function
    omega = np.linspace(0.0, 2 * math.pi, n, endpoint=False)
    dy, dz = np.sin(omega), -np.cos(omega)
    r = hole_radius(t, dy, dz)
    return np.stack([np.zeros(n), r * dy, math.pi + r * dz], axis=-1)


def hole_radius(theta, dy, dz, iters: int = 100) -> np.ndarray:
    """Distance from (0, pi) to the hole boundary along the unit direction (dy, dz)."""
    t = _theta(theta)
    dy = np.asarray(dy, dtype=float)
    dz = np.asarray(dz, dtype=float)
    lo = np.zeros(dy.shape)
    hi = np.full(dy.shape, 4.0)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        inside = hole_level(t, mid * dy, math.pi + mid * dz) < 0.0
        lo = np.where(inside, mid, lo)
        hi = np.where(inside, hi, mid)
    return 0.5 * (lo + hi)


def core_widest(theta) -> float:
    """|y| of the widest points of a boundary circle (attained at z = pi)."""
    t = _theta(theta)
    st, ct = math.sin(t), math.cos(t)
    arg = (1.0 + st * st) / (ct * ct)
    return ct * math.log(arg + math.sqrt(arg * arg - 1.0))
