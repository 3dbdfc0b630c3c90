"""Symmetric catenoidal configurations inscribed in the unit ball.

A configuration is a stack of k circles on the sphere at latitudes
beta_1 < ... < beta_k, capped by two flat discs and joined by k - 1
catenoidal annuli.  The upper half is built inductively from the top
latitude ``beta_hat``; the top latitude is then found by shooting so that the
stack closes up symmetrically about the equator.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .catenary import CatenoidArc, polar_radius, sphere_exit
from .errors import BracketFailure, DomainError, DomainViolation, NoExit, ValidationError
from .rootfind import brent

log = logging.getLogger(__name__)

DELTA_SIGMA = 0.01
BETA_HAT_BRACKET = (1e-4, 2.0 * math.pi / 7.0 - 1e-6)
SHOOT_TOL = 1e-11
ANGLE_TOL = 1e-9


def as_sigma(sigma: Optional[Sequence[float]], delta_sigma: float = DELTA_SIGMA) -> np.ndarray:
    s = np.zeros(0) if sigma is None else np.asarray(sigma, dtype=float).ravel()
    if not np.all(np.isfinite(s)):
        raise ValidationError("sigma must be finite")
    norm = float(np.abs(s).sum())
    if norm >= delta_sigma:
        raise ValidationError(f"||sigma||_1 = {norm} is not below delta_sigma = {delta_sigma}")
    return s


@dataclass
class PartialConfiguration:
    beta_hat: float
    order: Optional[int]  # None when max_steps ran out before the equator
    beta: np.ndarray
    alpha_plus: np.ndarray
    alpha_minus: np.ndarray
    arcs: list

    @property
    def disc_radius(self) -> float:
        return math.sin(self.beta[0])


def build_partial(beta_hat: float, sigma: Optional[Sequence[float]] = None, max_steps: int = 1000,
                  allow_overshoot: bool = False, n_steps: Optional[int] = None,
                  delta_sigma: float = DELTA_SIGMA) -> PartialConfiguration:
    """Inductive construction from the top circle downwards.

    Stops after the first arc ending at or below the equator.  With
    ``n_steps`` exactly that many arcs are built regardless of the equator,
    which is what the even-order shooting residual needs.
    """
    if not 0.0 < beta_hat <= 2.0 * math.pi / 7.0:
        raise DomainError(f"beta_hat={beta_hat} outside (0, 2pi/7]")
    s = as_sigma(sigma, delta_sigma)
    beta = [beta_hat]
    a_minus = [beta_hat]
    a_plus: list[float] = []
    arcs: list[CatenoidArc] = []
    order = None
    limit = n_steps if n_steps is not None else max_steps
    for i in range(limit):
        sig = s[i] if i < s.size else 0.0
        ap = math.exp(sig) * a_minus[i]
        if ap >= math.pi - beta[i]:
            raise DomainViolation(f"alpha+_{i + 1}={ap} >= pi - beta_{i + 1}={math.pi - beta[i]}")
        a_plus.append(ap)
        try:
            arc = sphere_exit(beta[i], ap)
        except (NoExit, DomainError) as exc:
            raise DomainViolation(str(exc)) from exc
        arcs.append(arc)
        beta.append(arc.beta_ex)
        a_minus.append(arc.alpha_ex)
        if n_steps is None and arc.beta_ex >= 0.5 * math.pi:
            order = i + 1
            if not allow_overshoot:
                break
            allow_overshoot = False
    if n_steps is not None:
        order = n_steps
    return PartialConfiguration(beta_hat, order, np.array(beta), np.array(a_plus),
                                np.array(a_minus), arcs)


def shooting_residual(beta_hat: float, sigma: np.ndarray, k: int,
                      delta_sigma: float = DELTA_SIGMA) -> float:
    if k % 2:
        part = build_partial(beta_hat, sigma, n_steps=(k - 1) // 2, delta_sigma=delta_sigma)
        return part.beta[(k - 1) // 2] - 0.5 * math.pi
    part = build_partial(beta_hat, sigma, n_steps=k // 2, delta_sigma=delta_sigma)
    return part.beta[k // 2 - 1] + part.beta[k // 2] - math.pi


def _safe_residual(beta_hat: float, sigma: np.ndarray, k: int, delta_sigma: float) -> float:
    # leaving the admissible domain means the stack ran past the equator
    try:
        return shooting_residual(beta_hat, sigma, k, delta_sigma)
    except DomainViolation:
        return math.inf


@dataclass
class Configuration:
    k: int
    beta_hat: float
    beta: np.ndarray
    alpha_plus: np.ndarray
    alpha_minus: np.ndarray
    arcs: list  # arcs[j] joins circle j+1 and j+2 (1-based), j = 0..k-2
    sigma: np.ndarray
    residual: float
    guard_margin: float = field(default=math.nan)

    @property
    def parity(self) -> str:
        return "odd" if self.k % 2 else "even"

    @property
    def disc_radius(self) -> float:
        return math.sin(self.beta[0])

    @property
    def a(self) -> np.ndarray:
        return np.array([arc.a for arc in self.arcs])

    @property
    def b(self) -> np.ndarray:
        return np.array([arc.b for arc in self.arcs])

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "parity": self.parity,
            "beta_hat": self.beta_hat,
            "shooting_residual": self.residual,
            "guard_margin": self.guard_margin,
            "sigma": self.sigma.tolist(),
            "beta": self.beta.tolist(),
            "alpha_plus": self.alpha_plus.tolist(),
            "alpha_minus": self.alpha_minus.tolist(),
            "disc_radius": self.disc_radius,
            "annuli": [arc.to_dict() for arc in self.arcs],
        }


def _extend(k: int, beta_hat: float, sigma_used: np.ndarray, residual: float,
            delta_sigma: float = DELTA_SIGMA) -> Configuration:
    half = (k - 1) // 2 if k % 2 else k // 2
    part = build_partial(beta_hat, sigma_used, n_steps=half, delta_sigma=delta_sigma)
    beta = np.empty(k)
    ap = np.empty(k)
    am = np.empty(k)
    n_top = (k + 1) // 2
    beta[:n_top] = part.beta[:n_top]
    am[:n_top] = part.alpha_minus[:n_top]
    ap[:half] = part.alpha_plus[:half]
    if k % 2:
        beta[n_top - 1] = 0.5 * math.pi
        ap[n_top - 1] = am[n_top - 1]
    for i in range(k - n_top):
        j = k - 1 - i
        beta[j] = math.pi - beta[i]
        ap[j] = am[i]
        am[j] = ap[i]
    arcs = list(part.arcs[:half])
    n_mirror = (k - 1) - half
    for i in range(n_mirror):
        arcs.append(part.arcs[n_mirror - 1 - i].mirrored())
    guard = min(math.pi - beta[i] - ap[i] for i in range(k - 1))
    return Configuration(k, beta_hat, beta, ap, am, arcs, sigma_used, residual, guard)


def shoot(sigma: Optional[Sequence[float]], k: int, delta_sigma: float = DELTA_SIGMA,
          tol: float = SHOOT_TOL) -> Configuration:
    """Solve for the top latitude making the configuration symmetric of order k."""
    if int(k) != k or k < 3:
        raise ValidationError(f"order k must be an integer >= 3, got {k}")
    k = int(k)
    s = as_sigma(sigma, delta_sigma)
    half = k // 2
    if s.size > half:
        if np.any(s[half:] != 0.0):
            warnings.warn(f"sigma entries beyond index {half} are ignored", stacklevel=2)
        s = s[:half]
    lo, hi = BETA_HAT_BRACKET

    def f(bh):
        r = _safe_residual(bh, s, k, delta_sigma)
        return 1.0 if r == math.inf else r

    flo, fhi = f(lo), f(hi)
    if not (flo < 0.0 < fhi):
        raise BracketFailure(f"shooting residual has no sign change on {BETA_HAT_BRACKET}: {flo}, {fhi}")
    bh = brent(f, lo, hi, xtol=1e-16)
    res = shooting_residual(bh, s, k, delta_sigma)
    if abs(res) >= tol:
        raise BracketFailure(f"shooting residual {res} not below {tol}")
    return _extend(k, bh, s, res, delta_sigma)


@dataclass
class RadialGraph:
    breakpoints: np.ndarray
    config: Configuration

    def evaluate(self, beta) -> tuple[np.ndarray, np.ndarray]:
        """(r, dr/dbeta) at the given latitudes."""
        beta = np.atleast_1d(np.asarray(beta, dtype=float))
        r = np.empty_like(beta)
        dr = np.empty_like(beta)
        cfg = self.config
        b1 = cfg.beta[0]
        bk = cfg.beta[-1]
        top = beta <= b1
        bot = beta >= bk
        # flat caps at heights cos(beta_1) and cos(beta_k)
        r[top] = math.cos(b1) / np.cos(beta[top])
        dr[top] = r[top] * np.tan(beta[top])
        r[bot] = math.cos(bk) / np.cos(beta[bot])
        dr[bot] = r[bot] * np.tan(beta[bot])
        idx = np.searchsorted(cfg.beta, beta, side="right") - 1
        for j, arc in enumerate(cfg.arcs):
            sel = (idx == j) & ~top & ~bot
            if np.any(sel):
                r[sel], dr[sel] = polar_radius(arc.params, beta[sel])
        return r, dr

    def __call__(self, beta):
        return self.evaluate(beta)[0]


def radial_graph(config: Configuration) -> RadialGraph:
    return RadialGraph(np.concatenate([[0.0], config.beta, [math.pi]]), config)


def config_metrics(config: Configuration, samples: int = 20000) -> dict:
    graph = radial_graph(config)
    beta = np.unique(np.concatenate([np.linspace(0.0, math.pi, samples), config.beta]))
    beta = beta[(beta > 0.0) & (beta < math.pi)]
    r, dr = graph.evaluate(beta)
    # one-sided slopes at each circle
    eps = 1e-12
    _, dl = graph.evaluate(config.beta - eps)
    _, dright = graph.evaluate(config.beta + eps)
    max_dr = max(float(np.max(np.abs(dr))), float(np.max(np.abs(dl))), float(np.max(np.abs(dright))))
    return {
        "max_one_minus_r": float(np.max(1.0 - r)),
        "max_abs_dr": max_dr,
        "max_alpha_plus": float(np.max(config.alpha_plus)),
        "max_beta_gap": float(np.max(np.diff(config.beta))),
        "min_a": float(np.min(config.a)),
        "beta_1": float(config.beta[0]),
    }
