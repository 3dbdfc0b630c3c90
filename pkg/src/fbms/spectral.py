"""Dirichlet non-degeneracy of the Jacobi operator on configuration pieces.

On the catenoid x = a cosh t, y = b + a t the metric is a^2 cosh^2 t (dt^2 + dphi^2)
and |A|^2 = 2 / (a^2 cosh^4 t), so the Jacobi operator L = Delta + |A|^2 reads

    L = (a cosh t)^-2 (d^2/dt^2 + d^2/dphi^2 + 2 sech^2 t).

Its rotationally invariant kernel is spanned by tanh t and 1 - t tanh t, and the
Dirichlet problem on [z2, z1] has a kernel iff the 2x2 determinant of those
two solutions at the ends vanishes.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .catenary import CatenoidArc
from .configuration import Configuration, shoot
from .errors import ConvergenceWarning, ValidationError
from .rootfind import brent

SEPARATION_EPS = 0.05
RICHARDSON_TOL = 1e-4


def jacobi_dirichlet_det(z1: float, z2: float) -> float:
    t1, t2 = math.tanh(z1), math.tanh(z2)
    return t1 - t2 + (z1 - z2) * t1 * t2


def jacobi_dirichlet_det_grid(z1, z2) -> np.ndarray:
    z1 = np.asarray(z1, dtype=float)
    z2 = np.asarray(z2, dtype=float)
    t1, t2 = np.tanh(z1), np.tanh(z2)
    return t1 - t2 + (z1 - z2) * t1 * t2


# ---------------------------------------------------------------- Bessel J0

def bessel_j0(x: float) -> float:
    """J0 by its power series for |x| <= 12, else the leading Hankel asymptotics."""
    x = float(x)
    if abs(x) <= 12.0:
        term = 1.0
        total = 1.0
        q = -0.25 * x * x
        k = 0
        while abs(term) > 1e-17 * max(1.0, abs(total)):
            k += 1
            term *= q / (k * k)
            total += term
        return total
    # large argument: two terms of the asymptotic expansion suffice for bracketing
    w = x - 0.25 * math.pi
    return math.sqrt(2.0 / (math.pi * x)) * (math.cos(w) + math.sin(w) / (8.0 * x))


@lru_cache(maxsize=1)
def j0_first_zero() -> float:
    # seed bracket only; the zero itself comes from the root finder
    return brent(bessel_j0, 2.0, 3.0, xtol=1e-15)


def disc_first_eigenvalue(radius: float) -> float:
    """Lowest Dirichlet eigenvalue of -Delta on a flat disc (where |A|^2 = 0)."""
    if not radius > 0:
        raise ValidationError("radius must be positive")
    return (j0_first_zero() / radius) ** 2


# ---------------------------------------------------------------- annuli

@dataclass
class AnnulusSpectralData:
    z1: float
    z2: float
    det_value: float
    separation: float
    separation_bound: float  # upper bound from the latitudes and exit angle
    sufficient: bool  # separation <= 2 + eps, where det > 0 is guaranteed off the diagonal
    eigen_estimates: list = field(default_factory=list)

    def __post_init__(self):
        if not self.z1 > self.z2:
            raise ValidationError("need z1 > z2")


def arc_interval(arc: CatenoidArc) -> tuple[float, float]:
    a, b = arc.a, arc.b
    return (math.cos(arc.beta_in) - b) / a, (math.cos(arc.beta_ex) - b) / a


def annulus_kernel_margin(arc: CatenoidArc, eps: float = SEPARATION_EPS, modes: int = 0,
                          grid: int = 0) -> AnnulusSpectralData:
    z1, z2 = arc_interval(arc)
    sep = z1 - z2
    # the latitude bound is stated for arcs in the upper half; lower arcs use their mirror image
    top = arc.mirrored() if arc.beta_in + arc.beta_ex > math.pi else arc
    bound = (top.beta_ex - top.beta_in) / math.sin(top.beta_ex - top.alpha_ex)
    est = annulus_spectrum_fd(arc, modes, grid) if grid else []
    return AnnulusSpectralData(z1, z2, jacobi_dirichlet_det(z1, z2), sep, bound,
                               bool(sep <= 2.0 + eps), est)


def _lowest(n: int, z1: float, z2: float, l: int, a: float) -> float:
    """Lowest eigenvalue of -L for Fourier mode l on n uniform intervals of [z2, z1]."""
    h = (z1 - z2) / n
    t = z2 + h * np.arange(1, n)
    w = (a * np.cosh(t)) ** 2
    diag = 2.0 / h**2 - 2.0 / np.cosh(t) ** 2 + l * l
    off = -np.ones(n - 2) / h**2
    # symmetric form of the weighted problem: W^{-1/2} K W^{-1/2}
    s = 1.0 / np.sqrt(w)
    d = diag * s * s
    e = off * s[:-1] * s[1:]
    return float(eigh_tridiagonal(d, e, select="i", select_range=(0, 0),
                                  eigvals_only=True)[0])


def interval_spectrum_fd(z1: float, z2: float, a: float = 1.0, modes: int = 0,
                         grid: int = 256) -> list:
    """Richardson-extrapolated lowest Dirichlet eigenvalue of -L per mode l = 0..modes."""
    if grid < 64:
        raise ValidationError("grid must be at least 64")
    if not z1 > z2:
        raise ValidationError("need z1 > z2")
    out = []
    for l in range(modes + 1):
        coarse = _lowest(grid, z1, z2, l, a)
        fine = _lowest(2 * grid, z1, z2, l, a)
        rich = (4.0 * fine - coarse) / 3.0
        if abs(rich - fine) > RICHARDSON_TOL * max(1.0, abs(rich)):
            warnings.warn(f"mode {l}: grid {grid} and {2 * grid} differ by {abs(fine - coarse):.2e}",
                          ConvergenceWarning, stacklevel=2)
        out.append(rich)
    return out


def annulus_spectrum_fd(arc: CatenoidArc, modes: int = 0, grid: int = 256) -> list:
    z1, z2 = arc_interval(arc)
    return interval_spectrum_fd(z1, z2, arc.a, modes, grid)


def det_root_z2(z1: float, lo: Optional[float] = None) -> float:
    """z2 < z1 - 2 with jacobi_dirichlet_det(z1, z2) = 0."""
    f = lambda z: jacobi_dirichlet_det(z1, z)
    hi = z1 - 2.0
    lo = z1 - 20.0 if lo is None else lo
    return brent(f, lo, hi, xtol=1e-15)


# ---------------------------------------------------------------- certificates

@dataclass
class SpectralCertificate:
    k: int
    margins: list  # disc, annuli..., disc
    kinds: list
    global_margin: float
    annuli: list

    @property
    def valid(self) -> bool:
        return all(m > 0 for m in self.margins)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["valid"] = self.valid
        return d


def certify(config: Configuration, eps: float = SEPARATION_EPS, modes: int = 0,
            grid: int = 0) -> SpectralCertificate:
    """Per-piece margins: det value on annuli, lowest eigenvalue on the discs."""
    annuli = [annulus_kernel_margin(arc, eps, modes, grid) for arc in config.arcs]
    disc = disc_first_eigenvalue(math.sin(config.beta[0]))
    disc_k = disc_first_eigenvalue(math.sin(config.beta[-1]))
    margins = [disc] + [d.det_value for d in annuli] + [disc_k]
    kinds = ["disc"] + ["annulus"] * len(annuli) + ["disc"]
    return SpectralCertificate(config.k, margins, kinds, float(min(margins)),
                               [asdict(d) for d in annuli])


def certificate_table(ks: Sequence[int]) -> list:
    rows = []
    for k in ks:
        cert = certify(shoot(None, k))
        ann = [m for m, kind in zip(cert.margins, cert.kinds) if kind == "annulus"]
        seps = [d["separation"] for d in cert.annuli]
        rows.append({"k": k, "global_margin": cert.global_margin, "min_annulus_det": min(ann),
                     "max_separation": max(seps), "valid": cert.valid})
    return rows
