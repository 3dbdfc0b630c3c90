"""Scalar and vectorised bracketed root finding."""
from __future__ import annotations

from typing import Callable

import numpy as np
from scipy.optimize import brentq

from .errors import BracketFailure


def brent(f: Callable[[float], float], lo: float, hi: float, xtol: float = 1e-13,
          maxiter: int = 200) -> float:
    """Brent's method on [lo, hi]; raises BracketFailure without a sign change."""
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if np.sign(flo) == np.sign(fhi):
        raise BracketFailure(f"no sign change on [{lo}, {hi}]: f={flo:.3e}, {fhi:.3e}")
    return float(brentq(f, lo, hi, xtol=xtol, rtol=4 * np.finfo(float).eps, maxiter=maxiter))


def expand_bracket(f: Callable[[float], float], x0: float, step: float,
                   maxiter: int = 60) -> tuple[float, float]:
    """Walk from x0 in the direction of ``step`` (doubling) until f changes sign."""
    f0 = f(x0)
    x = x0
    for _ in range(maxiter):
        xn = x + step
        fn = f(xn)
        if np.sign(fn) != np.sign(f0) or fn == 0.0:
            return (min(x, xn), max(x, xn))
        x = xn
        step *= 2.0
    raise BracketFailure(f"could not bracket a root from x0={x0}")




def bisect_vec(f: Callable[[np.ndarray], np.ndarray], lo: np.ndarray, hi: np.ndarray,
               iters: int = 64) -> np.ndarray:
    """Elementwise bisection for a vectorised f with f(lo) and f(hi) of opposite sign."""
    lo = np.array(lo, dtype=float, copy=True)
    hi = np.array(hi, dtype=float, copy=True)
    flo = f(lo)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        left = np.sign(fm) == np.sign(flo)
        lo = np.where(left, mid, lo)
        flo = np.where(left, fm, flo)
        hi = np.where(left, hi, mid)
    return 0.5 * (lo + hi)
