"""Time the numba kernels against the pure-numpy/python fallback.

    python benchmarks/bench_kernels.py [--repeat 5]

The fallback is what runs under FBMS_NO_NUMBA=1.  Each row reports the best
of ``repeat`` runs after one warm-up call (so JIT compilation is excluded).
"""
import argparse
import json
import math
import timeit

import numpy as np

from fbms import _accel, catenary
from fbms.catenary import catenoid_from_inner
from fbms.verify import catenoid_mesh, cotan_laplacian


def best(fn, repeat: int) -> float:
    fn()
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def bench_cotan(repeat: int) -> dict:
    mesh = catenoid_mesh(catenoid_from_inner(0.6, 0.5), (0.2, 0.7), 512, 128)
    V, T = mesh.vertices, mesh.triangles
    return {"kernel": "cotan_laplacian", "size": len(T),
            "numba": best(lambda: cotan_laplacian(V, T, use_numba=True), repeat),
            "fallback": best(lambda: cotan_laplacian(V, T, use_numba=False), repeat)}


def bench_polar(repeat: int) -> dict:
    p = catenoid_from_inner(0.7, 0.5)
    beta = np.linspace(0.7, 1.3, 20_000)
    r, dr = np.empty_like(beta), np.empty_like(beta)
    k = catenary._polar_kernel
    return {"kernel": "polar_radius", "size": len(beta),
            "numba": best(lambda: k(p.a, p.b, beta, r, dr), repeat),
            "fallback": best(lambda: k.py_func(p.a, p.b, beta, r, dr), repeat)}


def bench_integrate(repeat: int) -> dict:
    k = catenary._integrate
    args = (0.6, math.tan(0.45), 2.0, 1e-11, True)
    return {"kernel": "ode_exit", "size": 1,
            "numba": best(lambda: k(*args), repeat),
            "fallback": best(lambda: k.py_func(*args), repeat)}


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", action="store_true", help="print rows as JSON")
    args = ap.parse_args()
    if not _accel.HAVE_NUMBA:
        raise SystemExit("numba is unavailable (or FBMS_NO_NUMBA is set); nothing to compare")
    rows = [bench_cotan(args.repeat), bench_polar(args.repeat), bench_integrate(args.repeat)]
    for r in rows:
        r["speedup"] = r["fallback"] / r["numba"]
    if args.json:
        print(json.dumps(rows, indent=2))
        return
    print(f"{'kernel':<16} {'size':>8} {'numba [s]':>12} {'fallback [s]':>13} {'speedup':>8}")
    for r in rows:
        print(f"{r['kernel']:<16} {r['size']:>8} {r['numba']:>12.2e} {r['fallback']:>13.2e} "
              f"{r['speedup']:>8.1f}")


if __name__ == "__main__":
    main()
