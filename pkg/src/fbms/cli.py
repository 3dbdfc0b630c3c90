"""Command-line front end.

Exit codes: 0 success, 2 invalid input, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import spectral
from .configuration import DELTA_SIGMA, SHOOT_TOL, config_metrics, shoot
from .desing_mesh import (DesingParams, InitialSurfaceParams, Resolution, assemble_initial_surface,
                          build_desing_mesh)
from .errors import FBMSError, NumericalFailure, ValidationError
from .mesh import export_obj, load_mesh, sidecar_path
from .verify import HAUSDORFF_SAMPLES, verify_initial_surface

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3

INITIAL_KEYS = {"k", "m", "sigma", "varphi", "resolution", "gluing", "a", "delta_s", "eps_prime",
                "eps_d", "phi_bound", "xi_bound"}
RESOLUTION_KEYS = {"z_per_period", "s_samples"}
DESING_KEYS = {"alpha_minus", "alpha_plus", "beta", "phi_minus", "phi_plus", "tau", "a", "delta_s",
               "delta_theta", "eps_d", "c_d", "phi_bound", "resolution", "periods", "gluing"}
FAMILY_COLUMNS = ["k", "status", "beta_hat", "beta_1", "alpha_1", "shooting_residual",
                  "max_one_minus_r", "max_abs_dr", "max_alpha_plus", "max_beta_gap", "min_a", "error"]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # argparse exits with 2 already; keep the diagnostic on stderr
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _clean(obj):
    """JSON-safe copy: numpy scalars and arrays to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def parse_array(text: Optional[str], name: str) -> Optional[list]:
    """`zero`, an inline JSON array, or a path to a file holding one."""
    if text is None or text == "zero":
        return None
    src = text
    if not text.lstrip().startswith("["):
        p = Path(text)
        if not p.is_file():
            raise ValidationError(f"--{name}: not 'zero', an inline array or a file: {text!r}")
        src = p.read_text(encoding="utf-8")
    try:
        val = json.loads(src)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"--{name}: {exc}") from exc
    if not isinstance(val, list) or not all(isinstance(v, (int, float)) and not isinstance(v, bool)
                                            for v in val):
        raise ValidationError(f"--{name} must be a flat array of numbers")
    if not all(math.isfinite(v) for v in val):
        raise ValidationError(f"--{name} entries must be finite")
    return [float(v) for v in val]


def load_params(path: Optional[str], allowed: set) -> dict:
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read params {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ValidationError("params file must hold a JSON object")
    unknown = sorted(set(doc) - allowed)
    if unknown:
        raise ValidationError(f"unknown parameter keys: {unknown}")
    res = doc.get("resolution")
    if res is not None:
        if not isinstance(res, dict):
            raise ValidationError("resolution must be an object")
        bad = sorted(set(res) - RESOLUTION_KEYS)
        if bad:
            raise ValidationError(f"unknown resolution keys: {bad}")
    return doc


def _int(v, name: str) -> int:
    if isinstance(v, bool) or not isinstance(v, (int, float)) or int(v) != v:
        raise ValidationError(f"{name} must be an integer")
    return int(v)


def _threads() -> int:
    raw = os.environ.get("FBMS_THREADS", "1") or "1"
    try:
        n = int(raw)
    except ValueError as exc:
        raise ValidationError(f"FBMS_THREADS={raw!r} is not an integer") from exc
    if n < 1:
        raise ValidationError("FBMS_THREADS must be >= 1")
    return n


def _tolerances(args) -> dict:
    tol = {"shoot": getattr(args, "tol.shoot"), "separation": getattr(args, "tol.separation"),
           "richardson": getattr(args, "tol.richardson")}
    for key, v in tol.items():
        if not (v > 0 and math.isfinite(v)):
            raise ValidationError(f"--tol.{key} must be positive")
    return tol


# ---------------------------------------------------------------- commands

def cmd_config_solve(args) -> int:
    tol = _tolerances(args)
    sigma = parse_array(args.sigma, "sigma")
    cfg = shoot(sigma, args.k, args.delta_sigma, tol["shoot"])
    params = {"k": args.k, "sigma": sigma if sigma is not None else "zero",
              "delta_sigma": args.delta_sigma, "tol": tol}
    doc = {"params": params, "configuration": cfg.to_dict(), "metrics": config_metrics(cfg)}
    _emit(dumps(doc), args.out)
    return EXIT_OK


def _family_row(k: int, shoot_tol: float) -> dict:
    row = {c: "" for c in FAMILY_COLUMNS}
    row["k"] = k
    try:
        cfg = shoot(None, k, tol=shoot_tol)
        met = config_metrics(cfg)
        row.update(status="ok", beta_hat=cfg.beta_hat, beta_1=cfg.beta[0],
                   alpha_1=cfg.alpha_minus[0], shooting_residual=cfg.residual)
        row.update({c: met[c] for c in FAMILY_COLUMNS if c in met})
    except FBMSError as exc:
        row.update(status="failed", error=f"{type(exc).__name__}: {exc}")
    return row


def _csv_text(rows: list, columns: Sequence[str], comments: Sequence[str] = ()) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\r\n")
    w.writeheader()
    for r in rows:
        w.writerow({c: repr(float(r[c])) if isinstance(r[c], (float, np.floating)) else r[c]
                    for c in columns})
    for line in comments:
        buf.write(f"# {line}\r\n")
    return buf.getvalue()


def cmd_config_family(args) -> int:
    tol = _tolerances(args)
    if args.k_min < 3 or args.k_max < args.k_min:
        raise ValidationError("need 3 <= k-min <= k-max")
    ks = list(range(args.k_min, args.k_max + 1))
    n = _threads()
    if n > 1:
        with ThreadPoolExecutor(n) as ex:
            rows = list(ex.map(lambda k: _family_row(k, tol["shoot"]), ks))
    else:
        rows = [_family_row(k, tol["shoot"]) for k in ks]
    ok = [r for r in rows if r["status"] == "ok"]
    flags = []
    for col in ("max_one_minus_r", "max_abs_dr"):
        vals = [r[col] for r in ok]
        flags.append(f"{col}_nonincreasing: {all(b <= a for a, b in zip(vals, vals[1:]))}")
    flags.append(f"params: k_min={args.k_min} k_max={args.k_max} tol.shoot={tol['shoot']!r}")
    _emit(_csv_text(rows, FAMILY_COLUMNS, flags), args.out)
    return EXIT_OK


def _resolution(doc: dict, args) -> dict:
    res = dict(Resolution().__dict__)
    res.update(doc.get("resolution") or {})
    if args.z_per_period is not None:
        res["z_per_period"] = args.z_per_period
    if args.s_samples is not None:
        res["s_samples"] = args.s_samples
    return {k: _int(v, k) for k, v in res.items()}


def initial_params(args) -> InitialSurfaceParams:
    doc = load_params(args.params, INITIAL_KEYS)
    for key in ("k", "m"):
        if getattr(args, key) is not None:
            doc[key] = getattr(args, key)
        if key not in doc:
            raise ValidationError(f"{key} is required (flag or params file)")
        doc[key] = _int(doc[key], key)
    for key in ("sigma", "varphi"):
        flag = getattr(args, key)
        if flag is not None:
            doc[key] = parse_array(flag, key) or []
        doc[key] = tuple(doc.get(key) or ())
    if args.gluing is not None:
        doc["gluing"] = args.gluing
    doc["resolution"] = _resolution(doc, args)
    return InitialSurfaceParams(**doc)


def cmd_mesh_initial(args) -> int:
    xi = initial_params(args)
    mesh = assemble_initial_surface(xi)
    export_obj(mesh, args.out)
    summary = {"params": mesh.meta["resolved_params"], "output": str(args.out), "n_vertices": mesh.n_vertices,
               "n_triangles": len(mesh.triangles), "boundary_components": mesh.boundary_components(),
               "euler_characteristic": mesh.euler_characteristic(), "genus": mesh.genus(),
               "meta": mesh.meta}
    _emit(dumps(summary), args.json)
    return EXIT_OK


def cmd_mesh_desing(args) -> int:
    doc = load_params(args.params, DESING_KEYS)
    for key in ("alpha_minus", "alpha_plus", "beta", "phi_minus", "phi_plus", "tau"):
        v = getattr(args, key)
        if v is not None:
            doc[key] = v
    if "alpha_plus" not in doc or "beta" not in doc:
        raise ValidationError("alpha_plus and beta are required")
    doc.setdefault("alpha_minus", doc["alpha_plus"])
    res = _resolution(doc, args)
    periods = doc.pop("periods", None)
    if args.periods is not None:
        periods = args.periods
    gluing = args.gluing or doc.pop("gluing", "trim")
    doc.pop("resolution", None)
    doc.pop("gluing", None)
    params = DesingParams(**doc)
    mesh = build_desing_mesh(params, res, periods, gluing)
    resolved = {f: getattr(params, f) for f in params.__dataclass_fields__}
    resolved.update(resolution=res, periods=periods, gluing=gluing)
    mesh.meta["params"] = _clean(resolved)
    export_obj(mesh, args.out)
    summary = {"params": resolved, "output": str(args.out), "n_vertices": mesh.n_vertices,
               "n_triangles": len(mesh.triangles), "boundary_components": mesh.boundary_components(),
               "euler_characteristic": mesh.euler_characteristic()}
    _emit(dumps(summary), args.json)
    return EXIT_OK


def cmd_verify(args) -> int:
    tol = _tolerances(args)
    path = Path(args.mesh)
    if not path.is_file() or not sidecar_path(path, ".json").is_file():
        raise ValidationError(f"{path} or its .json sidecar is missing")
    if args.samples < 1000:
        raise ValidationError("--samples must be at least 1000")
    mesh = load_mesh(path)
    meta = mesh.meta
    tau = float(meta.get("tau", meta.get("params", {}).get("tau", 0.0)))
    cfg = None
    if "k" in meta:
        sigma = meta.get("sigma") or None
        cfg = shoot(sigma, int(meta["k"]), tol=tol["shoot"])
    rep = verify_initial_surface(mesh, cfg, tau, include_seams=args.include_seams,
                                 samples=args.samples)
    doc = {"params": {"mesh": str(path), "samples": args.samples,
                      "include_seams": args.include_seams, "tol": tol,
                      "surface": meta.get("resolved_params", meta.get("params"))},
           "report": rep.to_dict()}
    _emit(dumps(doc), args.out)
    return EXIT_OK


def cmd_spectrum(args) -> int:
    tol = _tolerances(args)
    spectral.RICHARDSON_TOL = tol["richardson"]
    if args.grid and args.grid < 64:
        raise ValidationError("--grid must be 0 (skip) or at least 64")
    if args.modes < 0:
        raise ValidationError("--modes must be nonnegative")
    if args.table:
        lo, _, hi = args.table.partition(":")
        try:
            ks = range(int(lo), int(hi) + 1)
        except ValueError as exc:
            raise ValidationError("--table expects K0:K1") from exc
        if len(ks) == 0 or ks[0] < 3:
            raise ValidationError("--table needs 3 <= K0 <= K1")
        rows = spectral.certificate_table(ks)
        cols = ["k", "global_margin", "min_annulus_det", "max_separation", "valid"]
        _emit(_csv_text(rows, cols, [f"params: table={args.table}"]), args.out)
        return EXIT_OK
    sigma = parse_array(args.sigma, "sigma")
    cfg = shoot(sigma, args.k, tol=tol["shoot"])
    cert = spectral.certify(cfg, tol["separation"], args.modes, args.grid)
    doc = {"params": {"k": args.k, "sigma": sigma if sigma is not None else "zero",
                      "modes": args.modes, "grid": args.grid, "tol": tol},
           "certificate": cert.to_dict(),
           "pieces": {str(i): {"kind": kind, "margin": m}
                      for i, (kind, m) in enumerate(zip(cert.kinds, cert.margins))}}
    _emit(dumps(doc), args.out)
    return EXIT_OK


# ---------------------------------------------------------------- parser

def _add_tol(p) -> None:
    p.add_argument("--tol.shoot", type=float, default=SHOOT_TOL, help="shooting residual bound")
    p.add_argument("--tol.separation", type=float, default=spectral.SEPARATION_EPS,
                   help="slack in the annulus separation test")
    p.add_argument("--tol.richardson", type=float, default=spectral.RICHARDSON_TOL,
                   help="grid/2-grid disagreement that triggers a warning")


def _add_resolution(p) -> None:
    p.add_argument("--z-per-period", type=int)
    p.add_argument("--s-samples", type=int)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="fbms", description="Catenoidal configurations, desingularized meshes, checks.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("config-solve", help="solve one configuration")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--sigma", default="zero")
    p.add_argument("--delta-sigma", type=float, default=DELTA_SIGMA)
    p.add_argument("--out")
    _add_tol(p)
    p.set_defaults(func=cmd_config_solve)

    p = sub.add_parser("config-family", help="metrics of balanced configurations over a k range")
    p.add_argument("--k-min", type=int, default=3)
    p.add_argument("--k-max", type=int, default=40)
    p.add_argument("--out")
    _add_tol(p)
    p.set_defaults(func=cmd_config_family)

    p = sub.add_parser("mesh-desing", help="mesh one desingularizing surface")
    p.add_argument("--params")
    for key in ("alpha_minus", "alpha_plus", "beta", "phi_minus", "phi_plus", "tau"):
        p.add_argument("--" + key.replace("_", "-"), dest=key, type=float)
    p.add_argument("--periods", type=int)
    p.add_argument("--gluing", choices=["trim", "overlap"])
    p.add_argument("--out", required=True)
    p.add_argument("--json", help="summary path (stdout by default)")
    _add_resolution(p)
    p.set_defaults(func=cmd_mesh_desing)

    p = sub.add_parser("mesh-initial", help="mesh the initial surface")
    p.add_argument("--params")
    p.add_argument("--k", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--sigma")
    p.add_argument("--varphi")
    p.add_argument("--gluing", choices=["trim", "overlap"])
    p.add_argument("--out", required=True)
    p.add_argument("--json", help="summary path (stdout by default)")
    _add_resolution(p)
    p.set_defaults(func=cmd_mesh_initial)

    p = sub.add_parser("verify", help="verification report for a mesh written by mesh-initial")
    p.add_argument("--mesh", required=True)
    p.add_argument("--samples", type=int, default=HAUSDORFF_SAMPLES)
    p.add_argument("--include-seams", action="store_true")
    p.add_argument("--out")
    _add_tol(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("spectrum", help="Dirichlet kernel certificate")
    p.add_argument("--k", type=int, default=11)
    p.add_argument("--sigma", default="zero")
    p.add_argument("--modes", type=int, default=0)
    p.add_argument("--grid", type=int, default=0, help="finite-difference grid, 0 to skip")
    p.add_argument("--table", help="K0:K1, write a margin-vs-k CSV instead")
    p.add_argument("--out")
    _add_tol(p)
    p.set_defaults(func=cmd_spectrum)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"fbms: invalid input: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NumericalFailure, FloatingPointError) as exc:
        print(f"fbms: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except TypeError as exc:
        # bad value types inside a params file
        print(f"fbms: invalid input: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
