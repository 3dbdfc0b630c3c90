"""Numerical checks on meshes and configurations.

Mean curvature is the cotangent Laplacian of the position with mixed
(Voronoi / barycentric) vertex areas, so H = k1 + k2 and the unit sphere with
outward normal has H = 2.
"""
from __future__ import annotations

import csv
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from ._accel import HAVE_NUMBA, njit
from .catenary import CatenoidParams, catenary_x
from .configuration import Configuration, config_metrics, shoot
from .errors import DegenerateTriangle, FBMSError, ValidationError
from .mesh import Mesh, grid_triangles, unique_edges

log = logging.getLogger(__name__)

GAMMA = 0.9
MIN_AREA = 1e-16
HAUSDORFF_SAMPLES = 100_000


# ---------------------------------------------------------------- cotangent Laplacian

@njit(cache=True)
def _cotan_kernel(V, T, lap, area):
    for f in range(T.shape[0]):
        i0, i1, i2 = T[f, 0], T[f, 1], T[f, 2]
        p0, p1, p2 = V[i0], V[i1], V[i2]
        e0 = p2 - p1  # opposite vertex 0
        e1 = p0 - p2
        e2 = p1 - p0
        cx = e2[1] * (-e1[2]) - e2[2] * (-e1[1])
        cy = e2[2] * (-e1[0]) - e2[0] * (-e1[2])
        cz = e2[0] * (-e1[1]) - e2[1] * (-e1[0])
        dbl = math.sqrt(cx * cx + cy * cy + cz * cz)
        A = 0.5 * dbl
        # cot at vertex v = <u, w> / |u x w| for the two edges leaving v
        d0 = -(e2[0] * e1[0] + e2[1] * e1[1] + e2[2] * e1[2])
        d1 = -(e0[0] * e2[0] + e0[1] * e2[1] + e0[2] * e2[2])
        d2 = -(e1[0] * e0[0] + e1[1] * e0[1] + e1[2] * e0[2])
        c0, c1, c2 = d0 / dbl, d1 / dbl, d2 / dbl
        for k in range(3):
            lap[i1, k] += 0.5 * c0 * (p2[k] - p1[k])
            lap[i2, k] += 0.5 * c0 * (p1[k] - p2[k])
            lap[i2, k] += 0.5 * c1 * (p0[k] - p2[k])
            lap[i0, k] += 0.5 * c1 * (p2[k] - p0[k])
            lap[i0, k] += 0.5 * c2 * (p1[k] - p0[k])
            lap[i1, k] += 0.5 * c2 * (p0[k] - p1[k])
        if d0 < 0:
            area[i0] += 0.5 * A
            area[i1] += 0.25 * A
            area[i2] += 0.25 * A
        elif d1 < 0:
            area[i1] += 0.5 * A
            area[i0] += 0.25 * A
            area[i2] += 0.25 * A
        elif d2 < 0:
            area[i2] += 0.5 * A
            area[i0] += 0.25 * A
            area[i1] += 0.25 * A
        else:
            l0 = e0[0] * e0[0] + e0[1] * e0[1] + e0[2] * e0[2]
            l1 = e1[0] * e1[0] + e1[1] * e1[1] + e1[2] * e1[2]
            l2 = e2[0] * e2[0] + e2[1] * e2[1] + e2[2] * e2[2]
            area[i0] += 0.125 * (l1 * c1 + l2 * c2)
            area[i1] += 0.125 * (l0 * c0 + l2 * c2)
            area[i2] += 0.125 * (l0 * c0 + l1 * c1)


def _cotan_numpy(V, T, lap, area):
    p = V[T]
    e = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
    cr = np.cross(e[:, 2], -e[:, 1])
    dbl = np.linalg.norm(cr, axis=1)
    A = 0.5 * dbl
    d = -np.stack([np.sum(e[:, 2] * e[:, 1], 1), np.sum(e[:, 0] * e[:, 2], 1),
                   np.sum(e[:, 1] * e[:, 0], 1)], axis=1)
    c = d / dbl[:, None]
    for v, (a, b) in enumerate(((1, 2), (2, 0), (0, 1))):
        diff = p[:, b] - p[:, a]
        np.add.at(lap, T[:, a], 0.5 * c[:, v, None] * diff)
        np.add.at(lap, T[:, b], -0.5 * c[:, v, None] * diff)
    l2 = np.sum(e * e, axis=2)
    vor = 0.125 * np.stack([l2[:, 1] * c[:, 1] + l2[:, 2] * c[:, 2],
                            l2[:, 0] * c[:, 0] + l2[:, 2] * c[:, 2],
                            l2[:, 0] * c[:, 0] + l2[:, 1] * c[:, 1]], axis=1)
    obtuse = d < 0
    any_obt = obtuse.any(axis=1)
    mixed = np.where(obtuse, 0.5 * A[:, None], 0.25 * A[:, None])
    va = np.where(any_obt[:, None], mixed, vor)
    for v in range(3):
        np.add.at(area, T[:, v], va[:, v])


def cotan_laplacian(vertices: np.ndarray, triangles: np.ndarray, use_numba: Optional[bool] = None):
    """(sum of cotan-weighted edge vectors, mixed area) per vertex."""
    V = np.ascontiguousarray(vertices, dtype=float)
    T = np.ascontiguousarray(triangles, dtype=np.int64)
    p = V[T]
    area = 0.5 * np.linalg.norm(np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]), axis=1)
    bad = np.nonzero(area < MIN_AREA)[0]
    if len(bad):
        raise DegenerateTriangle(f"{len(bad)} triangles below area {MIN_AREA} (first {bad[0]})")
    lap = np.zeros_like(V)
    mix = np.zeros(len(V))
    if (HAVE_NUMBA if use_numba is None else use_numba) and HAVE_NUMBA:
        _cotan_kernel(V, T, lap, mix)
    else:
        _cotan_numpy(V, T, lap, mix)
    return lap, mix


def area_normals(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    fn = np.cross(vertices[triangles[:, 1]] - vertices[triangles[:, 0]],
                  vertices[triangles[:, 2]] - vertices[triangles[:, 0]])
    vn = np.zeros_like(vertices)
    for c in range(3):
        np.add.at(vn, triangles[:, c], fn)
    return vn / np.maximum(np.linalg.norm(vn, axis=1, keepdims=True), 1e-300)


def discrete_mean_curvature(mesh: Mesh, signed: bool = True, use_numba: Optional[bool] = None
                            ) -> np.ndarray:
    """Per-vertex H, NaN on boundary vertices."""
    lap, area = cotan_laplacian(mesh.vertices, mesh.triangles, use_numba)
    hn = lap / np.where(area > 0, area, np.inf)[:, None]
    if signed:
        nrm = mesh.normals if mesh.normals is not None else area_normals(mesh.vertices,
                                                                          mesh.triangles)
        H = -np.sum(hn * nrm, axis=1)
    else:
        H = np.linalg.norm(hn, axis=1)
    H[mesh.boundary] = np.nan
    return H


def ring(triangles: np.ndarray, seeds: np.ndarray, n: int, n_vertices: int) -> np.ndarray:
    """Boolean mask of vertices within n edge-steps of the seed mask."""
    e = unique_edges(triangles)
    mask = np.asarray(seeds, dtype=bool).copy()
    for _ in range(n):
        grow = mask.copy()
        grow[e[mask[e[:, 0]], 1]] = True
        grow[e[mask[e[:, 1]], 0]] = True
        mask = grow
    return mask


def seam_vertices(mesh: Mesh) -> np.ndarray:
    """Vertices where faces of different groups meet, plus patch seams flagged in meta."""
    seam = np.zeros(mesh.n_vertices, dtype=bool)
    first = np.full(mesh.n_vertices, -1)
    for c in range(3):
        idx = mesh.triangles[:, c]
        g = mesh.face_group
        unset = first[idx] < 0
        first[idx[unset]] = g[unset]
        seam[idx[first[idx] != g]] = True
    if "seam" in mesh.meta and isinstance(mesh.meta["seam"], np.ndarray):
        seam |= mesh.meta["seam"]
    return seam


def interior_mask(mesh: Mesh, boundary_rings: int = 1, include_seams: bool = False) -> np.ndarray:
    n = mesh.n_vertices
    bad = ring(mesh.triangles, mesh.boundary, boundary_rings, n)
    if not include_seams:
        bad |= ring(mesh.triangles, seam_vertices(mesh), 1, n)
    return ~bad


# ---------------------------------------------------------------- boundary normals

def fitted_normals(mesh: Mesh, verts: np.ndarray, rings: int = 2) -> np.ndarray:
    """Normals from a least-squares quadratic height fit over the vertex's n-ring."""
    V, T = mesh.vertices, mesh.triangles
    e = unique_edges(T)
    n = len(V)
    from scipy.sparse import coo_matrix
    A = coo_matrix((np.ones(2 * len(e)), (np.r_[e[:, 0], e[:, 1]], np.r_[e[:, 1], e[:, 0]])),
                   shape=(n, n)).tocsr()
    base = area_normals(V, T)
    out = np.zeros((len(verts), 3))
    for k, v in enumerate(verts):
        nb = {v}
        front = {v}
        for _ in range(rings):
            nxt = set()
            for u in front:
                nxt.update(A.indices[A.indptr[u]:A.indptr[u + 1]].tolist())
            front = nxt - nb
            nb |= nxt
        nb.discard(v)
        nb = np.fromiter(nb, dtype=np.int64)
        nz = base[v]
        t1 = np.cross(nz, [1.0, 0.0, 0.0])
        if np.linalg.norm(t1) < 0.5:
            t1 = np.cross(nz, [0.0, 1.0, 0.0])
        t1 /= np.linalg.norm(t1)
        t2 = np.cross(nz, t1)
        d = V[nb] - V[v]
        u, w, hgt = d @ t1, d @ t2, d @ nz
        M = np.stack([u, w, u * u, u * w, w * w], axis=1)
        coef = np.linalg.lstsq(M, hgt, rcond=None)[0]
        nn = nz - coef[0] * t1 - coef[1] * t2
        out[k] = nn / np.linalg.norm(nn)
    return out


# ---------------------------------------------------------------- distances

def sample_surface(vertices: np.ndarray, triangles: np.ndarray, n: int,
                   rng: np.random.Generator) -> np.ndarray:
    p = vertices[triangles]
    area = 0.5 * np.linalg.norm(np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]), axis=1)
    f = rng.choice(len(triangles), size=n, p=area / area.sum())
    r1, r2 = rng.random(n), rng.random(n)
    flip = r1 + r2 > 1
    r1[flip], r2[flip] = 1 - r1[flip], 1 - r2[flip]
    return p[f, 0] + r1[:, None] * (p[f, 1] - p[f, 0]) + r2[:, None] * (p[f, 2] - p[f, 0])


def fibonacci_sphere(n: int) -> np.ndarray:
    i = np.arange(n) + 0.5
    y = 1 - 2 * i / n
    r = np.sqrt(1 - y * y)
    phi = math.pi * (3 - math.sqrt(5)) * i
    return np.stack([r * np.cos(phi), y, r * np.sin(phi)], axis=1)


def hausdorff_to_sphere(mesh: Mesh, n: int = HAUSDORFF_SAMPLES, seed: int = 0) -> tuple[float, float]:
    """(sampled two-sided distance, one-sided discretisation bound)."""
    rng = np.random.default_rng(seed)
    pts = np.concatenate([mesh.vertices, sample_surface(mesh.vertices, mesh.triangles, n, rng)])
    d1 = float(np.max(np.abs(1.0 - np.linalg.norm(pts, axis=1))))
    sph = fibonacci_sphere(n)
    d2, _ = cKDTree(pts).query(sph)
    h = float(np.max(mesh.edge_lengths()))
    return max(d1, float(d2.max())), 0.5 * h


def config_profile(config: Configuration, n: int = HAUSDORFF_SAMPLES) -> np.ndarray:
    """Dense samples of the configuration's meridian curves in the (radius, height) plane."""
    parts = []
    per = max(100, n // (len(config.arcs) + 2))
    for beta in (config.beta[0], config.beta[-1]):
        r = np.linspace(0.0, math.sin(beta), per)
        parts.append(np.stack([r, np.full(per, math.cos(beta))], axis=1))
    for arc in config.arcs:
        y = np.linspace(math.cos(arc.beta_in), math.cos(arc.beta_ex), per)
        parts.append(np.stack([catenary_x(arc.params, y), y], axis=1))
    return np.concatenate(parts)


def hausdorff_to_config(mesh: Mesh, config: Configuration, n: int = HAUSDORFF_SAMPLES,
                        seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    prof = config_profile(config, n)
    pts = np.concatenate([mesh.vertices, sample_surface(mesh.vertices, mesh.triangles, n, rng)])
    mer = np.stack([np.hypot(pts[:, 0], pts[:, 2]), pts[:, 1]], axis=1)
    d1, _ = cKDTree(prof).query(mer)
    # configuration samples at random rotation angles against mesh samples
    pick = prof[rng.integers(0, len(prof), n)]
    ang = rng.uniform(0, 2 * math.pi, n)
    cfg = np.stack([pick[:, 0] * np.cos(ang), pick[:, 1], pick[:, 0] * np.sin(ang)], axis=1)
    d2, _ = cKDTree(pts).query(cfg)
    return max(float(d1.max()), float(d2.max()))


def configuration_mesh(config: Configuration, n_angle: int = 256, n_profile: int = 64) -> Mesh:
    """Exact configuration (discs and annuli) as one mesh, pieces sharing their circles.

    Pieces meet at an angle along the circles, so each piece is its own face group.
    """
    ang = np.linspace(0.0, 2 * math.pi, n_angle, endpoint=False)
    V, T, R, G = [], [], [], []
    names = ["disc0"] + [f"annulus{j + 1}" for j in range(len(config.arcs))] + [f"disc{config.k}"]
    off = 0

    def ring_rows(R_, Y_, code, closed_center=False):
        nonlocal off
        rows = len(R_)
        pts = np.stack([R_[:, None] * np.cos(ang), np.broadcast_to(Y_[:, None], (rows, n_angle)),
                        R_[:, None] * np.sin(ang)], axis=-1).reshape(-1, 3)
        i, j = np.meshgrid(np.arange(rows - 1), np.arange(n_angle), indexing="ij")
        a = i * n_angle + j
        b = i * n_angle + (j + 1) % n_angle
        tri = np.concatenate([np.stack([a, b, b + n_angle], -1).reshape(-1, 3),
                              np.stack([a, b + n_angle, a + n_angle], -1).reshape(-1, 3)])
        V.append(pts)
        T.append(tri + off)
        G.append(np.full(len(tri), code))
        R.append(np.full(len(pts), code))
        off += len(pts)

    for d, beta in ((0, config.beta[0]), (len(names) - 1, config.beta[-1])):
        r = np.linspace(math.sin(beta), 0.0, n_profile + 1)[:-1]
        ring_rows(r, np.full(len(r), math.cos(beta)), d)
        V.append(np.array([[0.0, math.cos(beta), 0.0]]))
        last = off - n_angle
        T.append(np.stack([last + np.arange(n_angle), last + (np.arange(n_angle) + 1) % n_angle,
                           np.full(n_angle, off)], -1))
        G.append(np.full(n_angle, d))
        R.append(np.array([d]))
        off += 1
    for j, arc in enumerate(config.arcs):
        y = np.linspace(math.cos(arc.beta_in), math.cos(arc.beta_ex), n_profile + 1)
        ring_rows(catenary_x(arc.params, y), y, j + 1)
    from .mesh import orient_consistently, weld
    Vall, Tall = np.concatenate(V), np.concatenate(T)
    keep, _, Tall = weld(Vall, Tall, 1e-12)
    return Mesh(Vall[keep], orient_consistently(Tall), np.concatenate(R)[keep], names,
                face_group=np.concatenate(G), group_names=list(names))


# ---------------------------------------------------------------- reports

@dataclass
class VerificationReport:
    max_abs_H_interior: float
    max_abs_H_by_region: dict
    max_abs_H_scaled: float
    boundary_sphericity: float
    boundary_orthogonality: float
    boundary_orthogonality_parametric: float
    hausdorff_to_sphere: float
    hausdorff_bound: float
    hausdorff_to_config: float
    weighted_wing_decay: float
    boundary_components: int
    euler_characteristic: int
    genus: float
    n_vertices: int
    h_boundary: float
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def boundary_edge_scale(mesh: Mesh) -> float:
    e = unique_edges(mesh.triangles)
    touch = mesh.boundary[e[:, 0]] | mesh.boundary[e[:, 1]]
    return float(np.max(np.linalg.norm(mesh.vertices[e[touch, 0]] - mesh.vertices[e[touch, 1]],
                                       axis=1)))


def boundary_orthogonality(mesh: Mesh, parametric: bool = False) -> float:
    b = np.nonzero(mesh.boundary)[0]
    if len(b) == 0:
        return 0.0
    if parametric:
        if mesh.normals is None:
            raise ValidationError("mesh carries no parametric normals")
        nrm = mesh.normals[b]
    else:
        nrm = fitted_normals(mesh, b)
    X = mesh.vertices[b]
    return float(np.max(np.abs(np.sum(X * nrm, axis=1) / np.linalg.norm(X, axis=1))))


def orbit_representatives(mesh: Mesh) -> np.ndarray:
    """Vertices of one fundamental wedge when orbit ids are present, else all."""
    _, first = np.unique(mesh.orbit, return_index=True)
    return first


def verify_initial_surface(mesh: Mesh, config: Optional[Configuration], tau: float,
                           include_seams: bool = False, samples: int = HAUSDORFF_SAMPLES,
                           gamma: float = GAMMA) -> VerificationReport:
    H = discrete_mean_curvature(mesh)
    inner = interior_mask(mesh, include_seams=include_seams)
    absH = np.abs(H)
    by_region = {}
    for code, name in enumerate(mesh.region_names):
        sel = inner & (mesh.region == code)
        by_region[name] = float(np.nanmax(absH[sel])) if np.any(sel) else 0.0
    vals = absH[inner]
    max_H = float(np.nanmax(vals)) if len(vals) else 0.0
    scaled = absH * mesh.scale
    max_scaled = float(np.nanmax(scaled[inner])) if np.any(inner) else 0.0
    b = mesh.boundary
    spher = float(np.max(np.abs(np.linalg.norm(mesh.vertices[b], axis=1) - 1.0))) if b.any() else 0.0
    # orthogonality is G-invariant, so one wedge's boundary vertices suffice for the fit
    reps = np.zeros(mesh.n_vertices, dtype=bool)
    reps[orbit_representatives(mesh)] = True
    bv = np.nonzero(b & reps)[0]
    if len(bv):
        nrm = fitted_normals(mesh, bv)
        X = mesh.vertices[bv]
        ortho = float(np.max(np.abs(np.sum(X * nrm, axis=1)) / np.linalg.norm(X, axis=1)))
    else:
        ortho = 0.0
    ortho_p = boundary_orthogonality(mesh, parametric=True) if mesh.normals is not None else math.nan
    hs, hb = hausdorff_to_sphere(mesh, samples)
    hc = hausdorff_to_config(mesh, config, samples) if config is not None else math.nan
    wing = np.array([n.startswith("wing") for n in mesh.region_names])[mesh.region]
    sel = wing & inner & (mesh.s >= 1.0)
    decay = float(np.nanmax(np.exp(gamma * mesh.s[sel]) * scaled[sel])) if np.any(sel) else 0.0
    return VerificationReport(
        max_abs_H_interior=max_H, max_abs_H_by_region=by_region, max_abs_H_scaled=max_scaled,
        boundary_sphericity=spher, boundary_orthogonality=ortho,
        boundary_orthogonality_parametric=ortho_p, hausdorff_to_sphere=hs, hausdorff_bound=hb,
        hausdorff_to_config=hc, weighted_wing_decay=decay,
        boundary_components=mesh.boundary_components(),
        euler_characteristic=mesh.euler_characteristic(), genus=mesh.genus(),
        n_vertices=mesh.n_vertices, h_boundary=boundary_edge_scale(mesh),
        extra={"tau": tau})


# ---------------------------------------------------------------- test surfaces

def catenoid_mesh(params: CatenoidParams, y_range: tuple, n_angle: int, n_y: int) -> Mesh:
    """Closed-in-angle band of the catenoid x = a cosh((y - b)/a) about the y-axis."""
    y = np.linspace(y_range[0], y_range[1], n_y + 1)
    r = catenary_x(params, y)
    ang = np.linspace(0.0, 2 * math.pi, n_angle, endpoint=False)
    V = np.stack([r[:, None] * np.cos(ang), np.broadcast_to(y[:, None], (n_y + 1, n_angle)),
                  r[:, None] * np.sin(ang)], axis=-1).reshape(-1, 3)
    i, j = np.meshgrid(np.arange(n_y), np.arange(n_angle), indexing="ij")
    a = i * n_angle + j
    b = i * n_angle + (j + 1) % n_angle
    T = np.concatenate([np.stack([a, b + n_angle, b], -1).reshape(-1, 3),
                        np.stack([a, a + n_angle, b + n_angle], -1).reshape(-1, 3)])
    return Mesh(V, T, np.zeros(len(V)), ["annulus"])


def sphere_patch_mesh(n: int, cap: float = 1.0) -> Mesh:
    """Spherical cap of polar radius cap about the +y axis on a polar grid."""
    rho = np.linspace(0.0, cap, n + 1)[1:]
    ang = np.linspace(0.0, 2 * math.pi, 4 * n, endpoint=False)
    pts = [np.array([[0.0, 1.0, 0.0]])]
    for r in rho:
        pts.append(np.stack([np.sin(r) * np.cos(ang), np.full(len(ang), np.cos(r)),
                             np.sin(r) * np.sin(ang)], -1))
    V = np.concatenate(pts)
    na = len(ang)
    T = [np.stack([np.zeros(na, int), 1 + (np.arange(na) + 1) % na, 1 + np.arange(na)], -1)]
    for i in range(n - 1):
        a = 1 + i * na + np.arange(na)
        b = 1 + i * na + (np.arange(na) + 1) % na
        T.append(np.stack([a, b, b + na], -1))
        T.append(np.stack([a, b + na, a + na], -1))
    V_ = V
    mesh = Mesh(V_, np.concatenate(T), np.zeros(len(V_)), ["sphere"])
    mesh.normals = V_ / np.linalg.norm(V_, axis=1, keepdims=True)
    return mesh


def flat_disc_mesh(n: int) -> Mesh:
    x = np.linspace(-1, 1, n + 1)
    X, Z = np.meshgrid(x, x, indexing="ij")
    V = np.stack([X.ravel(), np.zeros(X.size), Z.ravel()], -1)
    return Mesh(V, grid_triangles(n + 1, n + 1), np.zeros(len(V)), ["disc"])


def catenoid_refinement(params: CatenoidParams = CatenoidParams(1.0, 0.0),
                        y_range: tuple = (-1.0, 1.0), levels: Sequence[int] = (16, 32, 64, 128),
                        aspect: float = 1.0) -> dict:
    """max interior |H| under uniform refinement and the observed orders."""
    hs, maxes = [], []
    for n in levels:
        n_angle = int(round(aspect * 4 * n))
        mesh = catenoid_mesh(params, y_range, n_angle, n)
        H = discrete_mean_curvature(mesh, signed=False)
        inner = interior_mask(mesh, include_seams=True)
        maxes.append(float(np.nanmax(np.abs(H[inner]))))
        hs.append(float(np.max(mesh.edge_lengths())))
    maxes = np.array(maxes)
    orders = np.log2(maxes[:-1] / maxes[1:])
    return {"levels": list(levels), "h": hs, "max_H": maxes.tolist(), "orders": orders.tolist()}


# ---------------------------------------------------------------- mean curvature trend

def fit_exponent(x: Sequence[float], y: Sequence[float]) -> float:
    """Least-squares slope of log y against log x."""
    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    return float(np.polyfit(lx, ly, 1)[0])


def wedge_H(xi, include_seams: bool = False) -> dict:
    """Model-unit |H| statistics over the central wedge of a halo mesh."""
    from .desing_mesh import assemble_initial_surface, halo_center_mask
    mesh = assemble_initial_surface(xi, halo_only=True)
    H = discrete_mean_curvature(mesh)
    scaled = np.abs(H) * mesh.scale
    inner = interior_mask(mesh, include_seams=include_seams) & halo_center_mask(mesh)
    # the halo's outer cut is an artificial boundary: drop two more rings there
    cut = mesh.boundary & (np.abs(np.linalg.norm(mesh.vertices, axis=1) - 1.0) > 1e-6)
    inner &= ~ring(mesh.triangles, cut, 2, mesh.n_vertices)
    out = {"max": float(np.nanmax(scaled[inner]))}
    for code, name in enumerate(mesh.region_names):
        sel = inner & (mesh.region == code)
        if np.any(sel):
            out[name] = float(np.nanmax(scaled[sel]))
    return out


def mean_curvature_trend(k: int = 5, ms: Sequence[int] = (20, 40, 80), **kw) -> dict:
    from .desing_mesh import InitialSurfaceParams
    rows = [wedge_H(InitialSurfaceParams(k, m, **kw)) for m in ms]
    maxes = [r["max"] for r in rows]
    return {"m": list(ms), "max_H_model": maxes, "by_region": rows,
            "exponent": -fit_exponent(ms, maxes)}


# ---------------------------------------------------------------- convergence study

STUDY_COLUMNS = ["k", "m", "status", "beta_hat", "beta_1", "alpha_1", "max_one_minus_r",
                 "max_abs_dr", "max_abs_H_interior", "max_abs_H_scaled", "boundary_sphericity",
                 "boundary_orthogonality", "hausdorff_to_sphere", "hausdorff_to_config",
                 "weighted_wing_decay", "boundary_components", "genus", "error"]


def _study_row(k: int, m: int, resolution, samples: int) -> dict:
    from .desing_mesh import InitialSurfaceParams, assemble_initial_surface
    row = {c: "" for c in STUDY_COLUMNS}
    row.update(k=k, m=m)
    try:
        cfg = shoot(None, k)
        met = config_metrics(cfg)
        row.update(beta_hat=cfg.beta_hat, beta_1=cfg.beta[0], alpha_1=cfg.alpha_minus[0],
                   max_one_minus_r=met["max_one_minus_r"], max_abs_dr=met["max_abs_dr"])
        xi = InitialSurfaceParams(k, m, resolution=resolution or {})
        mesh = assemble_initial_surface(xi)
        rep = verify_initial_surface(mesh, cfg, xi.tau, samples=samples)
        row.update({c: getattr(rep, c) for c in STUDY_COLUMNS if hasattr(rep, c)})
        row["status"] = "ok"
    except FBMSError as exc:
        row["status"] = "failed"
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


def convergence_study(k_range: Iterable[int], m_range, out=None, resolution=None,
                      samples: int = HAUSDORFF_SAMPLES, workers: Optional[int] = None) -> list:
    """One row per (k, m); m_range is a list or a callable k -> list of m."""
    ks = list(k_range)
    if not ks:
        raise ValidationError("k_range is empty")
    pairs = []
    for k in ks:
        ms = m_range(k) if callable(m_range) else list(m_range)
        if not ms:
            raise ValidationError("m_range is empty")
        pairs += [(k, m) for m in ms]
    if workers is None:
        workers = int(os.environ.get("FBMS_THREADS", "1") or 1)
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            rows = list(ex.map(lambda p: _study_row(p[0], p[1], resolution, samples), pairs))
    else:
        rows = [_study_row(k, m, resolution, samples) for k, m in pairs]
    flags = trend_flags(rows)
    if out is not None:
        with open(out, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=STUDY_COLUMNS, lineterminator="\r\n")
            w.writeheader()
            for r in rows:
                w.writerow({c: _fmt(r[c]) for c in STUDY_COLUMNS})
            fh.write("".join(f"# {name}: {val}\r\n" for name, val in flags.items()))
    return rows


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def trend_flags(rows: list) -> dict:
    """Nonincreasing-in-k flags for the configuration columns (first m per k)."""
    seen = {}
    for r in rows:
        if r["status"] == "ok" and r["k"] not in seen:
            seen[r["k"]] = r
    ks = sorted(seen)
    out = {}
    for col in ("max_one_minus_r", "max_abs_dr", "hausdorff_to_sphere"):
        vals = [seen[k][col] for k in ks]
        out[f"{col}_nonincreasing"] = bool(all(b <= a for a, b in zip(vals, vals[1:])))
    return out
