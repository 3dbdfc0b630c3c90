"""Indexed triangle meshes with region labels, boundary flags and symmetry orbits."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .errors import DegenerateTriangle, ValidationError


@dataclass
class Mesh:
    vertices: np.ndarray
    triangles: np.ndarray
    region: np.ndarray  # int codes into region_names
    region_names: list
    boundary: np.ndarray = None
    orbit: np.ndarray = None
    normals: np.ndarray = None  # unit normals of the underlying parametrisation
    s: np.ndarray = None  # wing coordinate, 0 on cores
    scale: np.ndarray = None  # local model length scale tau*sin(beta)
    face_group: np.ndarray = None  # per-face code into group_names
    group_names: list = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        n = len(self.vertices)
        self.region = np.asarray(self.region, dtype=np.int64)
        if self.boundary is None:
            self.boundary = boundary_vertices(self.triangles, n)
        if self.orbit is None:
            self.orbit = np.arange(n)
        if self.s is None:
            self.s = np.zeros(n)
        if self.scale is None:
            self.scale = np.ones(n)
        if self.face_group is None:
            self.face_group = np.zeros(len(self.triangles), dtype=np.int64)
            self.group_names = ["surface"]

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    def edges(self) -> np.ndarray:
        return unique_edges(self.triangles)

    def boundary_edges(self) -> np.ndarray:
        return boundary_edge_list(self.triangles)

    def boundary_components(self) -> int:
        be = self.boundary_edges()
        if len(be) == 0:
            return 0
        verts, inv = np.unique(be.ravel(), return_inverse=True)
        inv = inv.reshape(-1, 2)
        g = coo_matrix((np.ones(len(inv)), (inv[:, 0], inv[:, 1])), shape=(len(verts), len(verts)))
        return int(connected_components(g, directed=False)[0])

    def euler_characteristic(self) -> int:
        used = np.unique(self.triangles)
        return int(len(used) - len(self.edges()) + len(self.triangles))

    def genus(self) -> float:
        return 0.5 * (2 - self.euler_characteristic() - self.boundary_components())

    def is_manifold(self) -> bool:
        e = np.sort(self.triangles[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
        _, counts = np.unique(e, axis=0, return_counts=True)
        return bool(np.all(counts <= 2))

    def orientation_consistent(self) -> bool:
        d = self.triangles[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2)
        _, counts = np.unique(d, axis=0, return_counts=True)
        return bool(np.all(counts == 1))

    def face_normals(self) -> np.ndarray:
        v = self.vertices[self.triangles]
        return np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])

    def edge_lengths(self) -> np.ndarray:
        e = self.edges()
        return np.linalg.norm(self.vertices[e[:, 0]] - self.vertices[e[:, 1]], axis=1)

    def region_of(self, name: str) -> np.ndarray:
        return self.region == self.region_names.index(name)


def unique_edges(tri: np.ndarray) -> np.ndarray:
    e = np.sort(tri[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
    return np.unique(e, axis=0)


def boundary_edge_list(tri: np.ndarray) -> np.ndarray:
    e = np.sort(tri[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
    u, counts = np.unique(e, axis=0, return_counts=True)
    return u[counts == 1]


def boundary_vertices(tri: np.ndarray, n: int) -> np.ndarray:
    flag = np.zeros(n, dtype=bool)
    be = boundary_edge_list(tri)
    flag[be.ravel()] = True
    return flag


def grid_triangles(rows: int, cols: int, offset: int = 0) -> np.ndarray:
    """Triangulate a structured (rows x cols) vertex grid stored row-major."""
    i, j = np.meshgrid(np.arange(rows - 1), np.arange(cols - 1), indexing="ij")
    a = (i * cols + j).ravel() + offset
    b = a + 1
    c = a + cols
    d = c + 1
    return np.concatenate([np.stack([a, b, d], 1), np.stack([a, d, c], 1)])


def zipper(row_a: np.ndarray, row_b: np.ndarray, ta: np.ndarray, tb: np.ndarray) -> np.ndarray:
    """Triangles between two open polylines of indices parametrised by ta, tb on [0, 1]."""
    tris = []
    i = j = 0
    na, nb = len(row_a) - 1, len(row_b) - 1
    while i < na or j < nb:
        if j == nb or (i < na and ta[i + 1] <= tb[j + 1]):
            tris.append((row_a[i], row_a[i + 1], row_b[j]))
            i += 1
        else:
            tris.append((row_a[i], row_b[j + 1], row_b[j]))
            j += 1
    return np.array(tris, dtype=np.int64)


def weld(vertices: np.ndarray, triangles: np.ndarray, tol: float = 1e-9):
    """Merge vertices closer than tol. Returns (keep_index, remap, new_triangles)."""
    tree = cKDTree(vertices)
    pairs = tree.query_pairs(tol, output_type="ndarray")
    n = len(vertices)
    parent = np.arange(n)
    if len(pairs):
        g = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
        _, labels = connected_components(g, directed=False)
        # representative: smallest index in each component
        rep = np.full(labels.max() + 1, n)
        np.minimum.at(rep, labels, np.arange(n))
        parent = rep[labels]
    keep = np.unique(parent)
    newidx = np.full(n, -1)
    newidx[keep] = np.arange(len(keep))
    remap = newidx[parent]
    t = remap[triangles]
    good = (t[:, 0] != t[:, 1]) & (t[:, 1] != t[:, 2]) & (t[:, 0] != t[:, 2])
    return keep, remap, t[good]


def orient_consistently(triangles: np.ndarray) -> np.ndarray:
    """Flip triangles so that neighbouring faces induce opposite edge directions."""
    tri = triangles.copy()
    nf = len(tri)
    e = tri[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2)
    key = np.sort(e, axis=1)
    order = np.lexsort((key[:, 1], key[:, 0]))
    ks = key[order]
    same = np.all(ks[1:] == ks[:-1], axis=1)
    fa = order[:-1][same] // 3
    fb = order[1:][same] // 3
    # faces sharing an edge with equal direction need opposite flip state
    ea = e[order[:-1][same]]
    eb = e[order[1:][same]]
    parity = np.all(ea == eb, axis=1).astype(np.int8)
    adj = [[] for _ in range(nf)]
    for a, b, p in zip(fa.tolist(), fb.tolist(), parity.tolist()):
        adj[a].append((b, p))
        adj[b].append((a, p))
    flip = np.full(nf, -1, dtype=np.int8)
    for start in range(nf):
        if flip[start] >= 0:
            continue
        flip[start] = 0
        stack = [start]
        while stack:
            f = stack.pop()
            for g, p in adj[f]:
                want = flip[f] ^ p
                if flip[g] < 0:
                    flip[g] = want
                    stack.append(g)
    sel = flip == 1
    tri[sel] = tri[sel][:, ::-1]
    return tri


def check_areas(vertices: np.ndarray, triangles: np.ndarray, min_area: float = 1e-16) -> None:
    v = vertices[triangles]
    area = 0.5 * np.linalg.norm(np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]), axis=1)
    bad = np.nonzero(area < min_area)[0]
    if len(bad):
        raise DegenerateTriangle(f"{len(bad)} triangles with area below {min_area}, first {bad[0]}")


def sidecar_path(path, ext: str) -> Path:
    """mesh.obj -> mesh.obj.json / mesh.obj.npz"""
    path = Path(path)
    return path.with_name(path.name + ext)


def export_obj(mesh: Mesh, path) -> None:
    """Write OBJ with one named group per region plus a JSON sidecar."""
    if mesh.n_vertices == 0 or len(mesh.triangles) == 0:
        raise ValidationError("refusing to export an empty mesh")
    path = Path(path)
    lines = ["# fbms mesh"]
    lines += [f"v {x:.17g} {y:.17g} {z:.17g}" for x, y, z in mesh.vertices]
    for code, name in enumerate(mesh.group_names):
        sel = np.nonzero(mesh.face_group == code)[0]
        if len(sel) == 0:
            continue
        lines.append(f"g {name}")
        lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.triangles[sel]]
    path.write_text("\n".join(lines) + "\n")
    side = {
        "boundary": np.nonzero(mesh.boundary)[0].tolist(),
        "region_names": list(mesh.region_names),
        "region": mesh.region.tolist(),
        "orbit": mesh.orbit.tolist(),
        "groups": list(mesh.group_names),
        "meta": mesh.meta,
    }
    sidecar_path(path, ".json").write_text(json.dumps(side, sort_keys=True))
    fields = {"s": mesh.s, "scale": mesh.scale}
    if mesh.normals is not None:
        fields["normals"] = mesh.normals
    np.savez(sidecar_path(path, ".npz"), **fields)


def import_obj(path) -> tuple[np.ndarray, np.ndarray, dict]:
    """Read back vertices, triangles and face groups written by export_obj."""
    verts, tris, groups = [], [], {}
    current = None
    for line in Path(path).read_text().splitlines():
        if line.startswith("v "):
            verts.append([float(t) for t in line.split()[1:4]])
        elif line.startswith("g "):
            current = line[2:].strip()
            groups.setdefault(current, [])
        elif line.startswith("f "):
            groups[current].append(len(tris))
            tris.append([int(t) - 1 for t in line.split()[1:4]])
    return np.array(verts), np.array(tris, dtype=np.int64), groups


def load_mesh(path) -> Mesh:
    """Inverse of export_obj, including the per-vertex fields of the .npz sidecar."""
    path = Path(path)
    V, T, groups = import_obj(path)
    side = json.loads(sidecar_path(path, ".json").read_text())
    names = side["groups"]
    face_group = np.zeros(len(T), dtype=np.int64)
    for name, faces in groups.items():
        face_group[faces] = names.index(name)
    boundary = np.zeros(len(V), dtype=bool)
    boundary[side["boundary"]] = True
    extra = {}
    npz = sidecar_path(path, ".npz")
    if npz.exists():
        with np.load(npz) as f:
            extra = {key: f[key] for key in f.files}
    return Mesh(V, T, side["region"], side["region_names"], boundary=boundary,
                orbit=np.asarray(side["orbit"]), normals=extra.get("normals"),
                s=extra.get("s"), scale=extra.get("scale"), face_group=face_group,
                group_names=names, meta=side["meta"])
