import math
import re
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fbms.catenary import catenary_x
from fbms.desing_mesh import (WING_MINUS, WING_PLUS, DesingParams, InitialSurfaceParams,
                              Resolution, _graph, bend, bent_rotation, bent_scherk_wing,
                              build_desing_mesh, cylinder_membership, deform_D, equivariance_residual,
                              neumann_boundary, plan_initial_surface, rot2, apply2,
                              sphere_membership, wing_map_A, wing_map_F, wing_normal_A, z_y_diffeo)
from fbms.errors import ResolutionError, ValidationError
from fbms.mesh import Mesh, export_obj, grid_triangles, import_obj, load_mesh
from fbms.scherk import asymptotic_plane
from fbms.verify import discrete_mean_curvature, interior_mask

P0 = DesingParams(0.6, 0.6, 1.0, 0.0, 0.0, 0.05)


def test_bend_examples():
    p = np.array([[0.3, -1.2, 4.0], [2.0, 0.5, -1.0]])
    assert np.array_equal(bend(0.0, p), p)
    flat = np.array([[0.3, -1.2, 0.0], [2.0, 0.5, 0.0]])
    assert np.allclose(bend(0.1, flat), flat, atol=1e-15)
    tau = 0.1
    q = bend(tau, [0.4, 0.7, 0.5 * math.pi / tau])
    assert np.allclose(q, [-1 / tau, 0.7, 1 / tau + 0.4], atol=1e-12)
    with pytest.raises(ValidationError):
        bend(-1.0, p)


@pytest.mark.parametrize("beta", [0.4, 1.0, 0.5 * math.pi, 2.3])
def test_cylinder_maps_to_sphere(beta):
    tau = 0.05
    z = np.linspace(-10, 10, 7)
    axis = np.stack([np.zeros_like(z), np.zeros_like(z), z], 1)
    assert np.all(cylinder_membership(tau, beta, axis) == 0.0)
    R = rot2(0.5 * math.pi - beta)
    assert np.max(np.abs(sphere_membership(tau, beta, bend(tau, apply2(R, axis))))) < 1e-10
    rho = 1 / (tau * math.sin(beta))
    rng = np.random.default_rng(3)
    t = rng.uniform(-0.3, 0.3, 200)
    cyl = np.stack([rho * np.cos(t) - rho, rho * np.sin(t), rng.uniform(-20, 20, 200)], 1)
    assert np.max(np.abs(cylinder_membership(tau, beta, cyl))) < 1e-9
    img = bend(tau, apply2(R, cyl))
    # residual of a squared-radius form, relative to the squared radius
    assert np.max(np.abs(sphere_membership(tau, beta, img))) * (tau * math.sin(beta)) ** 2 < 1e-10


def test_deform_moves_slab_onto_cylinder():
    beta, tau, eps_d = 1.0, 0.05, 0.1
    y = np.linspace(-2.0, 2.0, 41)
    p = np.stack([np.zeros_like(y), y, np.full_like(y, 0.7)], 1)
    q = deform_D(beta, tau, p, eps_d)
    rho = 1 / (tau * math.sin(beta))
    assert np.allclose(q[:, 0], np.sqrt(rho * rho - y * y) - rho, atol=1e-14)
    assert np.max(np.abs(cylinder_membership(tau, beta, q))) < 1e-10
    assert np.array_equal(deform_D(beta, 0.0, p, eps_d), p)
    assert np.array_equal(deform_D(0.0, tau, p, eps_d), p)


def test_deform_identity_outside_support():
    beta, tau, eps_d, c_d = 1.0, 0.05, 0.1, 2.0
    rng = np.random.default_rng(0)
    far_x = np.stack([rng.uniform(-5, -2 * c_d * eps_d, 300), rng.uniform(-1, 1, 300),
                      rng.uniform(0, 6, 300)], 1)
    far_y = np.stack([rng.uniform(-0.3, 0, 300), rng.uniform(2 * c_d, 8, 300),
                      rng.uniform(0, 6, 300)], 1)
    for p in (far_x, far_y):
        assert np.array_equal(deform_D(beta, tau, p, eps_d, c_d), p)


def test_deform_displacement_order_tau():
    beta = 1.0
    rng = np.random.default_rng(0)
    p = np.stack([rng.uniform(-1, 0, 5000), rng.uniform(-5, 5, 5000), rng.uniform(0, 6, 5000)], 1)
    C = []
    for tau in (0.2, 0.1, 0.05, 0.025):
        d = np.linalg.norm(deform_D(beta, tau, p, 0.1) - p, axis=1).max()
        C.append(d / (tau * math.sin(beta)))
    # measured C ~ 3.6-3.9, settling as tau shrinks
    assert max(C) < 4.0
    assert np.all(np.diff(C) <= 0)


def test_zy_identity_and_rotation():
    dt, phi = 0.01, 0.015
    rng = np.random.default_rng(1)
    lower = np.stack([rng.uniform(-3, 3, 100), rng.uniform(-3, 0, 100), rng.uniform(0, 6, 100)], 1)
    assert np.array_equal(z_y_diffeo(phi, dt, lower), lower)
    slab = np.stack([rng.uniform(-0.5, 0.5, 100) * math.sin(2 * dt), rng.uniform(0, 3, 100),
                     rng.uniform(0, 6, 100)], 1)
    assert np.array_equal(z_y_diffeo(phi, dt, slab), slab)
    x1 = math.sin(9 * dt)
    outer = np.stack([rng.uniform(x1, 3, 100), rng.uniform(x1, 3, 100), rng.uniform(0, 6, 100)], 1)
    out = z_y_diffeo(phi, dt, outer)
    c, s = math.cos(phi), math.sin(phi)
    ref = np.stack([c * outer[:, 0] - s * outer[:, 1], s * outer[:, 0] + c * outer[:, 1],
                    outer[:, 2]], 1)
    assert np.array_equal(out, ref)
    with pytest.raises(ValidationError):
        z_y_diffeo(3 * dt, dt, outer)


@given(st.floats(-0.02, 0.02), st.floats(-2, 2), st.floats(-2, 2), st.floats(0, 6))
def test_zy_equivariant_under_x_reflection(phi, x, y, z):
    p = np.array([x, y, z])
    m = np.array([-x, y, z])
    a = z_y_diffeo(phi, 0.01, m)
    b = z_y_diffeo(phi, 0.01, p) * [-1.0, 1.0, 1.0]
    assert np.allclose(a, b, atol=1e-15)


@pytest.mark.parametrize("wing", [WING_MINUS, WING_PLUS])
def test_wing_map_A_pivot_circle(wing):
    p = P0
    fr = p.frame(wing)
    r0, y0 = p.pivot(wing)
    z = np.linspace(0, 2 * math.pi / p.tau, 50)
    A = wing_map_A(p.theta, 0.1, fr, p.tau, 0.0, z, p.a)
    rad = np.hypot(A[:, 0] + 1 / p.tau, A[:, 2])
    assert np.allclose(rad, 1 / p.tau + r0, atol=1e-12)
    assert np.allclose(A[:, 1], y0, atol=1e-15)


def test_wing_map_A_flat_limit():
    th, a = 0.6, 3.0
    s = np.linspace(0, 5, 11)
    z = np.linspace(0, 3, 11)
    flat = wing_map_A(th, 0.0, np.eye(2), 0.0, s, z, a)
    assert np.allclose(flat, asymptotic_plane(th, a, s, z), atol=1e-14)


def test_wing_map_A_is_minimal():
    p = P0
    S, Z = np.meshgrid(np.linspace(0, 20, 201), np.linspace(0, 4, 41), indexing="ij")
    V = wing_map_A(p.theta, 0.1, p.frame(WING_PLUS), p.tau, S.ravel(), Z.ravel(), p.a)
    m = Mesh(V, grid_triangles(*S.shape), np.zeros(len(V)), ["w"])
    H = discrete_mean_curvature(m, signed=False)
    assert np.nanmax(np.abs(H[interior_mask(m, include_seams=True)])) < 1e-6


@pytest.mark.parametrize("wing", [WING_MINUS, WING_PLUS])
def test_wing_map_F_far_branch(wing):
    p = replace(P0, phi_plus=0.05, phi_minus=-0.03)
    s = np.linspace(4 * p.delta_s / p.tau, 10 * p.delta_s / p.tau, 17)
    z = np.linspace(0, 7, 17)
    A = wing_map_A(p.theta, p.wing_angle(wing), p.frame(wing), p.tau, s, z, p.a)
    assert np.array_equal(wing_map_F(p, wing, s, z), A)


def _blend_gap(p):
    gap = 0.0
    s = np.full(64, 0.5)
    z = np.linspace(0, 2 * math.pi, 64)
    for wing in (WING_MINUS, WING_PLUS):
        fr, ph = p.frame(wing), p.wing_angle(wing)
        far = (wing_map_A(p.theta, ph, fr, p.tau, s, z, p.a)
               + _graph(p.theta, p.a, s, z)[:, None] * wing_normal_A(p.theta, ph, fr, p.tau, s, z, p.a))
        gap = max(gap, float(np.max(np.linalg.norm(bent_scherk_wing(p, wing, s, z) - far, axis=1))))
    return gap


def test_wing_blend_branches_close():
    # the two branches differ by the catenoid's O(tau) stretch of the pivot offset
    taus = [1 / 20, 1 / 100, 1 / 1000, 1 / 10000]
    gaps = [_blend_gap(replace(P0, tau=t)) for t in taus]
    ratios = np.array(gaps) / np.array(taus)
    assert np.ptp(ratios) < 0.02 * ratios.mean()
    assert _blend_gap(replace(P0, tau=0.0)) < 1e-14
    assert gaps[-1] < 1e-3 * math.exp(-0.5)


def test_wing_maps_take_neighbourhood_of_s_zero_from_scherk():
    p = P0
    s = np.zeros(9)
    z = np.linspace(0, 2 * math.pi, 9)
    for wing in (WING_MINUS, WING_PLUS):
        assert np.allclose(wing_map_F(p, wing, s, z), bent_scherk_wing(p, wing, s, z), atol=1e-15)


@pytest.fixture(scope="module")
def desing():
    return build_desing_mesh(P0)


def test_neumann_boundary_on_sphere(desing):
    nb = neumann_boundary(desing)
    assert nb.sum() > 100
    V = desing.vertices[nb]
    radius = 1 / (P0.tau * math.sin(P0.beta))
    # convert the squared form into a distance
    assert np.max(np.abs(sphere_membership(P0.tau, P0.beta, V))) / (2 * radius) < 1e-8


def test_desing_symmetry_permutes_vertices(desing):
    from scipy.spatial import cKDTree
    tree = cKDTree(desing.vertices)
    g = bent_rotation(P0.tau, 2 * math.pi * P0.tau)
    moved = desing.vertices @ g[:, :3].T + g[:, 3]
    d, _ = tree.query(moved)
    assert d.max() < 1e-8
    refl = desing.vertices * [1.0, 1.0, -1.0]
    assert tree.query(refl)[0].max() < 1e-8


def test_desing_topology(desing):
    assert desing.is_manifold() and desing.orientation_consistent()
    # one Neumann curve per period plus the two outer wing circles
    assert desing.boundary_components() == P0.m + 2
    assert desing.genus() == 0


def test_desing_outer_circles_on_catenoids(desing):
    p = P0
    s_end = 5 * p.delta_s / p.tau
    for wing, name in ((WING_MINUS, "wing-"), (WING_PLUS, "wing+")):
        sel = desing.region_of(name) & np.isclose(desing.s, s_end)
        V = desing.vertices[sel]
        assert len(V) > 20
        r0, y0 = p.pivot(wing)
        eta = p.eta(wing)
        c = r0 + 1 / p.tau
        R = c * (math.cosh(p.tau * s_end) + math.cos(eta) * math.sinh(p.tau * s_end))
        Y = y0 + s_end * (1 + r0 * p.tau) * math.sin(eta)
        assert np.allclose(np.hypot(V[:, 0] + 1 / p.tau, V[:, 2]), R, atol=1e-9)
        assert np.allclose(V[:, 1], Y, atol=1e-9)


def test_desing_mirror_for_symmetric_parameters():
    from scipy.spatial import cKDTree
    p = DesingParams(0.6, 0.6, 0.5 * math.pi, 0.0, 0.0, 0.02)
    mesh = build_desing_mesh(p, periods=2)
    refl = mesh.vertices * [1.0, -1.0, 1.0]
    assert cKDTree(mesh.vertices).query(refl)[0].max() < 1e-9


def test_resolution_guard():
    with pytest.raises(ResolutionError):
        Resolution(z_per_period=6)
    with pytest.raises(ResolutionError):
        build_desing_mesh(P0, {"z_per_period": 4})


def test_params_validation():
    with pytest.raises(ValidationError):
        DesingParams(0.6, 0.6, 1.0, tau=0.03)
    with pytest.raises(ValidationError):
        DesingParams(0.6, 0.7, 1.0)
    with pytest.raises(ValidationError):
        DesingParams(0.6, 0.6, 1.0, phi_plus=1.0)
    with pytest.raises(ValidationError):
        InitialSurfaceParams(4, 20, sigma=[0.001, 0.0, 0.0, 0.001])
    with pytest.raises(ValidationError):
        InitialSurfaceParams(3, 20, varphi=[0.01, 0.0, 0.0, 0.0, 0.0, 0.0])


# ---------------------------------------------------------------- assembled surfaces

@pytest.fixture(scope="module")
def k3(initial_surfaces):
    return initial_surfaces(3, 20)


def test_initial_surface_topology(k3):
    xi, mesh, _ = k3
    assert mesh.boundary_components() == 60
    assert mesh.genus() == 0
    assert mesh.euler_characteristic() == 2 - 60
    assert mesh.is_manifold() and mesh.orientation_consistent()


def test_initial_surface_sphericity_and_symmetry(k3):
    xi, mesh, _ = k3
    r = np.linalg.norm(mesh.vertices[mesh.boundary], axis=1)
    assert np.max(np.abs(r - 1)) < 1e-8
    assert equivariance_residual(mesh.vertices, xi.m) < 1e-10


def test_phi_tilde_order_tau():
    Cs = []
    for k, m in ((3, 20), (3, 40), (5, 40), (5, 80)):
        lay = plan_initial_surface(InitialSurfaceParams(k, m))
        Cs.append(lay.phi_plus_phi_tilde() / lay.tau)
        assert lay.match_residual < 1e-10
    # measured C ~ 2.6-2.8 with no growth in m
    assert max(Cs) < 3.0
    assert Cs[1] / Cs[0] < 1.1 and Cs[3] / Cs[2] < 1.1


def test_pivot_independent_of_wing_angle():
    lay = plan_initial_surface(InitialSurfaceParams(3, 20))
    P = lay.pieces[0]
    before = {w: P.pivot(w).copy() for w in (WING_MINUS, WING_PLUS)}
    P.params = replace(P.params, phi_minus=P.params.phi_minus + 1e-3,
                       phi_plus=P.params.phi_plus - 2e-3)
    for w in (WING_MINUS, WING_PLUS):
        assert np.array_equal(before[w], P.pivot(w))


def test_fitted_annuli_through_pivots():
    lay = plan_initial_surface(InitialSurfaceParams(5, 40))
    for j, ann in enumerate(lay.annuli):
        assert np.max(np.abs(ann.point(ann.u_top) - lay.pieces[j].pivot(WING_PLUS))) < 1e-10
        assert np.max(np.abs(ann.point(ann.u_bottom) - lay.pieces[j + 1].pivot(WING_MINUS))) < 1e-10


def test_trimmed_annuli_graph_bounds(k3):
    xi, mesh, _ = k3
    lay = plan_initial_surface(xi)
    R = np.hypot(mesh.vertices[:, 0], mesh.vertices[:, 2])
    Y = mesh.vertices[:, 1]
    for code, name in enumerate(mesh.region_names):
        m_ = re.match(r"annulus(\d+)$", name)
        if not m_:
            continue
        far = (mesh.region == code) & (mesh.s >= 1.0)
        ann = lay.annuli[int(m_.group(1)) - 1]
        d = np.abs(ann.signed_distance(np.stack([R[far], Y[far]], 1)))
        assert d.max() <= xi.tau ** 3


def test_fitted_annuli_converge_to_configuration():
    # distance of A' from the exact configuration annulus shrinks at least like tau
    gaps = []
    for m in (20, 40, 80):
        lay = plan_initial_surface(InitialSurfaceParams(3, m))
        arc, ann = lay.config.arcs[0], lay.annuli[0]
        RY = ann.point(np.linspace(ann.u_bottom, ann.u_top, 400))
        gaps.append(np.max(np.abs(RY[:, 0] - catenary_x(arc.params, RY[:, 1]))))
    orders = np.log2(np.array(gaps[:-1]) / np.array(gaps[1:]))
    assert np.all(orders > 0.9)


def test_export_round_trip(k3, tmp_path):
    xi, mesh, _ = k3
    path = tmp_path / "m.obj"
    export_obj(mesh, path)
    V, T, groups = import_obj(path)
    assert np.array_equal(V, mesh.vertices)
    assert np.array_equal(np.sort(T, axis=0), np.sort(mesh.triangles, axis=0))
    desing = [g for g in groups if g.startswith("desing")]
    rest = [g for g in groups if g.startswith(("annulus", "disc"))]
    assert len(desing) == xi.k and len(rest) == xi.k + 1 and len(groups) == 2 * xi.k + 1
    back = load_mesh(path)
    assert np.array_equal(back.boundary, mesh.boundary)
    assert np.array_equal(back.region, mesh.region)
    assert np.array_equal(back.s, mesh.s) and np.array_equal(back.normals, mesh.normals)
    assert back.meta["k"] == 3


def test_export_empty_mesh(tmp_path):
    empty = Mesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=int), np.zeros(0), ["core"])
    path = tmp_path / "e.obj"
    with pytest.raises(ValidationError):
        export_obj(empty, path)
    assert not path.exists()
