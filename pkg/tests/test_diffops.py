import numpy as np
import pytest

from oracles import chart_covariant_gradient
from tanfem import shapes
from tanfem.diffops import (AmbientField, build_levi_civita, cov_grad,
                            cov_grad_q, divergence, manufactured_rhs,
                            rot_full, rot_k, rot_scalar, with_normal_part)
from tanfem.errors import BadContractionIndex, NotQTensor, UnsupportedDegree
from tanfem.fields import TensorField
from tanfem.geometry import analytic_geometry, discrete_geometry
from tanfem.surfaces import random_surface_points, unit_normal


def _pstar(surface):
    return rot_scalar(lambda x, y, z: x * y * z, surface)


def _qstar(surface):
    pstar = _pstar(surface)

    def qfn(x, y, z):
        p = pstar.fn(x, y, z)
        nu = unit_normal(surface, x, y, z)
        p2 = p[0] * p[0] + p[1] * p[1] + p[2] * p[2]
        return [[p[i] * p[j] - 0.5 * p2 * ((1.0 if i == j else 0.0)
                                           - nu[i] * nu[j])
                 for j in range(3)] for i in range(3)]

    return AmbientField(2, qfn)


# -- exact identities on the analytic pipeline ----------------------------------

def test_grad_of_constant_scalar_vanishes(sphere_geometry_3, unit_sphere):
    s = AmbientField(0, lambda x, y, z: 0.0 * x + 4.2)
    out = cov_grad(s, sphere_geometry_3)
    assert np.abs(out.values).max() < 1e-14


def test_grad_scalar_height_at_pole(unit_sphere):
    g = analytic_geometry(unit_sphere, np.array([[0.0, 0.0, 1.0]]))
    s = AmbientField(0, lambda x, y, z: z)
    out = cov_grad(s, g)
    assert np.abs(out.values).max() < 1e-14


def test_grad_of_normal_field_vanishes(sphere_geometry_3, unit_sphere):
    nu_field = AmbientField(1, lambda x, y, z: unit_normal(unit_sphere, x, y, z))
    out = cov_grad(nu_field, sphere_geometry_3)
    assert np.abs(out.values).max() < 1e-12


def test_vector_gradient_matches_chart_oracle(bench_ellipsoid):
    pts = random_surface_points(bench_ellipsoid, 20, seed=42)
    g = analytic_geometry(bench_ellipsoid, pts)
    pstar = _pstar(bench_ellipsoid)
    ours = cov_grad(pstar, g).values

    def p_surface(points):
        return pstar.sample(points).values

    for i, x0 in enumerate(pts):
        oracle = chart_covariant_gradient(bench_ellipsoid, p_surface, 1, x0)
        assert np.abs(oracle - ours[i]).max() < 1e-6


def test_q_gradient_matches_chart_oracle(bench_ellipsoid):
    pts = random_surface_points(bench_ellipsoid, 20, seed=43)
    g = analytic_geometry(bench_ellipsoid, pts)
    qstar = _qstar(bench_ellipsoid)
    ours = cov_grad_q(qstar, g).values

    def q_rep_surface(points):
        m = qstar.sample(points).values
        x, y, z = points[:, 0], points[:, 1], points[:, 2]
        nu = np.stack([np.asarray(c) for c in
                       unit_normal(bench_ellipsoid, x, y, z)], axis=1)
        pi = np.eye(3)[None] - np.einsum("vi,vj->vij", nu, nu)
        proj = np.einsum("vik,vjl,vkl->vij", pi, pi, m)
        nqn = np.einsum("vi,vij,vj->v", nu, m, nu)
        return proj + 0.5 * nqn[:, None, None] * pi

    for i, x0 in enumerate(pts):
        oracle = chart_covariant_gradient(bench_ellipsoid, q_rep_surface, 2, x0)
        assert np.abs(oracle - ours[i]).max() < 1e-6


def test_extension_invariance(bench_ellipsoid, rng):
    pts = random_surface_points(bench_ellipsoid, 100, seed=7)
    g = analytic_geometry(bench_ellipsoid, pts)
    pstar = _pstar(bench_ellipsoid)
    base = cov_grad(pstar, g).values
    coeffs = rng.uniform(-1, 1, size=(5, 4))
    for c in coeffs:
        shifted = with_normal_part(
            pstar, lambda x, y, z, c=c: c[0] * x + c[1] * y * z + c[2] * x * x
            + c[3], bench_ellipsoid)
        out = cov_grad(shifted, g).values
        assert np.abs(out - base).max() < 1e-12


def test_outputs_tangential(bench_ellipsoid):
    pts = random_surface_points(bench_ellipsoid, 50, seed=11)
    g = analytic_geometry(bench_ellipsoid, pts)
    nu = g.vertex_normals
    gp = cov_grad(_pstar(bench_ellipsoid), g).values
    assert np.abs(np.einsum("vi,vij->vj", nu, gp)).max() < 1e-12
    assert np.abs(np.einsum("vj,vij->vi", nu, gp)).max() < 1e-12
    gq = cov_grad_q(_qstar(bench_ellipsoid), g).values
    for slot in range(3):
        contracted = np.einsum("vi,vi...->v...",
                               nu, np.moveaxis(gq, slot + 1, 1))
        assert np.abs(contracted).max() < 1e-11


def test_q_gradient_annihilates_zero_representative(bench_ellipsoid):
    pts = random_surface_points(bench_ellipsoid, 30, seed=5)
    g = analytic_geometry(bench_ellipsoid, pts)

    def qfn(x, y, z):
        nu = unit_normal(bench_ellipsoid, x, y, z)
        return [[nu[i] * nu[j] - 0.5 * ((1.0 if i == j else 0.0)
                                        - nu[i] * nu[j])
                 for j in range(3)] for i in range(3)]

    out = cov_grad_q(AmbientField(2, qfn), g)
    assert np.abs(out.values).max() < 1e-12


def test_q_gradient_rejects_non_q_input(sphere_geometry_3):
    bad = AmbientField(2, lambda x, y, z: [[x, 0.0 * x, 0.0 * x],
                                           [0.0 * x, 0.0 * x, 0.0 * x],
                                           [0.0 * x, 0.0 * x, 0.0 * x]])
    with pytest.raises(NotQTensor):
        cov_grad_q(bad, sphere_geometry_3)


def test_divergence_of_projected_ez(unit_sphere, sphere_geometry_3):
    g = sphere_geometry_3
    pz = AmbientField(1, lambda x, y, z: [-(x * z), -(y * z), 1.0 - z * z])
    div = divergence(pz, g)
    z = g.vertex_points[:, 2]
    assert np.abs(div.values + 2.0 * z).max() < 1e-12


def test_divergence_constant_field_flat():
    m = shapes.square_patch(4)
    g = discrete_geometry(m)
    f = TensorField(1, np.tile([0.3, -0.7, 0.0], (m.n_vertices, 1)))
    out = divergence(f, g)
    assert np.abs(out.values).max() < 1e-12


def test_div_rot_is_zero(unit_sphere, bench_ellipsoid):
    for surface in (unit_sphere, bench_ellipsoid):
        pts = random_surface_points(surface, 40, seed=2)
        g = analytic_geometry(surface, pts)
        rot = rot_scalar(lambda x, y, z: x * y * z, surface)
        out = divergence(rot, g)
        assert np.abs(out.values).max() < 1e-10


def test_rot_of_constant_vanishes(sphere_geometry_3):
    s = AmbientField(0, lambda x, y, z: 0.0 * x + 1.0)
    out = rot_full(s, sphere_geometry_3)
    assert np.abs(out.values).max() < 1e-14


def test_rot_direction_and_magnitude(unit_sphere):
    g = analytic_geometry(unit_sphere, np.array([[1.0, 0.0, 0.0]]))
    out = rot_full(AmbientField(0, lambda x, y, z: z), g)
    assert np.abs(out.values[0] - [0.0, -1.0, 0.0]).max() < 1e-14


def test_rot1_rot_equals_laplacian(unit_sphere):
    pts = random_surface_points(unit_sphere, 30, seed=9)
    g = analytic_geometry(unit_sphere, pts)
    rot = rot_scalar(lambda x, y, z: z, unit_sphere)
    lb = rot_k(rot, 1, g)
    # independent route: div(grad s), and the sphere eigenvalue -2 z
    grad_s = AmbientField(1, lambda x, y, z: _tangential_grad_z(unit_sphere, x, y, z))
    lb2 = divergence(grad_s, g)
    assert np.abs(lb.values - lb2.values).max() < 1e-8
    assert np.abs(lb.values + 2.0 * pts[:, 2]).max() < 1e-10


def _tangential_grad_z(surface, x, y, z):
    nu = unit_normal(surface, x, y, z)
    return [-(nu[2] * nu[0]), -(nu[2] * nu[1]), 1.0 - nu[2] * nu[2]]


def test_rot_k_bad_index(sphere_geometry_3):
    rot = rot_scalar(lambda x, y, z: z, sphere_geometry_3.surface)
    with pytest.raises(BadContractionIndex):
        rot_k(rot, 2, sphere_geometry_3)


def test_levi_civita_norm(sphere_geometry_3):
    e = build_levi_civita(sphere_geometry_3)
    assert np.abs(e.norm_squared() - 2.0).max() < 1e-12
    en = np.einsum("vij,vj->vi", e.vertex_E,
                   sphere_geometry_3.vertex_normals)
    assert np.abs(en).max() < 1e-13


def test_manufactured_rhs_zero_field(sphere_geometry_3):
    zero = AmbientField(1, lambda x, y, z: [0.0 * x, 0.0 * x, 0.0 * x])
    f = manufactured_rhs(zero, sphere_geometry_3)
    assert np.abs(f.values).max() == 0.0


def test_manufactured_rhs_killing_field(unit_sphere, sphere_geometry_3):
    # p* = Rot(z) is a Killing field: -div grad p* = p*, so f = 2 p*
    g = sphere_geometry_3
    pstar = rot_scalar(lambda x, y, z: z, unit_sphere)
    f = manufactured_rhs(pstar, g)
    pv = pstar.sample(g.vertex_points)
    assert np.abs(f.values - 2.0 * pv.values).max() < 1e-12


def test_manufactured_rhs_finite_on_ellipsoid(bench_ellipsoid, ellipsoid_geometry_3):
    f = manufactured_rhs(_pstar(bench_ellipsoid), ellipsoid_geometry_3)
    assert np.all(np.isfinite(f.values))
    fq = manufactured_rhs(_qstar(bench_ellipsoid), ellipsoid_geometry_3)
    vals = fq.values
    assert np.abs(vals - np.transpose(vals, (0, 2, 1))).max() < 1e-10
    assert np.abs(np.einsum("vii->v", vals)).max() < 1e-10


def test_discrete_gradient_first_order(unit_sphere):
    # P1 diagnostics: tangential residual of the discrete gradient is O(h)
    res = []
    for lvl in (3, 4):
        mesh = shapes.icosphere(lvl)
        g = analytic_geometry(unit_sphere, mesh)
        pz = TensorField(1, np.einsum(
            "vij,j->vi", g.vertex_projectors, np.array([0.0, 0.0, 1.0])))
        out = cov_grad(pz, g)
        nu = g.vertex_normals
        res.append(np.abs(np.einsum("vi,vij->vj", nu, out.values)).max())
    assert res[1] < 0.75 * res[0]


def test_unsupported_degrees(sphere_geometry_3):
    s3 = TensorField(3, np.zeros((len(sphere_geometry_3.vertex_normals), 3, 3, 3)))
    with pytest.raises(UnsupportedDegree):
        cov_grad(s3, sphere_geometry_3)
