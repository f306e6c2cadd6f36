import numpy as np
import pytest

from tanfem import shapes
from tanfem.errors import DegenerateElement, ParseError, TopologyError
from tanfem.mesh import RefinementSpec, SurfaceMesh, refine
from tanfem.meshio import load_mesh, load_off, write_off
from tanfem.surfaces import sphere


def test_octahedron_counts_and_chi():
    m = shapes.octahedron()
    assert (m.n_vertices, m.n_triangles) == (6, 8)
    assert m.euler_characteristic() == 2
    assert m.is_closed


def test_icosphere_level3_counts():
    m = shapes.icosphere(3)
    assert m.n_vertices == 642
    assert m.n_triangles == 1280
    assert m.n_edges == 1920
    assert m.euler_characteristic() == 2


def test_torus_and_disk_chi():
    assert shapes.torus_mesh(16, 16).euler_characteristic() == 0
    d = shapes.disk_mesh(4, 12)
    assert d.euler_characteristic() == 1
    assert len(d.boundary_edges) == 12


def test_refine_octahedron_once():
    m = refine(shapes.octahedron(), RefinementSpec(1))
    assert m.n_vertices == 18
    assert m.n_triangles == 32


def test_refine_projects_to_sphere():
    m = refine(shapes.octahedron(), RefinementSpec(3, projection=sphere(1.0)))
    norms = np.linalg.norm(m.vertices, axis=1)
    assert np.abs(norms - 1.0).max() < 1e-12


def test_refine_preserves_chi_and_boundary():
    m = shapes.icosahedron()
    for lvl in range(3):
        r = refine(m, RefinementSpec(lvl))
        assert r.euler_characteristic() == 2
    d = shapes.disk_mesh(3, 9)
    r = refine(d, RefinementSpec(1))
    assert r.euler_characteristic() == 1
    assert len(r.boundary_edges) == 2 * len(d.boundary_edges)


def test_vertex_growth_is_v_plus_e():
    m = shapes.icosphere(2)
    r = refine(m, RefinementSpec(1))
    assert r.n_vertices == m.n_vertices + m.n_edges


def test_nonmanifold_edge_rejected():
    v = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1], [0, 0, -1]],
                 dtype=float)
    t = np.array([[0, 1, 2], [0, 1, 3], [0, 1, 4]])
    with pytest.raises(TopologyError):
        SurfaceMesh(v, t)


def test_degenerate_triangle_rejected():
    m = shapes.octahedron()
    v = np.vstack([m.vertices, m.vertices[0] + 1e-15])
    t = np.vstack([m.triangles, [0, 1, 6]])
    with pytest.raises(DegenerateElement):
        SurfaceMesh(v, t)


def test_repeated_vertex_rejected():
    with pytest.raises(TopologyError):
        SurfaceMesh(np.eye(3), [[0, 0, 1]])


def test_orientation_repair_and_outwardness():
    m = shapes.icosphere(1)
    t = m.triangles.copy()
    flip = np.arange(len(t)) % 3 == 0
    t[flip] = t[flip][:, [0, 2, 1]]
    repaired = SurfaceMesh(m.vertices, t)
    assert repaired.signed_volume() > 0
    de = SurfaceMesh._directed_edges(repaired.triangles)
    _, counts = np.unique(de, axis=0, return_counts=True)
    assert counts.max() == 1


def test_inward_orientation_is_flipped():
    m = shapes.octahedron()
    inward = SurfaceMesh(m.vertices, m.triangles[:, [0, 2, 1]])
    assert inward.signed_volume() > 0


def test_off_roundtrip(tmp_path):
    m = shapes.icosphere(2)
    path = tmp_path / "ico.off"
    write_off(m, path)
    m2 = load_mesh(str(path))
    assert np.abs(m2.vertices - m.vertices).max() < 1e-12
    assert m2.euler_characteristic() == 2


def test_off_nonmanifold_raises(tmp_path):
    path = tmp_path / "bad.off"
    path.write_text("OFF\n5 3 0\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n0 0 -1\n"
                    "3 0 1 2\n3 0 1 3\n3 0 1 4\n")
    with pytest.raises(TopologyError):
        load_mesh(str(path))


def test_off_malformed_raises(tmp_path):
    path = tmp_path / "bad.off"
    path.write_text("OFF\n2 1 0\n0 0 0\n")
    with pytest.raises(ParseError):
        load_off(str(path))


def test_obj_loader(tmp_path):
    m = shapes.octahedron()
    path = tmp_path / "oct.obj"
    lines = [f"v {p[0]} {p[1]} {p[2]}" for p in m.vertices]
    lines += [f"f {t[0]+1} {t[1]+1} {t[2]+1}" for t in m.triangles]
    path.write_text("\n".join(lines) + "\n")
    m2 = load_mesh(str(path))
    assert m2.n_vertices == 6 and m2.n_triangles == 8
    assert m2.euler_characteristic() == 2


def test_obj_quad_triangulated(tmp_path):
    path = tmp_path / "quad.obj"
    path.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
    m = load_mesh(str(path))
    assert m.n_triangles == 2


def test_bundled_blob_mesh():
    import importlib.resources as resources
    with resources.as_file(resources.files("tanfem") / "data/blob.off") as p:
        m = load_mesh(str(p))
    assert m.is_closed
    assert m.euler_characteristic() == 2


def test_ordered_ring_closed():
    m = shapes.icosphere(1)
    ring, closed = m.ordered_ring(0)
    assert closed
    assert len(ring) in (5, 6)
