import numpy as np
import pytest

from tanfem import shapes
from tanfem.errors import DimensionMismatch
from tanfem.fields import QProxyField, TensorField
from tanfem.meshio import export_vtk


def _parse_vtk_points(path, n):
    with open(path) as fh:
        lines = [ln.strip() for ln in fh]
    i = next(k for k, ln in enumerate(lines) if ln.startswith("POINTS"))
    pts = [list(map(float, lines[i + 1 + j].split())) for j in range(n)]
    return np.array(pts), lines


def test_vtk_point_roundtrip(tmp_path):
    m = shapes.icosphere(2)
    path = tmp_path / "m.vtk"
    export_vtk(m, {}, path)
    pts, lines = _parse_vtk_points(path, m.n_vertices)
    assert lines[0] == "# vtk DataFile Version 3.0"
    assert "DATASET UNSTRUCTURED_GRID" in lines
    rel = np.abs(pts - m.vertices).max() / np.abs(m.vertices).max()
    assert rel < 1e-12


def test_vtk_scalar_block(tmp_path):
    m = shapes.icosphere(1)
    s = TensorField(0, np.arange(m.n_vertices, dtype=float))
    path = tmp_path / "s.vtk"
    export_vtk(m, {"height": s}, path)
    text = path.read_text()
    assert "SCALARS height double 1" in text
    block = text.split("LOOKUP_TABLE default\n")[1].strip().splitlines()
    assert len(block) == m.n_vertices


def test_vtk_vector_block(tmp_path):
    m = shapes.icosphere(1)
    v = TensorField(1, np.ones((m.n_vertices, 3)))
    path = tmp_path / "v.vtk"
    export_vtk(m, {"field": v}, path)
    text = path.read_text()
    assert "VECTORS field double" in text
    block = text.split("VECTORS field double\n")[1].strip().splitlines()
    assert len(block) == m.n_vertices
    assert all(len(ln.split()) == 3 for ln in block)


def test_vtk_tensor_block_symmetric_traceless(tmp_path):
    m = shapes.icosphere(1)
    rngv = np.random.default_rng(0).uniform(-1, 1, size=(m.n_vertices, 5))
    q = QProxyField(rngv)
    path = tmp_path / "q.vtk"
    export_vtk(m, {"q": q}, path)
    text = path.read_text()
    assert "TENSORS q double" in text
    rows = text.split("TENSORS q double\n")[1].strip().splitlines()
    mats = []
    cur = []
    for ln in rows:
        if not ln.strip():
            continue
        cur.append([float(x) for x in ln.split()])
        if len(cur) == 3:
            mats.append(np.array(cur))
            cur = []
    assert len(mats) == m.n_vertices
    for mat in mats[:10]:
        assert np.abs(mat - mat.T).max() < 1e-14
        assert abs(np.trace(mat)) < 1e-14


def test_vtk_misaligned_field_raises(tmp_path):
    m = shapes.icosphere(1)
    bad = TensorField(0, np.zeros(3))
    with pytest.raises(DimensionMismatch):
        export_vtk(m, {"x": bad}, tmp_path / "x.vtk")
