"""OFF/OBJ readers and a legacy ASCII VTK 3.0 writer."""

import os

import numpy as np

from .errors import DimensionMismatch, ParseError
from .fields import QProxyField, TensorField
from .mesh import SurfaceMesh

__all__ = ["load_mesh", "load_off", "load_obj", "export_vtk", "write_off"]


def load_mesh(path, fmt=None):
    """Load an OFF or OBJ file as a validated, consistently oriented mesh."""
    if fmt is None:
        ext = os.path.splitext(path)[1].lower().lstrip(".")
        fmt = ext
    fmt = fmt.lower()
    if fmt == "off":
        v, f = load_off(path)
    elif fmt == "obj":
        v, f = load_obj(path)
    else:
        raise ParseError(f"unknown mesh format {fmt!r} (expected off or obj)")
    return SurfaceMesh(v, f)


def _triangulate(face, path):
    if len(face) < 3:
        raise ParseError(f"{path}: face with fewer than 3 vertices")
    return [(face[0], face[k], face[k + 1]) for k in range(1, len(face) - 1)]


def load_off(path):
    """Parse an ASCII OFF file; polygonal faces are fan-triangulated."""
    with open(path, "r", encoding="ascii", errors="replace") as fh:
        tokens = []
        for line in fh:
            line = line.split("#", 1)[0]
            tokens.extend(line.split())
    if not tokens or tokens[0] != "OFF":
        raise ParseError(f"{path}: missing OFF header")
    try:
        nv, nf = int(tokens[1]), int(tokens[2])
        pos = 4  # skip edge count
        verts = np.array(tokens[pos:pos + 3 * nv], dtype=float).reshape(nv, 3)
        pos += 3 * nv
        faces = []
        for _ in range(nf):
            k = int(tokens[pos])
            face = [int(tok) for tok in tokens[pos + 1:pos + 1 + k]]
            pos += 1 + k
            faces.extend(_triangulate(face, path))
    except (ValueError, IndexError) as exc:
        raise ParseError(f"{path}: malformed OFF file ({exc})") from exc
    return verts, np.array(faces, dtype=np.int64)


def load_obj(path):
    """Parse an ASCII OBJ file (positions and faces; normals/uvs ignored)."""
    verts, faces = [], []
    try:
        with open(path, "r", encoding="ascii", errors="replace") as fh:
            for lineno, line in enumerate(fh, 1):
                parts = line.split("#", 1)[0].split()
                if not parts:
                    continue
                if parts[0] == "v":
                    if len(parts) < 4:
                        raise ParseError(f"{path}:{lineno}: short vertex line")
                    verts.append([float(parts[1]), float(parts[2]), float(parts[3])])
                elif parts[0] == "f":
                    idx = []
                    for tok in parts[1:]:
                        ref = tok.split("/", 1)[0]
                        i = int(ref)
                        idx.append(i - 1 if i > 0 else len(verts) + i)
                    faces.extend(_triangulate(idx, path))
    except ValueError as exc:
        raise ParseError(f"{path}: malformed OBJ file ({exc})") from exc
    if not verts:
        raise ParseError(f"{path}: no vertices found")
    return np.array(verts, dtype=float), np.array(faces, dtype=np.int64)


def write_off(mesh, path):
    with open(path, "w", encoding="ascii") as fh:
        fh.write("OFF\n")
        fh.write(f"{mesh.n_vertices} {mesh.n_triangles} {mesh.n_edges}\n")
        for p in mesh.vertices:
            fh.write(f"{p[0]:.17g} {p[1]:.17g} {p[2]:.17g}\n")
        for t in mesh.triangles:
            fh.write(f"3 {t[0]} {t[1]} {t[2]}\n")


def _fmt(x):
    return f"{x:.16e}"


def export_vtk(mesh, fields, path):
    """Write mesh and vertex fields as legacy ASCII VTK (version 3.0).

    `fields` maps names to :class:`TensorField` (degree 0, 1, or 2) or
    :class:`QProxyField` values; degree 0 becomes a SCALARS block, degree 1
    VECTORS, degree 2 (and proxies, expanded) TENSORS.
    """
    lines = [
        "# vtk DataFile Version 3.0",
        "tanfem output",
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {mesh.n_vertices} double",
    ]
    for p in mesh.vertices:
        lines.append(f"{_fmt(p[0])} {_fmt(p[1])} {_fmt(p[2])}")
    nf = mesh.n_triangles
    lines.append(f"CELLS {nf} {4 * nf}")
    for t in mesh.triangles:
        lines.append(f"3 {t[0]} {t[1]} {t[2]}")
    lines.append(f"CELL_TYPES {nf}")
    lines.extend(["5"] * nf)

    if fields:
        lines.append(f"POINT_DATA {mesh.n_vertices}")
    for name, field in (fields or {}).items():
        if isinstance(field, QProxyField):
            vals = field.matrices()
            degree = 2
        elif isinstance(field, TensorField):
            vals = field.values
            degree = field.degree
        else:
            raise DimensionMismatch(f"field {name!r} has unsupported type")
        if len(vals) != mesh.n_vertices:
            raise DimensionMismatch(f"field {name!r} not vertex-aligned")
        if degree == 0:
            lines.append(f"SCALARS {name} double 1")
            lines.append("LOOKUP_TABLE default")
            lines.extend(_fmt(v) for v in vals)
        elif degree == 1:
            lines.append(f"VECTORS {name} double")
            lines.extend(f"{_fmt(v[0])} {_fmt(v[1])} {_fmt(v[2])}" for v in vals)
        elif degree == 2:
            lines.append(f"TENSORS {name} double")
            for m in vals:
                for row in m:
                    lines.append(f"{_fmt(row[0])} {_fmt(row[1])} {_fmt(row[2])}")
                lines.append("")
        else:
            raise DimensionMismatch(f"cannot export degree-{degree} field {name!r}")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")
