"""Surface geometry data: normals, projectors, shape operator, curvatures.

Sign conventions, fixed package-wide: outward normal nu, shape operator
B = -sym(Pi (grad nu) Pi), so the unit sphere has H = tr B = -2 and
K = (H^2 - |B|^2)/2 = 1.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateElement
from .surfaces import curvatures, shape_operator

__all__ = ["GeometryData", "analytic_geometry", "discrete_geometry",
           "check_identities", "element_gradients", "QUAD_LAMBDA"]

# 3-point edge-midpoint rule: barycentric coordinates per quadrature point;
# weights are area/3 each.  Exact for quadratic integrands.
QUAD_LAMBDA = np.array([
    [0.0, 0.5, 0.5],
    [0.5, 0.0, 0.5],
    [0.5, 0.5, 0.0],
])

_EYE = np.eye(3)


class GeometryData:
    """Per-vertex normals and per-element projector/shape/curvature data.

    Attributes
    ----------
    source : str
        ``"analytic"`` or ``"discrete"``.
    vertex_normals : (V, 3) ndarray
    elem_normals : (F, 3) ndarray
        Normal used to build the element projector (exact centroid normal
        for analytic data, face normal for discrete data).
    elem_projector, elem_shape : (F, 3, 3) ndarray
    elem_H, elem_K : (F,) ndarray
    surface : AnalyticSurface or None
        Present for analytic data; enables exact pointwise evaluation.
    """

    def __init__(self, mesh, source, vertex_normals, elem_normals=None,
                 elem_shape=None, surface=None, vertex_shape=None):
        self.mesh = mesh
        self.source = source
        self.vertex_normals = vertex_normals
        self.elem_normals = elem_normals
        self.elem_projector = self.elem_shape = None
        self.elem_H = self.elem_K = None
        if elem_normals is not None:
            self.elem_projector = _projectors(elem_normals)
            self.elem_shape = elem_shape
            self.elem_H = np.einsum("eii->e", elem_shape)
            self.elem_K = 0.5 * (self.elem_H**2
                                 - np.einsum("eij,eij->e", elem_shape, elem_shape))
        self.surface = surface
        self.vertex_shape = vertex_shape
        self.vertex_H = self.vertex_K = None
        if vertex_shape is not None:
            self.vertex_H = np.einsum("vii->v", vertex_shape)
            self.vertex_K = 0.5 * (self.vertex_H**2
                                   - np.einsum("vij,vij->v", vertex_shape, vertex_shape))
        self.vertex_points = None   # on-surface evaluation points (analytic)
        self._vertex_proj = None
        self._quad_normals = None

    @property
    def vertex_projectors(self):
        if self._vertex_proj is None:
            self._vertex_proj = _projectors(self.vertex_normals)
        return self._vertex_proj

    def quad_normals(self):
        """P1-interpolated, renormalized vertex normals at the 3 edge midpoints.

        Shape (F, 3 quad points, 3).
        """
        if self._quad_normals is None:
            nv = self.vertex_normals[self.mesh.triangles]     # (F, corner, 3)
            nq = np.einsum("ma,fai->fmi", QUAD_LAMBDA, nv)
            nq /= np.linalg.norm(nq, axis=2, keepdims=True)
            self._quad_normals = nq
        return self._quad_normals

    def centroid_normals(self):
        """Independent normal at element centroids (interpolated vertex normals)."""
        nv = self.vertex_normals[self.mesh.triangles]
        nc = nv.mean(axis=1)
        return nc / np.linalg.norm(nc, axis=1, keepdims=True)


def _projectors(normals):
    return _EYE[None, :, :] - np.einsum("vi,vj->vij", normals, normals)


def element_gradients(mesh):
    """Surface gradients of the P1 hat functions, (F, corner, 3).

    Constant per element and tangent to the element plane:
    grad lambda_a = n_f x (x_c - x_b) / (2 A).
    """
    v = mesh.vertices
    t = mesh.triangles
    nf_raw = mesh.face_normals_raw
    areas2 = np.linalg.norm(nf_raw, axis=1)
    if np.any(areas2 <= 0.0):
        raise DegenerateElement("zero-area triangle in gradient computation")
    nf = nf_raw / areas2[:, None]
    grads = np.empty((len(t), 3, 3))
    for a in range(3):
        b, c = (a + 1) % 3, (a + 2) % 3
        edge = v[t[:, c]] - v[t[:, b]]
        grads[:, a, :] = np.cross(nf, edge) / areas2[:, None]
    return grads


def analytic_geometry(surface, target):
    """Exact geometry of `surface` on a mesh (or bare points).

    For a :class:`SurfaceMesh`, vertex quantities are evaluated at the
    projection of each vertex and element quantities at the projected
    centroid.  For an (N, 3) point array, a vertex-only GeometryData
    (no element data) is returned.
    """
    if not hasattr(target, "triangles"):
        pts = surface.project(np.asarray(target, dtype=float))
        nu, b = _pointwise_shape(surface, pts)
        g = GeometryData(None, "analytic", nu, surface=surface,
                         vertex_shape=b)
        g.vertex_points = pts
        return g

    mesh = target
    pv = surface.project(mesh.vertices)
    nu_v, b_v = _pointwise_shape(surface, pv)
    centroids = mesh.vertices[mesh.triangles].mean(axis=1)
    pc = surface.project(centroids)
    nu_e, b_e = _pointwise_shape(surface, pc)
    g = GeometryData(mesh, "analytic", nu_v, nu_e, b_e,
                     surface=surface, vertex_shape=b_v)
    g.vertex_points = pv
    return g


def _pointwise_shape(surface, pts):
    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    nu, _, b = shape_operator(surface, x, y, z)
    nu = np.stack([np.asarray(c) for c in nu], axis=1)
    bm = np.empty((len(pts), 3, 3))
    for i in range(3):
        for j in range(3):
            bm[:, i, j] = b[i][j]
    return nu, bm


def discrete_geometry(mesh):
    """Geometry estimated from the triangulation alone.

    Vertex normals by angle-weighted averaging of face normals; per-element
    shape operator B = -sym(Pi_f (grad nu_h) Pi_f) with nu_h the P1
    interpolant of the vertex normals and Pi_f from the face normal.
    First-order accurate on smooth surfaces.
    """
    v = mesh.vertices
    t = mesh.triangles
    nf = mesh.face_normals

    nv = np.zeros((mesh.n_vertices, 3))
    for a in range(3):
        b, c = (a + 1) % 3, (a + 2) % 3
        e1 = v[t[:, b]] - v[t[:, a]]
        e2 = v[t[:, c]] - v[t[:, a]]
        cosang = np.einsum("fi,fi->f", e1, e2)
        cosang /= np.linalg.norm(e1, axis=1) * np.linalg.norm(e2, axis=1)
        ang = np.arccos(np.clip(cosang, -1.0, 1.0))
        np.add.at(nv, t[:, a], ang[:, None] * nf)
    norms = np.linalg.norm(nv, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise DegenerateElement("isolated vertex (zero normal)")
    nv /= norms

    grads = element_gradients(mesh)
    jac = np.einsum("fai,faj->fij", nv[t], grads)      # d_j nu_i per element
    pi = _projectors(nf)
    pjp = np.einsum("fik,fkl,flj->fij", pi, jac, pi)
    b_e = -0.5 * (pjp + np.transpose(pjp, (0, 2, 1)))
    return GeometryData(mesh, "discrete", nv, nf, b_e)


@dataclass
class IdentityReport:
    """Max residuals of the shape-operator identities over all elements."""

    cayley_hamilton: float       # |B^2 - H B + K Pi|
    shape_square: float          # | |B|^2 - (H^2 - 2K) |
    tangency: float              # |B Pi - B|
    tol: float
    passed: bool = field(init=False)

    def __post_init__(self):
        self.passed = max(self.cayley_hamilton, self.shape_square,
                          self.tangency) <= self.tol

    def max_residual(self):
        return max(self.cayley_hamilton, self.shape_square, self.tangency)


def check_identities(g, tol):
    """Residuals of B^2 - HB + K Pi = 0, |B|^2 = H^2 - 2K, and B Pi = B.

    The projector is rebuilt from the data source's independent centroid
    normal (exact normal for analytic data, interpolated vertex normals for
    discrete data), so the residuals measure the internal consistency of the
    geometry actually fed to assembly: machine-zero for analytic data, the
    estimator error O(h) for discrete data.
    """
    if g.elem_shape is not None:
        b, h, k = g.elem_shape, g.elem_H, g.elem_K
        nc = g.elem_normals if g.source == "analytic" else g.centroid_normals()
    else:
        b, h, k = g.vertex_shape, g.vertex_H, g.vertex_K
        nc = g.vertex_normals
    pi = _projectors(nc)

    bb = np.einsum("eik,ekj->eij", b, b)
    r1 = bb - h[:, None, None] * b + k[:, None, None] * pi
    r2 = np.einsum("eij,eij->e", b, b) - (h**2 - 2.0 * k)
    r3 = np.einsum("eik,ekj->eij", b, pi) - b
    return IdentityReport(
        cayley_hamilton=float(np.abs(r1).max()),
        shape_square=float(np.abs(r2).max()),
        tangency=float(np.abs(r3).max()),
        tol=tol,
    )
