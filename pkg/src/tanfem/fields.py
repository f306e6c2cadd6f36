"""Vertex-based Cartesian tensor fields and the 5-component Q proxy."""

import numpy as np

from .errors import DimensionMismatch, NotQTensor
from .geometry import QUAD_LAMBDA

__all__ = ["TensorField", "QProxyField", "Q_BASIS", "project_tangential",
           "q_pack", "q_unpack", "q_surface_extension_trace", "inner_product"]

# Basis of symmetric traceless 3x3 matrices matching the proxy slots
# (q1..q5): entry (2,2) carries -q1-q4.
Q_BASIS = np.zeros((5, 3, 3))
Q_BASIS[0, 0, 0] = 1.0
Q_BASIS[0, 2, 2] = -1.0
Q_BASIS[1, 0, 1] = Q_BASIS[1, 1, 0] = 1.0
Q_BASIS[2, 0, 2] = Q_BASIS[2, 2, 0] = 1.0
Q_BASIS[3, 1, 1] = 1.0
Q_BASIS[3, 2, 2] = -1.0
Q_BASIS[4, 1, 2] = Q_BASIS[4, 2, 1] = 1.0


class TensorField:
    """Degree-d Cartesian tensor coefficients on mesh vertices.

    Values are stored with shape ``(V,) + (3,)*degree``.
    """

    def __init__(self, degree, values):
        if degree not in (0, 1, 2, 3):
            raise DimensionMismatch(f"unsupported tensor degree {degree}")
        v = np.asarray(values, dtype=np.float64)
        if v.shape[1:] != (3,) * degree:
            raise DimensionMismatch(
                f"degree-{degree} field needs shape (V{', 3' * degree}), got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise DimensionMismatch("non-finite tensor coefficients")
        self.degree = degree
        self.values = v

    @classmethod
    def zeros(cls, degree, n_vertices):
        return cls(degree, np.zeros((n_vertices,) + (3,) * degree))

    @property
    def n_vertices(self):
        return self.values.shape[0]

    def copy(self):
        return TensorField(self.degree, self.values.copy())

    def flat(self):
        """Component-major block vector (all first components, then second, ...)."""
        n = self.n_vertices
        return self.values.reshape(n, -1).T.reshape(-1).copy()

    @classmethod
    def from_flat(cls, degree, vec, n_vertices):
        comps = 3 ** degree
        vals = np.asarray(vec).reshape(comps, n_vertices).T
        return cls(degree, vals.reshape((n_vertices,) + (3,) * degree))

    def __repr__(self):
        return f"TensorField(degree={self.degree}, V={self.n_vertices})"


class QProxyField:
    """Per-vertex 5-vector encoding a symmetric traceless 3x3 matrix."""

    def __init__(self, values):
        v = np.asarray(values, dtype=np.float64)
        if v.ndim != 2 or v.shape[1] != 5:
            raise DimensionMismatch(f"proxy field needs shape (V, 5), got {v.shape}")
        self.values = v

    @classmethod
    def zeros(cls, n_vertices):
        return cls(np.zeros((n_vertices, 5)))

    @property
    def n_vertices(self):
        return self.values.shape[0]

    def matrices(self):
        """Expand to (V, 3, 3) symmetric traceless matrices."""
        return np.einsum("vc,cij->vij", self.values, Q_BASIS)

    def flat(self):
        return self.values.T.reshape(-1).copy()

    @classmethod
    def from_flat(cls, vec, n_vertices):
        return cls(np.asarray(vec).reshape(5, n_vertices).T)

    def copy(self):
        return QProxyField(self.values.copy())

    def __repr__(self):
        return f"QProxyField(V={self.n_vertices})"


def project_tangential(field, g):
    """Apply the tangential projector to every slot, per vertex."""
    pv = g.vertex_projectors
    v = field.values
    if len(v) != len(pv):
        raise DimensionMismatch("field and geometry have different vertex counts")
    if field.degree == 0:
        return field.copy()
    if field.degree == 1:
        return TensorField(1, np.einsum("vij,vj->vi", pv, v))
    if field.degree == 2:
        return TensorField(2, np.einsum("vik,vjl,vkl->vij", pv, pv, v))
    return TensorField(3, np.einsum("vil,vjm,vkn,vlmn->vijk", pv, pv, pv, v))


def q_pack(field, sym_tol=1e-10):
    """Pack a symmetric, ambient-traceless degree-2 field into proxy form."""
    if field.degree != 2:
        raise NotQTensor("q_pack expects a degree-2 field")
    m = field.values
    asym = np.abs(m - np.transpose(m, (0, 2, 1))).max(initial=0.0)
    tr = np.abs(np.einsum("vii->v", m)).max(initial=0.0)
    if asym > sym_tol or tr > sym_tol:
        raise NotQTensor(
            f"not symmetric traceless: asymmetry {asym:.2e}, trace {tr:.2e}")
    out = np.stack([m[:, 0, 0], m[:, 0, 1], m[:, 0, 2],
                    m[:, 1, 1], m[:, 1, 2]], axis=1)
    return QProxyField(out)


def q_unpack(proxy):
    """Expand a proxy field to its degree-2 tensor field."""
    return TensorField(2, proxy.matrices())


def q_surface_extension_trace(qhat, g):
    """Surface trace and Q-space representative of an ambient 2-tensor.

    Returns ``(trace, q)`` where per vertex ``trace = tr(qhat) - nu.qhat.nu``
    (the trace of the tangential projection w.r.t. the surface metric) and
    ``q = Pi[qhat] + (nu.qhat.nu)/2 * Pi`` is the orthogonal representative
    in the space of tangential surface Q-tensors.
    """
    if qhat.degree != 2:
        raise DimensionMismatch("surface trace needs a degree-2 field")
    m = qhat.values
    nu = g.vertex_normals
    pv = g.vertex_projectors
    nqn = np.einsum("vi,vij,vj->v", nu, m, nu)
    trace = np.einsum("vii->v", m) - nqn
    proj = np.einsum("vik,vjl,vkl->vij", pv, pv, m)
    rep = proj + 0.5 * nqn[:, None, None] * pv
    return TensorField(0, trace), TensorField(2, rep)


def interpolate_at_quad(field, mesh):
    """P1 interpolation of vertex values at the 3 edge midpoints per element."""
    vals = field.values[mesh.triangles]          # (F, corner, comps...)
    return np.einsum("ma,fa...->fm...", QUAD_LAMBDA, vals)


def inner_product(a, b, g, mesh):
    """Integral of the projected full contraction, int_M (Pi[a], Pi[b]) dM.

    Element-midpoint quadrature; the projector at each quadrature point is
    built from the interpolated (renormalized) vertex normal, so normal
    fields are annihilated exactly.
    """
    if a.degree != b.degree:
        raise DimensionMismatch("inner product needs equal degrees")
    if a.n_vertices != mesh.n_vertices or b.n_vertices != mesh.n_vertices:
        raise DimensionMismatch("fields not aligned with mesh")
    aq = interpolate_at_quad(a, mesh)
    bq = interpolate_at_quad(b, mesh)
    nq = g.quad_normals()
    pi = np.eye(3)[None, None] - np.einsum("fmi,fmj->fmij", nq, nq)
    d = a.degree
    if d == 0:
        integrand = aq * bq
    elif d == 1:
        integrand = np.einsum("fmi,fmij,fmj->fm", aq, pi, bq)
    elif d == 2:
        integrand = np.einsum("fmij,fmik,fmjl,fmkl->fm", aq, pi, pi, bq)
    else:
        proj_b = np.einsum("fmia,fmjb,fmkc,fmabc->fmijk", pi, pi, pi, bq)
        integrand = np.einsum("fmijk,fmijk->fm", aq, proj_b)
    w = mesh.face_areas / 3.0
    return float(np.einsum("f,fm->", w, integrand))
