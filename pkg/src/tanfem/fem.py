"""Componentwise P1 block assembly for vector and Q-tensor Helmholtz forms.

Unknowns are stored component-major: the block vector holds all first
components, then all second components, etc.  Geometry enters element-wise
(constant projector/shape operator per element, interpolated renormalized
vertex normals at the three edge-midpoint quadrature points).
"""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.sparse as sp

from .errors import DegenerateElement, DimensionMismatch, NoBoundary, NotQTensor
from .fields import Q_BASIS, QProxyField, TensorField
from .geometry import QUAD_LAMBDA, element_gradients

__all__ = ["OperatorVariant", "BlockSystem", "assemble_vector_helmholtz",
           "assemble_qtensor_helmholtz", "assemble_boundary_terms",
           "qtensor_operator_parts", "QBulkAssembler"]


class OperatorVariant(Enum):
    """Exact operator or one of the cheaper approximations.

    ``APPROX_DERIVATIVE`` replaces the covariant gradient by the plain
    projected ambient gradient (drops every curvature coupling in the
    stiffness); ``APPROX_INNER_PRODUCT`` replaces the projected mass and
    load pairings by the plain Cartesian contraction.
    """

    EXACT = "exact"
    APPROX_INNER_PRODUCT = "approx_ip"
    APPROX_DERIVATIVE = "approx_deriv"


@dataclass
class BlockSystem:
    """Sparse block system for c coupled scalar components."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    n_components: int
    n_vertices: int
    component_map: tuple

    def symmetry_error(self):
        d = self.matrix - self.matrix.T
        denom = max(abs(self.matrix).max(), 1e-300)
        return float(abs(d).max() / denom)

    def dump_matrix_market(self, path):
        from scipy.io import mmwrite
        mmwrite(path, self.matrix.tocoo())

    @property
    def size(self):
        return self.n_components * self.n_vertices


def _quad_weights(mesh):
    areas = mesh.face_areas
    if np.any(areas <= 0.0):
        raise DegenerateElement("zero-area element during assembly")
    return areas / 3.0


def _interp_quad(vertex_values, mesh):
    return np.einsum("ma,fa...->fm...", QUAD_LAMBDA, vertex_values[mesh.triangles])


def _scatter(local, mesh, ncomp):
    """COO triplets from local blocks of shape (F, c, 3, c, 3)."""
    nv = mesh.n_vertices
    tri = mesh.triangles
    nf = len(tri)
    comp = np.arange(ncomp)
    rows = (comp[None, :, None, None, None] * nv
            + tri[:, None, :, None, None]).astype(np.int64)
    cols = (comp[None, None, None, :, None] * nv
            + tri[:, None, None, None, :]).astype(np.int64)
    rows = np.broadcast_to(rows, local.shape).ravel()
    cols = np.broadcast_to(cols, local.shape).ravel()
    return rows, cols, local.ravel()


def _scatter_vec(local, mesh, ncomp):
    """Accumulate local load blocks (F, c, 3) into a block vector."""
    nv = mesh.n_vertices
    out = np.zeros(ncomp * nv)
    tri = mesh.triangles
    for i in range(ncomp):
        for a in range(3):
            np.add.at(out, i * nv + tri[:, a], local[:, i, a])
    return out


def assemble_vector_helmholtz(mesh, g, omega_t, f, variant=OperatorVariant.EXACT):
    """Block system of the tangential vector Helmholtz problem.

    Stiffness: projected-gradient term, the two shape-operator cross terms,
    and the (H^2-2K) normal-normal term; plus projected mass, the
    omega_t * (nu (x) nu) penalty, and the projected load.
    """
    if omega_t < 0:
        raise DimensionMismatch("penalty weight must be nonnegative")
    if f.degree != 1 or f.n_vertices != mesh.n_vertices:
        raise DimensionMismatch("load must be a vertex-aligned degree-1 field")
    exact = variant is not OperatorVariant.APPROX_DERIVATIVE
    proj_ip = variant is not OperatorVariant.APPROX_INNER_PRODUCT

    w = _quad_weights(mesh)
    grads = element_gradients(mesh)
    pi = g.elem_projector
    b = g.elem_shape
    hm2k = g.elem_H**2 - 2.0 * g.elem_K
    nq = g.quad_normals()
    lam = QUAD_LAMBDA

    local = np.zeros((mesh.n_triangles, 3, 3, 3, 3))

    s1 = np.einsum("fai,fij,fbj->fab", grads, pi, grads)
    local += np.einsum("fab,fic,f->fiacb", s1, pi, 3.0 * w)

    mass_ab = np.einsum("f,ma,mb->fab", w, lam, lam)
    if proj_ip:
        local += np.einsum("fab,fic->fiacb", mass_ab, pi)
    else:
        local += np.einsum("fab,ic->fiacb", mass_ab, np.eye(3))

    nn = np.einsum("f,ma,mb,fmi,fmc->fiacb", w, lam, lam, nq, nq)
    pen_coeff = omega_t + (hm2k if exact else 0.0)
    if np.ndim(pen_coeff) == 0:
        local += pen_coeff * nn
    else:
        local += pen_coeff[:, None, None, None, None] * nn

    if exact:
        u = np.einsum("fij,fbj->fbi", b, grads)
        r = np.einsum("f,ma,fmi->fai", w, lam, nq)
        local += np.einsum("fai,fbc->fiacb", r, u)
        local += np.einsum("fai,fbc->fiacb", u, r)

    fq = _interp_quad(f.values, mesh)
    if proj_ip:
        load = np.einsum("f,ma,fij,fmj->fia", w, lam, pi, fq)
    else:
        load = np.einsum("f,ma,fmi->fia", w, lam, fq)

    rows, cols, data = _scatter(local, mesh, 3)
    mat = sp.coo_matrix((data, (rows, cols)),
                        shape=(3 * mesh.n_vertices,) * 2).tocsr()
    return BlockSystem(mat, _scatter_vec(load, mesh, 3), 3, mesh.n_vertices,
                       ("p1", "p2", "p3"))


def _q_geom_tables(mesh, g):
    """Shared per-element contractions of the proxy basis with the geometry."""
    pi = g.elem_projector
    nq = g.quad_normals()
    e = Q_BASIS
    pie = np.einsum("fik,ckj->fcij", pi, e)
    piepi = np.einsum("fcik,fkj->fcij", pie, pi)
    mm = np.einsum("fcij,dij->fcd", piepi, e)           # (Pi Ec Pi):Ed
    tr_pie = np.einsum("fcii->fc", pie)
    nen = np.einsum("fmi,cij,fmj->fmc", nq, e, nq)      # nu.Ec.nu at quad pts
    en = np.einsum("cij,fmj->fmci", e, nq)              # Ec nu
    pien = np.einsum("fcij,fmj->fmci", pie, nq)         # Pi Ec nu
    return dict(pi=pi, nq=nq, e=e, pie=pie, piepi=piepi, mm=mm,
                tr_pie=tr_pie, nen=nen, en=en, pien=pien)


def assemble_qtensor_helmholtz(mesh, g, omega_t, f, variant=OperatorVariant.EXACT):
    """5-component proxy block system of the Q-tensor Helmholtz problem.

    The gradient term expands the Q-space covariant derivative: the
    bracketed projector/normal-weighted grad-grad term, two shape-operator
    first-order couplings, and the 2(H^2-2K) zero-order term; plus the
    projected mass, the Q penalty with its 1/4 normal-normal correction,
    and the projected load.
    """
    if omega_t < 0:
        raise DimensionMismatch("penalty weight must be nonnegative")
    fmat = _as_q_matrices(f, mesh)
    exact = variant is not OperatorVariant.APPROX_DERIVATIVE
    proj_ip = variant is not OperatorVariant.APPROX_INNER_PRODUCT

    w = _quad_weights(mesh)
    grads = element_gradients(mesh)
    b = g.elem_shape
    hm2k = g.elem_H**2 - 2.0 * g.elem_K
    lam = QUAD_LAMBDA
    t = _q_geom_tables(mesh, g)

    local = np.zeros((mesh.n_triangles, 5, 3, 5, 3))

    # grad-grad term: (G_a Pi G_b) x weight(c, d)
    s1 = np.einsum("fai,fij,fbj->fab", grads, t["pi"], grads)
    wsum = 3.0 * w[:, None, None] * t["mm"]
    if exact:
        half = (np.einsum("f,fmc,fmd->fcd", w, t["nen"], t["nen"])
                + np.einsum("f,fc,fmd->fcd", w, t["tr_pie"], t["nen"])
                + np.einsum("f,fmc,fd->fcd", w, t["nen"], t["tr_pie"]))
        wsum = wsum + 0.5 * half
    local += np.einsum("fab,fcd->fdacb", s1, wsum)

    # mass and load
    mass_ab = np.einsum("f,ma,mb->fab", w, lam, lam)
    if proj_ip:
        local += np.einsum("fab,fcd->fdacb", mass_ab, t["mm"])
        fq = _interp_quad(fmat, mesh)
        pifpi = np.einsum("fik,fmkl,flj->fmij", t["pi"], fq, t["pi"])
        load = np.einsum("f,ma,fmij,dij->fda", w, lam, pifpi, Q_BASIS)
    else:
        ee = np.einsum("cij,dij->cd", Q_BASIS, Q_BASIS)
        local += np.einsum("fab,cd->fdacb", mass_ab, ee)
        fq = _interp_quad(fmat, mesh)
        load = np.einsum("f,ma,fmij,dij->fda", w, lam, fq, Q_BASIS)

    # penalty: (Ec nu).(Ed nu) - (nu.Ec.nu)(nu.Ed.nu)/4
    pen = (np.einsum("f,ma,mb,fmci,fmdi->fdacb", w, lam, lam, t["en"], t["en"])
           - 0.25 * np.einsum("f,ma,mb,fmc,fmd->fdacb", w, lam, lam,
                              t["nen"], t["nen"]))
    local += omega_t * pen

    if exact:
        u = np.einsum("fij,fbj->fbi", b, grads)
        ecu = np.einsum("cij,fbj->fbci", Q_BASIS, u)
        # first-order couplings and their transposes
        t2 = (2.0 * np.einsum("f,ma,fbci,fmdi->fdacb", w, lam, ecu, t["pien"])
              - np.einsum("f,ma,fc,fbi,fmdi->fdacb", w, lam, t["tr_pie"],
                          u, t["en"]))
        local += t2
        local += np.transpose(t2, (0, 3, 4, 1, 2))
        # zero-order term
        local += 2.0 * np.einsum("f,f,ma,mb,fmci,fmdi->fdacb",
                                 hm2k, w, lam, lam, t["en"], t["pien"])

    rows, cols, data = _scatter(local, mesh, 5)
    mat = sp.coo_matrix((data, (rows, cols)),
                        shape=(5 * mesh.n_vertices,) * 2).tocsr()
    return BlockSystem(mat, _scatter_vec(load, mesh, 5), 5, mesh.n_vertices,
                       ("q1", "q2", "q3", "q4", "q5"))


def _as_q_matrices(f, mesh, tol=1e-8):
    if isinstance(f, QProxyField):
        if f.n_vertices != mesh.n_vertices:
            raise DimensionMismatch("load not vertex-aligned")
        return f.matrices()
    if not isinstance(f, TensorField) or f.degree != 2:
        raise NotQTensor("Q load must be a degree-2 field or proxy field")
    if f.n_vertices != mesh.n_vertices:
        raise DimensionMismatch("load not vertex-aligned")
    m = f.values
    asym = np.abs(m - np.transpose(m, (0, 2, 1))).max(initial=0.0)
    tr = np.abs(np.einsum("vii->v", m)).max(initial=0.0)
    if asym > tol or tr > tol:
        raise NotQTensor(f"load not symmetric traceless "
                         f"(asymmetry {asym:.2e}, trace {tr:.2e})")
    return m


# -- boundary terms -------------------------------------------------------------

_GAUSS2 = (0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0))


def assemble_boundary_terms(mesh, g, neumann_data, degree):
    """Conormal-derivative boundary contribution to the load vector.

    `neumann_data` maps ``"conormal_derivative"`` to the prescribed ambient
    conormal derivative (vertex TensorField of the problem degree) and
    optionally ``"values"`` to the boundary trace of the field itself, which
    feeds the curvature part (shape operator against the conormal).  Both
    parts are projected; a closed mesh with nonzero data raises
    :class:`NoBoundary`.  Returns a block load vector (3V or 5V).
    """
    if degree not in (1, 2):
        raise DimensionMismatch("boundary terms implemented for degrees 1 and 2")
    gamma = neumann_data.get("conormal_derivative")
    tval = neumann_data.get("values")
    ncomp = 3 if degree == 1 else 5
    out = np.zeros(ncomp * mesh.n_vertices)
    nonzero = any(fld is not None and np.any(fld.values) for fld in (gamma, tval))
    if mesh.is_closed:
        if nonzero:
            raise NoBoundary("closed mesh cannot take boundary data")
        return out
    if not nonzero:
        return out

    bedges = mesh.boundary_edges
    # unique triangle of each boundary edge, via directed-edge lookup
    tri = mesh.triangles
    de = np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]])
    face_of = np.tile(np.arange(len(tri)), 3)
    key = de[:, 0].astype(np.int64) * mesh.n_vertices + de[:, 1]
    order = np.argsort(key, kind="stable")
    bkey = bedges[:, 0].astype(np.int64) * mesh.n_vertices + bedges[:, 1]
    pos = np.searchsorted(key[order], bkey)
    faces = face_of[order[pos]]

    v = mesh.vertices
    pa, pb = v[bedges[:, 0]], v[bedges[:, 1]]
    edge_vec = pb - pa
    lengths = np.linalg.norm(edge_vec, axis=1)
    nf = mesh.face_normals[faces]
    conormal = np.cross(edge_vec / lengths[:, None], nf)

    pi = g.elem_projector[faces]
    bshape = g.elem_shape[faces]
    bn = np.einsum("eij,ej->ei", bshape, conormal)
    nu_v = g.vertex_normals

    for xi in _GAUSS2:
        wq = 0.5 * lengths
        lam_a, lam_b = 1.0 - xi, xi
        nu_q = lam_a * nu_v[bedges[:, 0]] + lam_b * nu_v[bedges[:, 1]]
        nu_q /= np.linalg.norm(nu_q, axis=1, keepdims=True)
        if degree == 1:
            integrand = np.zeros_like(pa)
            if gamma is not None:
                gam_q = lam_a * gamma.values[bedges[:, 0]] \
                    + lam_b * gamma.values[bedges[:, 1]]
                integrand = np.einsum("eij,ej->ei", pi, gam_q)
            if tval is not None:
                tq = lam_a * tval.values[bedges[:, 0]] + lam_b * tval.values[bedges[:, 1]]
                tnu = np.einsum("ei,ei->e", tq, nu_q)
                integrand = integrand + tnu[:, None] * np.einsum(
                    "eij,ej->ei", pi, bn)
            for corner, lam_c in ((0, lam_a), (1, lam_b)):
                vids = bedges[:, corner]
                for i in range(3):
                    np.add.at(out, i * mesh.n_vertices + vids,
                              wq * lam_c * integrand[:, i])
        else:
            mq = np.zeros((len(bedges), 3, 3))
            if gamma is not None:
                mq += lam_a * gamma.values[bedges[:, 0]] \
                    + lam_b * gamma.values[bedges[:, 1]]
            if tval is not None:
                tq = lam_a * tval.values[bedges[:, 0]] + lam_b * tval.values[bedges[:, 1]]
                nu_t = np.einsum("ei,eij->ej", nu_q, tq)
                t_nu = np.einsum("eij,ej->ei", tq, nu_q)
                mq += np.einsum("ei,ej->eij", bn, nu_t)
                mq += np.einsum("ei,ej->eij", t_nu, bn)
            pimpi = np.einsum("eik,ekl,elj->eij", pi, mq, pi)
            coeff = np.einsum("eij,dij->ed", pimpi, Q_BASIS)
            for corner, lam_c in ((0, lam_a), (1, lam_b)):
                vids = bedges[:, corner]
                for d in range(5):
                    np.add.at(out, d * mesh.n_vertices + vids,
                              wq * lam_c * coeff[:, d])
    return out


# -- pieces reused by the relaxation time loop ----------------------------------

def qtensor_operator_parts(mesh, g, omega_t):
    """Constant matrices of the Q-tensor evolution operator.

    Returns (stiffness, curvature_mass, penalty, projected_mass) where
    curvature_mass carries the (H^2-2K)/2 coefficient and penalty carries
    omega_t.
    """
    zero = QProxyField.zeros(mesh.n_vertices)
    full = assemble_qtensor_helmholtz(mesh, g, 0.0, zero)
    mass = _q_pipi_mass(mesh, g)
    pen = omega_t * _q_penalty(mesh, g)
    curv = _q_pipi_mass(mesh, g, coeff=0.5 * (g.elem_H**2 - 2.0 * g.elem_K))
    stiff = (full.matrix - mass).tocsr()
    return stiff, curv, pen, mass


def _q_local_to_csr(local, mesh):
    rows, cols, data = _scatter(local, mesh, 5)
    return sp.coo_matrix((data, (rows, cols)),
                         shape=(5 * mesh.n_vertices,) * 2).tocsr()


def _q_pipi_mass(mesh, g, coeff=None):
    w = _quad_weights(mesh)
    t = _q_geom_tables(mesh, g)
    mass_ab = np.einsum("f,ma,mb->fab", w, QUAD_LAMBDA, QUAD_LAMBDA)
    if coeff is not None:
        mass_ab = mass_ab * coeff[:, None, None]
    local = np.einsum("fab,fcd->fdacb", mass_ab, t["mm"])
    return _q_local_to_csr(local, mesh)


def _q_penalty(mesh, g):
    w = _quad_weights(mesh)
    t = _q_geom_tables(mesh, g)
    lam = QUAD_LAMBDA
    local = (np.einsum("f,ma,mb,fmci,fmdi->fdacb", w, lam, lam, t["en"], t["en"])
             - 0.25 * np.einsum("f,ma,mb,fmc,fmd->fdacb", w, lam, lam,
                                t["nen"], t["nen"]))
    return _q_local_to_csr(local, mesh)


class QBulkAssembler:
    """Fixed-pattern assembler for the nonlinear bulk term of the Q flow.

    The sparsity pattern of the 5x5 vertex blocks never changes, so the
    expensive COO->CSR conversion happens once; each reassembly is a plain
    bincount into the cached pattern.
    """

    def __init__(self, mesh, g, omega):
        self.mesh = mesh
        self.omega = float(omega)
        self.w = _quad_weights(mesh)
        self.t = _q_geom_tables(mesh, g)
        self.lam = QUAD_LAMBDA
        local0 = np.zeros((mesh.n_triangles, 5, 3, 5, 3))
        rows, cols, _ = _scatter(local0, mesh, 5)
        pattern = sp.coo_matrix((np.ones(len(rows)), (rows, cols)),
                                shape=(5 * mesh.n_vertices,) * 2).tocsr()
        pattern.data[:] = 0.0
        self.pattern = pattern
        self._pos = self._entry_positions(rows, cols, pattern)
        self.nnz = pattern.nnz

    @staticmethod
    def _entry_positions(rows, cols, csr):
        # canonical CSR is sorted by (row, col), so one global search works
        ncols = csr.shape[1]
        row_of = np.repeat(np.arange(csr.shape[0], dtype=np.int64),
                           np.diff(csr.indptr))
        key_csr = row_of * ncols + csr.indices
        key = rows.astype(np.int64) * ncols + cols.astype(np.int64)
        return np.searchsorted(key_csr, key)

    def _quad_state(self, q_flat):
        """Interpolated Q matrices and tr(q^2) at quadrature points."""
        nv = self.mesh.n_vertices
        coeffs = q_flat.reshape(5, nv).T[self.mesh.triangles]   # (F, a, c)
        cq = np.einsum("ma,fac->fmc", self.lam, coeffs)
        qm = np.einsum("fmc,cij->fmij", cq, Q_BASIS)
        s = np.einsum("fmij,fmij->fm", qm, qm)
        return qm, s

    def residual_vector(self, q_flat):
        """Load-style vector of omega (2 tr q^2 - 1) (Pi q Pi) : psi."""
        qm, s = self._quad_state(q_flat)
        piqpi = np.einsum("fik,fmkl,flj->fmij", self.t["pi"], qm, self.t["pi"],
                          optimize=True)
        x = np.einsum("f,fm,fmij,dij->fmd", self.omega * self.w, 2.0 * s - 1.0,
                      piqpi, Q_BASIS, optimize=True)
        local = np.einsum("ma,fmd->fda", self.lam, x)
        return _scatter_vec(local, self.mesh, 5)

    def jacobian_matrix(self, q_flat):
        """CSR matrix of the bulk-term linearization at `q_flat`."""
        qm, s = self._quad_state(q_flat)
        piqpi = np.einsum("fik,fmkl,flj->fmij", self.t["pi"], qm, self.t["pi"],
                          optimize=True)
        qe = np.einsum("fmij,cij->fmc", qm, Q_BASIS)
        pqe = np.einsum("fmij,dij->fmd", piqpi, Q_BASIS)
        x = ((2.0 * s - 1.0)[:, :, None, None] * self.t["mm"][:, None, :, :]
             + 4.0 * np.einsum("fmc,fmd->fmcd", qe, pqe))
        x *= (self.omega * self.w)[:, None, None, None]
        local = np.einsum("ma,mb,fmcd->fdacb", self.lam, self.lam, x,
                          optimize=True)
        data = np.bincount(self._pos, weights=local.ravel(), minlength=self.nnz)
        out = self.pattern.copy()
        out.data = data
        return out

    def bulk_energy(self, q_flat):
        """omega * integral of (tr q^2)^2/2 - tr q^2/2 (zero at q = 0)."""
        _, s = self._quad_state(q_flat)
        dens = 0.5 * s * s - 0.5 * s
        return self.omega * float(np.einsum("f,fm->", self.w, dens))
