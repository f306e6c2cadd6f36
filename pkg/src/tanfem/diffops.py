"""Exact Cartesian covariant differential operators on surface tensor fields.

The covariant gradient of a degree-d tangential field is represented in
ambient Cartesian components as

    grad t = Pi[grad_amb t^] + sum_m B (x)_{m,d+1} Pi[t^ ._m nu],

which is exact for any smooth ambient extension t^ of the field.  The
degree-2 variant used for symmetric, ambient-traceless fields carries two
additional trace-compensation terms.  Analytic inputs are differentiated
exactly with nested dual numbers; discrete P1 inputs use element gradients
and are intended for diagnostics (solving always goes through weak forms).
"""

from itertools import product

import numpy as np

from .dual import Dual, lift
from .errors import (BadContractionIndex, NotQTensor, UnsupportedDegree)
from .fields import TensorField
from .geometry import element_gradients
from .surfaces import projector, shape_operator, unit_normal

__all__ = ["AmbientField", "SurfaceLeviCivita", "build_levi_civita",
           "cov_grad", "cov_grad_q", "divergence", "rot_full", "rot_k",
           "manufactured_rhs", "rot_scalar", "with_normal_part"]

_LEVI = np.zeros((3, 3, 3))
for _i, _j, _k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
    _LEVI[_i, _j, _k] = 1.0
    _LEVI[_i, _k, _j] = -1.0


class AmbientField:
    """Smooth ambient (tubular-neighborhood) tensor field of degree d.

    Parameters
    ----------
    degree : int
    fn : callable
        ``fn(x, y, z)`` in dual-capable arithmetic returning a scalar
        (d=0), a length-3 list (d=1), or nested 3x3[(x3)] lists.
    """

    def __init__(self, degree, fn):
        if degree not in (0, 1, 2, 3):
            raise UnsupportedDegree(f"degree {degree}")
        self.degree = degree
        self.fn = fn

    def __call__(self, x, y, z):
        return self.fn(x, y, z)

    def sample(self, points):
        """Evaluate at plain (N, 3) points; returns a vertex TensorField."""
        pts = np.asarray(points, dtype=float)
        vals = _flatten(self.fn(pts[:, 0], pts[:, 1], pts[:, 2]), self.degree)
        return TensorField(self.degree, _stack(vals, self.degree, len(pts)))


class SurfaceLeviCivita:
    """Tangential 2-form E_IJ = eps_IJK nu_K per vertex and per element."""

    def __init__(self, vertex_E, elem_E=None):
        self.vertex_E = vertex_E
        self.elem_E = elem_E

    def norm_squared(self):
        return np.einsum("vij,vij->v", self.vertex_E, self.vertex_E)


def build_levi_civita(g):
    ve = np.einsum("ijk,vk->vij", _LEVI, g.vertex_normals)
    ee = None
    if g.elem_normals is not None:
        ee = np.einsum("ijk,ek->eij", _LEVI, g.elem_normals)
    return SurfaceLeviCivita(ve, ee)


# -- flat-list tensor utilities (entries are arrays or duals) ------------------

def _flatten(obj, degree):
    if degree == 0:
        return [obj]
    out = []
    for entry in obj:
        out.extend(_flatten(entry, degree - 1))
    return out


def _stack(flat, degree, n):
    arr = np.stack([np.broadcast_to(np.asarray(c, dtype=float), (n,))
                    for c in flat], axis=-1)
    return arr.reshape((n,) + (3,) * degree)


def _component_eval(fn, degree, x, y, z):
    return _flatten(fn(x, y, z), degree)


def _jacobian(fn, degree, x, y, z):
    """Values and ambient partials of all components in one lifted pass."""
    comps = _flatten(fn(lift(x, 0), lift(y, 1), lift(z, 2)), degree)
    vals, parts = [], []
    for c in comps:
        if isinstance(c, Dual):
            vals.append(c.val)
            parts.append([c.dx, c.dy, c.dz])
        else:
            vals.append(c)
            parts.append([0.0, 0.0, 0.0])
    return vals, parts


def _project_slot(flat, degree, pi, slot):
    """Apply pi to one index slot of a flat-list tensor."""
    stride = 3 ** (degree - 1 - slot)
    out = [None] * len(flat)
    for base in range(len(flat)):
        digit = (base // stride) % 3
        if digit != 0:
            continue
        vals = [flat[base + a * stride] for a in range(3)]
        for i in range(3):
            s = pi[i][0] * vals[0] + pi[i][1] * vals[1] + pi[i][2] * vals[2]
            out[base + i * stride] = s
    return out


def _project_all(flat, degree, pi):
    for slot in range(degree):
        flat = _project_slot(flat, degree, pi, slot)
    return flat


def _contract_nu(flat, degree, nu, slot):
    """Contract one slot with nu, producing a degree-1 lower flat tensor."""
    stride = 3 ** (degree - 1 - slot)
    out = []
    for base in range(len(flat)):
        digit = (base // stride) % 3
        hi = base - digit * stride
        if digit != 0:
            continue
        s = (flat[hi] * nu[0] + flat[hi + stride] * nu[1]
             + flat[hi + 2 * stride] * nu[2])
        out.append(s)
    # reindex: removing the slot keeps lexicographic order of remaining digits
    return out


def _cov_grad_flat(vals, jac, nu, pi, b, degree):
    """Exact covariant gradient; result degree+1, last index = derivative."""
    n_out = 3 ** (degree + 1)
    grad_flat = [jac[c][k] for c in range(3 ** degree) for k in range(3)]
    out = _project_all(grad_flat, degree + 1, pi)
    for m in range(degree):
        contracted = _contract_nu(vals, degree, nu, m)
        proj = _project_all(contracted, degree - 1, pi)
        for idx in product(range(3), repeat=degree + 1):
            k = idx[-1]
            i_m = idx[m]
            rest = idx[:m] + idx[m + 1:degree]
            flat_rest = 0
            for d in rest:
                flat_rest = flat_rest * 3 + d
            pos = 0
            for d in idx:
                pos = pos * 3 + d
            out[pos] = out[pos] + b[k][i_m] * proj[flat_rest]
    return out


def _cov_grad_q_flat(vals, jac, nu, pi, b):
    """Q-space covariant gradient of a symmetric ambient-traceless 2-tensor."""
    out = _cov_grad_flat(vals, jac, nu, pi, b, 2)
    # nu . (grad_amb q) . nu, projected, as a 3-vector w
    w = []
    for k in range(3):
        s = 0.0
        for l in range(3):
            for m in range(3):
                s = s + nu[l] * nu[m] * jac[3 * l + m][k]
        w.append(s)
    w = [pi[k][0] * w[0] + pi[k][1] * w[1] + pi[k][2] * w[2] for k in range(3)]
    # (B . q . nu) as a 3-vector u
    qnu = [vals[3 * l + 0] * nu[0] + vals[3 * l + 1] * nu[1]
           + vals[3 * l + 2] * nu[2] for l in range(3)]
    u = [b[k][0] * qnu[0] + b[k][1] * qnu[1] + b[k][2] * qnu[2]
         for k in range(3)]
    for i in range(3):
        for j in range(3):
            pij = pi[i][j]
            for k in range(3):
                pos = (i * 3 + j) * 3 + k
                out[pos] = out[pos] + pij * (0.5 * w[k] - u[k])
    return out


def _check_q_input(vals, tol=1e-8):
    n = len(vals[0]) if hasattr(vals[0], "__len__") else 1
    m = np.stack([np.broadcast_to(np.asarray(v, dtype=float), (n,))
                  for v in vals], axis=-1).reshape(n, 3, 3)
    asym = np.abs(m - np.transpose(m, (0, 2, 1))).max(initial=0.0)
    tr = np.abs(np.einsum("vii->v", m)).max(initial=0.0)
    if asym > tol or tr > tol:
        raise NotQTensor(
            f"field is not symmetric ambient-traceless "
            f"(asymmetry {asym:.2e}, trace {tr:.2e})")


# -- pointwise evaluators (dual-capable coordinates) ---------------------------

def _grad_point(field_fn, degree, surface, x, y, z, q_space=False):
    vals, jac = _jacobian(field_fn, degree, x, y, z)
    nu, pi, b = shape_operator(surface, x, y, z)
    if q_space:
        return _cov_grad_q_flat(vals, jac, nu, pi, b)
    return _cov_grad_flat(vals, jac, nu, pi, b, degree)


def _nest(flat, degree):
    if degree == 0:
        return flat[0]
    step = 3 ** (degree - 1)
    return [_nest(flat[i * step:(i + 1) * step], degree - 1) for i in range(3)]


def _grad_field(field, surface, q_space=False):
    d = field.degree

    def fn(x, y, z):
        return _nest(_grad_point(field.fn, d, surface, x, y, z, q_space), d + 1)

    return AmbientField(d + 1, fn)


def _points_of(g):
    pts = getattr(g, "vertex_points", None)
    if pts is not None:
        return pts
    return g.mesh.vertices


# -- public operators ----------------------------------------------------------

def cov_grad(field, g):
    """Covariant gradient; degree d -> d+1 (last index is the derivative slot).

    Ambient fields with analytic geometry are differentiated exactly at the
    vertex points; discrete P1 fields use element gradients with
    element-constant geometry, averaged back to vertices (diagnostic path).
    """
    if isinstance(field, AmbientField):
        if field.degree > 2:
            raise UnsupportedDegree("cov_grad supports ambient degrees 0-2")
        return _grad_field(field, g.surface, q_space=False).sample(_points_of(g))
    return _discrete_grad(field, g, q_space=False)


def cov_grad_q(field, g):
    """Q-space covariant gradient of a symmetric ambient-traceless 2-tensor."""
    if isinstance(field, AmbientField):
        if field.degree != 2:
            raise NotQTensor("cov_grad_q expects a degree-2 field")
        pts = _points_of(g)
        vals, _ = _jacobian(field.fn, 2, pts[:, 0], pts[:, 1], pts[:, 2])
        _check_q_input(vals)
        return _grad_field(field, g.surface, q_space=True).sample(pts)
    if field.degree != 2:
        raise NotQTensor("cov_grad_q expects a degree-2 field")
    _check_q_input(list(field.values.reshape(-1, 9).T))
    return _discrete_grad(field, g, q_space=True)


def divergence(field, g):
    """div t = (grad t) contracted on its last tensor and derivative slots."""
    if isinstance(field, AmbientField):
        d = field.degree
        if d not in (1, 2, 3):
            raise UnsupportedDegree("divergence supports degrees 1-3")

        def fn(x, y, z):
            flat = _grad_point(field.fn, d, surface=g.surface, x=x, y=y, z=z)
            nu = unit_normal(g.surface, x, y, z)
            pi = projector(nu)
            return _nest(_contract_pi_last2(flat, d + 1, pi), d - 1)

        return AmbientField(d - 1, fn).sample(_points_of(g))
    return _discrete_divergence(field, g)


def _contract_pi_last2(flat, degree, pi):
    """Contract the last two slots of a flat degree-`degree` tensor with pi."""
    out = []
    block = 9
    for base in range(0, len(flat), block):
        s = 0.0
        for l in range(3):
            for k in range(3):
                s = s + flat[base + 3 * l + k] * pi[l][k]
        out.append(s)
    return out


def rot_full(field, g):
    """Rot t = (grad t) . E, degree d -> d+1; for d=0 the rotated gradient."""
    if isinstance(field, AmbientField):
        d = field.degree

        def fn(x, y, z):
            flat = _grad_point(field.fn, d, g.surface, x, y, z)
            nu = unit_normal(g.surface, x, y, z)
            e = _levi_from_nu(nu)
            out = []
            for base in range(0, len(flat), 3):
                for j in range(3):
                    s = (flat[base + 0] * e[0][j] + flat[base + 1] * e[1][j]
                         + flat[base + 2] * e[2][j])
                    out.append(s)
            return _nest(out, d + 1)

        return AmbientField(d + 1, fn).sample(_points_of(g))
    return _discrete_rot(field, g)


def rot_k(field, k, g):
    """rot_k t = -(grad t) contracted at (slot k, derivative slot) with E."""
    d = field.degree
    if not 1 <= k <= d:
        raise BadContractionIndex(f"k={k} outside 1..{d}")
    if isinstance(field, AmbientField):

        def fn(x, y, z):
            flat = _grad_point(field.fn, d, g.surface, x, y, z)
            nu = unit_normal(g.surface, x, y, z)
            e = _levi_from_nu(nu)
            return _nest(_rot_k_contract(flat, d, k, e), d - 1)

        return AmbientField(d - 1, fn).sample(_points_of(g))
    return _discrete_rot_k(field, k, g)


def _rot_k_contract(flat, d, k, e):
    slot = k - 1
    stride = 3 ** (d - slot)       # stride of slot k in the degree-(d+1) tensor
    out = []
    for idx in product(range(3), repeat=d - 1):
        rest = list(idx)
        digits = rest[:slot] + [0] + rest[slot:]
        base = 0
        for dd in digits:
            base = base * 3 + dd
        base *= 3
        s = 0.0
        for kk in range(3):
            for ll in range(3):
                s = s + flat[base + kk * stride + ll] * e[kk][ll]
        out.append(-1.0 * s)
    return out


def _levi_from_nu(nu):
    return [[0.0, nu[2], -nu[1]],
            [-nu[2], 0.0, nu[0]],
            [nu[1], -nu[0], 0.0]]


def rot_scalar(s_fn, surface):
    """Tangential rotated gradient nu x grad(s) as an ambient vector field."""

    def fn(x, y, z):
        u = s_fn(lift(x, 0), lift(y, 1), lift(z, 2))
        ds = [u.dx, u.dy, u.dz] if isinstance(u, Dual) else [0.0, 0.0, 0.0]
        nu = unit_normal(surface, x, y, z)
        return [nu[1] * ds[2] - nu[2] * ds[1],
                nu[2] * ds[0] - nu[0] * ds[2],
                nu[0] * ds[1] - nu[1] * ds[0]]

    return AmbientField(1, fn)


def with_normal_part(field, s_fn, surface):
    """field + s * nu (degree 1) -- used to probe extension invariance."""
    if field.degree != 1:
        raise UnsupportedDegree("normal part addition implemented for degree 1")

    def fn(x, y, z):
        v = field.fn(x, y, z)
        s = s_fn(x, y, z)
        nu = unit_normal(surface, x, y, z)
        return [v[i] + s * nu[i] for i in range(3)]

    return AmbientField(1, fn)


def manufactured_rhs(t_star, g, q_space=None):
    """f = -div(grad t*) + t* sampled at the geometry's vertex points.

    For degree-2 fields the Q-space gradient is used unless `q_space` is
    explicitly False.
    """
    d = t_star.degree
    if d not in (0, 1, 2):
        raise UnsupportedDegree("manufactured RHS supports degrees 0-2")
    use_q = (d == 2) if q_space is None else q_space
    surface = g.surface
    grad_f = _grad_field(t_star, surface, q_space=use_q)

    def fn(x, y, z):
        flat = _grad_point(grad_f.fn, d + 1, surface, x, y, z)
        nu = unit_normal(surface, x, y, z)
        pi = projector(nu)
        div = _contract_pi_last2(flat, d + 2, pi)
        tval = _flatten(t_star.fn(x, y, z), d)
        return _nest([tval[i] - div[i] for i in range(3 ** d)], d)

    return AmbientField(d, fn).sample(_points_of(g))


# -- discrete (P1) diagnostic paths --------------------------------------------

def _elem_data(field, g):
    mesh = g.mesh
    tri = mesh.triangles
    vals = field.values[tri]                      # (F, corner, comps...)
    cen = vals.mean(axis=1)                       # centroid value
    grads = element_gradients(mesh)
    jac = np.einsum("fa...,fak->f...k", vals, grads)
    return cen, jac


def _discrete_grad_elem(field, g, q_space):
    d = field.degree
    if d > 2:
        raise UnsupportedDegree("discrete cov_grad supports degrees 0-2")
    cen, jac = _elem_data(field, g)
    pi = g.elem_projector
    b = g.elem_shape
    nu = g.elem_normals
    if d == 0:
        out = np.einsum("fkc,fc->fk", pi, jac)
        return out
    if d == 1:
        out = np.einsum("fia,fkc,fac->fik", pi, pi, jac)
        out += np.einsum("fa,fa,fik->fik", cen, nu, b)
        return out
    if d == 2:
        out = np.einsum("fia,fjb,fkc,fabc->fijk", pi, pi, pi, jac)
        nq_pi = np.einsum("fm,fmn,fnj->fj", nu, cen, pi)
        pi_qn = np.einsum("fim,fmn,fn->fi", pi, cen, nu)
        out += np.einsum("fki,fj->fijk", b, nq_pi)
        out += np.einsum("fkj,fi->fijk", b, pi_qn)
        if q_space:
            w = np.einsum("fl,fm,flmn,fkn->fk", nu, nu, jac, pi)
            u = np.einsum("fkl,flm,fm->fk", b, cen, nu)
            out += np.einsum("fij,fk->fijk", pi, 0.5 * w - u)
        return out
    raise UnsupportedDegree(f"discrete gradient not implemented for degree {d}")


def _vertex_average(mesh, elem_vals):
    areas = mesh.face_areas
    shape = (mesh.n_vertices,) + elem_vals.shape[1:]
    acc = np.zeros(shape)
    wsum = np.zeros(mesh.n_vertices)
    w = areas
    for a in range(3):
        idx = mesh.triangles[:, a]
        np.add.at(acc, idx, elem_vals * w.reshape((-1,) + (1,) * (elem_vals.ndim - 1)))
        np.add.at(wsum, idx, w)
    return acc / wsum.reshape((-1,) + (1,) * (elem_vals.ndim - 1))


def _discrete_grad(field, g, q_space):
    elem = _discrete_grad_elem(field, g, q_space)
    return TensorField(field.degree + 1, _vertex_average(g.mesh, elem))


def _discrete_divergence(field, g):
    d = field.degree
    if d not in (1, 2, 3):
        raise UnsupportedDegree("divergence supports degrees 1-3")
    if d == 3:
        raise UnsupportedDegree("discrete divergence implemented for degrees 1-2")
    elem = _discrete_grad_elem(field, g, q_space=False)
    pi = g.elem_projector
    if d == 1:
        out = np.einsum("flk,flk->f", elem, pi)[:, None]
        return TensorField(0, _vertex_average(g.mesh, out)[:, 0])
    out = np.einsum("filk,flk->fi", elem, pi)
    return TensorField(1, _vertex_average(g.mesh, out))


def _discrete_rot(field, g):
    d = field.degree
    if d > 2:
        raise UnsupportedDegree("rot supports degrees 0-2")
    elem = _discrete_grad_elem(field, g, q_space=False)
    e = np.einsum("ijk,fk->fij", _LEVI, g.elem_normals)
    out = np.einsum("f...l,flj->f...j", elem, e)
    return TensorField(d + 1, _vertex_average(g.mesh, out))


def _discrete_rot_k(field, k, g):
    d = field.degree
    elem = _discrete_grad_elem(field, g, q_space=False)
    e = np.einsum("ijk,fk->fij", _LEVI, g.elem_normals)
    if d == 1:
        out = -np.einsum("fkl,fkl->f", elem, e)
        return TensorField(0, _vertex_average(g.mesh, out[:, None])[:, 0])
    if d == 2 and k == 1:
        out = -np.einsum("fkil,fkl->fi", elem, e)
    elif d == 2 and k == 2:
        out = -np.einsum("fikl,fkl->fi", elem, e)
    else:
        raise BadContractionIndex(f"unsupported (degree={d}, k={k})")
    return TensorField(d - 1, _vertex_average(g.mesh, out))
