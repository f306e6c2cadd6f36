"""Manufactured cases, error measures, convergence studies, defect detection."""

import math
import os
from dataclasses import dataclass, field

import numpy as np

from .diffops import AmbientField, manufactured_rhs, rot_scalar
from .errors import AmbiguousWinding, DimensionMismatch
from .fem import (OperatorVariant, QBulkAssembler, assemble_qtensor_helmholtz,
                  assemble_vector_helmholtz, qtensor_operator_parts)
from .fields import QProxyField, TensorField
from .geometry import QUAD_LAMBDA, analytic_geometry, discrete_geometry
from .mesh import RefinementSpec, refine
from .solver import SolveConfig, linear_solve
from .surfaces import unit_normal

__all__ = ["ManufacturedCase", "DefectReport", "StudyReport",
           "build_vector_case", "build_qtensor_case", "error_l2",
           "error_l1_normalized", "normal_residual", "run_convergence",
           "detect_defects", "energy"]


@dataclass
class ManufacturedCase:
    """Analytic solution plus the induced Helmholtz load on a surface."""

    surface: object
    kind: str                  # "vector_helmholtz" or "qtensor_helmholtz"
    t_star: AmbientField

    @property
    def degree(self):
        return self.t_star.degree

    def exact(self, g):
        pts = g.vertex_points if g.vertex_points is not None else g.mesh.vertices
        return self.t_star.sample(pts)

    def load(self, g):
        return manufactured_rhs(self.t_star, g)


def build_vector_case(surface):
    """p* = Rot(xyz): tangential, divergence-free, 14 zeros on an ellipsoid."""
    return ManufacturedCase(surface, "vector_helmholtz",
                            rot_scalar(lambda x, y, z: x * y * z, surface))


def build_qtensor_case(surface):
    """q* = p* (x) p* - |p*|^2/2 Pi with p* = Rot(xyz).

    The projector-weighted deviatoric part keeps q* exactly symmetric,
    tangential, and traceless in both the ambient and the surface sense.
    """
    pstar = rot_scalar(lambda x, y, z: x * y * z, surface)

    def qfn(x, y, z):
        p = pstar.fn(x, y, z)
        nu = unit_normal(surface, x, y, z)
        p2 = p[0] * p[0] + p[1] * p[1] + p[2] * p[2]
        out = []
        for i in range(3):
            row = []
            for j in range(3):
                pi_ij = (1.0 if i == j else 0.0) - nu[i] * nu[j]
                row.append(p[i] * p[j] - 0.5 * p2 * pi_ij)
            out.append(row)
        return out

    return ManufacturedCase(surface, "qtensor_helmholtz", AmbientField(2, qfn))


# -- error measures --------------------------------------------------------------

def _values_of(field_like):
    if isinstance(field_like, QProxyField):
        return field_like.matrices(), 2
    return field_like.values, field_like.degree


def _quad_sq_norm(diff, mesh):
    dq = np.einsum("ma,fa...->fm...", QUAD_LAMBDA, diff[mesh.triangles])
    flat = dq.reshape(dq.shape[0], dq.shape[1], -1)
    return np.einsum("f,fmc,fmc->", mesh.face_areas / 3.0, flat, flat)


def error_l2(solution, exact, mesh, degree=None):
    """Componentwise averaged L2 error: prefactor 1/2 (vectors), 1/4 (2-tensors)."""
    sol, dsol = _values_of(solution)
    exa, dexa = _values_of(exact)
    if dsol != dexa or len(sol) != mesh.n_vertices or len(exa) != mesh.n_vertices:
        raise DimensionMismatch("solution/exact fields not aligned")
    d = dsol if degree is None else degree
    pref = {0: 1.0, 1: 0.5, 2: 0.25}[d]
    return pref * math.sqrt(_quad_sq_norm(sol - exa, mesh))


def error_l1_normalized(solution, exact, mesh, degree=None):
    """L1 error of |t - t*| normalized by (n-1)^d * integral of |t*| (n = 3)."""
    sol, dsol = _values_of(solution)
    exa, dexa = _values_of(exact)
    if dsol != dexa or len(sol) != mesh.n_vertices:
        raise DimensionMismatch("solution/exact fields not aligned")
    d = dsol if degree is None else degree

    def l1(vals):
        vq = np.einsum("ma,fa...->fm...", QUAD_LAMBDA, vals[mesh.triangles])
        flat = vq.reshape(vq.shape[0], vq.shape[1], -1)
        mag = np.sqrt(np.einsum("fmc,fmc->fm", flat, flat))
        return np.einsum("f,fm->", mesh.face_areas / 3.0, mag)

    return l1(sol - exa) / (2.0**d * l1(exa))


def normal_residual(solution, g):
    """Max over vertices of the Frobenius norm of the normal part."""
    vals, d = _values_of(solution)
    if d not in (1, 2):
        raise DimensionMismatch("normal residual needs degree 1 or 2")
    pv = g.vertex_projectors
    if d == 1:
        tang = np.einsum("vij,vj->vi", pv, vals)
    else:
        tang = np.einsum("vik,vjl,vkl->vij", pv, pv, vals)
    diff = (vals - tang).reshape(len(vals), -1)
    return float(np.sqrt((diff**2).sum(axis=1)).max())


# -- convergence studies ----------------------------------------------------------

@dataclass
class StudyRow:
    level: int
    dofs: int
    h_mean: float
    error_l2: float
    error_l1n: float
    normal_residual: float
    eoc: float                 # pairwise, nan on the first level
    solver_converged: bool
    solver_iterations: int


@dataclass
class StudyReport:
    rows: list
    eoc_fitted: float
    r_squared: float
    clean: bool
    sweep: list = field(default_factory=list)   # (omega_t, error_l2, normal_residual)

    def to_csv(self, path):
        lines = ["level,DOFs,h_mean,error_l2,error_l1n,normal_residual,eoc"]
        for r in self.rows:
            eoc = "" if math.isnan(r.eoc) else f"{r.eoc:.12e}"
            lines.append(f"{r.level},{r.dofs},{r.h_mean:.12e},{r.error_l2:.12e},"
                         f"{r.error_l1n:.12e},{r.normal_residual:.12e},{eoc}")
        with open(path, "w", encoding="ascii") as fh:
            fh.write("\n".join(lines) + "\n")

    def sweep_to_csv(self, path):
        lines = ["omega_t,error_l2,normal_residual"]
        for wt, err, nres in self.sweep:
            lines.append(f"{wt:.12e},{err:.12e},{nres:.12e}")
        with open(path, "w", encoding="ascii") as fh:
            fh.write("\n".join(lines) + "\n")


def _fit_eoc(dofs, errors):
    x = np.log(np.asarray(dofs, dtype=float))
    y = np.log(np.asarray(errors, dtype=float))
    slope, intercept = np.polyfit(x, y, 1)
    yhat = slope * x + intercept
    ss_res = float(((y - yhat)**2).sum())
    ss_tot = float(((y - y.mean())**2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return -float(slope), r2


def _solve_case(case, mesh, g, omega_t, variant, solve_cfg):
    f = case.load(g)
    if case.degree == 1:
        system = assemble_vector_helmholtz(mesh, g, omega_t, f, variant)
    else:
        system = assemble_qtensor_helmholtz(mesh, g, omega_t, f, variant)
    x, stats = linear_solve(system, solve_cfg)
    if case.degree == 1:
        sol = TensorField.from_flat(1, x, mesh.n_vertices)
    else:
        sol = QProxyField.from_flat(x, mesh.n_vertices)
    return sol, stats


def run_convergence(case, mesh0, levels, omega_t=1000.0,
                    geometry_source="analytic", variant=OperatorVariant.EXACT,
                    solve_cfg=None, omega_t_sweep=None, out_dir=None,
                    export_fields=False):
    """Refine, assemble, solve, and measure errors per level.

    Returns a :class:`StudyReport`; `clean` requires every solve to converge
    and the log-log fit of error against DOFs to have R^2 >= 0.98.  When
    `omega_t_sweep` is given, the finest level is re-solved for each penalty
    value and tabulated in ``report.sweep``.
    """
    if levels < 1:
        raise ValueError("need at least one level")
    solve_cfg = solve_cfg or SolveConfig(rel_tol=1e-10)
    rows = []
    dofs_list, err_list = [], []
    mesh = mesh0
    ncomp = 3 if case.degree == 1 else 5
    for lvl in range(levels):
        if lvl > 0:
            mesh = refine(mesh, RefinementSpec(1, projection=case.surface))
        g = (analytic_geometry(case.surface, mesh)
             if geometry_source == "analytic" else discrete_geometry(mesh))
        if g.surface is None:
            g.surface = case.surface
            g.vertex_points = case.surface.project(mesh.vertices)
        sol, stats = _solve_case(case, mesh, g, omega_t, variant, solve_cfg)
        exact_vals = case.exact(g)
        e2 = error_l2(sol, exact_vals, mesh)
        e1 = error_l1_normalized(sol, exact_vals, mesh)
        nres = normal_residual(sol, g)
        dofs = ncomp * mesh.n_vertices
        eoc = math.nan
        if dofs_list:
            eoc = -math.log(e2 / err_list[-1]) / math.log(dofs / dofs_list[-1])
        rows.append(StudyRow(lvl, dofs, mesh.mean_edge_length, e2, e1, nres,
                             eoc, stats.converged, stats.iterations))
        dofs_list.append(dofs)
        err_list.append(e2)
        if out_dir and export_fields:
            from .meshio import export_vtk
            name = os.path.join(out_dir, f"solution_level{lvl}.vtk")
            export_vtk(mesh, {"solution": sol if not isinstance(sol, QProxyField)
                              else sol}, name)

    if len(rows) >= 2:
        eoc_fit, r2 = _fit_eoc(dofs_list, err_list)
    else:
        eoc_fit, r2 = math.nan, 1.0
    clean = all(r.solver_converged for r in rows) and r2 >= 0.98
    report = StudyReport(rows, eoc_fit, r2, clean)

    if omega_t_sweep:
        g = (analytic_geometry(case.surface, mesh)
             if geometry_source == "analytic" else discrete_geometry(mesh))
        if g.surface is None:
            g.surface = case.surface
            g.vertex_points = case.surface.project(mesh.vertices)
        exact_vals = case.exact(g)
        for wt in omega_t_sweep:
            sol, stats = _solve_case(case, mesh, g, wt, variant, solve_cfg)
            report.sweep.append((float(wt), error_l2(sol, exact_vals, mesh),
                                 normal_residual(sol, g)))
    return report


# -- defect detection --------------------------------------------------------------

@dataclass
class DefectReport:
    """Detected defects as (vertex id, charge) with their total charge."""

    defects: list
    total_charge: float

    def counts(self):
        pos = sum(1 for _, c in self.defects if c > 0)
        neg = sum(1 for _, c in self.defects if c < 0)
        return pos, neg


def _vertex_direction_data(field, g):
    """Representative direction, magnitude, and mod-angle per vertex."""
    nu = g.vertex_normals
    if isinstance(field, QProxyField):
        m = field.matrices()
        pv = g.vertex_projectors
        mt = np.einsum("vik,vjl,vkl->vij", pv, pv, m)
        t1 = _tangent_basis(nu)
        t2 = np.cross(nu, t1)
        a = np.einsum("vi,vij,vj->v", t1, mt, t1)
        b = np.einsum("vi,vij,vj->v", t1, mt, t2)
        c = np.einsum("vi,vij,vj->v", t2, mt, t2)
        theta = 0.5 * np.arctan2(2.0 * b, a - c)
        direction = (np.cos(theta)[:, None] * t1 + np.sin(theta)[:, None] * t2)
        magnitude = np.sqrt(0.25 * (a - c)**2 + b**2)
        return direction, magnitude, np.pi
    if field.degree != 1:
        raise DimensionMismatch("defect detection needs a vector or Q field")
    vals = field.values
    tang = vals - np.einsum("vi,vi->v", vals, nu)[:, None] * nu
    magnitude = np.linalg.norm(tang, axis=1)
    safe = np.where(magnitude > 0, magnitude, 1.0)
    return tang / safe[:, None], magnitude, 2.0 * np.pi


def _tangent_basis(nu):
    k = np.argmin(np.abs(nu), axis=1)
    e = np.zeros_like(nu)
    e[np.arange(len(nu)), k] = 1.0
    e -= np.einsum("vi,vi->v", e, nu)[:, None] * nu
    return e / np.linalg.norm(e, axis=1, keepdims=True)


def _transported_increments(mesh, g, direction, period):
    """Signed angle steps of `direction` along every directed triangle edge.

    The tail direction is parallel-transported to the head's tangent plane
    by the minimal rotation taking nu_tail to nu_head; the increment is then
    measured around nu_head, folded to (-period/2, period/2].
    """
    tri = mesh.triangles
    heads = np.concatenate([tri[:, 2], tri[:, 0], tri[:, 1]])
    tails = np.concatenate([tri[:, 1], tri[:, 2], tri[:, 0]])
    # directed edge (tail -> head) opposite corners 0, 1, 2 respectively
    nu = g.vertex_normals
    na, nb = nu[tails], nu[heads]
    ta, tb = direction[tails], direction[heads]
    axis = np.cross(na, nb)
    sin_ang = np.linalg.norm(axis, axis=1)
    cos_ang = np.clip(np.einsum("ei,ei->e", na, nb), -1.0, 1.0)
    k = axis / np.where(sin_ang > 1e-14, sin_ang, 1.0)[:, None]
    kt = np.einsum("ei,ei->e", k, ta)
    rotated = (ta * cos_ang[:, None] + np.cross(k, ta) * sin_ang[:, None]
               + k * (kt * (1.0 - cos_ang))[:, None])
    rotated = np.where(sin_ang[:, None] > 1e-14, rotated, ta)
    # project to the head tangent plane before reading the angle
    rotated -= np.einsum("ei,ei->e", rotated, nb)[:, None] * nb
    cosd = np.einsum("ei,ei->e", rotated, tb)
    sind = np.einsum("ei,ei->e", np.cross(rotated, tb), nb)
    delta = np.arctan2(sind, cosd)
    half = 0.5 * period
    delta = np.mod(delta + half, period) - half
    return tails, heads, delta


def detect_defects(field, mesh, g, core_threshold=1e-3, max_growth=6):
    """Locate topological defects and their (half-)integer charges.

    Winding numbers around vertex links flag candidate vertices (nonzero
    rounded winding, an angle increment beyond the resolvability guard, or
    contact with a low-magnitude core); adjacent candidates merge and each
    cluster's charge is read off the transported winding of its one-ring
    boundary loop, growing the cluster while boundary increments stay
    unresolvable.  On a closed mesh the charge sum is asserted against the
    Euler characteristic.
    """
    direction, magnitude, period = _vertex_direction_data(field, g)
    is_line = period < 2 * np.pi
    guard = np.pi / 4 if is_line else np.pi / 2
    tails, heads, delta = _transported_increments(mesh, g, direction, period)

    nv = mesh.n_vertices
    tri = mesh.triangles
    corners = np.concatenate([tri[:, 0], tri[:, 1], tri[:, 2]])
    winding = np.zeros(nv)
    np.add.at(winding, corners, delta)
    max_inc = np.zeros(nv)
    np.maximum.at(max_inc, corners, np.abs(delta))

    rms = math.sqrt(float((magnitude**2).mean()))
    low = magnitude < core_threshold * rms

    charge_unit = period  # winding that corresponds to one charge quantum
    rounded = np.rint(winding / charge_unit)
    candidate = (rounded != 0) | (max_inc > guard) | low
    # boundary vertices have open links; their raw windings are meaningless
    if len(mesh.boundary_edges):
        candidate[np.unique(mesh.boundary_edges)] = False
    if not candidate.any():
        return DefectReport([], 0.0)

    # edge lookup for directed increments
    key = tails.astype(np.int64) * nv + heads
    order = np.argsort(key, kind="stable")
    key_sorted = key[order]
    delta_sorted = delta[order]

    def edge_delta(a, b):
        k = int(a) * nv + int(b)
        i = np.searchsorted(key_sorted, k)
        return delta_sorted[i]

    offsets, tri_ids = mesh.vertex_triangles()

    def region_of(verts):
        faces = set()
        for v in verts:
            faces.update(tri_ids[offsets[v]:offsets[v + 1]].tolist())
        return faces

    def loop_winding(faces):
        loops = _region_boundary_loops(mesh, faces)
        if not loops:
            raise AmbiguousWinding("defect region covers the whole mesh")
        total, worst = 0.0, 0.0
        for loop in loops:
            for a, b in zip(loop, loop[1:] + loop[:1]):
                d = edge_delta(a, b)
                worst = max(worst, abs(d))
                total += d
        return total, worst, loops

    # grow clusters until their boundary windings are resolvable, merging
    # any clusters whose regions start to overlap (they would otherwise
    # read the same zero twice)
    clusters = [set(c) for c in _connected_clusters(mesh, candidate)]
    for _round in range(max_growth + 1):
        regions = [region_of(c) for c in clusters]
        merged = _merge_overlapping(clusters, regions)
        if merged is not None:
            clusters = merged
            continue
        grew = False
        for i, cluster in enumerate(clusters):
            _, worst, loops = loop_winding(regions[i])
            if worst > guard:
                cluster |= {v for loop in loops for v in loop}
                grew = True
        if not grew:
            break
    else:
        raise AmbiguousWinding(
            "could not resolve winding after growing the defect regions")

    defects = []
    for cluster in clusters:
        total, worst, _ = loop_winding(region_of(cluster))
        if worst > guard:
            raise AmbiguousWinding("unresolvable winding increment")
        charge = float(np.rint(total / charge_unit))
        if is_line:
            charge *= 0.5
        if charge != 0.0:
            region = np.fromiter(cluster, dtype=int)
            loc = int(region[np.argmin(magnitude[region])])
            defects.append((loc, charge))

    total_charge = float(sum(c for _, c in defects))
    if mesh.is_closed:
        chi = mesh.euler_characteristic()
        if abs(total_charge - chi) > 1e-9:
            raise AmbiguousWinding(
                f"charge sum {total_charge} differs from Euler characteristic {chi}")
    defects.sort(key=lambda item: item[0])
    return DefectReport(defects, total_charge)


def _merge_overlapping(clusters, regions):
    """Union clusters whose triangle regions intersect; None if none do."""
    owner = {}
    parent = list(range(len(clusters)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    overlap = False
    for i, faces in enumerate(regions):
        for f in faces:
            j = owner.get(f)
            if j is None:
                owner[f] = i
            else:
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[max(ri, rj)] = min(ri, rj)
                    overlap = True
    if not overlap:
        return None
    merged = {}
    for i, cluster in enumerate(clusters):
        merged.setdefault(find(i), set()).update(cluster)
    return [merged[k] for k in sorted(merged)]


def _connected_clusters(mesh, candidate):
    nv = mesh.n_vertices
    nbr = [[] for _ in range(nv)]
    for a, b in mesh.edges:
        if candidate[a] and candidate[b]:
            nbr[a].append(b)
            nbr[b].append(a)
    seen = np.zeros(nv, dtype=bool)
    clusters = []
    for v in np.flatnonzero(candidate):
        if seen[v]:
            continue
        stack = [int(v)]
        seen[v] = True
        comp = []
        while stack:
            u = stack.pop()
            comp.append(u)
            for w in nbr[u]:
                if not seen[w]:
                    seen[w] = True
                    stack.append(w)
        clusters.append(comp)
    return clusters


def _region_boundary_loops(mesh, faces):
    """Oriented boundary cycles of a set of triangles (region on the left)."""
    succ = {}
    tri = mesh.triangles
    face_set = faces if isinstance(faces, set) else set(faces)
    edge_faces = {}
    for f in face_set:
        a, b, c = tri[f]
        for u, v in ((a, b), (b, c), (c, a)):
            edge_faces[(int(u), int(v))] = f
    for (u, v), f in edge_faces.items():
        if (v, u) not in edge_faces:
            succ[u] = v
    loops = []
    remaining = dict(succ)
    while remaining:
        start, cur = next(iter(remaining.items()))
        loop = [start]
        del remaining[start]
        node = cur
        while node != start and node in remaining:
            loop.append(node)
            nxt = remaining.pop(node)
            node = nxt
        loops.append(loop)
    return loops


# -- energy -----------------------------------------------------------------------

def energy(q, mesh, g, omega):
    """Landau-de Gennes energy: elastic + curvature + omega * bulk.

    F = 1/2 int |grad q|^2 + 1/2 int (H^2-2K)/2 |q|^2 + omega int W(q),
    with the double-well density W(q) = (tr q^2)^2/2 - tr q^2/2 (W(0) = 0,
    minimum at tr q^2 = 1/2).
    """
    stiff, curv, _pen, _mass = qtensor_operator_parts(mesh, g, 0.0)
    bulk = QBulkAssembler(mesh, g, omega)
    u = q.flat()
    return float(0.5 * u @ (stiff @ u) + 0.5 * u @ (curv @ u)
                 + bulk.bulk_energy(u))
