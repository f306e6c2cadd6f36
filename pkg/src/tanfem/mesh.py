"""Indexed triangle surface meshes: validation, adjacency, refinement."""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateElement, TopologyError

__all__ = ["SurfaceMesh", "RefinementSpec", "refine", "euler_characteristic"]

AREA_TOL_FACTOR = 1e-12


class SurfaceMesh:
    """Immutable oriented triangle mesh embedded in R^3.

    Parameters
    ----------
    vertices : (V, 3) array_like
        Vertex positions.
    triangles : (F, 3) array_like
        Vertex index triples, counter-clockwise w.r.t. the outward
        orientation.  Inputs with consistent but inward orientation are
        flipped globally; orientable inputs with mixed orientation are
        repaired.
    area_tol_factor : float
        Triangles with area below ``area_tol_factor`` times the mean
        area raise :class:`DegenerateElement`.

    Raises
    ------
    TopologyError
        Non-manifold edge (shared by three or more triangles), repeated
        vertex inside a triangle, or a non-orientable surface.
    DegenerateElement
        Sliver triangle below the area threshold.
    """

    def __init__(self, vertices, triangles, area_tol_factor=AREA_TOL_FACTOR):
        v = np.ascontiguousarray(vertices, dtype=np.float64)
        t = np.ascontiguousarray(triangles, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3:
            raise TopologyError("vertices must be an (V, 3) array")
        if t.ndim != 2 or t.shape[1] != 3:
            raise TopologyError("triangles must be an (F, 3) array")
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise TopologyError("triangle index out of range")
        if np.any((t[:, 0] == t[:, 1]) | (t[:, 1] == t[:, 2]) | (t[:, 0] == t[:, 2])):
            raise TopologyError("triangle references a vertex twice")

        t = self._orient(t)
        self.vertices = v
        self.triangles = t
        self._build_edges()

        if self.is_closed and self.signed_volume() < 0.0:
            t = t[:, [0, 2, 1]].copy()
            self.triangles = t
            self._build_edges()

        areas = self.face_areas
        if len(areas) and areas.min() < area_tol_factor * areas.mean():
            raise DegenerateElement(
                f"minimum triangle area {areas.min():.3e} below threshold")

        self.vertices.flags.writeable = False
        self.triangles.flags.writeable = False
        self._vertex_tri_cache = None

    # -- construction helpers -------------------------------------------------

    @staticmethod
    def _directed_edges(t):
        return np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])

    @classmethod
    def _orient(cls, t):
        """Return a globally consistent orientation of `t` (repairing if needed)."""
        de = cls._directed_edges(t)
        und = np.sort(de, axis=1)
        _, inverse, counts = np.unique(und, axis=0, return_inverse=True,
                                       return_counts=True)
        if counts.max(initial=0) > 2:
            raise TopologyError("non-manifold edge shared by more than 2 triangles")
        # consistent orientation <=> no directed edge appears twice
        _, dcounts = np.unique(de, axis=0, return_counts=True)
        if dcounts.max(initial=0) <= 1:
            return t
        return cls._repair_orientation(t, inverse)

    @staticmethod
    def _repair_orientation(t, edge_ids):
        nf = len(t)
        face_idx = np.tile(np.arange(nf), 3)
        order = np.argsort(edge_ids, kind="stable")
        eids = edge_ids[order]
        fids = face_idx[order]
        neighbors = [[] for _ in range(nf)]
        i = 0
        while i < len(eids):
            j = i + 1
            if j < len(eids) and eids[j] == eids[i]:
                a, b = fids[i], fids[j]
                neighbors[a].append(b)
                neighbors[b].append(a)
                i += 2
            else:
                i += 1
        flip = np.zeros(nf, dtype=bool)
        seen = np.zeros(nf, dtype=bool)
        for start in range(nf):
            if seen[start]:
                continue
            seen[start] = True
            stack = [start]
            while stack:
                f = stack.pop()
                tf = t[f, [0, 2, 1]] if flip[f] else t[f]
                own = {(tf[0], tf[1]), (tf[1], tf[2]), (tf[2], tf[0])}
                for g in neighbors[f]:
                    tg = t[g, [0, 2, 1]] if flip[g] else t[g]
                    shared_same = {(tg[0], tg[1]), (tg[1], tg[2]), (tg[2], tg[0])} & own
                    if not seen[g]:
                        seen[g] = True
                        if shared_same:
                            flip[g] = True
                        stack.append(g)
                    elif shared_same:
                        raise TopologyError("surface is not orientable")
        out = t.copy()
        out[flip] = out[flip][:, [0, 2, 1]]
        # re-check: repaired mesh must now be consistent
        de = SurfaceMesh._directed_edges(out)
        _, dcounts = np.unique(de, axis=0, return_counts=True)
        if dcounts.max(initial=0) > 1:
            raise TopologyError("surface is not orientable")
        return out

    def _build_edges(self):
        t = self.triangles
        de = self._directed_edges(t)
        und = np.sort(de, axis=1)
        self.edges, inverse, counts = np.unique(
            und, axis=0, return_inverse=True, return_counts=True)
        self._edge_counts = counts
        # tri_edges[f, k] = edge index opposite corner k
        ne = len(t)
        inv = inverse.reshape(3, ne).T  # columns: edge (0,1), (1,2), (2,0)
        self.tri_edges = inv[:, [1, 2, 0]].copy()
        bnd = counts[inverse] == 1
        self.boundary_edges = de[bnd]

    # -- basic queries ---------------------------------------------------------

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def is_closed(self):
        return len(self.boundary_edges) == 0

    def euler_characteristic(self):
        """V - E + F."""
        return self.n_vertices - self.n_edges + self.n_triangles

    def signed_volume(self):
        v = self.vertices
        t = self.triangles
        return float(np.einsum("ij,ij->", v[t[:, 0]],
                               np.cross(v[t[:, 1]], v[t[:, 2]])) / 6.0)

    @property
    def corner_vectors(self):
        v = self.vertices
        t = self.triangles
        return v[t[:, 1]] - v[t[:, 0]], v[t[:, 2]] - v[t[:, 0]]

    @property
    def face_normals_raw(self):
        e1, e2 = self.corner_vectors
        return np.cross(e1, e2)

    @property
    def face_areas(self):
        return 0.5 * np.linalg.norm(self.face_normals_raw, axis=1)

    @property
    def face_normals(self):
        n = self.face_normals_raw
        return n / np.linalg.norm(n, axis=1, keepdims=True)

    @property
    def mean_edge_length(self):
        v = self.vertices
        e = self.edges
        return float(np.linalg.norm(v[e[:, 0]] - v[e[:, 1]], axis=1).mean())

    def vertex_triangles(self):
        """CSR-style (offsets, triangle_ids) adjacency, cached."""
        if self._vertex_tri_cache is None:
            t = self.triangles
            flat = t.T.ravel()
            order = np.argsort(flat, kind="stable")
            tri_ids = np.tile(np.arange(len(t)), 3)[order]
            counts = np.bincount(flat, minlength=self.n_vertices)
            offsets = np.concatenate([[0], np.cumsum(counts)])
            self._vertex_tri_cache = (offsets, tri_ids)
        return self._vertex_tri_cache

    def ordered_ring(self, v):
        """One-ring neighbors of vertex `v` in CCW order.

        Returns (ring, closed) where `ring` is a list of vertex ids and
        `closed` tells whether the ring is a full cycle (interior vertex).
        """
        offsets, tri_ids = self.vertex_triangles()
        succ = {}
        for f in tri_ids[offsets[v]:offsets[v + 1]]:
            a, b, c = self.triangles[f]
            if a == v:
                succ[b] = c
            elif b == v:
                succ[c] = a
            else:
                succ[a] = b
        if not succ:
            return [], False
        starts = set(succ) - set(succ.values())
        closed = not starts
        cur = next(iter(starts)) if starts else next(iter(succ))
        ring = [cur]
        while cur in succ:
            cur = succ[cur]
            if cur == ring[0]:
                return ring, True
            ring.append(cur)
        return ring, closed

    # -- export ---------------------------------------------------------------

    def __repr__(self):
        return (f"SurfaceMesh(V={self.n_vertices}, F={self.n_triangles}, "
                f"chi={self.euler_characteristic()})")


@dataclass(frozen=True)
class RefinementSpec:
    """Uniform 1-to-4 refinement; new vertices optionally snapped to a surface."""

    levels: int
    projection: object = None

    def __post_init__(self):
        if not 0 <= self.levels <= 10:
            raise ValueError("refinement levels must be in [0, 10]")


def refine(mesh, spec):
    """Apply `spec.levels` rounds of uniform midpoint subdivision.

    Each round adds one vertex per edge (V' = V + E) and splits every
    triangle into four.  If `spec.projection` is given, the new vertices are
    projected onto that surface along its level-set gradient.
    """
    out = mesh
    for _ in range(spec.levels):
        out = _refine_once(out, spec.projection)
    return out


def _refine_once(mesh, projection):
    v = mesh.vertices
    t = mesh.triangles
    mid = 0.5 * (v[mesh.edges[:, 0]] + v[mesh.edges[:, 1]])
    if projection is not None:
        mid = projection.project(mid)
    new_v = np.vstack([v, mid])
    m = mesh.tri_edges + mesh.n_vertices  # midpoint vertex opposite each corner
    v0, v1, v2 = t[:, 0], t[:, 1], t[:, 2]
    m0, m1, m2 = m[:, 0], m[:, 1], m[:, 2]
    new_t = np.concatenate([
        np.stack([v0, m2, m1], axis=1),
        np.stack([v1, m0, m2], axis=1),
        np.stack([v2, m1, m0], axis=1),
        np.stack([m0, m1, m2], axis=1),
    ])
    return SurfaceMesh(new_v, new_t)


def euler_characteristic(mesh):
    """V - E + F of a validated mesh."""
    return mesh.euler_characteristic()
