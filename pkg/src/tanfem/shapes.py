"""Built-in test meshes: platonic seeds, icospheres, torus, disk, patch, blob."""

import numpy as np

from . import dual
from .mesh import RefinementSpec, SurfaceMesh, refine
from .surfaces import AnalyticSurface, sphere

__all__ = ["octahedron", "icosahedron", "icosphere", "torus_mesh",
           "disk_mesh", "square_patch", "blob_surface", "blob_mesh"]


def octahedron(radius=1.0):
    v = radius * np.array([
        [1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1],
    ], dtype=float)
    t = np.array([
        [0, 2, 4], [2, 1, 4], [1, 3, 4], [3, 0, 4],
        [2, 0, 5], [1, 2, 5], [3, 1, 5], [0, 3, 5],
    ])
    return SurfaceMesh(v, t)


def icosahedron(radius=1.0):
    p = (1.0 + np.sqrt(5.0)) / 2.0
    v = np.array([
        [-1, p, 0], [1, p, 0], [-1, -p, 0], [1, -p, 0],
        [0, -1, p], [0, 1, p], [0, -1, -p], [0, 1, -p],
        [p, 0, -1], [p, 0, 1], [-p, 0, -1], [-p, 0, 1],
    ], dtype=float)
    v *= radius / np.linalg.norm(v[0])
    t = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ])
    return SurfaceMesh(v, t)


def icosphere(level, surface=None, radius=1.0):
    """Icosahedron refined ``level`` times, snapped to `surface`.

    Vertex counts: 12, 42, 162, 642, 2562, 10242, 40962, ...  The default
    target is the sphere of the given radius; pass an ellipsoid (or any
    level-set surface) to mesh that instead.
    """
    target = surface if surface is not None else sphere(radius)
    base = icosahedron()
    base = SurfaceMesh(target.project(base.vertices), base.triangles)
    return refine(base, RefinementSpec(levels=level, projection=target))


def torus_mesh(n_major=16, n_minor=16, r_major=1.0, r_minor=0.4):
    """Structured torus grid split into triangles (genus 1)."""
    iu, iv = np.meshgrid(np.arange(n_major), np.arange(n_minor), indexing="ij")
    u = 2 * np.pi * iu / n_major
    v = 2 * np.pi * iv / n_minor
    x = (r_major + r_minor * np.cos(v)) * np.cos(u)
    y = (r_major + r_minor * np.cos(v)) * np.sin(u)
    z = r_minor * np.sin(v)
    verts = np.stack([x.ravel(), y.ravel(), z.ravel()], axis=1)

    def vid(i, j):
        return (i % n_major) * n_minor + (j % n_minor)

    tris = []
    for i in range(n_major):
        for j in range(n_minor):
            a, b, c, d = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
            tris.append([a, b, c])
            tris.append([a, c, d])
    return SurfaceMesh(verts, np.array(tris))


def disk_mesh(n_rings=4, n_sectors=12, radius=1.0):
    """Flat triangulated disk in the z=0 plane (boundary at r=radius)."""
    verts = [[0.0, 0.0, 0.0]]
    for r in range(1, n_rings + 1):
        rho = radius * r / n_rings
        for s in range(n_sectors):
            a = 2 * np.pi * s / n_sectors
            verts.append([rho * np.cos(a), rho * np.sin(a), 0.0])

    def vid(r, s):
        return 0 if r == 0 else 1 + (r - 1) * n_sectors + (s % n_sectors)

    tris = []
    for s in range(n_sectors):
        tris.append([0, vid(1, s), vid(1, s + 1)])
    for r in range(1, n_rings):
        for s in range(n_sectors):
            a, b = vid(r, s), vid(r, s + 1)
            c, d = vid(r + 1, s), vid(r + 1, s + 1)
            tris.append([a, c, d])
            tris.append([a, d, b])
    return SurfaceMesh(np.array(verts), np.array(tris))


def square_patch(n=8, size=1.0):
    """Flat unit-square patch in the z=0 plane, (n+1)^2 vertices."""
    g = np.linspace(0.0, size, n + 1)
    xx, yy = np.meshgrid(g, g, indexing="ij")
    verts = np.stack([xx.ravel(), yy.ravel(), np.zeros(xx.size)], axis=1)

    def vid(i, j):
        return i * (n + 1) + j

    tris = []
    for i in range(n):
        for j in range(n):
            a, b, c, d = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
            tris.append([a, b, c])
            tris.append([a, c, d])
    return SurfaceMesh(verts, np.array(tris))


def blob_surface():
    """Smooth genus-0 star-shaped surface, a deformed unit sphere.

    Level set r - rho(direction) = 0 with a fixed low-order angular
    modulation; stands in for organic closed test geometries.
    """

    def phi(x, y, z):
        r2 = x * x + y * y + z * z
        r = dual.sqrt(r2)
        # direction-dependent radius, smooth away from the origin
        s = (0.15 * (x * z + y * y * 0.5) + 0.1 * x * y * z) / r2
        return r - 1.0 - s * r

    return AnalyticSurface(phi, scale=2.6, kind="level_set")


def blob_mesh(level=4):
    """Genus-0 blob mesh (see :func:`blob_surface`)."""
    return icosphere(level, surface=blob_surface())
