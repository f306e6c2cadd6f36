"""Analytic level-set surfaces and exact pointwise geometry.

A surface is described by a smooth level-set function ``phi`` written in
dual-capable arithmetic (see :mod:`tanfem.dual`), so every geometric
quantity below -- normal, projector, shape operator, curvatures -- is
available to machine precision at arbitrary ambient points, to any
derivative order the calling pipeline nests.
"""

import numpy as np

from .dual import lift, sqrt, value
from .errors import SingularGradient

__all__ = ["AnalyticSurface", "sphere", "ellipsoid", "level_set_surface",
           "ambient_gradient", "unit_normal", "projector", "shape_operator"]

_SINGULAR_GRAD = 1e-10


class AnalyticSurface:
    """Level-set surface {phi = 0} with nonvanishing gradient nearby.

    Parameters
    ----------
    phi : callable
        ``phi(x, y, z)`` accepting floats, numpy arrays, or duals.
    scale : float
        Characteristic diameter, used for projection tolerances and
        finite-difference step sizes in test oracles.
    kind : str
        One of ``sphere``, ``ellipsoid``, ``level_set``.
    """

    def __init__(self, phi, scale=1.0, kind="level_set", params=None):
        self.phi = phi
        self.scale = float(scale)
        self.kind = kind
        self.params = dict(params or {})

    def project(self, points, tol=1e-14, max_iter=60):
        """Project `points` (N, 3) onto the surface along the gradient flow."""
        x = np.array(points, dtype=np.float64, copy=True)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        ftol = tol * max(self.scale, 1.0) ** 2
        for _ in range(max_iter):
            f, g = ambient_gradient(self.phi, x)
            gg = np.einsum("ij,ij->i", g, g)
            if np.any(gg < _SINGULAR_GRAD**2):
                raise SingularGradient("level-set gradient vanished during projection")
            step = (f / gg)[:, None] * g
            x -= step
            if np.abs(f).max() < ftol:
                break
        f, _ = ambient_gradient(self.phi, x)
        if np.abs(f).max() >= 10 * ftol:
            raise SingularGradient("projection did not converge")
        return x[0] if single else x

    def __repr__(self):
        return f"AnalyticSurface(kind={self.kind!r}, params={self.params!r})"


def sphere(radius=1.0):
    r2 = float(radius) ** 2

    def phi(x, y, z):
        return x * x + y * y + z * z - r2

    return AnalyticSurface(phi, scale=2.0 * radius, kind="sphere",
                           params={"radius": float(radius)})


def ellipsoid(a, b, c):
    ia, ib, ic = 1.0 / a**2, 1.0 / b**2, 1.0 / c**2

    def phi(x, y, z):
        return x * x * ia + y * y * ib + z * z * ic - 1.0

    return AnalyticSurface(phi, scale=2.0 * max(a, b, c), kind="ellipsoid",
                           params={"a": float(a), "b": float(b), "c": float(c)})


def level_set_surface(phi, scale=1.0):
    return AnalyticSurface(phi, scale=scale, kind="level_set")


# -- pointwise geometry in dual-capable arithmetic -----------------------------
#
# The helpers below take coordinates (x, y, z) that may themselves carry dual
# structure; each seeds one extra dual level for the derivative it needs, so
# nesting composes transparently.

def _coords(points):
    p = np.asarray(points, dtype=np.float64)
    return p[..., 0], p[..., 1], p[..., 2]


def grad3(f, x, y, z):
    """Value and ambient gradient of scalar `f` at dual-capable coordinates."""
    u = f(lift(x, 0), lift(y, 1), lift(z, 2))
    return u.val, [u.dx, u.dy, u.dz]


def ambient_gradient(phi, points):
    """Vectorized (values, gradients) of `phi` at plain (N, 3) points."""
    x, y, z = _coords(points)
    v, g = grad3(phi, x, y, z)
    return np.asarray(v), np.stack([np.asarray(gi) for gi in g], axis=-1)


def unit_normal(surface, x, y, z):
    """Outward unit normal nu = grad(phi)/|grad(phi)| as a length-3 list."""
    _, g = grad3(surface.phi, x, y, z)
    n2 = g[0] * g[0] + g[1] * g[1] + g[2] * g[2]
    if np.any(value(n2) < _SINGULAR_GRAD**2):
        raise SingularGradient("level-set gradient below tolerance")
    inv = 1.0 / sqrt(n2)
    return [g[0] * inv, g[1] * inv, g[2] * inv]


def projector(nu):
    """Tangential projector I - nu (x) nu as a 3x3 nested list."""
    out = [[None] * 3 for _ in range(3)]
    for i in range(3):
        for j in range(3):
            p = -(nu[i] * nu[j])
            out[i][j] = p + 1.0 if i == j else p
    return out


def shape_operator(surface, x, y, z):
    """(nu, Pi, B) with B = -sym(Pi (grad nu) Pi); B nu = 0, B = B^T."""
    comps = unit_normal(surface, lift(x, 0), lift(y, 1), lift(z, 2))
    nu = [c.val for c in comps]
    jac = [[c.dx, c.dy, c.dz] for c in comps]  # jac[i][j] = d_j nu_i
    pi = projector(nu)
    pj = _mat_mul(pi, _mat_mul(jac, pi))
    b = [[-0.5 * (pj[i][j] + pj[j][i]) for j in range(3)] for i in range(3)]
    return nu, pi, b


def curvatures(b):
    """Mean curvature H = tr B and Gaussian K = (H^2 - |B|^2)/2."""
    h = b[0][0] + b[1][1] + b[2][2]
    frob = 0.0
    for i in range(3):
        for j in range(3):
            frob = frob + b[i][j] * b[i][j]
    return h, (h * h - frob) * 0.5


def _mat_mul(a, b):
    out = [[None] * 3 for _ in range(3)]
    for i in range(3):
        for j in range(3):
            s = a[i][0] * b[0][j]
            for k in (1, 2):
                s = s + a[i][k] * b[k][j]
            out[i][j] = s
    return out


def random_surface_points(surface, n, seed, box=None):
    """Deterministic points on the surface: project uniform box samples."""
    rng = np.random.default_rng(seed)
    half = box if box is not None else surface.scale
    for _ in range(40):
        raw = rng.uniform(-half, half, size=(4 * n, 3))
        try:
            pts = surface.project(raw)
        except SingularGradient:
            continue
        keep = np.isfinite(pts).all(axis=1)
        pts = pts[keep]
        if len(pts) >= n:
            return pts[:n]
    raise SingularGradient("could not sample surface points")
