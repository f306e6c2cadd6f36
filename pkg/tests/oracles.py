"""Independent numerical oracles used by the test suite.

Everything here deliberately avoids the package's Cartesian covariant
derivative formulas: the chart oracle works in local Monge-patch
coordinates with finite differences, and the curvature oracles are
closed-form expressions and brute-force quadrature.
"""

import numpy as np

from tanfem.surfaces import ambient_gradient


def _orthonormal_frame(nu):
    k = np.argmin(np.abs(nu))
    e1 = np.zeros(3)
    e1[k] = 1.0
    e1 = e1 - np.dot(e1, nu) * nu
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(nu, e1)
    return e1, e2


def _solve_heights(surface, x0, e1, e2, nu, uv, tol_scale=1e-15):
    """Newton for w(u, v) with phi(x0 + u e1 + v e2 + w nu) = 0 (vectorized)."""
    base = x0[None, :] + np.outer(uv[:, 0], e1) + np.outer(uv[:, 1], e2)
    w = np.zeros(len(uv))
    tol = tol_scale * max(surface.scale, 1.0) ** 2
    for _ in range(80):
        pts = base + np.outer(w, nu)
        f, grad = ambient_gradient(surface.phi, pts)
        dfdw = grad @ nu
        w = w - f / dfdw
        if np.abs(f).max() < tol:
            break
    return w


def chart_covariant_gradient(surface, tensor_fn, degree, x0, step=None):
    """Covariant gradient of a tangential surface tensor via a Monge chart.

    Central differences at two step sizes with Richardson extrapolation;
    see :func:`_chart_gradient_single` for the chart construction.
    """
    h = step if step is not None else 1e-4 * surface.scale
    coarse = _chart_gradient_single(surface, tensor_fn, degree, x0, 2 * h)
    fine = _chart_gradient_single(surface, tensor_fn, degree, x0, h)
    return (4.0 * fine - coarse) / 3.0


def _chart_gradient_single(surface, tensor_fn, degree, x0, h):
    """Single-step chart oracle.

    `tensor_fn(points)` must return the Cartesian components of the
    tangential field at on-surface points, shape ``(N,) + (3,)*degree``.
    The chart is aligned with the tangent plane at `x0`, where the metric
    is the identity and the Christoffel symbols vanish, so the covariant
    derivative reduces to plain difference quotients of the local
    covariant components against the moving chart basis.

    Returns Cartesian components of shape ``(3,)*(degree+1)`` with the
    derivative in the last slot.
    """
    x0 = np.asarray(x0, dtype=float)
    _, g0 = ambient_gradient(surface.phi, x0[None, :])
    nu = g0[0] / np.linalg.norm(g0[0])
    e1, e2 = _orthonormal_frame(nu)

    # stencil: +-h along each chart axis, with the extra points needed for
    # the first derivatives of the height function at those locations
    uv = np.array([
        (0.0, 0.0),
        (h, 0.0), (-h, 0.0), (0.0, h), (0.0, -h),
        (2 * h, 0.0), (-2 * h, 0.0), (0.0, 2 * h), (0.0, -2 * h),
        (h, h), (h, -h), (-h, h), (-h, -h),
    ])
    w = _solve_heights(surface, x0, e1, e2, nu, uv)
    pts = (x0[None, :] + np.outer(uv[:, 0], e1) + np.outer(uv[:, 1], e2)
           + np.outer(w, nu))
    tvals = np.asarray(tensor_fn(pts))

    idx = {tuple(np.round(p / h).astype(int)): i for i, p in enumerate(uv)}

    def w_grad(iu, iv):
        wu = (w[idx[(iu + 1, iv)]] - w[idx[(iu - 1, iv)]]) / (2 * h)
        wv = (w[idx[(iu, iv + 1)]] - w[idx[(iu, iv - 1)]]) / (2 * h)
        return wu, wv

    def local_components(iu, iv):
        i = idx[(iu, iv)]
        wu, wv = w_grad(iu, iv)
        basis = np.stack([e1 + wu * nu, e2 + wv * nu])   # (2, 3)
        t = tvals[i]
        for _slot in range(degree):
            t = np.tensordot(basis, t, axes=(1, 0))
            t = np.moveaxis(t, 0, degree - 1)
        return t                                        # shape (2,)*degree

    out = np.zeros((2,) * degree + (2,))
    for k, (du, dv) in enumerate(((1, 0), (0, 1))):
        plus = local_components(du, dv)
        minus = local_components(-du, -dv)
        out[..., k] = (plus - minus) / (2 * h)

    frame = np.stack([e1, e2])                           # (2, 3)
    cart = out
    for _slot in range(degree + 1):
        cart = np.tensordot(cart, frame, axes=(0, 0))
    return cart


def ellipsoid_gauss_curvature(a, b, c, pts):
    """Closed-form Gaussian curvature of an axis-aligned ellipsoid."""
    p2 = (pts[:, 0]**2 / a**4 + pts[:, 1]**2 / b**4 + pts[:, 2]**2 / c**4)
    return 1.0 / (a**2 * b**2 * c**2 * p2**2)


def sphere_patch_integral(fn, n_theta=400, n_phi=800, radius=1.0):
    """Brute-force integral of fn(x, y, z) over the sphere by quadrature."""
    theta = (np.arange(n_theta) + 0.5) * np.pi / n_theta
    phi = (np.arange(n_phi) + 0.5) * 2 * np.pi / n_phi
    tt, pp = np.meshgrid(theta, phi, indexing="ij")
    x = radius * np.sin(tt) * np.cos(pp)
    y = radius * np.sin(tt) * np.sin(pp)
    z = radius * np.cos(tt)
    vals = fn(x, y, z)
    dA = radius**2 * np.sin(tt) * (np.pi / n_theta) * (2 * np.pi / n_phi)
    return float(np.sum(vals * dA))
