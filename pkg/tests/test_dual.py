import numpy as np
from hypothesis import given, settings, strategies as st

from tanfem.dual import Dual, cos, exp, lift, sin, sqrt, value

finite = st.floats(-3.0, 3.0)


def _eval_grad(f, x, y, z):
    u = f(lift(x, 0), lift(y, 1), lift(z, 2))
    return u.val, np.array([u.dx, u.dy, u.dz], dtype=float)


def test_polynomial_gradient():
    f = lambda x, y, z: x * y * z + x**2 - 3.0 * z
    v, g = _eval_grad(f, 1.0, 2.0, -1.0)
    assert v == 1.0 * 2.0 * -1.0 + 1.0 + 3.0
    assert np.allclose(g, [2.0 * -1.0 + 2.0, -1.0, 2.0 - 3.0])


def test_quotient_and_sqrt():
    f = lambda x, y, z: sqrt(x * x + y * y + z * z) / (1.0 + x)
    v, g = _eval_grad(f, 1.0, 2.0, 2.0)
    r = 3.0
    assert abs(v - r / 2.0) < 1e-15
    assert abs(g[0] - (1.0 / r / 2.0 - r / 4.0)) < 1e-14


def test_second_derivatives_by_nesting():
    f = lambda x, y, z: x**3 * y + sin(z)
    u = f(lift(2.0, 0, depth=2), lift(0.5, 1, depth=2), lift(0.3, 2, depth=2))
    assert abs(value(u) - (8 * 0.5 + np.sin(0.3))) < 1e-15
    assert abs(u.dx.dx - 6 * 2.0 * 0.5) < 1e-14      # d2/dx2 = 6xy
    assert abs(u.dx.dy - 12.0) < 1e-14               # d2/dxdy = 3x^2
    assert abs(u.dz.dz + np.sin(0.3)) < 1e-14


def test_third_derivatives_by_triple_nesting():
    f = lambda x, y, z: x**2 * y * z
    u = f(lift(1.5, 0, depth=3), lift(2.0, 1, depth=3), lift(-1.0, 2, depth=3))
    assert abs(u.dx.dx.dy.val if isinstance(u.dx.dx.dy, Dual) else u.dx.dx.dy
               - 2 * -1.0) < 1e-14                    # d3/dx2dy = 2z


def test_vectorized_leaves():
    xs = np.linspace(-1, 1, 11)
    u = (lift(xs, 0) ** 2) * 3.0
    assert np.allclose(u.val, 3 * xs**2)
    assert np.allclose(u.dx, 6 * xs)


@given(finite, finite, finite)
@settings(max_examples=100, deadline=None)
def test_gradient_matches_finite_differences(x, y, z):
    f = lambda a, b, c: exp(0.3 * a) * cos(b) + a * a * c
    _, g = _eval_grad(f, x, y, z)
    h = 1e-6
    for k, dv in enumerate(np.eye(3)):
        fp = f(x + h * dv[0], y + h * dv[1], z + h * dv[2])
        fm = f(x - h * dv[0], y - h * dv[1], z - h * dv[2])
        assert abs(g[k] - (fp - fm) / (2 * h)) < 5e-5 * (1 + abs(g[k]))


def test_negative_power():
    f = lambda x, y, z: x ** (-2)
    v, g = _eval_grad(f, 2.0, 0.0, 0.0)
    assert abs(v - 0.25) < 1e-15
    assert abs(g[0] + 2.0 / 8.0) < 1e-15
