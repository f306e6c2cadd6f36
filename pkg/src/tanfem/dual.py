"""Forward-mode dual numbers with three ambient partials.

A :class:`Dual` carries a value and its partial derivatives with respect to
the Cartesian coordinates (x, y, z).  Components may be floats, numpy arrays
(vectorized evaluation over many points), or again ``Dual`` instances;
nesting levels yield exact higher ambient derivatives of any composite
expression built from the arithmetic below.
"""

import numpy as np

__all__ = ["Dual", "lift", "value", "sqrt", "sin", "cos", "exp"]


class Dual:
    __slots__ = ("val", "dx", "dy", "dz")

    def __init__(self, val, dx=0.0, dy=0.0, dz=0.0):
        self.val = val
        self.dx = dx
        self.dy = dy
        self.dz = dz

    def __repr__(self):
        return f"Dual({self.val!r}, {self.dx!r}, {self.dy!r}, {self.dz!r})"

    def __add__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val + other.val, self.dx + other.dx,
                        self.dy + other.dy, self.dz + other.dz)
        return Dual(self.val + other, self.dx, self.dy, self.dz)

    __radd__ = __add__

    def __neg__(self):
        return Dual(-self.val, -self.dx, -self.dy, -self.dz)

    def __sub__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val - other.val, self.dx - other.dx,
                        self.dy - other.dy, self.dz - other.dz)
        return Dual(self.val - other, self.dx, self.dy, self.dz)

    def __rsub__(self, other):
        return Dual(other - self.val, -self.dx, -self.dy, -self.dz)

    def __mul__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val * other.val,
                        self.dx * other.val + self.val * other.dx,
                        self.dy * other.val + self.val * other.dy,
                        self.dz * other.val + self.val * other.dz)
        return Dual(self.val * other, self.dx * other,
                    self.dy * other, self.dz * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            return self * other._reciprocal()
        return Dual(self.val / other, self.dx / other,
                    self.dy / other, self.dz / other)

    def __rtruediv__(self, other):
        return self._reciprocal() * other

    def _reciprocal(self):
        inv = 1.0 / self.val
        m = -(inv * inv)
        return Dual(inv, m * self.dx, m * self.dy, m * self.dz)

    def __pow__(self, n):
        if not isinstance(n, (int, np.integer)):
            raise TypeError("only integer powers are supported")
        if n < 0:
            return self._reciprocal() ** (-n)
        if n == 0:
            return Dual(np.ones_like(np.asarray(value(self), dtype=float)))
        out = self
        for _ in range(int(n) - 1):
            out = out * self
        return out


def lift(v, axis, depth=1):
    """Seed `v` as the coordinate along `axis`, nested `depth` times."""
    for _ in range(depth):
        parts = [0.0, 0.0, 0.0]
        parts[axis] = 1.0
        v = Dual(v, *parts)
    return v


def value(u):
    """Strip all derivative structure from `u`."""
    while isinstance(u, Dual):
        u = u.val
    return u


def sqrt(u):
    if isinstance(u, Dual):
        r = sqrt(u.val)
        half = 0.5 / r
        return Dual(r, half * u.dx, half * u.dy, half * u.dz)
    return np.sqrt(u)


def sin(u):
    if isinstance(u, Dual):
        c = cos(u.val)
        return Dual(sin(u.val), c * u.dx, c * u.dy, c * u.dz)
    return np.sin(u)


def cos(u):
    if isinstance(u, Dual):
        s = -sin(u.val)
        return Dual(cos(u.val), s * u.dx, s * u.dy, s * u.dz)
    return np.cos(u)


def exp(u):
    if isinstance(u, Dual):
        e = exp(u.val)
        return Dual(e, e * u.dx, e * u.dy, e * u.dz)
    return np.exp(u)
