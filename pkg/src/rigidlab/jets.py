"""Second-order jets of maps from a 2-D chart into R^n.

:class:`Jet2` stores a batch of jets.  :class:`Dual2` is a tiny forward-mode
automatic differentiation number carrying value, gradient and Hessian of a
scalar with respect to the two chart coordinates; catalog surfaces are written
with it so their jets are exact.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Jet2:
    """Batch of 2-jets: ``position`` (..., n), ``d1`` (..., 2, n), ``d2`` (..., 3, n).

    ``d2`` holds the derivatives in the order (11, 12, 22).
    """

    position: np.ndarray
    d1: np.ndarray
    d2: np.ndarray

    @property
    def dim(self) -> int:
        return self.position.shape[-1]

    @property
    def shape(self) -> tuple:
        return self.position.shape[:-1]

    def reshape(self, *shape) -> "Jet2":
        n = self.dim
        return Jet2(self.position.reshape(*shape, n), self.d1.reshape(*shape, 2, n),
                    self.d2.reshape(*shape, 3, n))

    def flat(self) -> "Jet2":
        return self.reshape(-1)

    def __getitem__(self, idx) -> "Jet2":
        return Jet2(self.position[idx], self.d1[idx], self.d2[idx])

    def __sub__(self, other: "Jet2") -> "Jet2":
        return Jet2(self.position - other.position, self.d1 - other.d1, self.d2 - other.d2)

    def scaled(self, lam: float) -> "Jet2":
        return Jet2(lam * self.position, lam * self.d1, lam * self.d2)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.position)) and np.all(np.isfinite(self.d1))
                    and np.all(np.isfinite(self.d2)))

    @staticmethod
    def concatenate(jets) -> "Jet2":
        jets = [j.flat() for j in jets]
        return Jet2(np.concatenate([j.position for j in jets]), np.concatenate([j.d1 for j in jets]),
                    np.concatenate([j.d2 for j in jets]))


def holomorphic_pullback(jet: Jet2, dphi, d2phi) -> Jet2:
    """Jets of ``f o phi`` from jets of ``f`` at ``phi(xi)``.

    ``phi`` is holomorphic in the complex chart coordinate, so its real Jacobian
    is a rotation-dilation; ``dphi`` and ``d2phi`` are complex arrays of
    phi'(xi) and phi''(xi) broadcasting against the jet batch shape.
    """
    a = np.real(dphi)[..., None]
    b = np.imag(dphi)[..., None]
    p = np.real(d2phi)[..., None]
    q = np.imag(d2phi)[..., None]
    f1, f2 = jet.d1[..., 0, :], jet.d1[..., 1, :]
    f11, f12, f22 = jet.d2[..., 0, :], jet.d2[..., 1, :], jet.d2[..., 2, :]
    g1 = a * f1 + b * f2
    g2 = -b * f1 + a * f2
    g11 = a * a * f11 + 2 * a * b * f12 + b * b * f22 + p * f1 + q * f2
    g12 = -a * b * f11 + (a * a - b * b) * f12 + a * b * f22 - q * f1 + p * f2
    g22 = b * b * f11 - 2 * a * b * f12 + a * a * f22 - p * f1 - q * f2
    return Jet2(jet.position, np.stack([g1, g2], axis=-2), np.stack([g11, g12, g22], axis=-2))


class Dual2:
    """Scalar with exact gradient and Hessian in two variables (vectorised).

    ``v`` has the batch shape, ``d`` is (2, ...) and ``h`` is (3, ...) in the
    order (xx, xy, yy).
    """

    __slots__ = ("v", "d", "h")
    __array_priority__ = 1000

    def __init__(self, v, d, h):
        self.v = v
        self.d = d
        self.h = h

    @staticmethod
    def variables(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        z, o = np.zeros_like(x), np.ones_like(x)
        zz = np.zeros((3,) + x.shape)
        return (Dual2(x, np.stack([o, z]), zz), Dual2(y, np.stack([z, o]), zz.copy()))

    @staticmethod
    def const(c, like: "Dual2"):
        v = np.broadcast_to(np.asarray(c, dtype=float), like.v.shape).copy()
        return Dual2(v, np.zeros_like(like.d), np.zeros_like(like.h))

    def _lift(self, o):
        return o if isinstance(o, Dual2) else Dual2.const(o, self)

    def __add__(self, o):
        if not isinstance(o, Dual2):
            return Dual2(self.v + o, self.d, self.h)
        return Dual2(self.v + o.v, self.d + o.d, self.h + o.h)

    __radd__ = __add__

    def __neg__(self):
        return Dual2(-self.v, -self.d, -self.h)

    def __sub__(self, o):
        return self + (-o)

    def __rsub__(self, o):
        return (-self) + o

    def __mul__(self, o):
        if not isinstance(o, Dual2):
            return Dual2(self.v * o, self.d * o, self.h * o)
        fx, fy = self.d
        gx, gy = o.d
        h = np.stack([
            self.h[0] * o.v + 2 * fx * gx + self.v * o.h[0],
            self.h[1] * o.v + fx * gy + fy * gx + self.v * o.h[1],
            self.h[2] * o.v + 2 * fy * gy + self.v * o.h[2],
        ])
        return Dual2(self.v * o.v, self.d * o.v + self.v * o.d, h)

    __rmul__ = __mul__

    def __truediv__(self, o):
        if not isinstance(o, Dual2):
            return self * (1.0 / o)
        return self * o.reciprocal()

    def __rtruediv__(self, o):
        return self.reciprocal() * o

    def __pow__(self, k: int):
        k = int(k)
        if k == 0:
            return Dual2.const(1.0, self)
        if k < 0:
            return (self ** (-k)).reciprocal()
        out = self
        for _ in range(k - 1):
            out = out * self
        return out

    def _chain(self, f0, f1, f2):
        fx, fy = self.d
        h = np.stack([
            f2 * fx * fx + f1 * self.h[0],
            f2 * fx * fy + f1 * self.h[1],
            f2 * fy * fy + f1 * self.h[2],
        ])
        return Dual2(f0, f1 * self.d, h)

    def reciprocal(self):
        r = 1.0 / self.v
        return self._chain(r, -r * r, 2 * r * r * r)

    def sqrt(self):
        s = np.sqrt(self.v)
        return self._chain(s, 0.5 / s, -0.25 / (s * self.v))

    def exp(self):
        e = np.exp(self.v)
        return self._chain(e, e, e)

    def log(self):
        r = 1.0 / self.v
        return self._chain(np.log(self.v), r, -r * r)

    def sin(self):
        s, c = np.sin(self.v), np.cos(self.v)
        return self._chain(s, c, -s)

    def cos(self):
        s, c = np.sin(self.v), np.cos(self.v)
        return self._chain(c, -s, -c)

    def sinh(self):
        s, c = np.sinh(self.v), np.cosh(self.v)
        return self._chain(s, c, s)

    def cosh(self):
        s, c = np.sinh(self.v), np.cosh(self.v)
        return self._chain(c, s, c)

    def tanh(self):
        t = np.tanh(self.v)
        s2 = 1.0 - t * t
        return self._chain(t, s2, -2.0 * t * s2)


def jet_from_duals(components) -> Jet2:
    """Assemble a :class:`Jet2` from a sequence of ``Dual2`` coordinate functions."""
    pos = np.stack([c.v for c in components], axis=-1)
    d1 = np.stack([np.moveaxis(c.d, 0, -1) for c in components], axis=-1)
    d2 = np.stack([np.moveaxis(c.h, 0, -1) for c in components], axis=-1)
    return Jet2(pos, d1, d2)
