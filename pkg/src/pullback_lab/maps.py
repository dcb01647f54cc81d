"""Smooth maps between chart manifolds and the verification map catalog."""
from __future__ import annotations

from typing import Callable, Optional

import numpy as np

from . import differentiation as fd
from .errors import MapDescriptorError
from .geometry import ChartManifold, product_with_interval


class SmoothMap:
    """f: source → target in chart coordinates.

    ``differential`` returns the Jacobian ∂f^j/∂x^i with shape (N, n, m); when
    absent a 4th-order central difference of ``value`` is used (set
    ``allow_fd=False`` to forbid that).
    """

    def __init__(self, source: ChartManifold, target: ChartManifold, value: Callable,
                 differential: Optional[Callable] = None, lipschitz_hint=None, proper_hint=None,
                 name="map", allow_fd=True, inverse: Optional[Callable] = None):
        self.source = source
        self.target = target
        self.value = value
        self.differential = differential
        self.lipschitz_hint = lipschitz_hint
        self.proper_hint = proper_hint
        self.name = name
        self.allow_fd = allow_fd
        self.inverse = inverse

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        y = np.asarray(self.value(np.atleast_2d(x)), dtype=float).reshape(-1, self.target.dim)
        return y[0] if single else y

    def raw_jacobian_fd(self, x, h=None):
        h = self.source.step if h is None else h
        return fd.jacobian(lambda z: self.value(z), np.atleast_2d(x), h=h)

    def jacobian(self, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        x2 = np.atleast_2d(x)
        if self.differential is not None:
            J = np.asarray(self.differential(x2), dtype=float).reshape(x2.shape[0], self.target.dim, self.source.dim)
        elif self.allow_fd:
            J = self.raw_jacobian_fd(x2)
        else:
            raise MapDescriptorError(f"{self.name}: no differential available")
        return J[0] if single else J

    def check_differential(self, samples, h=None):
        """Max discrepancy between the supplied differential and a finite-difference Jacobian."""
        if self.differential is None:
            raise MapDescriptorError(f"{self.name}: no differential supplied")
        x = np.atleast_2d(samples)
        return float(np.max(np.abs(self.jacobian(x) - self.raw_jacobian_fd(x, h))))

    def compose(self, inner: "SmoothMap") -> "SmoothMap":
        """self ∘ inner."""
        def value(x):
            return self.value(inner.value(x))

        def diff(x):
            return np.einsum("nij,njk->nik", self.jacobian(inner(x)), inner.jacobian(x))
        return SmoothMap(inner.source, self.target, value, diff, name=f"{self.name}∘{inner.name}")

    def __repr__(self):
        return f"SmoothMap({self.name}: {self.source.name} -> {self.target.name})"


class HomotopyMap(SmoothMap):
    """A smooth map on base × [0,1] (t is the last source coordinate)."""

    def __init__(self, base: ChartManifold, target: ChartManifold, value, differential=None,
                 name="homotopy", product=None):
        super().__init__(product or product_with_interval(base), target, value, differential, name=name)
        self.base = base

    def slice(self, t):
        t = float(t)
        d = self.base.dim

        def value(x):
            x = np.atleast_2d(x)
            return self.value(np.column_stack([x, np.full(x.shape[0], t)]))

        def diff(x):
            x = np.atleast_2d(x)
            return self.jacobian(np.column_stack([x, np.full(x.shape[0], t)]))[:, :, :d]
        return SmoothMap(self.base, self.target, value, diff, name=f"{self.name}|t={t:g}")


# ------------------------------------------------------------------ catalog

def identity(M: ChartManifold):
    d = M.dim
    return SmoothMap(M, M, lambda x: np.array(x, dtype=float, copy=True),
                     lambda x: np.broadcast_to(np.eye(d), (np.atleast_2d(x).shape[0], d, d)).copy(),
                     lipschitz_hint=1.0, proper_hint=1.0, name="identity", inverse=lambda y: y)


def translation(M: ChartManifold, shift):
    shift = np.asarray(shift, dtype=float)
    d = M.dim
    return SmoothMap(M, M, lambda x: x + shift,
                     lambda x: np.broadcast_to(np.eye(d), (np.atleast_2d(x).shape[0], d, d)).copy(),
                     lipschitz_hint=1.0, proper_hint=1.0, name=f"translation{tuple(float(v) for v in shift)}",
                     inverse=lambda y: y - shift)


def linear(M: ChartManifold, A, N: Optional[ChartManifold] = None, offset=None):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.zeros(A.shape[0]) if offset is None else np.asarray(offset, dtype=float)
    N = M if N is None else N
    inv = None
    if A.shape[0] == A.shape[1] and abs(np.linalg.det(A)) > 0:
        Ainv = np.linalg.inv(A)
        inv = lambda y: (np.atleast_2d(y) - b) @ Ainv.T  # noqa: E731
    sv = np.linalg.svd(A, compute_uv=False)
    return SmoothMap(M, N, lambda x: x @ A.T + b,
                     lambda x: np.broadcast_to(A, (np.atleast_2d(x).shape[0],) + A.shape).copy(),
                     lipschitz_hint=float(sv.max()), proper_hint=float(1 / sv.min()) if sv.min() > 0 else None,
                     name="linear", inverse=inv)


def rotation90(M: ChartManifold):
    """(x, y) ↦ (−y, x) on the square torus: an orientation-preserving isometry."""
    return linear(M, [[0.0, -1.0], [1.0, 0.0]])


def shear(M: ChartManifold, amplitude=0.1):
    """(x, y) ↦ (x + a sin 2πy, y) on T²."""
    a = float(amplitude)

    def value(x):
        x = np.atleast_2d(x)
        return np.column_stack([x[:, 0] + a * np.sin(2 * np.pi * x[:, 1]), x[:, 1]])

    def diff(x):
        x = np.atleast_2d(x)
        J = np.zeros((x.shape[0], 2, 2))
        J[:, 0, 0] = 1.0
        J[:, 0, 1] = 2 * np.pi * a * np.cos(2 * np.pi * x[:, 1])
        J[:, 1, 1] = 1.0
        return J
    return SmoothMap(M, M, value, diff, lipschitz_hint=1 + 2 * np.pi * a, proper_hint=1.0, name="shear")


def circle_degree1(M: ChartManifold, amplitude=0.2):
    """x ↦ x + a sin 2πx on T¹ (a diffeomorphism for |a| < 1/(2π))."""
    a = float(amplitude)
    return SmoothMap(M, M, lambda x: x + a * np.sin(2 * np.pi * x),
                     lambda x: (1 + 2 * np.pi * a * np.cos(2 * np.pi * np.atleast_2d(x)))[:, :, None],
                     lipschitz_hint=1 + 2 * np.pi * abs(a), name="circle_degree1")


def theta_shear(M: ChartManifold, N: ChartManifold, amplitude=0.1):
    """(θ, φ) ↦ (θ + a sin φ, φ) between sphere charts."""
    a = float(amplitude)

    def value(x):
        x = np.atleast_2d(x)
        return np.column_stack([x[:, 0] + a * np.sin(x[:, 1]), x[:, 1]])

    def diff(x):
        x = np.atleast_2d(x)
        J = np.zeros((x.shape[0], 2, 2))
        J[:, 0, 0] = 1.0
        J[:, 0, 1] = a * np.cos(x[:, 1])
        J[:, 1, 1] = 1.0
        return J
    return SmoothMap(M, N, value, diff, name="theta_shear")


def constant_map(M: ChartManifold, N: ChartManifold, point):
    point = np.asarray(point, dtype=float)
    return SmoothMap(M, N, lambda x: np.broadcast_to(point, (np.atleast_2d(x).shape[0], N.dim)).copy(),
                     lambda x: np.zeros((np.atleast_2d(x).shape[0], N.dim, M.dim)), name="constant")


def straight_line_homotopy(f0: SmoothMap, f1: SmoothMap):
    """H(x, t) = (1 − t) f0(x) + t f1(x), valid on flat charts."""
    M, N = f0.source, f0.target
    d = M.dim

    def value(z):
        x, t = z[:, :d], z[:, d:]
        return (1 - t) * f0(x) + t * f1(x)

    def diff(z):
        x, t = z[:, :d], z[:, d:, None]
        J = np.zeros((z.shape[0], N.dim, d + 1))
        J[:, :, :d] = (1 - t) * f0.jacobian(x) + t * f1.jacobian(x)
        J[:, :, d] = f1(x) - f0(x)
        return J
    return HomotopyMap(M, N, value, diff, name=f"line({f0.name},{f1.name})")
