"""Quadrature rules: tensor Gauss–Legendre, periodic trapezoid, Monte Carlo, balls."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import CoverageError


@lru_cache(maxsize=None)
def gauss_legendre(n):
    x, w = np.polynomial.legendre.leggauss(int(n))
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_interval(n, a=0.0, b=1.0):
    x, w = gauss_legendre(n)
    return 0.5 * (b - a) * x + 0.5 * (b + a), 0.5 * (b - a) * w


def tensor_rule(rules):
    """Tensor product of 1-D (nodes, weights) pairs."""
    grids = np.meshgrid(*[r[0] for r in rules], indexing="ij")
    wgrid = np.meshgrid(*[r[1] for r in rules], indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    w = np.prod(np.stack([g.ravel() for g in wgrid], axis=1), axis=1)
    return pts, w


@dataclass(frozen=True, eq=False)
class QuadratureGrid:
    """Quadrature over a window of a chart manifold.

    scheme: "gauss" (tensor Gauss–Legendre, ``orders`` per axis), "trapezoid"
    (uniform nodes, spectrally accurate on periodic axes) or "montecarlo"
    (``samples`` uniform points from a Philox stream keyed by ``seed``).
    Weights are chart-measure weights; metric factors are applied by callers.
    """

    base: object
    lower: tuple
    upper: tuple
    scheme: str = "gauss"
    orders: tuple = (16,)
    samples: int = 4096
    seed: int = 0

    def nodes(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        d = lo.size
        orders = tuple(self.orders) * d if len(self.orders) == 1 else tuple(self.orders)
        if self.scheme == "gauss":
            return tensor_rule([gauss_interval(n, a, b) for n, a, b in zip(orders, lo, hi)])
        if self.scheme == "trapezoid":
            rules = []
            for n, a, b in zip(orders, lo, hi):
                rules.append((a + (b - a) * np.arange(n) / n, np.full(n, (b - a) / n)))
            return tensor_rule(rules)
        if self.scheme == "montecarlo":
            rng = np.random.Generator(np.random.Philox(key=int(self.seed)))
            u = rng.random((int(self.samples), d))
            vol = float(np.prod(hi - lo))
            return lo + u * (hi - lo), np.full(int(self.samples), vol / int(self.samples))
        raise ValueError(f"unknown quadrature scheme {self.scheme!r}")

    def covers(self, box):
        lo, hi = box
        return bool(np.all(np.asarray(self.lower) <= np.asarray(lo) + 1e-12)
                    and np.all(np.asarray(self.upper) >= np.asarray(hi) - 1e-12))

    def require_cover(self, box):
        if box is not None and not self.covers(box):
            raise CoverageError(f"quadrature window [{self.lower}, {self.upper}] misses declared support {box}")


def window_grid(M, scheme="gauss", orders=(16,), **kw):
    """Grid over the whole chart box of M."""
    return QuadratureGrid(M, tuple(M.lower), tuple(M.upper), scheme=scheme, orders=tuple(orders), **kw)


def periodic_grid(M, n=16):
    return window_grid(M, scheme="trapezoid", orders=(n,))


def edge_radial_rule(n):
    """Gauss–Legendre in u with r = 1 − (1 − u)², clustering nodes at r = 1.

    Integrands supported in the ball that flatten to all orders at the edge
    (bump profiles) converge much faster in u than in r.
    """
    u, wu = gauss_interval(n, 0.0, 1.0)
    return 1.0 - (1.0 - u) ** 2, 2.0 * (1.0 - u) * wu


@lru_cache(maxsize=None)
def unit_ball_rule(dim, n_radial=24, n_angular=48):
    """Nodes and weights on the closed unit ball of R^dim (dim in {1, 2, 3}).

    Radial nodes follow ``edge_radial_rule``. dim 1: ± radial nodes.
    dim 2: radial × uniform angles. dim 3: radial × Gauss in cos(polar) ×
    uniform azimuth.
    """
    if dim == 1:
        r, wr = edge_radial_rule(n_radial)
        pts = np.concatenate([-r[::-1], r])[:, None]
        wts = np.concatenate([wr[::-1], wr])
    elif dim == 2:
        r, wr = edge_radial_rule(n_radial)
        th = 2 * np.pi * np.arange(n_angular) / n_angular
        R, TH = np.meshgrid(r, th, indexing="ij")
        W = np.outer(wr * r, np.full(n_angular, 2 * np.pi / n_angular))
        pts = np.stack([(R * np.cos(TH)).ravel(), (R * np.sin(TH)).ravel()], axis=1)
        wts = W.ravel()
    elif dim == 3:
        r, wr = edge_radial_rule(n_radial)
        ct, wc = gauss_legendre(max(n_angular // 2, 2))
        ph = 2 * np.pi * np.arange(n_angular) / n_angular
        R, C, P = np.meshgrid(r, ct, ph, indexing="ij")
        W = (wr * r ** 2)[:, None, None] * wc[None, :, None] * (2 * np.pi / n_angular)
        S = np.sqrt(1 - C ** 2)
        pts = np.stack([(R * S * np.cos(P)).ravel(), (R * S * np.sin(P)).ravel(), (R * C).ravel()], axis=1)
        wts = np.broadcast_to(W, R.shape).ravel().copy()
    else:
        raise ValueError(f"ball rules implemented for dimensions 1-3, got {dim}")
    pts.setflags(write=False)
    wts.setflags(write=False)
    return pts, wts


def radial_integral(func, dim, radius, n=200):
    """∫_{|x| ≤ radius} func(|x|) dx over R^dim by Gauss in r with the sphere area factor."""
    r, w = gauss_interval(n, 0.0, radius)
    area = 2 * np.pi ** (dim / 2) / math.gamma(dim / 2)
    return float(area * np.sum(w * r ** (dim - 1) * func(r)))
