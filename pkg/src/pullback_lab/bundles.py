"""Pullback bundles f*TN, Sasaki metrics, fiber integration and fiber volumes."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import (CoverageError, DegenerateSubmersionError, DegreeError, DescriptorError,
                     DiskOverflowError, DomainError)
from .forms import DifferentialForm, FiberDisk
from .geodesics import geodesic_flow, log_map
from .geometry import ChartManifold, christoffel, pointwise_tensor_norm, volume_form
from .maps import SmoothMap, identity
from .multiindex import index_of, multi_indices
from .quadrature import gauss_interval, tensor_rule, unit_ball_rule

DISK_TOL = 1e-12
MAX_FIBER_POINTS = 200_000


def _xmu(x, mu, m, n):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    mu = np.atleast_2d(np.asarray(mu, dtype=float))
    if x.shape[1] != m or mu.shape[1] != n:
        raise DomainError(f"expected base points with {m} and fiber vectors with {n} coordinates")
    rows = max(x.shape[0], mu.shape[0])
    return np.broadcast_to(x, (rows, m)).copy(), np.broadcast_to(mu, (rows, n)).copy()


class PullbackBundle:
    """f*TN over M, framed by the pulled-back coordinate frame of N."""

    def __init__(self, base: ChartManifold, target: ChartManifold, map_f: Optional[SmoothMap] = None,
                 delta: Optional[float] = None, fiber_margin=2.0):
        self.base = base
        self.target = target
        self.map_f = identity(base) if map_f is None else map_f
        if self.map_f.source is not base or self.map_f.target is not target:
            raise DescriptorError("map must go from the bundle base to the target")
        self.delta = 0.4 * target.injectivity_radius_hint if delta is None else float(delta)
        if not 0 < self.delta <= target.injectivity_radius_hint:
            raise DomainError(f"δ = {self.delta} must lie in (0, inj hint {target.injectivity_radius_hint}]")
        self.m = base.dim
        self.rank = target.dim
        self._total = None
        self.fiber_margin = fiber_margin

    @property
    def is_flat(self):
        return self.target.flat and self.target.christoffel_fn is None

    def bundle_metric(self, x):
        return self.target.metric(self.map_f(np.atleast_2d(x)))

    def connection(self, x):
        """Γ̃[α, β, i] = ∂_i f^l · Γ_N[α, β, l](f(x)), shape (N, n, n, m)."""
        x = np.atleast_2d(x)
        n = self.rank
        if self.is_flat:
            return np.zeros((x.shape[0], n, n, self.m))
        gam = christoffel(self.target, self.map_f(x))
        J = self.map_f.jacobian(x)
        return np.einsum("nabl,nli->nabi", gam, J)

    def connection_matrix(self, x, mu):
        """A[α, i] = Γ̃[α, β, i] μ^β."""
        return np.einsum("nabi,nb->nai", self.connection(x), np.atleast_2d(mu))

    def fiber_norm(self, x, mu):
        H = self.bundle_metric(x)
        mu = np.atleast_2d(mu)
        return np.sqrt(np.maximum(np.einsum("ni,nij,nj->n", mu, H, mu), 0.0))

    def check_disk(self, x, mu, radius=None):
        r = self.delta if radius is None else radius
        nrm = self.fiber_norm(x, mu)
        if np.any(nrm > r * (1 + DISK_TOL)):
            raise DiskOverflowError(f"|μ|_H = {np.max(nrm):.6g} exceeds the disk radius {r:.6g}")

    @property
    def total(self) -> ChartManifold:
        """Total space with the Sasaki metric; coordinates (x¹…x^m, μ¹…μⁿ)."""
        if self._total is None:
            m, n = self.m, self.rank
            r = self.fiber_margin * self.delta

            def metric_fn(z):
                z = np.atleast_2d(z)
                return _sasaki(self, z[:, :m], z[:, m:])
            names = self.base.coord_names + tuple(f"mu{i + 1}" for i in range(n))
            self._total = ChartManifold(
                m + n, np.concatenate([self.base.lower, np.full(n, -r)]),
                np.concatenate([self.base.upper, np.full(n, r)]),
                self.base.periodic + (False,) * n, metric_fn,
                flat=self.base.flat and self.is_flat,
                name=f"E({self.map_f.name}*T{self.target.name})", coord_names=names, strict=False,
                injectivity_radius_hint=min(self.base.injectivity_radius_hint, self.delta))
            object.__setattr__(self._total, "bundle", self)
        return self._total

    def split(self, z):
        z = np.atleast_2d(z)
        return z[:, :self.m], z[:, self.m:]

    def disk_rule(self, x, radius=None, n_radial=24, n_angular=48):
        """Fiber nodes μ (N, Q, n) and Lebesgue weights (N, Q) on {|μ|_H ≤ radius} over each x."""
        r = self.delta if radius is None else float(radius)
        x = np.atleast_2d(x)
        H = self.bundle_metric(x)
        L = np.linalg.cholesky(H)
        nu, w = unit_ball_rule(self.rank, n_radial, n_angular)
        # μ = L^{-T} ν so that μᵀHμ = |ν|²
        Linv_T = np.swapaxes(np.linalg.inv(L), 1, 2)
        mu = r * np.einsum("nij,qj->nqi", Linv_T, nu)
        wts = (r ** self.rank) * w[None, :] / np.sqrt(np.linalg.det(H))[:, None]
        return mu, wts


def _sasaki(b: PullbackBundle, x, mu):
    x, mu = np.atleast_2d(x), np.atleast_2d(mu)
    m, n = b.m, b.rank
    g = b.base.metric(x)
    H = b.bundle_metric(x)
    G = np.zeros((x.shape[0], m + n, m + n))
    if b.is_flat:
        G[:, :m, :m] = g
    else:
        A = b.connection_matrix(x, mu)
        AtH = np.einsum("nai,nab->nib", A, H)
        top = g + np.einsum("nib,nbj->nij", AtH, A)
        # exact symmetry; the einsum rounds the two triangles differently
        G[:, :m, :m] = 0.5 * (top + np.swapaxes(top, 1, 2))
        G[:, :m, m:] = AtH
        G[:, m:, :m] = np.swapaxes(AtH, 1, 2)
    G[:, m:, m:] = H
    return G


def sasaki_metric(b: PullbackBundle, x, mu, check=True):
    """Sasaki metric on the total space at (x, μ), blocks [[g + AᵀHA, AᵀH], [HA, H]]."""
    single = np.asarray(x).ndim == 1
    x, mu = _xmu(x, mu, b.m, b.rank)
    if check:
        b.check_disk(x, mu)
    G = _sasaki(b, x, mu)
    return G[0] if single else G


def sasaki_inverse(b: PullbackBundle, x, mu, check=True):
    """Closed-form inverse: [[g⁻¹, −g⁻¹Aᵀ], [−Ag⁻¹, H⁻¹ + Ag⁻¹Aᵀ]]."""
    single = np.asarray(x).ndim == 1
    x, mu = _xmu(x, mu, b.m, b.rank)
    if check:
        b.check_disk(x, mu)
    m, n = b.m, b.rank
    ginv = b.base.inverse_metric(x)
    Hinv = np.linalg.inv(b.bundle_metric(x))
    A = b.connection_matrix(x, mu)
    Ag = np.einsum("nai,nij->naj", A, ginv)
    Gi = np.zeros((x.shape[0], m + n, m + n))
    Gi[:, :m, :m] = ginv
    Gi[:, :m, m:] = -np.swapaxes(Ag, 1, 2)
    Gi[:, m:, :m] = -Ag
    Gi[:, m:, m:] = Hinv + np.einsum("naj,nbj->nab", Ag, A)
    return Gi[0] if single else Gi


def connector(b: PullbackBundle, x, mu, tangent):
    """Vertical part K(b, z) = z + A b of a tangent vector (b, z) at (x, μ)."""
    single = np.asarray(x).ndim == 1
    x, mu = _xmu(x, mu, b.m, b.rank)
    t = np.atleast_2d(np.asarray(tangent, dtype=float))
    bh, z = t[:, :b.m], t[:, b.m:]
    out = z + np.einsum("nai,ni->na", b.connection_matrix(x, mu), bh)
    return out[0] if single else out


def horizontal_lift(b: PullbackBundle, x, mu, v):
    """Horizontal vector (v, −A v) over the base vector v."""
    single = np.asarray(x).ndim == 1
    x, mu = _xmu(x, mu, b.m, b.rank)
    v = np.atleast_2d(v)
    out = np.concatenate([v, -np.einsum("nai,ni->na", b.connection_matrix(x, mu), v)], axis=1)
    return out[0] if single else out


def tangent_bundle(N: ChartManifold, delta=None):
    return PullbackBundle(N, N, identity(N), delta)


# ----------------------------------------------------------------- fiber integration

def _fiber_chunks(nb, q):
    step = max(1, MAX_FIBER_POINTS // max(q, 1))
    return [(i, min(i + step, nb)) for i in range(0, nb, step)]


def fiber_integrate(b: PullbackBundle, eta: DifferentialForm, n_radial=24, n_angular=48, radius=None):
    """π_⋆η: integrate the dμ¹∧…∧dμⁿ components over the fiber disks.

    A component c dx^I∧dμ^top contributes (∫ c dμ) dx^I; other components drop.
    """
    total = b.total
    if eta.base is not total:
        raise DegreeError("form must live on the bundle's total space")
    if not isinstance(eta.support, FiberDisk):
        raise CoverageError("fiber integration needs a fiber-disk support hint on the form")
    if eta.support.radius > b.delta * (1 + DISK_TOL):
        raise CoverageError(f"support radius {eta.support.radius} exceeds the disk bundle radius {b.delta}")
    m, n = b.m, b.rank
    k = eta.degree - n
    if k < 0:
        raise DegreeError(f"form degree {eta.degree} is below the fiber dimension {n}")
    r = eta.support.radius if radius is None else radius
    pos = index_of(m + n, eta.degree)
    top = tuple(range(m, m + n))
    cols = np.array([pos[I + top] for I in multi_indices(m, k)], dtype=int)

    def coeff(x):
        x = np.atleast_2d(x)
        out = np.empty((x.shape[0], cols.size))
        mu, w = b.disk_rule(x, r, n_radial, n_angular)
        q = mu.shape[1]
        for s, e in _fiber_chunks(x.shape[0], q):
            z = np.concatenate([np.repeat(x[s:e], q, axis=0), mu[s:e].reshape(-1, n)], axis=1)
            vals = eta(z)[:, cols].reshape(e - s, q, cols.size)
            out[s:e] = np.einsum("nq,nqc->nc", w[s:e], vals)
        return out

    return DifferentialForm(b.base, k, coeff, name=f"fiber_integral({eta.name})")


def sasaki_norm(b: PullbackBundle, z, values, degree):
    """Pointwise norm of total-space forms under the Sasaki metric."""
    z = np.atleast_2d(z)
    x, mu = b.split(z)
    gi = sasaki_inverse(b, x, mu, check=False) if degree else None
    return pointwise_tensor_norm(b.total, z, values, degree, ginv=gi)


# ----------------------------------------------------------------- submersions

@dataclass(frozen=True, eq=False)
class Submersion:
    """Submersion descriptor.

    kind "projection": ``total`` has coordinates (base coords, fiber coords) and
    π drops the fiber coordinates; ``fiber_rule(q)`` returns fiber nodes
    (N, Q, f) and weights (N, Q) for base points q (N, b).
    kind "diffeomorphism": ``map`` with an ``inverse``.
    """

    kind: str
    total: ChartManifold
    base: ChartManifold
    fiber_rule: Optional[Callable] = None
    map: Optional[SmoothMap] = None


def projection(total: ChartManifold, base: ChartManifold, fiber_lower=None, fiber_upper=None,
               orders=24, fiber_rule=None):
    """Coordinate projection with a box fiber (or a custom fiber rule)."""
    f = total.dim - base.dim
    if fiber_rule is None and fiber_lower is not None:
        lo = np.broadcast_to(np.asarray(fiber_lower, dtype=float), (f,))
        hi = np.broadcast_to(np.asarray(fiber_upper, dtype=float), (f,))
        nodes, w = tensor_rule([gauss_interval(orders, a, c) for a, c in zip(lo, hi)])

        def fiber_rule(q):
            nq = np.atleast_2d(q).shape[0]
            return (np.broadcast_to(nodes, (nq,) + nodes.shape).copy(),
                    np.broadcast_to(w, (nq, w.size)).copy())
    return Submersion("projection", total, base, fiber_rule=fiber_rule)


def disk_bundle_projection(b: PullbackBundle, n_radial=24, n_angular=48, radius=None):
    return Submersion("projection", b.total, b.base,
                      fiber_rule=lambda q: b.disk_rule(q, radius, n_radial, n_angular))


def diffeomorphism(f: SmoothMap):
    return Submersion("diffeomorphism", f.source, f.target, map=f)


def quotient_by_pullback_volume(total: ChartManifold, pi: Submersion, x):
    """√det G_total(x) / √det g_base(π x): the fiber density of Vol_total / π*Vol_base."""
    if pi.kind != "projection":
        raise DescriptorError("quotients are computed in fibered (projection) charts")
    x = np.atleast_2d(x)
    vb = np.linalg.det(pi.base.metric(x[:, :pi.base.dim]))
    if np.any(~(vb > 0)):
        raise DegenerateSubmersionError("pulled-back base volume vanishes")
    return volume_form(total, x) / np.sqrt(vb)


def fiber_volume_submersion(pi: Submersion, q):
    """Vol_π(q) = ∫_{π⁻¹(q)} Vol_total / π*Vol_base."""
    q = np.asarray(q, dtype=float)
    single = q.ndim == 1
    q = np.atleast_2d(q)
    if pi.kind == "projection":
        if pi.fiber_rule is None:
            raise DescriptorError("projection descriptor has no fiber parameterization")
        nodes, w = pi.fiber_rule(q)
        nq, nn, f = nodes.shape
        z = np.concatenate([np.repeat(q, nn, axis=0), nodes.reshape(-1, f)], axis=1)
        vals = quotient_by_pullback_volume(pi.total, pi, z).reshape(nq, nn)
        out = np.sum(w * vals, axis=1)
    elif pi.kind == "diffeomorphism":
        if pi.map is None or pi.map.inverse is None:
            raise DescriptorError("diffeomorphism descriptor needs a map with an inverse")
        f = pi.map
        p = np.atleast_2d(f.inverse(q))
        inside = np.all((p >= f.source.lower - 1e-12) & (p <= f.source.upper + 1e-12), axis=1)
        inside &= np.all(np.isclose(f(p), q, atol=1e-9), axis=1)
        J = f.jacobian(p)
        out = volume_form(f.source, p) / (volume_form(f.target, q) * np.abs(np.linalg.det(J)))
        out = np.where(inside, out, 0.0)
    else:
        raise DescriptorError(f"unknown submersion kind {pi.kind!r}")
    return out[0] if single else out


def compose_projections(inner: Submersion, outer: Submersion):
    """Projection X → Y for inner: X → W and outer: W → Y, with the product fiber rule."""
    def rule(q):
        q = np.atleast_2d(q)
        v, wv = outer.fiber_rule(q)
        nq, nv, fv = v.shape
        wpts = np.concatenate([np.repeat(q, nv, axis=0), v.reshape(-1, fv)], axis=1)
        u, wu = inner.fiber_rule(wpts)
        nu, fu = u.shape[1], u.shape[2]
        nodes = np.concatenate([np.repeat(v.reshape(-1, fv), nu, axis=0), u.reshape(-1, fu)], axis=1)
        wts = (wv.reshape(-1, 1) * wu).reshape(nq, nv * nu)
        return nodes.reshape(nq, nv * nu, fv + fu), wts
    return Submersion("projection", inner.total, outer.base, fiber_rule=rule)


def nested_fiber_volume(inner: Submersion, outer: Submersion, q):
    """∫_{g⁻¹(q)} Vol_f · (Vol_W / g*Vol_Y): fiber volume of a composition, computed in stages."""
    q = np.atleast_2d(q)
    v, wv = outer.fiber_rule(q)
    nq, nv, fv = v.shape
    wpts = np.concatenate([np.repeat(q, nv, axis=0), v.reshape(-1, fv)], axis=1)
    inner_vol = fiber_volume_submersion(inner, wpts)
    quot = quotient_by_pullback_volume(outer.total, outer, wpts)
    return np.sum(wv * (inner_vol * quot).reshape(nq, nv), axis=1)


# ----------------------------------------------------------------- checks

def jensen_check(b: PullbackBundle, eta: DifferentialForm, p, base_grid, n_radial=24, n_angular=48):
    """Both sides of ‖π_⋆η‖_p^p ≤ C^{p−1} ∫_E |η|^p dμ_E, with C the sup fiber volume.

    Uses one discrete rule for both sides. Returns (lhs, rhs, C).
    """
    n = b.rank
    r = eta.support.radius
    pts, wb = base_grid.nodes()
    mu, w = b.disk_rule(pts, r, n_radial, n_angular)
    H = b.bundle_metric(pts)
    fibvol = np.sum(w, axis=1) * np.sqrt(np.linalg.det(H))
    C = float(np.max(fibvol))
    pushed = fiber_integrate(b, eta, n_radial, n_angular)
    lhs_vals = pointwise_tensor_norm(b.base, pts, pushed.evaluate(pts), pushed.degree) ** p
    volb = volume_form(b.base, pts)
    lhs = float(np.sum(wb * volb * lhs_vals))
    q = mu.shape[1]
    z = np.concatenate([np.repeat(pts, q, axis=0), mu.reshape(-1, n)], axis=1)
    en = sasaki_norm(b, z, eta.evaluate(z), eta.degree).reshape(-1, q) ** p
    # fiber measure Vol_E / π*Vol_M = √det H dμ
    inner = np.sum(w * en, axis=1) * np.sqrt(np.linalg.det(H))
    rhs = float(C ** (p - 1) * np.sum(wb * volb * inner))
    return lhs, rhs, C


def vertical_drift(b: PullbackBundle, x0, mu0, z, t=1.0, **kw):
    """Horizontal displacement of the Sasaki geodesic from (x0, μ0) with vertical velocity z."""
    x0, mu0 = _xmu(x0, mu0, b.m, b.rank)
    z = np.atleast_2d(z)
    start = np.concatenate([x0, mu0], axis=1)
    vel = np.concatenate([np.zeros_like(x0), z], axis=1)
    st = geodesic_flow(b.total, start, vel, t, wrap=False, **kw)
    return np.max(np.abs(st.x[:, :b.m] - x0), axis=1)


def distance_to_zero_section(b: PullbackBundle, x, mu, **kw):
    """Sasaki length of the shooting geodesic from (x, 0) to (x, μ)."""
    x, mu = _xmu(x, mu, b.m, b.rank)
    p = np.concatenate([x, np.zeros_like(mu)], axis=1)
    q = np.concatenate([x, mu], axis=1)
    v = log_map(b.total, p, q, **kw)
    G = b.total.metric(p)
    return np.sqrt(np.einsum("ni,nij,nj->n", v, G, v))


def horizontal_isometry_defect(b: PullbackBundle, x, mu, vectors):
    """max | |lift(v)|_Sasaki² − |v|_g² | over base vectors v."""
    x, mu = _xmu(x, mu, b.m, b.rank)
    G = sasaki_metric(b, x, mu, check=False)
    g = b.base.metric(x)
    worst = 0.0
    for v in np.atleast_2d(vectors):
        vv = np.broadcast_to(v, x.shape)
        lift = horizontal_lift(b, x, mu, vv)
        lhs = np.einsum("ni,nij,nj->n", lift, G, lift)
        rhs = np.einsum("ni,nij,nj->n", vv, g, vv)
        worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    return worst

