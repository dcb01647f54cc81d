"""Chart-based Riemannian manifolds: metric, Christoffel symbols, curvature, norms."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import differentiation as fd
from .errors import DegreeError, DomainError, SingularMetricError
from .expressions import parse
from .multiindex import minors


def _as_points(x, dim):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[-1] != dim:
        raise DomainError(f"expected points with {dim} coordinates, got shape {x.shape}")
    return x, single


@dataclass(frozen=True, eq=False)
class ChartManifold:
    """Oriented Riemannian manifold on a single box chart.

    ``metric_fn`` maps points (N, dim) to metric matrices (N, dim, dim).
    ``christoffel_fn`` optionally overrides the numeric Christoffel symbols,
    returning Gamma[k, i, j] = Γ^k_ij with shape (N, dim, dim, dim).
    ``strict`` turns on stencil-safety checks against non-periodic bounds.
    """

    dim: int
    lower: np.ndarray
    upper: np.ndarray
    periodic: tuple
    metric_fn: Callable
    christoffel_fn: Optional[Callable] = None
    injectivity_radius_hint: float = 1.0
    flat: bool = False
    name: str = "manifold"
    coord_names: tuple = ()
    strict: bool = True
    fd_order: int = 4
    fd_step: Optional[float] = None
    factors: tuple = field(default=())
    orientation: int = 1

    def __post_init__(self):
        object.__setattr__(self, "lower", np.asarray(self.lower, dtype=float))
        object.__setattr__(self, "upper", np.asarray(self.upper, dtype=float))
        object.__setattr__(self, "periodic", tuple(bool(p) for p in self.periodic))
        if not self.coord_names:
            object.__setattr__(self, "coord_names", tuple(f"x{i + 1}" for i in range(self.dim)))
        if self.orientation != 1:
            raise ValueError("orientation is fixed to +1 in chart order")

    @property
    def periods(self):
        return np.where(self.periodic, self.upper - self.lower, np.inf)

    @property
    def scale(self):
        span = self.upper - self.lower
        return np.where(np.isfinite(span), np.minimum(span, 1.0), 1.0)

    @property
    def step(self):
        if self.fd_step is not None:
            return self.fd_step
        return fd.default_step(self.fd_order) * self.scale

    def wrap(self, x):
        """Reduce periodic coordinates into [lower, upper)."""
        x = np.array(x, dtype=float, copy=True)
        for i, per in enumerate(self.periodic):
            if per:
                lo, span = self.lower[i], self.upper[i] - self.lower[i]
                x[..., i] = lo + np.mod(x[..., i] - lo, span)
        return x

    def check_domain(self, x, margin=0.0):
        if not self.strict:
            return
        x = np.atleast_2d(x)
        for i, per in enumerate(self.periodic):
            if per:
                continue
            lo, hi = self.lower[i] + margin, self.upper[i] - margin
            bad = (x[:, i] < lo) | (x[:, i] > hi)
            if np.any(bad):
                raise DomainError(
                    f"{self.name}: coordinate {self.coord_names[i]}={x[bad, i][0]:.6g} outside "
                    f"stencil-safe range [{lo:.6g}, {hi:.6g}]")

    def metric(self, x):
        x, single = _as_points(x, self.dim)
        g = np.asarray(self.metric_fn(x), dtype=float)
        return g[0] if single else g

    def inverse_metric(self, x):
        g = self.metric(x)
        det = np.linalg.det(g)
        if np.any(~(det > 0)):
            raise SingularMetricError(f"{self.name}: metric determinant {np.min(det):.3e} is not positive")
        return np.linalg.inv(g)


def metric(M, x):
    return M.metric(x)


def volume_form(M: ChartManifold, x):
    """Coefficient √det g of the Riemannian volume form against dx¹∧…∧dxⁿ."""
    det = np.linalg.det(M.metric(x))
    if np.any(~(det > 0)):
        raise SingularMetricError(f"{M.name}: metric determinant {np.min(det):.3e} is not positive")
    return np.sqrt(det)


def metric_derivatives(M: ChartManifold, x, h=None, order=None):
    """∂_k g_ij as an array (N, dim, dim, dim) indexed [i, j, k]."""
    order = M.fd_order if order is None else order
    h = M.step if h is None else h
    M.check_domain(x, margin=fd.stencil_width(order, np.max(h)))
    return fd.jacobian(M.metric_fn, x, h=h, order=order)


def christoffel(M: ChartManifold, x, h=None, order=None):
    """Γ^k_ij at the points x, shape (N, dim, dim, dim) indexed [k, i, j]."""
    x, single = _as_points(x, M.dim)
    if M.christoffel_fn is not None and h is None and order is None:
        gam = np.asarray(M.christoffel_fn(x), dtype=float)
    elif M.flat and h is None:
        gam = np.zeros((x.shape[0], M.dim, M.dim, M.dim))
    else:
        ginv = M.inverse_metric(x)
        dg = metric_derivatives(M, x, h=h, order=order)  # [n, i, j, k] = ∂_k g_ij
        # t[n, l, i, j] = ∂_i g_jl + ∂_j g_il − ∂_l g_ij
        t = (np.einsum("njli->nlij", dg) + np.einsum("nilj->nlij", dg)
             - np.einsum("nijl->nlij", dg))
        gam = 0.5 * np.einsum("nkl,nlij->nkij", ginv, t)
        gam = 0.5 * (gam + np.swapaxes(gam, 2, 3))
    return gam[0] if single else gam


def riemann_tensor(M: ChartManifold, x, h=None, order=None):
    """R^a_{bcd} with R(∂_c, ∂_d)∂_b = R^a_{bcd} ∂_a, shape (N, d, d, d, d)."""
    x, single = _as_points(x, M.dim)
    if M.flat and M.christoffel_fn is None:
        R = np.zeros((x.shape[0],) + (M.dim,) * 4)
        return R[0] if single else R
    order = M.fd_order if order is None else order
    h = M.step if h is None else h
    M.check_domain(x, margin=fd.stencil_width(order, np.max(h)))
    gam = christoffel(M, x)

    def flat_gamma(y):
        return christoffel(M, y).reshape(y.shape[0], -1)

    dgam = fd.jacobian(flat_gamma, x, h=h, order=order).reshape(gam.shape + (M.dim,))
    # dgam[n, a, d, b, c] = ∂_c Γ^a_{db}
    R = (np.einsum("nadbc->nabcd", dgam) - np.einsum("nacbd->nabcd", dgam)
         + np.einsum("nace,nedb->nabcd", gam, gam) - np.einsum("nade,necb->nabcd", gam, gam))
    return R[0] if single else R


def sectional_curvature(M: ChartManifold, x, i=0, j=1):
    """Sectional curvature of the coordinate plane (∂_i, ∂_j)."""
    x, single = _as_points(x, M.dim)
    R = riemann_tensor(M, x)
    g = M.metric(x)
    Rlow = np.einsum("nae,nebcd->nabcd", g, R)
    num = Rlow[:, i, j, i, j]
    den = g[:, i, i] * g[:, j, j] - g[:, i, j] ** 2
    k = num / den
    return k[0] if single else k


def pointwise_tensor_norm(M: ChartManifold, x, value, degree, ginv=None):
    """Norm of k-covectors (coefficients on increasing multi-indices) induced by g.

    value: (N, C(dim, k)). Returns (N,).
    """
    if degree > M.dim or degree < 0:
        raise DegreeError(f"degree {degree} not in [0, {M.dim}]")
    x, single = _as_points(x, M.dim)
    v = np.atleast_2d(np.asarray(value, dtype=float))
    if degree == 0:
        out = np.abs(v[:, 0])
    else:
        ginv = M.inverse_metric(x) if ginv is None else ginv
        gram = minors(ginv, degree)
        # rescale per row so tiny or huge coefficients do not under/overflow when squared
        scale = np.max(np.abs(v), axis=1)
        safe = np.where(scale > 0, scale, 1.0)
        u = v / safe[:, None]
        sq = np.einsum("ni,nij,nj->n", u, gram, u)
        out = safe * np.sqrt(np.maximum(sq, 0.0))
    return out[0] if single else out


def check_metric(M: ChartManifold, samples):
    """Max symmetry defect and min eigenvalue of g over sample points."""
    g = M.metric(np.atleast_2d(samples))
    asym = float(np.max(np.abs(g - np.swapaxes(g, 1, 2))))
    eig = float(np.min(np.linalg.eigvalsh(0.5 * (g + np.swapaxes(g, 1, 2)))))
    return asym, eig


# ----------------------------------------------------------------- catalog

def _const_metric(G):
    G = np.asarray(G, dtype=float)

    def fn(x):
        return np.broadcast_to(G, (np.atleast_2d(x).shape[0],) + G.shape).copy()
    return fn


def euclidean(dim, lower=None, upper=None, metric=None, name=None, injectivity_radius_hint=1.0):
    lower = np.full(dim, -10.0) if lower is None else lower
    upper = np.full(dim, 10.0) if upper is None else upper
    G = np.eye(dim) if metric is None else metric
    return ChartManifold(dim, lower, upper, (False,) * dim, _const_metric(G), flat=True,
                         name=name or f"R{dim}", injectivity_radius_hint=injectivity_radius_hint)


def torus(periods=(1.0, 1.0), metric=None, name=None, injectivity_radius_hint=None):
    periods = np.asarray(periods, dtype=float)
    dim = len(periods)
    G = np.eye(dim) if metric is None else metric
    inj = 0.5 * float(np.min(periods)) if injectivity_radius_hint is None else injectivity_radius_hint
    return ChartManifold(dim, np.zeros(dim), periods, (True,) * dim, _const_metric(G), flat=True,
                         name=name or f"T{dim}", injectivity_radius_hint=inj)


def _sphere_metric(x):
    n = x.shape[0]
    g = np.zeros((n, 2, 2))
    g[:, 0, 0] = 1.0
    g[:, 1, 1] = np.sin(x[:, 0]) ** 2
    return g


def _sphere_christoffel(x):
    n = x.shape[0]
    gam = np.zeros((n, 2, 2, 2))
    s, c = np.sin(x[:, 0]), np.cos(x[:, 0])
    gam[:, 0, 1, 1] = -s * c
    gam[:, 1, 0, 1] = gam[:, 1, 1, 0] = c / s
    return gam


def sphere_chart(margin=0.05, radius_hint=None, analytic=True, name="S2"):
    """Round unit sphere in (θ, φ), θ ∈ [margin, π − margin], φ periodic in 2π."""
    return ChartManifold(
        2, [margin, 0.0], [np.pi - margin, 2 * np.pi], (False, True), _sphere_metric,
        christoffel_fn=_sphere_christoffel if analytic else None,
        injectivity_radius_hint=np.pi if radius_hint is None else radius_hint,
        name=name, coord_names=("theta", "phi"))


def custom_diag(entries, lower, upper, periodic=None, name="custom", coord_names=None,
                injectivity_radius_hint=1.0):
    """Diagonal metric with components given as expression strings."""
    dim = len(entries)
    names = tuple(coord_names) if coord_names else tuple(f"x{i + 1}" for i in range(dim))
    exprs = [parse(e, names) for e in entries]

    def fn(x):
        x = np.atleast_2d(x)
        g = np.zeros((x.shape[0], dim, dim))
        for i, e in enumerate(exprs):
            g[:, i, i] = e(x)
        return g
    periodic = (False,) * dim if periodic is None else periodic
    return ChartManifold(dim, lower, upper, periodic, fn, name=name, coord_names=names,
                         injectivity_radius_hint=injectivity_radius_hint)


def product_with_interval(M: ChartManifold, name=None):
    """M × [0,1] with metric g + dt², t stored as the last coordinate."""
    d = M.dim

    def fn(x):
        x = np.atleast_2d(x)
        g = np.zeros((x.shape[0], d + 1, d + 1))
        g[:, :d, :d] = M.metric_fn(x[:, :d])
        g[:, d, d] = 1.0
        return g
    return ChartManifold(d + 1, np.append(M.lower, 0.0), np.append(M.upper, 1.0),
                         M.periodic + (False,), fn, flat=M.flat,
                         name=name or f"{M.name}x[0,1]", coord_names=M.coord_names + ("t",),
                         strict=False, factors=(M,), injectivity_radius_hint=M.injectivity_radius_hint)
