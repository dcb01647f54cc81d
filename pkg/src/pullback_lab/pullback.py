"""The submersion p_f, the diffeomorphism t_f, the operator T_f and homotopy operators."""
from __future__ import annotations

from typing import Optional

import numpy as np

from . import differentiation as fd
from .bundles import PullbackBundle, fiber_integrate, sasaki_metric, tangent_bundle
from .errors import CoverageError, DegreeError, DiskOverflowError
from .forms import (DifferentialForm, exterior_derivative, intersection_pairing, numeric_derivative,
                    pullback, wedge)
from .geodesics import chart_difference, geodesic_flow, log_map
from .geometry import ChartManifold, pointwise_tensor_norm, volume_form
from .maps import HomotopyMap, SmoothMap, identity
from .multiindex import index_of, multi_indices, n_components
from .quadrature import gauss_interval
from .thom import ThomForm, build_bump, thom_form

INTERVAL_NODES = 16


# ----------------------------------------------------------------- p_f and t_f

def p_f(b: PullbackBundle, x, w, check=True, wrap=True):
    """exp_{f(x)}(w) on the target."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x, w = np.atleast_2d(x), np.atleast_2d(np.asarray(w, dtype=float))
    rows = max(x.shape[0], w.shape[0])
    x = np.broadcast_to(x, (rows, b.m))
    w = np.broadcast_to(w, (rows, b.rank))
    if check:
        b.check_disk(x, w)
    y0 = b.map_f(x)
    y = geodesic_flow(b.target, y0, w, 1.0, wrap=wrap).x
    zero = np.all(w == 0.0, axis=1)
    y[zero] = b.target.wrap(y0[zero]) if wrap else y0[zero]
    return y[0] if single else y


def pf_map(b: PullbackBundle) -> SmoothMap:
    """p_f as a smooth map from the total space to the target."""
    m, n = b.m, b.rank

    def value(z):
        z = np.atleast_2d(z)
        return p_f(b, z[:, :m], z[:, m:], check=False, wrap=False)

    diff = None
    if b.is_flat:
        def diff(z):
            z = np.atleast_2d(z)
            J = np.empty((z.shape[0], n, m + n))
            J[:, :, :m] = b.map_f.jacobian(z[:, :m])
            J[:, :, m:] = np.eye(n)
            return J
    return SmoothMap(b.total, b.target, value, diff, name=f"p[{b.map_f.name}]")


def bundle_map(b: PullbackBundle) -> SmoothMap:
    """F(x, w) = (f(x), w) into the target's tangent bundle."""
    tb = tangent_bundle(b.target, b.delta)
    m, n = b.m, b.rank

    def value(z):
        z = np.atleast_2d(z)
        return np.concatenate([b.map_f(z[:, :m]), z[:, m:]], axis=1)

    def diff(z):
        z = np.atleast_2d(z)
        J = np.zeros((z.shape[0], 2 * n, m + n))
        J[:, :n, :m] = b.map_f.jacobian(z[:, :m])
        J[:, n:, m:] = np.eye(n)
        return J
    return SmoothMap(b.total, tb.total, value, diff, name=f"F[{b.map_f.name}]"), tb


def t_f(b: PullbackBundle, x, w, check=True):
    """(x, p_f(x, w))."""
    x2 = np.atleast_2d(x)
    y = np.atleast_2d(p_f(b, x2, w, check=check))
    out = np.concatenate([np.broadcast_to(x2, (y.shape[0], b.m)), y], axis=1)
    return out[0] if np.asarray(x).ndim == 1 else out


def t_f_jacobian(b: PullbackBundle, x, w, h=1e-5):
    """Finite-difference Jacobian of t_f (rows: (x, y) outputs, columns: (x, w) inputs)."""
    m = b.m

    def val(z):
        return np.concatenate([z[:, :m], p_f(b, z[:, :m], z[:, m:], check=False, wrap=False)], axis=1)
    z = np.concatenate([np.atleast_2d(x), np.atleast_2d(w)], axis=1)
    return fd.jacobian(val, z, h=h)


def exp_jacobian(N: ChartManifold, y, w, h=1e-5):
    """D_w exp_y(w) by central differences."""
    y, w = np.atleast_2d(y), np.atleast_2d(w)
    d = N.dim
    # perturb w only: stack the base point next to w and differentiate in the w axes
    z = np.concatenate([y, w], axis=1)

    def val(zz):
        return geodesic_flow(N, zz[:, :d], zz[:, d:], 1.0, wrap=False).x
    return fd.jacobian(val, z, h=h, axes=tuple(range(d, 2 * d)))


# ----------------------------------------------------------------- fiber volume of p_f

def t_f_volume(b: PullbackBundle, p, q):
    """Vol_{t_f}(p, q) = |(t_f⁻¹)*(Vol_E / t_f*Vol_{M×N})| at w = log_{f(p)} q."""
    p, q = np.atleast_2d(p), np.atleast_2d(q)
    y = b.map_f(p)
    w = _log(b.target, y, q)
    G = sasaki_metric(b, p, w, check=False)
    num = np.sqrt(np.linalg.det(G))
    if b.target.flat and b.target.christoffel_fn is None:
        jac = np.ones(p.shape[0])
    else:
        jac = np.abs(np.linalg.det(exp_jacobian(b.target, y, w)))
    return num / (volume_form(b.base, p) * volume_form(b.target, q) * jac), w


def _log(N, y, q):
    if N.flat and N.christoffel_fn is None:
        return chart_difference(N, y, q)
    return log_map(N, y, np.broadcast_to(q, y.shape))


# refinement depth per base dimension: the boundary has 2 points in 1-D, so depth is cheap there
DEFAULT_DEPTH = {1: 20, 2: 8, 3: 5}


def fiber_volume_pf(b: PullbackBundle, q, window=None, cells=32, depth=None, normalized=False):
    """Vol_{p_f}(q) = ∫_M Vol_{t_f}(p, q) dμ_M(p) over {p : |log_{f(p)} q| ≤ δ}.

    The indicator is resolved by refining cells that straddle the sphere
    |log_{f(p)} q| = δ; mass in a cell touching a non-periodic window edge
    raises a coverage error. ``normalized`` divides by the Euclidean δ-ball volume.
    """
    M = b.base
    q = np.asarray(q, dtype=float).reshape(1, b.rank)
    lo = np.asarray(M.lower if window is None else window[0], dtype=float)
    hi = np.asarray(M.upper if window is None else window[1], dtype=float)
    m = M.dim
    depth = DEFAULT_DEPTH.get(m, 4) if depth is None else depth
    L = b.map_f.lipschitz_hint or 1.0
    hq = b.target.metric(q)[0]
    scale = float(np.sqrt(np.max(np.linalg.eigvalsh(hq))))
    edge = [not per for per in M.periodic]
    # level-0 cells
    size = (hi - lo) / cells
    grids = np.meshgrid(*[lo[i] + size[i] * (np.arange(cells) + 0.5) for i in range(m)], indexing="ij")
    centers = np.stack([g.ravel() for g in grids], axis=1)
    gx, gw = gauss_interval(2, -0.5, 0.5)
    sub = np.stack([g.ravel() for g in np.meshgrid(*([gx] * m), indexing="ij")], axis=1)
    subw = np.prod(np.stack([g.ravel() for g in np.meshgrid(*([gw] * m), indexing="ij")], axis=1), axis=1)
    total = 0.0
    for level in range(depth + 1):
        if centers.shape[0] == 0:
            break
        r = _fiber_radius(b, centers, q)
        rad = 0.5 * float(np.linalg.norm(size)) * L * scale * 1.5
        inside = r <= b.delta - rad
        cross = np.abs(r - b.delta) < rad
        leaf = cross if level == depth else np.zeros_like(cross)
        touched = inside | cross
        if np.any(touched) and any(edge):
            near = np.zeros(centers.shape[0], dtype=bool)
            for i in range(m):
                if edge[i]:
                    near |= (centers[:, i] - size[i] <= lo[i] + 1e-12) | (centers[:, i] + size[i] >= hi[i] - 1e-12)
            if np.any(touched & near):
                raise CoverageError("fiber mass reaches the window boundary; enlarge the window")
        for mask, use_indicator in ((inside, False), (leaf, True)):
            if not np.any(mask):
                continue
            c = centers[mask]
            pts = (c[:, None, :] + sub[None] * size).reshape(-1, m)
            vol, w = t_f_volume(b, pts, q)
            val = vol * volume_form(M, pts)
            if use_indicator:
                nrm = np.sqrt(np.einsum("ni,nij,nj->n", w, b.bundle_metric(pts), w))
                val = np.where(nrm <= b.delta, val, 0.0)
            total += float(np.sum((val.reshape(-1, subw.size) * subw).sum(axis=1)) * np.prod(size))
        refine = cross & (level < depth)
        if not np.any(refine):
            break
        size = size / 2
        kids = np.stack([g.ravel() for g in np.meshgrid(*([np.array([-0.5, 0.5])] * m), indexing="ij")], axis=1)
        centers = (centers[refine][:, None, :] + kids[None] * size).reshape(-1, m)
    if normalized:
        import math
        ball = math.pi ** (b.rank / 2) / math.gamma(b.rank / 2 + 1) * b.delta ** b.rank
        return total / ball
    return total


def _fiber_radius(b, p, q):
    y = b.map_f(p)
    w = _log(b.target, y, q) if b.target.flat else chart_difference(b.target, y, q)
    H = b.bundle_metric(p)
    return np.sqrt(np.einsum("ni,nij,nj->n", w, H, w))


def pushforward_density(b: PullbackBundle, q, radius, base_orders=64, n_radial=24, n_angular=48):
    """Mass of the p_f-pushforward of the disk-bundle measure in B_radius(q), per unit ball volume."""
    import math
    from .quadrature import QuadratureGrid
    M = b.base
    # the integrand is an indicator, so uniform nodes do as well as Gauss and avoid large eigensolves
    grid = QuadratureGrid(M, tuple(M.lower), tuple(M.upper), scheme="trapezoid", orders=(base_orders,))
    pts, wb = grid.nodes()
    mu, w = b.disk_rule(pts, None, n_radial, n_angular)
    Q = mu.shape[1]
    H = b.bundle_metric(pts)
    # fiber measure in μ is √det H dμ, total-space measure √det G = √det g √det H
    mass_w = (wb * volume_form(M, pts))[:, None] * w * np.sqrt(np.linalg.det(H))[:, None]
    y = p_f(b, np.repeat(pts, Q, axis=0), mu.reshape(-1, b.rank), check=False)
    dist = np.linalg.norm(chart_difference(b.target, np.broadcast_to(q, y.shape), y), axis=1)
    mass = float(np.sum(mass_w.ravel()[dist <= radius]))
    ball = math.pi ** (b.rank / 2) / math.gamma(b.rank / 2 + 1) * radius ** b.rank
    return mass / (ball * float(volume_form(b.target, np.atleast_2d(q))[0]))


# ----------------------------------------------------------------- interval integration

def interval_integrate(alpha: DifferentialForm, n_nodes=INTERVAL_NODES) -> DifferentialForm:
    """∫_0^1 along t (last coordinate) with the convention ∫ f dt∧dx^I = (∫ f dt) dx^I.

    Components without dt are dropped; the degree decreases by one.
    """
    P = alpha.base
    if not P.factors:
        raise DegreeError("interval integration needs a product manifold M × [0,1]")
    M = P.factors[0]
    k = alpha.degree
    if k == 0:
        raise DegreeError("the interval integral of a 0-form has degree −1")
    m = M.dim
    pos = index_of(m + 1, k)
    cols = np.array([pos[I + (m,)] for I in multi_indices(m, k - 1)], dtype=int)
    sign = -1.0 if (k - 1) % 2 else 1.0
    t, wt = gauss_interval(n_nodes, 0.0, 1.0)

    def coeff(x):
        x = np.atleast_2d(x)
        nx = x.shape[0]
        pts = np.concatenate([np.repeat(x, t.size, axis=0), np.tile(t, nx)[:, None]], axis=1)
        vals = alpha(pts)[:, cols].reshape(nx, t.size, cols.size)
        return sign * np.einsum("q,nqc->nc", wt, vals)

    return DifferentialForm(M, k - 1, coeff, name=f"interval({alpha.name})")


def slice_form(alpha: DifferentialForm, t) -> DifferentialForm:
    """i_t*α for a form on M × [0,1]."""
    P = alpha.base
    M = P.factors[0]
    m, k = M.dim, alpha.degree
    pos = index_of(m + 1, k)
    cols = np.array([pos[I] for I in multi_indices(m, k)], dtype=int)

    def coeff(x):
        x = np.atleast_2d(x)
        return alpha(np.column_stack([x, np.full(x.shape[0], float(t))]))[:, cols]
    return DifferentialForm(M, k, coeff)


def homotopy_operator(H: HomotopyMap, alpha: DifferentialForm, n_nodes=INTERVAL_NODES) -> Optional[DifferentialForm]:
    """K α = ∫_0^1 H*α; None for 0-forms (the result would have degree −1)."""
    if alpha.degree == 0:
        return None
    return interval_integrate(pullback(alpha, H), n_nodes)


def homotopy_residual(H: HomotopyMap, alpha: DifferentialForm, points, h=None, n_nodes=INTERVAL_NODES,
                      order=4):
    """(H_1*α − H_0*α) − dKα − Kdα at the points (coefficient arrays)."""
    points = np.atleast_2d(points)
    lhs = pullback(alpha, H.slice(1.0))(points) - pullback(alpha, H.slice(0.0))(points)
    K = homotopy_operator(H, alpha, n_nodes)
    r = lhs.copy()
    if K is not None:
        r -= numeric_derivative(K, h=h, order=order)(points)
    if alpha.degree < alpha.dim:
        da = exterior_derivative(alpha)
        r -= homotopy_operator(H, da, n_nodes)(points)
    return r


def bundle_homotopy(b: PullbackBundle) -> HomotopyMap:
    """H((x, w), s) = p_f(x, s w): from f∘pr at s = 0 to p_f at s = 1."""
    E = b.total
    m, n = b.m, b.rank

    def value(z):
        z = np.atleast_2d(z)
        s = z[:, -1:]
        return p_f(b, z[:, :m], s * z[:, m:m + n], check=False, wrap=False)

    diff = None
    if b.is_flat:
        def diff(z):
            z = np.atleast_2d(z)
            J = np.empty((z.shape[0], n, m + n + 1))
            J[:, :, :m] = b.map_f.jacobian(z[:, :m])
            J[:, :, m:m + n] = z[:, -1][:, None, None] * np.eye(n)
            J[:, :, -1] = z[:, m:m + n]
            return J
    return HomotopyMap(E, b.target, value, diff, name=f"radial[{b.map_f.name}]")


def pf_homotopy(b0: PullbackBundle, line: HomotopyMap) -> HomotopyMap:
    """H((x, w), t) = exp_{h(x,t)}(w) for a base homotopy h from f0 to f1 (common chart frame)."""
    E = b0.total
    m, n = b0.m, b0.rank
    N = b0.target
    flat = b0.is_flat

    def value(z):
        z = np.atleast_2d(z)
        y = line(np.column_stack([z[:, :m], z[:, -1]]))
        return geodesic_flow(N, y, z[:, m:m + n], 1.0, wrap=False).x

    diff = None
    if flat:
        def diff(z):
            z = np.atleast_2d(z)
            Jl = line.jacobian(np.column_stack([z[:, :m], z[:, -1]]))
            J = np.empty((z.shape[0], n, m + n + 1))
            J[:, :, :m] = Jl[:, :, :m]
            J[:, :, m:m + n] = np.eye(n)
            J[:, :, -1] = Jl[:, :, m]
            return J
    return HomotopyMap(E, N, value, diff, name=f"p[{line.name}]")


# ----------------------------------------------------------------- T_f

class TfOperator:
    """T_f α = pr_⋆(p_f*α ∧ F*ω), evaluated by fiber quadrature over the δ₀-disk."""

    def __init__(self, bundle: PullbackBundle, thom: Optional[ThomForm] = None, delta0=None,
                 n_radial=24, n_angular=48):
        self.bundle = bundle
        if thom is None:
            delta0 = 0.75 * bundle.delta if delta0 is None else delta0
            thom = thom_form(bundle, build_bump(delta0, bundle.rank))
        self.thom = thom
        self.n_radial = n_radial
        self.n_angular = n_angular
        self._pf = pf_map(bundle)

    @property
    def map_f(self):
        return self.bundle.map_f

    def apply(self, alpha: DifferentialForm) -> DifferentialForm:
        if alpha.base is not self.bundle.target and alpha.base.dim != self.bundle.rank:
            raise DegreeError("T_f acts on forms of the target manifold")
        lifted = pullback(alpha, self._pf)
        integrand = wedge(lifted, self.thom)
        out = fiber_integrate(self.bundle, integrand, self.n_radial, self.n_angular)
        out.name = f"T[{self.map_f.name}]({alpha.name})"
        return out

    def y1(self, alpha: DifferentialForm, n_nodes=INTERVAL_NODES) -> Optional[DifferentialForm]:
        """Y₁α with α − T_id α = dY₁α + Y₁dα: minus pr_⋆(K₁α ∧ ω)."""
        K = homotopy_operator(bundle_homotopy(self.bundle), alpha, n_nodes)
        if K is None:
            return None
        out = fiber_integrate(self.bundle, wedge(K, self.thom), self.n_radial, self.n_angular)
        return (-1.0) * out


def apply_Tf(T: TfOperator, alpha: DifferentialForm, p):
    return T.apply(alpha)(p)


def make_tf(M: ChartManifold, N: ChartManifold, f: Optional[SmoothMap] = None, delta=None, delta0=None,
            n_radial=24, n_angular=48) -> TfOperator:
    f = identity(M) if f is None else f
    b = PullbackBundle(M, N, f, delta)
    return TfOperator(b, delta0=delta0, n_radial=n_radial, n_angular=n_angular)


# ----------------------------------------------------------------- residual verifiers

def _norms(M, points, values, degree):
    return pointwise_tensor_norm(M, points, values, degree)


def residual_T_id(M: ChartManifold, alpha: DifferentialForm, points, delta=None, delta0=None,
                  n_radial=24, n_angular=48, n_nodes=INTERVAL_NODES, h=None, T: Optional[TfOperator] = None):
    """r = (α − T_id α) − (dY₁α + Y₁dα) at the points; returns (max norm, r)."""
    points = np.atleast_2d(points)
    T = make_tf(M, M, None, delta, delta0, n_radial, n_angular) if T is None else T
    r = alpha(points) - T.apply(alpha)(points)
    Y = T.y1(alpha, n_nodes)
    if Y is not None:
        r -= numeric_derivative(Y, h=h)(points)
    if alpha.degree < M.dim:
        r -= T.y1(exterior_derivative(alpha), n_nodes)(points)
    nrm = _norms(M, points, r, alpha.degree)
    return float(np.max(nrm)), r


def residual_K1(b: PullbackBundle, alpha: DifferentialForm, points, h=None, n_nodes=INTERVAL_NODES):
    """p_id*α − pr*α − dK₁α − K₁dα at total-space points; returns (max norm, r)."""
    r = homotopy_residual(bundle_homotopy(b), alpha, points, h=h, n_nodes=n_nodes)
    z = np.atleast_2d(points)
    nrm = pointwise_tensor_norm(b.total, z, r, alpha.degree)
    return float(np.max(nrm)), r


def residual_chain_map(T: TfOperator, alpha: DifferentialForm, points, h=None):
    """d(T_f α) − T_f(dα); d of T_f α by central differences over base points."""
    points = np.atleast_2d(points)
    if alpha.degree >= alpha.dim:
        raise DegreeError("chain-map residual needs deg α < dim")
    lhs = numeric_derivative(T.apply(alpha), h=h)(points)
    rhs = T.apply(exterior_derivative(alpha))(points)
    r = lhs - rhs
    nrm = _norms(T.bundle.base, points, r, alpha.degree + 1)
    return float(np.max(nrm)), r


def pairing_residuals(eta: DifferentialForm, betas, grid):
    """⟨η, β⟩ for each β of complementary degree."""
    out = []
    for beta in betas:
        if eta.degree + beta.degree != eta.dim:
            raise DegreeError(f"β of degree {beta.degree} does not complement degree {eta.degree}")
        out.append(intersection_pairing(eta, beta, grid))
    return np.array(out)


def residual_functoriality(f: SmoothMap, g: SmoothMap, alpha: DifferentialForm, betas, grid, delta=None,
                           delta0=None, n_radial=12, n_angular=24):
    """⟨T_{f∘g}α − T_g T_f α, β⟩ for closed β on the source of g."""
    Tf = make_tf(f.source, f.target, f, delta, delta0, n_radial, n_angular)
    Tg = make_tf(g.source, g.target, g, delta, delta0, n_radial, n_angular)
    fg = f.compose(g)
    fg.lipschitz_hint = (f.lipschitz_hint or 1.0) * (g.lipschitz_hint or 1.0)
    Tfg = make_tf(g.source, f.target, fg, delta, delta0, n_radial, n_angular)
    direct = Tfg.apply(alpha)
    nested = Tg.apply(Tf.apply(alpha))
    diff = direct - nested
    return pairing_residuals(diff, betas, grid)


def pullback_vs_tf(f: SmoothMap, alpha: DifferentialForm, betas, grid, delta=None, delta0=None,
                   n_radial=24, n_angular=48):
    """⟨f*α − T_f α, β⟩ for each β."""
    T = make_tf(f.source, f.target, f, delta, delta0, n_radial, n_angular)
    diff = pullback(alpha, f) - T.apply(alpha)
    return pairing_residuals(diff, betas, grid)


def pairing_matrix(forms, grid, transform=None):
    """Matrix of ⟨η_i, η_j⟩ over complementary-degree pairs (0 elsewhere)."""
    ims = [transform(e) if transform else e for e in forms]
    k = len(ims)
    P = np.zeros((k, k))
    for i in range(k):
        for j in range(k):
            if ims[i].degree + ims[j].degree == ims[i].dim:
                P[i, j] = intersection_pairing(ims[i], ims[j], grid)
    return P


def n_coefficients(M, k):
    return n_components(M.dim, k)


def check_pf_zero(b: PullbackBundle, points):
    """max |p_f(p, 0) − f(p)| (expected exactly 0)."""
    points = np.atleast_2d(points)
    y = p_f(b, points, np.zeros((points.shape[0], b.rank)), wrap=False)
    return float(np.max(np.abs(y - b.map_f(points))))


def check_factorization(b: PullbackBundle, points, w):
    """max |p_f(p, w) − p_id(F(p, w))| over the samples."""
    F, tb = bundle_map(b)
    z = np.concatenate([np.atleast_2d(points), np.atleast_2d(w)], axis=1)
    Fz = F(z)
    lhs = p_f(b, z[:, :b.m], z[:, b.m:], wrap=False)
    rhs = p_f(tb, Fz[:, :b.rank], Fz[:, b.rank:], wrap=False)
    return float(np.max(np.abs(chart_difference(b.target, lhs, rhs))))


__all__ = [
    "p_f", "pf_map", "t_f", "t_f_jacobian", "exp_jacobian", "fiber_volume_pf", "pushforward_density",
    "interval_integrate", "slice_form", "homotopy_operator", "homotopy_residual", "bundle_homotopy",
    "pf_homotopy", "TfOperator", "apply_Tf", "make_tf", "residual_T_id", "residual_K1",
    "residual_chain_map", "residual_functoriality", "pullback_vs_tf", "pairing_matrix",
    "check_pf_zero", "check_factorization", "DiskOverflowError",
]
