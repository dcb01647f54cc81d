"""Differential forms as coefficient functions on chart manifolds."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import differentiation as fd
from .errors import CoverageError, DegreeError
from .expressions import parse
from .geometry import ChartManifold, pointwise_tensor_norm, volume_form
from .multiindex import (derivative_table, index_of, minors, multi_indices, n_components,
                         scatter, wedge_table)


@dataclass(frozen=True)
class FiberDisk:
    """Support inside the disk bundle {|μ|_H ≤ radius}; fiber axes follow ``base_dim`` base axes."""

    radius: float
    base_dim: int


def _pts(x, dim):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != dim:
        raise DegreeError(f"expected points with {dim} coordinates, got {x.shape[1]}")
    return x, single


def _intersect(s1, s2):
    if s1 is None:
        return s2
    if s2 is None:
        return s1
    if isinstance(s1, FiberDisk) and isinstance(s2, FiberDisk):
        return s1 if s1.radius <= s2.radius else s2
    if isinstance(s1, FiberDisk):
        return s1
    if isinstance(s2, FiberDisk):
        return s2
    return (np.maximum(s1[0], s2[0]), np.minimum(s1[1], s2[1]))


class DifferentialForm:
    """Degree-k form on a chart manifold.

    ``coeff`` maps points (N, dim) to coefficients (N, C(dim, k)) on increasing
    multi-indices in lexicographic order. ``d`` is an optional exact exterior
    derivative (a DifferentialForm or a coefficient function). ``support`` is
    None, a box (lower, upper) or a FiberDisk.
    """

    def __init__(self, base: ChartManifold, degree: int, coeff: Callable, d=None,
                 support=None, name: Optional[str] = None):
        if not 0 <= degree <= base.dim:
            raise DegreeError(f"degree {degree} not in [0, {base.dim}]")
        self.base = base
        self.degree = int(degree)
        self._coeff = coeff
        self._d = d
        self.support = support
        self.name = name

    @property
    def dim(self):
        return self.base.dim

    @property
    def n_coeffs(self):
        return n_components(self.dim, self.degree)

    @property
    def has_analytic_d(self):
        return self._d is not None

    def __call__(self, x):
        x, single = _pts(x, self.dim)
        out = np.asarray(self._coeff(x), dtype=float).reshape(x.shape[0], self.n_coeffs)
        return out[0] if single else out

    def evaluate(self, x, chunk=65536):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[0] <= chunk:
            return self(x)
        return np.concatenate([self(x[i:i + chunk]) for i in range(0, x.shape[0], chunk)])

    def analytic_d(self):
        if self._d is None:
            return None
        if isinstance(self._d, DifferentialForm):
            return self._d
        if isinstance(self._d, _LazyD):
            return self._d.form()
        return DifferentialForm(self.base, self.degree + 1, self._d, support=self.support)

    # arithmetic ---------------------------------------------------------
    def _combine(self, other, a, b):
        if other.base is not self.base or other.degree != self.degree:
            raise DegreeError("forms must share base and degree")
        sup = None if (self.support is None or other.support is None) else _union(self.support, other.support)
        form = DifferentialForm(self.base, self.degree, lambda x: a * self(x) + b * other(x), support=sup)
        if self.has_analytic_d and other.has_analytic_d and self.degree < self.dim:
            form._d = _LazyD(lambda: self.analytic_d()._combine(other.analytic_d(), a, b))
        return form

    def __add__(self, other):
        return self._combine(other, 1.0, 1.0)

    def __sub__(self, other):
        return self._combine(other, 1.0, -1.0)

    def __rmul__(self, c):
        c = float(c)
        out = DifferentialForm(self.base, self.degree, lambda x: c * self(x), support=self.support)
        if self.has_analytic_d and self.degree < self.dim:
            out._d = _LazyD(lambda: c * self.analytic_d())
        return out

    def __neg__(self):
        return (-1.0) * self

    def __repr__(self):
        return f"DifferentialForm(degree={self.degree}, base={self.base.name}, name={self.name})"


def _union(s1, s2):
    if isinstance(s1, FiberDisk) or isinstance(s2, FiberDisk):
        if isinstance(s1, FiberDisk) and isinstance(s2, FiberDisk):
            return s1 if s1.radius >= s2.radius else s2
        return None
    return (np.minimum(s1[0], s2[0]), np.maximum(s1[1], s2[1]))


# constructors ------------------------------------------------------------

def zero_form(M: ChartManifold, degree: int):
    c = n_components(M.dim, degree)
    f = DifferentialForm(M, degree, lambda x: np.zeros((np.atleast_2d(x).shape[0], c)))
    if degree < M.dim:
        f._d = zero_form(M, degree + 1)
    return f


def constant_form(M: ChartManifold, degree: int, values):
    values = np.asarray(values, dtype=float).reshape(n_components(M.dim, degree))
    f = DifferentialForm(M, degree, lambda x: np.broadcast_to(values, (np.atleast_2d(x).shape[0], values.size)).copy())
    if degree < M.dim:
        f._d = zero_form(M, degree + 1)
    return f


def parse_index(key, dim):
    """0-based multi-index from a 1-based key like "1,2" or (1, 2)."""
    if isinstance(key, str):
        key = key.strip()
        if key in ("", "0", "()"):
            return ()
        idx = tuple(int(k) - 1 for k in key.replace(" ", "").split(","))
    else:
        idx = tuple(int(k) - 1 for k in key)
    if any(i < 0 or i >= dim for i in idx) or len(set(idx)) != len(idx):
        raise DegreeError(f"invalid multi-index {key!r} for dimension {dim}")
    return idx


def _signed_sorted(idx):
    sign = 1.0
    idx = list(idx)
    for i in range(len(idx)):
        for j in range(len(idx) - 1 - i):
            if idx[j] > idx[j + 1]:
                idx[j], idx[j + 1] = idx[j + 1], idx[j]
                sign = -sign
    return tuple(idx), sign


def form_from_expressions(M: ChartManifold, degree: int, coeffs: dict, variables=None,
                          support=None, name=None):
    """Build a form from expression strings.

    coeffs maps 1-based multi-index keys ("1,2" or (1, 2); "" for 0-forms) to
    strings over the chart variables. The exterior derivative is exact:
    coefficients are differentiated symbolically.
    """
    variables = tuple(variables or M.coord_names)
    slots = {}
    for key, text in coeffs.items():
        idx = parse_index(key, M.dim)
        if len(idx) != degree:
            raise DegreeError(f"multi-index {key!r} has length {len(idx)}, expected {degree}")
        idx, sign = _signed_sorted(idx)
        expr = parse(text, variables)
        slots.setdefault(idx, []).append((sign, expr))
    return _expression_form(M, degree, slots, support, name)


def _expression_form(M, degree, slots, support, name):
    pos = index_of(M.dim, degree)
    c = n_components(M.dim, degree)
    items = [(pos[idx], sign, e) for idx, terms in slots.items() for sign, e in terms]

    def coeff(x):
        out = np.zeros((x.shape[0], c))
        for p, sign, e in items:
            out[:, p] += sign * e(x)
        return out

    form = DifferentialForm(M, degree, coeff, support=support, name=name)
    if degree < M.dim:
        dslots = {}
        for idx, terms in slots.items():
            for sign, e in terms:
                for j in range(M.dim):
                    if j in idx:
                        continue
                    de = e.diff(e.variables[j])
                    if de.is_zero:
                        continue
                    new, s2 = _signed_sorted((j,) + idx)
                    dslots.setdefault(new, []).append((sign * s2, de))
        form._d = _expression_form(M, degree + 1, dslots, support, None)
    return form


# operations --------------------------------------------------------------

def wedge_coefficients(a, b, dim, ka, kb):
    """Coefficient arrays of a∧b from (N, C(dim,ka)) and (N, C(dim,kb))."""
    ia, ib, ic, sg = wedge_table(dim, ka, kb)
    prod = sg * a[:, ia] * b[:, ib]
    return scatter(prod, ic, n_components(dim, ka + kb))


def wedge(alpha: DifferentialForm, beta: DifferentialForm) -> DifferentialForm:
    if alpha.base is not beta.base:
        raise DegreeError("wedge requires forms on the same manifold")
    ka, kb, dim = alpha.degree, beta.degree, alpha.dim
    if ka + kb > dim:
        raise DegreeError(f"degree overflow: {ka} + {kb} > {dim}")

    def coeff(x):
        return wedge_coefficients(alpha(x), beta(x), dim, ka, kb)

    out = DifferentialForm(alpha.base, ka + kb, coeff, support=_intersect(alpha.support, beta.support))
    if ka + kb < dim and alpha.has_analytic_d and beta.has_analytic_d:
        sign = -1.0 if ka % 2 else 1.0
        out._d = _LazyD(lambda: wedge(alpha.analytic_d(), beta) + sign * wedge(alpha, beta.analytic_d()))
    return out


class _LazyD:
    """Deferred analytic derivative so long wedge chains do not build eagerly."""

    def __init__(self, make):
        self.make = make
        self.value = None

    def form(self):
        if self.value is None:
            self.value = self.make()
        return self.value

    def __call__(self, x):
        return self.form()(x)


def numeric_derivative(alpha: DifferentialForm, h=None, order=None):
    """Central-difference exterior derivative."""
    M = alpha.base
    k = alpha.degree
    if k >= M.dim:
        raise DegreeError(f"d of a top-degree form on {M.name} is zero in degree {k + 1} > dim")
    order = M.fd_order if order is None else order
    h = M.step if h is None else h
    out_idx, axis, src, sg = derivative_table(M.dim, k)
    c = n_components(M.dim, k + 1)

    def coeff(x):
        M.check_domain(x, margin=fd.stencil_width(order, np.max(h)))
        jac = fd.jacobian(alpha, x, h=h, order=order)  # (N, C_k, dim)
        vals = sg * jac[:, src, axis]
        return scatter(vals, out_idx, c)

    return DifferentialForm(M, k + 1, coeff, support=alpha.support)


def exterior_derivative(alpha: DifferentialForm, h=None, order=None, numeric=False) -> DifferentialForm:
    """dα: the exact derivative when available, otherwise central differences."""
    if not numeric and h is None and order is None and alpha.has_analytic_d:
        return alpha.analytic_d()
    return numeric_derivative(alpha, h=h, order=order)


def pullback(alpha: DifferentialForm, F) -> DifferentialForm:
    """F*α for a smooth map F with F.source, F.target, F(x), F.jacobian(x)."""
    if alpha.base is not F.target and alpha.base.dim != F.target.dim:
        raise DegreeError("form does not live on the map's target")
    k = alpha.degree
    if k > F.source.dim:
        raise DegreeError(f"degree {k} exceeds source dimension {F.source.dim}")

    def coeff(x):
        y = F(x)
        a = alpha(y)
        if k == 0:
            return a
        J = F.jacobian(x)  # (N, n, m)
        return np.einsum("nj,nji->ni", a, minors(J, k))

    out = DifferentialForm(F.source, k, coeff)
    if k < F.source.dim and alpha.has_analytic_d and k < alpha.dim:
        out._d = _LazyD(lambda: pullback(alpha.analytic_d(), F))
    elif k == alpha.dim and k < F.source.dim:
        out._d = zero_form(F.source, k + 1)
    return out


def lp_norm(alpha: DifferentialForm, p, grid) -> float:
    """(∫ |α|_x^p dμ)^(1/p) by the grid's quadrature."""
    if p < 1:
        raise ValueError("p must be at least 1")
    if isinstance(alpha.support, tuple):
        grid.require_cover(alpha.support)
    pts, w = grid.nodes()
    vals = alpha.evaluate(pts)
    norms = pointwise_tensor_norm(alpha.base, pts, vals, alpha.degree)
    vol = volume_form(alpha.base, pts)
    return float(np.sum(w * vol * norms ** p) ** (1.0 / p))


def intersection_pairing(eta: DifferentialForm, omega: DifferentialForm, grid) -> float:
    """∫ η∧ω against the chart measure."""
    if eta.degree + omega.degree != eta.dim:
        raise DegreeError(f"pairing needs complementary degrees, got {eta.degree} + {omega.degree} != {eta.dim}")
    pts, w = grid.nodes()
    top = wedge_coefficients(eta.evaluate(pts), omega.evaluate(pts), eta.dim, eta.degree, omega.degree)
    return float(np.sum(w * top[:, 0]))


def check_support(alpha: DifferentialForm, samples) -> float:
    """Max |coefficient| at samples outside the declared support box (0 if none)."""
    sup = alpha.support
    if sup is None:
        return 0.0
    samples = np.atleast_2d(samples)
    if isinstance(sup, FiberDisk):
        raise CoverageError("check fiber supports with the bundle's metric")
    outside = np.any((samples < sup[0]) | (samples > sup[1]), axis=1)
    if not np.any(outside):
        return 0.0
    return float(np.max(np.abs(alpha(samples[outside]))))


def hadamard_schwartz_constant(dim, samples=10_000, seed=0):
    """Empirical sup of |α∧β| / (|α||β|) over random simple forms, Euclidean metric.

    Returns (C, per-sample ratios).
    """
    rng = np.random.default_rng(seed)
    ratios = np.empty(samples)
    eye = np.eye(dim)[None]
    for s in range(samples):
        ka = rng.integers(1, dim)
        kb = rng.integers(1, dim - ka + 1)
        vecs = rng.standard_normal((ka + kb, dim))
        a = _simple(vecs[:ka], dim)
        b = _simple(vecs[ka:], dim)
        ab = wedge_coefficients(a[None], b[None], dim, ka, kb)[0]
        na = np.sqrt(a @ minors(eye, ka)[0] @ a)
        nb = np.sqrt(b @ minors(eye, kb)[0] @ b)
        nab = np.sqrt(ab @ minors(eye, ka + kb)[0] @ ab)
        ratios[s] = nab / (na * nb)
    return float(ratios.max()), ratios


def _simple(vecs, dim):
    """Coefficients of v_1 ∧ … ∧ v_k on increasing multi-indices."""
    k = vecs.shape[0]
    return minors(vecs.T[None], k)[0].T[0] if k else np.ones(1)


def basis_form(M: ChartManifold, idx):
    """Constant form dx^{i1}∧… for a 0-based increasing index tuple."""
    k = len(idx)
    vals = np.zeros(n_components(M.dim, k))
    vals[index_of(M.dim, k)[tuple(idx)]] = 1.0
    return constant_form(M, k, vals)


def closed_basis(M: ChartManifold):
    """Constant coordinate forms dx^I, grouped by degree (a cohomology basis on tori)."""
    return {k: [basis_form(M, I) for I in multi_indices(M.dim, k)] for k in range(M.dim + 1)}
