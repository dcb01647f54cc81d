"""Mathai–Quillen Thom forms on pullback bundles.

The construction works in the algebra of forms on the total space with values
in the exterior algebra of the bundle. Elements are dictionaries mapping
(form bitmask, bundle bitmask) to coefficient arrays over the evaluation
points; both kinds of generators are odd and anticommute with each other.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import Polynomial

from .bundles import PullbackBundle
from .errors import MapDescriptorError, NormalizationError, RankError
from .forms import DifferentialForm, FiberDisk, pullback
from .geometry import ChartManifold, riemann_tensor
from .maps import SmoothMap
from .multiindex import index_of, n_components
from .quadrature import gauss_interval

BUMP_SHIFT = 0.5
BUMP_STEEPNESS = 2.0


# ----------------------------------------------------------------- bump profile

@lru_cache(maxsize=None)
def _bump_polys(kmax, a):
    """P_k with ψ^(k)(τ) = P_k(τ) (1 − τ²)^(−2k) ψ(τ), ψ(τ) = exp(−a/(1 − τ²))."""
    one_m = Polynomial([1.0, 0.0, -1.0])
    tau = Polynomial([0.0, 1.0])
    polys = [Polynomial([1.0])]
    for k in range(kmax):
        P = polys[-1]
        polys.append(one_m ** 2 * P.deriv() + 4 * k * tau * one_m * P - 2 * a * tau * P)
    return tuple(polys)


@dataclass(frozen=True)
class BumpProfile:
    """φ(s) = c exp(−a/(1 − τ²)), τ = (1 + κ)(2s/δ₀²) − κ, supported where |τ| < 1.

    The shift κ moves the bump so that φ'(0) ≠ 0; with κ = 0 the rank-2
    normalization integral −2πφ'(0) vanishes identically. The steepness a
    controls how fast the profile flattens toward the support edge.
    """

    delta0: float
    rank: int
    c_norm: float
    shift: float = BUMP_SHIFT
    steepness: float = BUMP_STEEPNESS

    @property
    def slope(self):
        return 2.0 * (1.0 + self.shift) / self.delta0 ** 2

    @property
    def support(self):
        """Interval of s where φ is nonzero."""
        lo = (self.shift - 1.0) / (1.0 + self.shift) * self.delta0 ** 2 / 2
        return lo, self.delta0 ** 2 / 2

    def derivative(self, k, s):
        return self.c_norm * _raw_derivative(k, s, self.delta0, self.shift, self.steepness)

    def __call__(self, s):
        return self.derivative(0, s)


def _raw_derivative(k, s, delta0, shift, a):
    s = np.asarray(s, dtype=float)
    slope = 2.0 * (1.0 + shift) / delta0 ** 2
    tau = slope * s - shift
    out = np.zeros_like(s)
    inside = np.abs(tau) < 1.0
    if np.any(inside):
        t = tau[inside]
        q = 1.0 - t * t
        P = _bump_polys(k, a)[k]
        out[inside] = np.exp(-a / q - 2 * k * np.log(q)) * P(t) * slope ** k
    return out


def normalization_integral(delta0, rank, shift=BUMP_SHIFT, steepness=BUMP_STEEPNESS, n=400):
    """(∫_{R^m} ψ-profile^(m)(|x|²/2) dx, ∫ |…| dx) for the unnormalized profile."""
    r, w = gauss_interval(n, 0.0, delta0)
    area = 2 * math.pi ** (rank / 2) / math.gamma(rank / 2)
    vals = _raw_derivative(rank, 0.5 * r * r, delta0, shift, steepness) * r ** (rank - 1)
    return float(area * np.sum(w * vals)), float(area * np.sum(w * np.abs(vals)))


def build_bump(delta0, rank, shift=BUMP_SHIFT, steepness=BUMP_STEEPNESS, n_quad=400) -> BumpProfile:
    """Bump with (−1)^{m(m+1)/2} ∫_{R^m} φ^(m)(|x|²/2) dx = 1."""
    if delta0 <= 0 or rank < 1:
        raise ValueError("need δ₀ > 0 and rank ≥ 1")
    val, mass = normalization_integral(delta0, rank, shift, steepness, n_quad)
    if abs(val) < 1e-14 or abs(val) < 1e-10 * mass:
        raise NormalizationError(
            f"normalization integral {val:.3e} vanishes (rank {rank}, δ₀ {delta0}, shift {shift})")
    sign = (-1) ** (rank * (rank + 1) // 2)
    return BumpProfile(float(delta0), int(rank), sign / val, float(shift), float(steepness))


# ----------------------------------------------------------------- curvature

def curvature_two_form(M: ChartManifold, x):
    """R2[i, j, k, l] = h^{is} R^j_{kls}, with R(∂_k, ∂_l)∂_s = R^j_{kls} ∂_j."""
    x = np.atleast_2d(x)
    Riem = riemann_tensor(M, x)  # [j, s, k, l]
    hinv = M.inverse_metric(x)
    return np.einsum("nis,njskl->nijkl", hinv, Riem)


def bundle_curvature(b: PullbackBundle, x):
    """Curvature of the pulled-back connection as (N, n, n, m, m) over base 2-form indices."""
    x = np.atleast_2d(x)
    n, m = b.rank, b.m
    if b.is_flat:
        return np.zeros((x.shape[0], n, n, m, m))
    R2 = curvature_two_form(b.target, b.map_f(x))
    J = b.map_f.jacobian(x)
    return np.einsum("nijkl,nka,nlb->nijab", R2, J, J)


# ----------------------------------------------------------------- graded algebra

@lru_cache(maxsize=None)
def _merge_sign(a, b):
    if a & b:
        return 0
    inv = 0
    bb = b
    while bb:
        low = bb & -bb
        inv += bin(a & ~((low << 1) - 1)).count("1")
        bb ^= low
    return -1 if inv % 2 else 1


def _popcount(a):
    return bin(a).count("1")


def graded_mul(A, B):
    """Product in the super-commutative algebra; elements are {(F, E): array}."""
    out = {}
    for (f1, e1), c1 in A.items():
        for (f2, e2), c2 in B.items():
            if f1 & f2 or e1 & e2:
                continue
            s = _merge_sign(f1, f2) * _merge_sign(e1, e2)
            if (_popcount(e1) * _popcount(f2)) % 2:
                s = -s
            key = (f1 | f2, e1 | e2)
            term = s * c1 * c2
            if key in out:
                out[key] = out[key] + term
            else:
                out[key] = term
    return out


def graded_add(A, B):
    out = dict(A)
    for k, v in B.items():
        out[k] = out[k] + v if k in out else v
    return out


def mq_generator(b: PullbackBundle, x, mu):
    """N = ∇X + Ω' with ∇X = θ^k e_k, θ^k = dμ^k + A^k_j dx^j and Ω' = −¼ R2 dx dx e e."""
    x, mu = np.atleast_2d(x), np.atleast_2d(mu)
    npts, m, n = x.shape[0], b.m, b.rank
    ones = np.ones(npts)
    N = {}
    for k in range(n):
        N[(1 << (m + k), 1 << k)] = ones
    if not b.is_flat:
        A = b.connection_matrix(x, mu)  # [k, j]
        for k in range(n):
            for j in range(m):
                N[(1 << j, 1 << k)] = A[:, k, j]
        R = bundle_curvature(b, x)  # [k, l, i, j]
        for i in range(m):
            for j in range(i + 1, m):
                for k in range(n):
                    for l in range(k + 1, n):
                        N[((1 << i) | (1 << j), (1 << k) | (1 << l))] = -R[:, k, l, i, j]
    return N


@lru_cache(maxsize=None)
def flat_top_sign(n):
    """Sign ε_n of (Σ dμ^k e_k)^n / n! against dμ^top e^top."""
    gen = {(1 << k, 1 << k): np.ones(1) for k in range(n)}
    power = {(0, 0): np.ones(1)}
    for _ in range(n):
        power = graded_mul(power, gen)
    full = (1 << n) - 1
    return int(np.sign(power[(full, full)][0] / math.factorial(n)))


def orientation_sign(n):
    """Global Berezin sign making the flat fiber integral +1."""
    return flat_top_sign(n) * (-1) ** (n * (n + 1) // 2)


def omega_bar(b: PullbackBundle, bump: BumpProfile, x, mu):
    """Σ_k φ^(k)(|X|²/2)/k! N^k as a graded-algebra element."""
    x, mu = np.atleast_2d(x), np.atleast_2d(mu)
    H = b.bundle_metric(x)
    a = 0.5 * np.einsum("ni,nij,nj->n", mu, H, mu)
    N = mq_generator(b, x, mu)
    total = {(0, 0): bump.derivative(0, a)}
    power = {(0, 0): np.ones(x.shape[0])}
    for k in range(1, b.rank + 1):
        power = graded_mul(power, N)
        dk = bump.derivative(k, a) / math.factorial(k)
        total = graded_add(total, {key: dk * v for key, v in power.items()})
    return total


def berezin(b: PullbackBundle, element, x):
    """Coefficients (N, C(m+n, n)) of the form obtained by pairing e^top with the bundle volume."""
    x = np.atleast_2d(x)
    m, n = b.m, b.rank
    full = (1 << n) - 1
    vol = np.sqrt(np.linalg.det(b.bundle_metric(x)))
    pos = index_of(m + n, n)
    out = np.zeros((x.shape[0], n_components(m + n, n)))
    for (f, e), c in element.items():
        if e != full or _popcount(f) != n:
            continue
        idx = tuple(i for i in range(m + n) if f >> i & 1)
        out[:, pos[idx]] += c * vol
    return out


# ----------------------------------------------------------------- Thom forms

class ThomForm(DifferentialForm):
    """Degree-rank form on the total space supported in the δ₀-disk bundle."""

    def __init__(self, bundle, bump, coeff, sign, name="thom"):
        super().__init__(bundle.total, bundle.rank, coeff, support=FiberDisk(bump.delta0, bundle.m), name=name)
        self.bundle = bundle
        self.bump = bump
        self.sign = sign


def thom_form(b: PullbackBundle, bump: BumpProfile, chunk=50_000) -> ThomForm:
    """Berezin reduction of ω̄ times the global orientation sign."""
    if bump.rank != b.rank:
        raise RankError(f"bump rank {bump.rank} does not match bundle rank {b.rank}")
    if bump.delta0 > b.delta * (1 + 1e-12):
        raise RankError(f"δ₀ = {bump.delta0} exceeds the bundle radius δ = {b.delta}")
    sign = orientation_sign(b.rank)
    m = b.m

    def coeff(z):
        z = np.atleast_2d(z)
        out = np.empty((z.shape[0], n_components(b.total.dim, b.rank)))
        for s in range(0, z.shape[0], chunk):
            x, mu = z[s:s + chunk, :m], z[s:s + chunk, m:]
            out[s:s + chunk] = sign * berezin(b, omega_bar(b, bump, x, mu), x)
        return out

    return ThomForm(b, bump, coeff, sign)


def pullback_thom(b: PullbackBundle, omega_target: ThomForm) -> ThomForm:
    """F*ω along F(p, w) = (f(p), w) for the target's tangent-bundle Thom form."""
    f = b.map_f
    if f.differential is None:
        raise MapDescriptorError(f"{f.name}: pulling back a Thom form needs an analytic differential")
    src = omega_target.bundle
    m, n, mt = b.m, b.rank, src.m

    def value(z):
        z = np.atleast_2d(z)
        return np.concatenate([f(z[:, :m]), z[:, m:]], axis=1)

    def diff(z):
        z = np.atleast_2d(z)
        J = np.zeros((z.shape[0], mt + n, m + n))
        J[:, :mt, :m] = f.jacobian(z[:, :m])
        J[:, mt:, m:] = np.eye(n)
        return J

    F = SmoothMap(b.total, src.total, value, diff, name=f"F[{f.name}]")
    pulled = pullback(omega_target, F)
    return ThomForm(b, omega_target.bump, pulled._coeff, omega_target.sign, name=f"F*{omega_target.name}")
