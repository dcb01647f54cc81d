"""Mollifier smoothing G_ν of maps and empirical moduli of uniform maps."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import DomainError, UndersamplingError
from .quadrature import unit_ball_rule

MIN_PAIRS = 1000
PAIR_CHUNK = 2_000_000


# ----------------------------------------------------------------- cutoff and kernel

def _psi(u):
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    pos = u > 0
    out[pos] = np.exp(-1.0 / u[pos])
    return out


def smoothstep(u):
    """C^∞ ramp: 0 for u ≤ 0, 1 for u ≥ 1."""
    a, b = _psi(u), _psi(1.0 - np.asarray(u, dtype=float))
    return a / (a + b)


def bump_kernel(y):
    """Unnormalized exp(−1/(1 − |y|²)) on the open unit ball."""
    y = np.atleast_2d(y)
    s = np.sum(y * y, axis=1)
    out = np.zeros(y.shape[0])
    inside = s < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - s[inside]))
    return out


@lru_cache(maxsize=None)
def _kernel_rule(dim, n_radial, n_angular):
    pts, w = unit_ball_rule(dim, n_radial, n_angular)
    k = w * bump_kernel(pts)
    k = k / k.sum()
    k.setflags(write=False)
    return pts, k


@dataclass(frozen=True)
class MollifierConfig:
    """G_ν(x) = (1 − χ(|x|)) g(x) + χ(|x|) ∫_{B₁} g(x − νy) φ(y) dy.

    χ is 1 on [0, r], 0 on [r + h, ∞) and a smoothstep in between; φ is the
    standard bump normalized to unit mass against its own ball rule.
    """

    nu: float
    r: float = 0.5
    h: float = 0.25
    dim: int = 1
    n_radial: int = 64
    n_angular: int = 32

    def __post_init__(self):
        if self.nu < 0 or self.r < 0 or self.h <= 0:
            raise ValueError("need ν ≥ 0, r ≥ 0 and h > 0")

    def chi(self, t):
        t = np.asarray(t, dtype=float)
        return 1.0 - smoothstep((t - self.r) / self.h)

    def kernel_rule(self):
        """(nodes y_q, weights w_q φ(y_q)) summing to exactly 1."""
        return _kernel_rule(self.dim, self.n_radial, self.n_angular)


def kernel_mass(cfg: MollifierConfig, n_radial=400):
    """∫_{B₁} φ against a finer radial rule, using cfg's normalization."""
    import math
    from .quadrature import gauss_interval
    pts, w = unit_ball_rule(cfg.dim, cfg.n_radial, cfg.n_angular)
    c = 1.0 / float(np.sum(w * bump_kernel(pts)))
    r, wr = gauss_interval(n_radial, 0.0, 1.0)
    area = 2 * math.pi ** (cfg.dim / 2) / math.gamma(cfg.dim / 2)
    return c * area * float(np.sum(wr * r ** (cfg.dim - 1) * bump_kernel(r[:, None])))


def mollify(g, cfg: MollifierConfig, x, window=None):
    """G_ν at the rows of x; g maps (N, dim) to (N,) or (N, k).

    Points with |x| ≥ r + h and all points when ν = 0 return g(x) untouched.
    ``window`` = (lower, upper) bounds where g may be evaluated.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] != cfg.dim:
        raise DomainError(f"points of dimension {x.shape[1]} for a dimension-{cfg.dim} mollifier")
    gx = np.asarray(g(x), dtype=float)
    if cfg.nu == 0.0:
        return gx
    norm = np.linalg.norm(x, axis=1)
    active = norm < cfg.r + cfg.h
    out = gx.copy()
    if not np.any(active):
        return out
    xa = x[active]
    y, k = cfg.kernel_rule()
    shifted = (xa[:, None, :] - cfg.nu * y[None]).reshape(-1, cfg.dim)
    if window is not None:
        lo, hi = (np.asarray(v, dtype=float) for v in window)
        if np.any(shifted < lo - 1e-12) or np.any(shifted > hi + 1e-12):
            raise DomainError("mollifier stencil leaves the evaluation window of g")
    gv = np.asarray(g(shifted), dtype=float)
    gv = gv.reshape((xa.shape[0], y.shape[0]) + gv.shape[1:])
    conv = np.tensordot(gv, k, axes=([1], [0])) if gv.ndim == 2 else np.einsum("nq...,q->n...", gv, k)
    c = cfg.chi(norm[active]).reshape((-1,) + (1,) * (conv.ndim - 1))
    out[active] = (1.0 - c) * gx[active] + c * conv
    return out


def sup_error(g, cfg: MollifierConfig, samples, window=None):
    """max |g − G_ν| over the samples."""
    samples = np.atleast_2d(samples)
    diff = np.asarray(g(samples), dtype=float) - mollify(g, cfg, samples, window)
    diff = diff.reshape(samples.shape[0], -1)
    return float(np.max(np.linalg.norm(diff, axis=1))) if diff.size else 0.0


def second_derivative_bound(g, cfg: MollifierConfig, samples, step=1e-3):
    """(max |∂²G_ν| inside B_r over samples, sup |g|) for the smoothness proxy."""
    samples = np.atleast_2d(samples)
    samples = samples[np.linalg.norm(samples, axis=1) < cfg.r]
    best = 0.0
    for a in range(cfg.dim):
        e = np.zeros(cfg.dim)
        e[a] = step
        vals = [mollify(g, cfg, samples + s * e) for s in (-1, 0, 1)]
        d2 = (vals[0] - 2 * vals[1] + vals[2]) / step ** 2
        best = max(best, float(np.max(np.abs(d2))) if d2.size else 0.0)
    gs = float(np.max(np.abs(np.asarray(g(samples), dtype=float)))) if samples.size else 0.0
    return best, gs


def chi_modulus(cfg: MollifierConfig, eps, n=20001):
    """Empirical δ_χ(ε): largest δ with |χ(s) − χ(t)| ≤ ε for |s − t| ≤ δ."""
    t = np.linspace(cfg.r, cfg.r + cfg.h, n)
    slope = float(np.max(np.abs(np.gradient(cfg.chi(t), t))))
    return eps / slope


def epsnu_condition(cfg: MollifierConfig, eps, g_sup, delta_g):
    """Checks δ(ε) ≤ δ_χ(ε/|g|₀) numerically; returns (holds, δ_χ)."""
    dchi = chi_modulus(cfg, eps / max(g_sup, 1e-300))
    return bool(delta_g <= dchi), dchi


# ----------------------------------------------------------------- moduli

@dataclass
class ModulusEstimate:
    """Empirical δ̂(ε) and Ŝ(R) tables at the sampling grid scale."""

    eps: np.ndarray
    delta_hat: np.ndarray
    radii: np.ndarray
    S_hat: np.ndarray
    spacing: float
    window: tuple
    n_pairs: int
    label: str = "empirical at grid scale"
    meta: dict = field(default_factory=dict)

    def as_dict(self):
        return {
            "label": self.label,
            "spacing": self.spacing,
            "window": [list(map(float, w)) for w in self.window],
            "n_pairs": self.n_pairs,
            "continuity": [[float(e), float(d)] for e, d in zip(self.eps, self.delta_hat)],
            "properness": [[float(r), float(s)] for r, s in zip(self.radii, self.S_hat)],
        }


def _wrapped(diff, periods):
    if periods is None:
        return diff
    out = diff.copy()
    for i, p in enumerate(periods):
        if p:
            out[..., i] -= p * np.round(out[..., i] / p)
    return out


def _periods(M):
    if M is None:
        return None
    return tuple(float(hi - lo) if per else 0.0 for lo, hi, per in zip(M.lower, M.upper, M.periodic))


def sample_grid(lower, upper, n, periodic=None):
    """Uniform grid with n points per axis (endpoint excluded on periodic axes)."""
    lower, upper = np.atleast_1d(lower).astype(float), np.atleast_1d(upper).astype(float)
    periodic = (False,) * lower.size if periodic is None else periodic
    axes = [np.linspace(a, b, n, endpoint=not per) for a, b, per in zip(lower, upper, periodic)]
    grids = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def _pair_distances(x, y, src_periods, tgt_periods):
    """Yield (source distance, target distance) arrays over all unordered pairs, chunked."""
    n = x.shape[0]
    rows = max(1, PAIR_CHUNK // max(n, 1))
    for s in range(0, n, rows):
        e = min(s + rows, n)
        i = np.arange(s, e)
        ds = np.linalg.norm(_wrapped(x[s:e, None, :] - x[None], src_periods), axis=2)
        dt = np.linalg.norm(_wrapped(y[s:e, None, :] - y[None], tgt_periods), axis=2)
        keep = np.arange(n)[None, :] > i[:, None]
        yield ds[keep], dt[keep]


def estimate_moduli(f, lower=None, upper=None, n=64, eps=None, radii=None, periodic=None, source=None,
                    target=None):
    """δ̂(ε) and Ŝ(R) from all point pairs of a uniform grid.

    f is a SmoothMap (its manifolds supply window and periodicity) or a callable
    on (N, m) arrays together with explicit lower/upper bounds.
    """
    src = getattr(f, "source", source)
    tgt = getattr(f, "target", target)
    if lower is None:
        lower, upper = src.lower, src.upper
    lower, upper = np.atleast_1d(lower).astype(float), np.atleast_1d(upper).astype(float)
    if periodic is None:
        periodic = tuple(src.periodic) if src is not None else (False,) * lower.size
    x = sample_grid(lower, upper, n, periodic)
    y = np.asarray(f(x), dtype=float).reshape(x.shape[0], -1)
    npairs = x.shape[0] * (x.shape[0] - 1) // 2
    if npairs < MIN_PAIRS:
        raise UndersamplingError(f"{npairs} sample pairs; at least {MIN_PAIRS} are needed")
    sp = _periods(src) if src is not None else None
    tp = _periods(tgt) if tgt is not None else None
    spacing = float(np.max((upper - lower) / (n if all(periodic) else max(n - 1, 1))))
    eps = np.asarray([0.05, 0.1, 0.2, 0.4] if eps is None else eps, dtype=float)
    radii = np.asarray([0.05, 0.1, 0.2, 0.4] if radii is None else radii, dtype=float)
    # first violating source distance for each ε, and preimage diameters for each R
    viol = np.full(eps.size, np.inf)
    S = np.zeros(radii.size)
    for ds, dt in _pair_distances(x, y, sp, tp):
        bad = dt[:, None] > eps[None] * (1 + 1e-12)
        cand = np.where(bad, ds[:, None], np.inf)
        viol = np.minimum(viol, cand.min(axis=0))
        within = dt[:, None] <= radii[None] * (1 + 1e-12)
        S = np.maximum(S, np.where(within, ds[:, None], 0.0).max(axis=0))
    delta = np.zeros(eps.size)
    for ds, _ in _pair_distances(x, y, sp, tp):
        ok = ds[:, None] < viol[None] * (1 - 1e-12)
        delta = np.maximum(delta, np.where(ok, ds[:, None], 0.0).max(axis=0))
    # enforce monotone tables (ties in the grid distances can otherwise wiggle)
    delta = np.maximum.accumulate(delta[np.argsort(eps)])[np.argsort(np.argsort(eps))]
    S = np.maximum.accumulate(S[np.argsort(radii)])[np.argsort(np.argsort(radii))]
    return ModulusEstimate(eps, delta, radii, S, spacing, (tuple(lower), tuple(upper)), npairs)
