"""Geodesic flow, exponential map and shooting-based logarithm."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .errors import ChartExitError, DomainError, NoConvergenceError, StiffnessError
from .geometry import ChartManifold, christoffel

ODE_ABS_TOL = 1e-10
ODE_REL_TOL = 1e-10
SHOOT_TOL = 1e-9
MAX_SHOOT_ITER = 50


@dataclass(frozen=True)
class GeodesicState:
    x: np.ndarray
    mu: np.ndarray


def _batch(p, v, dim):
    p = np.asarray(p, dtype=float)
    v = np.asarray(v, dtype=float)
    single = p.ndim == 1 and v.ndim == 1
    p, v = np.atleast_2d(p), np.atleast_2d(v)
    p, v = np.broadcast_arrays(p, v)
    if p.shape[-1] != dim:
        raise DomainError(f"expected {dim} coordinates, got {p.shape[-1]}")
    return p.copy(), v.copy(), single


def kinetic_energy(M, x, mu):
    g = M.metric(np.atleast_2d(x))
    return np.einsum("ni,nij,nj->n", np.atleast_2d(mu), g, np.atleast_2d(mu))


def geodesic_flow(M: ChartManifold, p, v, t, *, abs_tol=ODE_ABS_TOL, rel_tol=ODE_REL_TOL,
                  wrap=True):
    """Integrate ẋ = μ, μ̇^k = −Γ^k_ij μ^i μ^j for time t from (p, v).

    Accepts single points or batches (N, dim); batches are integrated as one
    stacked system. Flat manifolds use straight lines.
    """
    d = M.dim
    p, v, single = _batch(p, v, d)
    t = float(t)
    if t == 0.0:
        x, mu = p, v
    elif M.flat and M.christoffel_fn is None:
        x, mu = p + t * v, v
    else:
        x, mu = _integrate(M, p, v, t, abs_tol, rel_tol)
    if wrap:
        x = M.wrap(x)
    if single:
        return GeodesicState(x[0], mu[0])
    return GeodesicState(x, mu)


def _integrate(M, p, v, t, abs_tol, rel_tol):
    n, d = p.shape
    y0 = np.concatenate([p, v], axis=1).ravel()

    def rhs(_, y):
        y = y.reshape(n, 2 * d)
        x, mu = y[:, :d], y[:, d:]
        gam = christoffel(M, x)
        acc = -np.einsum("nkij,ni,nj->nk", gam, mu, mu)
        return np.concatenate([mu, acc], axis=1).ravel()

    events = []
    bounded = [i for i, per in enumerate(M.periodic)
               if not per and np.isfinite(M.lower[i]) and np.isfinite(M.upper[i])]
    if M.strict and bounded:
        def leave(_, y):
            x = y.reshape(n, 2 * d)[:, :d]
            return float(np.min(np.minimum(x[:, bounded] - M.lower[bounded],
                                           M.upper[bounded] - x[:, bounded])))
        leave.terminal = True
        leave.direction = -1
        events.append(leave)
    sol = solve_ivp(rhs, (0.0, t), y0, method="RK45", atol=abs_tol, rtol=rel_tol,
                    events=events or None)
    if sol.status == 1:
        raise ChartExitError(f"{M.name}: geodesic left the chart at t={sol.t_events[0][0]:.6g}",
                             exit_time=float(sol.t_events[0][0]))
    if sol.status < 0:
        raise StiffnessError(f"{M.name}: geodesic integration failed: {sol.message}")
    y = sol.y[:, -1].reshape(n, 2 * d)
    return y[:, :d], y[:, d:]


def exp_map(M: ChartManifold, p, v, *, radius=None, **kw):
    """exp_p(v) = geodesic_flow at t = 1; radius guards |v|_g."""
    p2, v2, single = _batch(p, v, M.dim)
    limit = M.injectivity_radius_hint if radius is None else radius
    norms = np.sqrt(np.maximum(kinetic_energy(M, p2, v2), 0.0))
    if np.any(norms > limit * (1 + 1e-12)):
        raise DomainError(f"|v|_g = {np.max(norms):.6g} exceeds the safe radius {limit:.6g}")
    out = geodesic_flow(M, p2, v2, 1.0, **kw).x
    zero = np.all(v2 == 0.0, axis=1)
    out[zero] = M.wrap(p2[zero])
    return out[0] if single else out


def chart_difference(M: ChartManifold, p, q):
    """q − p with periodic axes reduced to the minimal representative."""
    diff = np.asarray(q, dtype=float) - np.asarray(p, dtype=float)
    per = M.periods
    for i, P in enumerate(per):
        if np.isfinite(P):
            diff[..., i] = diff[..., i] - P * np.round(diff[..., i] / P)
    return diff


def log_map(M: ChartManifold, p, q, *, tol=SHOOT_TOL, max_iter=MAX_SHOOT_ITER, fd_step=1e-6, **kw):
    """Initial velocity v with exp_p(v) = q, by Newton shooting."""
    d = M.dim
    p2, q2, single = _batch(p, q, d)
    v = chart_difference(M, p2, q2)
    if M.flat and M.christoffel_fn is None:
        return v[0] if single else v
    n = p2.shape[0]
    for _ in range(max_iter):
        r = chart_difference(M, q2, geodesic_flow(M, p2, v, 1.0, wrap=False, **kw).x)
        err = np.max(np.abs(r))
        if err < tol:
            return v[0] if single else v
        # central-difference Jacobian of exp_p at v, all points and axes in one stacked solve
        pert = np.repeat(v[:, None, :], 2 * d, axis=1)
        for a in range(d):
            pert[:, 2 * a, a] += fd_step
            pert[:, 2 * a + 1, a] -= fd_step
        pp = np.repeat(p2[:, None, :], 2 * d, axis=1)
        xs = geodesic_flow(M, pp.reshape(-1, d), pert.reshape(-1, d), 1.0, wrap=False, **kw).x
        xs = xs.reshape(n, d, 2, d)
        J = np.transpose((xs[:, :, 0, :] - xs[:, :, 1, :]) / (2 * fd_step), (0, 2, 1))
        v = v - np.linalg.solve(J, r[..., None])[..., 0]
    raise NoConvergenceError(f"log_map shooting did not converge in {max_iter} iterations (residual {err:.3e})")
