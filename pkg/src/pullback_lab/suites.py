"""Verification suites run by the scenario runner.

Each suite returns a list of report checks. Tolerances are scaled by the
run's ``tol_scale``; pass/fail is decided at the "default" refinement level
and convergence is fitted over all levels that were run.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .analysis import MollifierConfig, epsnu_condition, estimate_moduli, mollify, sup_error
from .bundles import (PullbackBundle, disk_bundle_projection, fiber_integrate, fiber_volume_submersion,
                      jensen_check, tangent_bundle)
from .config import Scenario, sample_points
from .errors import PullbackLabError
from .forms import DifferentialForm, FiberDisk, closed_basis, numeric_derivative
from .multiindex import n_components
from .pullback import (fiber_volume_pf, make_tf, pairing_matrix, pullback_vs_tf,
                       pushforward_density, residual_chain_map, residual_functoriality, residual_K1,
                       residual_T_id)
from .quadrature import QuadratureGrid, periodic_grid
from .report import Check, Level, attach_convergence
from .thom import build_bump, thom_form


@dataclass(frozen=True)
class RefinementLevel:
    name: str
    parameter: float      # relative mesh parameter (1, 1/2, ...)
    n_radial: int
    n_angular: int
    interval_nodes: int
    step: float           # stencil step for numeric d (relative to the chart scale)
    thom_step: float      # stencil step for dω


LEVELS = (
    RefinementLevel("coarse", 1.0, 12, 24, 4, 0.04, 4e-3),
    RefinementLevel("default", 0.5, 24, 48, 8, 0.02, 2e-3),
    RefinementLevel("fine", 0.25, 48, 96, 16, 0.01, 1e-3),
    RefinementLevel("finer", 0.125, 96, 192, 32, 0.005, 5e-4),
)
DEFAULT = 1

# tolerances at the default level
TOL = {
    "thom_integral": 1e-4,
    "thom_order": 1.8,
    "disk_volume_rel": 1e-6,
    "pf_volume_exact": 1e-3,
    "pf_volume_oracle": 2e-2,
    "t_id": 5e-3,
    "chain_map": 1e-2,
    "chain_order": 1.8,
    "functoriality": 1e-2,
    "k1": 5e-3,
    "k1_ratio": 0.5,
    "isometry_pairing": 1e-3,
    "pairing_matrix": 1e-2,
    "moduli_stability": 0.10,
}


def threads():
    try:
        n = int(os.environ.get("PULLBACK_LAB_THREADS", "1"))
    except ValueError:
        n = 1
    return max(1, n)


def sweep(fn, points, chunk=8):
    """Apply fn to chunks of points (optionally in threads); results concatenated in order."""
    points = np.atleast_2d(points)
    parts = [points[i:i + chunk] for i in range(0, points.shape[0], chunk)]
    n = threads()
    if n == 1 or len(parts) == 1:
        out = [fn(p) for p in parts]
    else:
        with ThreadPoolExecutor(max_workers=n) as pool:
            out = list(pool.map(fn, parts))
    return np.concatenate(out, axis=0)


def _levels(scn: Scenario):
    return LEVELS[:scn.levels]


def _guard(check: Check, fn):
    try:
        fn()
    except PullbackLabError as exc:
        check.error = f"{type(exc).__name__}: {exc}"
    except (ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
        check.error = f"{type(exc).__name__}: {exc}"
    return check


def _skip(check: Check, reason):
    check.skipped = reason
    check.diagnostics.append(f"skipped: {reason}")
    return check


def _bundle(scn: Scenario):
    return PullbackBundle(scn.manifold, scn.target, scn.map, scn.delta)


def _scale(M):
    return float(np.min(M.scale))


def _is_torus(M):
    return all(M.periodic) and M.flat


# ----------------------------------------------------------------- thom

def suite_thom(scn: Scenario):
    b = _bundle(scn)
    tol = TOL["thom_integral"] * scn.tol_scale
    integral = Check("thom", "fiber_integral", {"abs": tol})
    closed = Check("thom", "closedness", {"order_min": TOL["thom_order"]})

    def run_integral():
        omega = thom_form(b, build_bump(scn.delta0, b.rank))
        pts = sample_points(b.base, max(scn.points, 20), scn.seed, margin=0.1)
        for lv in _levels(scn):
            vals = sweep(lambda p: fiber_integrate(b, omega, lv.n_radial, lv.n_angular)(p)[:, 0], pts)
            integral.levels.append(Level(lv.name, lv.parameter, float(np.max(np.abs(vals - 1.0)))))
        attach_convergence(integral)
        integral.value = integral.levels[DEFAULT].residual
        integral.passed = integral.value <= tol

    def run_closed():
        omega = thom_form(b, build_bump(scn.delta0, b.rank))
        x = sample_points(b.base, max(scn.points, 20), scn.seed + 1, margin=0.1)
        rng = np.random.Generator(np.random.Philox(key=scn.seed + 2))
        ang = rng.random((x.shape[0], b.rank)) - 0.5
        ang /= np.linalg.norm(ang, axis=1, keepdims=True)
        mu = ang * (0.9 * scn.delta0 * rng.random((x.shape[0], 1)))
        z = np.concatenate([x, mu], axis=1)
        if omega.degree >= omega.dim:
            return _skip(closed, "Thom form has top degree on the total space")
        for lv in _levels(scn):
            h = lv.thom_step * _scale(b.base)
            d = sweep(lambda p: numeric_derivative(omega, h=h)(p), z)
            closed.levels.append(Level(lv.name, h, float(np.max(np.abs(d)))))
        attach_convergence(closed)
        closed.value = closed.levels[DEFAULT].residual
        closed.passed = closed.order_status == "floor-limited" or (
            closed.order is not None and closed.order >= TOL["thom_order"])
        if closed.order_status == "floor-limited":
            closed.diagnostics.append("dω at the rounding floor on all levels")
    return [_guard(integral, run_integral), _guard(closed, run_closed)]


# ----------------------------------------------------------------- fiber volume

def _random_fiber_forms(b: PullbackBundle, count, seed, radius):
    """Fiber-compact forms c(x) ψ(|μ|²/r²) on the total space, random degrees and frequencies."""
    rng = np.random.Generator(np.random.Philox(key=seed))
    E = b.total
    out = []
    for i in range(count):
        deg = int(rng.integers(b.rank, E.dim + 1))
        ncomp = n_components(E.dim, deg)
        amp = rng.standard_normal(ncomp)
        freq = rng.integers(1, 3, size=(ncomp, b.m))
        phase = rng.random(ncomp) * 2 * np.pi

        def coeff(z, amp=amp, freq=freq, phase=phase):
            z = np.atleast_2d(z)
            x, mu = z[:, :b.m], z[:, b.m:]
            s = np.sum(mu * mu, axis=1) / radius ** 2
            prof = np.where(s < 1, np.exp(-1.0 / np.maximum(1 - s, 1e-300)), 0.0)
            arg = 2 * np.pi * x @ freq.T + phase
            return amp * np.cos(arg) * prof[:, None]
        out.append(DifferentialForm(E, deg, coeff, support=FiberDisk(radius, b.m), name=f"fiber_form{i}"))
    return out


# pushforward-oracle ball radius (fraction of δ) and base Gauss order per base dimension
ORACLE_RULE = {1: (0.05, 8000), 2: (0.25, 128)}


def suite_fiber_volume(scn: Scenario):
    b = _bundle(scn)
    checks = []
    disk = Check("fiber_volume", "disk_bundle_volume", {"rel": TOL["disk_volume_rel"] * scn.tol_scale})

    def run_disk():
        pts = sample_points(b.base, 10, scn.seed, margin=0.1)
        vol = fiber_volume_submersion(disk_bundle_projection(b), pts)
        expect = math.pi ** (b.rank / 2) / math.gamma(b.rank / 2 + 1) * b.delta ** b.rank
        disk.value = float(np.max(np.abs(vol / expect - 1)))
        disk.data = {"expected": expect}
        disk.passed = disk.value <= disk.tolerance["rel"]
    checks.append(_guard(disk, run_disk))

    pf = Check("fiber_volume", "pf_fiber_volume", {"exact_abs": TOL["pf_volume_exact"] * scn.tol_scale,
                                                   "oracle_rel": TOL["pf_volume_oracle"] * scn.tol_scale})

    def run_pf():
        if not b.is_flat:
            return _skip(pf, "adaptive fiber-volume quadrature is run on flat targets only")
        q = sample_points(b.target, 3, scn.seed + 5, margin=0.2)
        J = b.map_f.jacobian(sample_points(b.base, 64, scn.seed + 6, margin=0.1))
        dets = np.linalg.det(J)
        vals = np.array([fiber_volume_pf(b, qi, normalized=True) for qi in q])
        const = bool(np.ptp(dets) < 1e-12 and np.all(dets != 0))
        pf.data = {"normalized": vals.tolist()}
        if const and _is_torus(b.base) == _is_torus(b.target):
            expect = 1.0 / abs(float(dets[0]))
            pf.value = float(np.max(np.abs(vals - expect)))
            pf.data["expected"] = expect
            pf.passed = pf.value <= pf.tolerance["exact_abs"]
        else:
            ball = math.pi ** (b.rank / 2) / math.gamma(b.rank / 2 + 1) * b.delta ** b.rank
            frac, orders = ORACLE_RULE.get(b.m, (0.25, 32))
            orc = np.array([pushforward_density(b, qi, frac * b.delta, base_orders=orders) for qi in q]) / ball
            pf.value = float(np.max(np.abs(vals / orc - 1)))
            pf.data["oracle"] = orc.tolist()
            pf.passed = pf.value <= pf.tolerance["oracle_rel"]
    checks.append(_guard(pf, run_pf))

    jen = Check("fiber_volume", "jensen_bound", {"violations": 0})

    def run_jensen():
        forms = _random_fiber_forms(b, 20, scn.seed + 7, scn.delta0)
        grid = QuadratureGrid(b.base, tuple(b.base.lower), tuple(b.base.upper), orders=(12,))
        if not _is_torus(b.base):
            lo = b.base.lower + 0.1 * (b.base.upper - b.base.lower)
            hi = b.base.upper - 0.1 * (b.base.upper - b.base.lower)
            grid = QuadratureGrid(b.base, tuple(lo), tuple(hi), orders=(12,))
        worst = -np.inf
        bad = 0
        for eta in forms:
            for p in (1, 2, 3):
                lhs, rhs, _ = jensen_check(b, eta, p, grid, 12, 24)
                worst = max(worst, (lhs - rhs) / max(rhs, 1e-300))
                bad += lhs > rhs * (1 + 1e-12)
        jen.value = float(bad)
        jen.data = {"max_relative_slack": float(worst), "forms": len(forms)}
        jen.passed = bad == 0
    checks.append(_guard(jen, run_jensen))
    return checks


# ----------------------------------------------------------------- T_id and chain map

def suite_t_id(scn: Scenario):
    N = scn.target
    checks = []
    pts = sample_points(N, scn.points, scn.seed + 11, margin=0.2)
    tol = TOL["t_id"] * scn.tol_scale
    for form in scn.build_forms():
        c = Check("t_id", form.name, {"max_norm": tol, "monotone": True})

        def run(form=form, c=c):
            for lv in _levels(scn):
                T = make_tf(N, N, None, scn.delta, scn.delta0, lv.n_radial, lv.n_angular)
                h = lv.step * _scale(N)
                r = sweep(lambda p: np.atleast_1d(residual_T_id(N, form, p, n_nodes=lv.interval_nodes, h=h,
                                                                T=T)[0]), pts)
                c.levels.append(Level(lv.name, lv.parameter, float(np.max(r))))
            attach_convergence(c)
            c.value = c.levels[DEFAULT].residual
            c.passed = c.value <= tol and bool(c.monotone)
        checks.append(_guard(c, run))
    return checks


def suite_chain_map(scn: Scenario):
    M = scn.manifold
    checks = []
    pts = sample_points(M, scn.points, scn.seed + 13, margin=0.2)
    tol = TOL["chain_map"] * scn.tol_scale
    for form in scn.build_forms():
        c = Check("chain_map", form.name, {"max_norm": tol, "order_min": TOL["chain_order"]})
        if form.degree >= form.dim:
            checks.append(_skip(c, "top-degree form: both sides vanish"))
            continue

        def run(form=form, c=c):
            for lv in _levels(scn):
                T = make_tf(M, scn.target, scn.map, scn.delta, scn.delta0, lv.n_radial, lv.n_angular)
                h = lv.step * _scale(M)
                r = sweep(lambda p: np.atleast_1d(residual_chain_map(T, form, p, h=h)[0]), pts)
                c.levels.append(Level(lv.name, h, float(np.max(r))))
            attach_convergence(c)
            c.value = c.levels[DEFAULT].residual
            ok_order = c.order_status == "floor-limited" or (c.order is not None and c.order >= TOL["chain_order"])
            c.passed = c.value <= tol and ok_order
        checks.append(_guard(c, run))
    return checks


# ----------------------------------------------------------------- pairing-level identities

def _pairing_grid(scn, M):
    return periodic_grid(M, scn.pairing_nodes)


# nested T_g T_f costs (fiber nodes)² per base point, so the composition check keeps the
# default radial resolution (which controls the normalization defect) with fewer angles
FUNCTORIALITY_RULE = (24, 16)
FUNCTORIALITY_NODES = 8


def suite_functoriality(scn: Scenario):
    c = Check("functoriality", "composition", {"max_abs_pairing": TOL["functoriality"] * scn.tol_scale})
    if scn.map2 is None:
        return [_skip(c, "no second map (map2) configured")]
    if not (_is_torus(scn.manifold) and _is_torus(scn.target)):
        return [_skip(c, "pairing checks run on flat tori")]

    def run():
        M = scn.manifold
        grid = periodic_grid(M, min(scn.pairing_nodes, FUNCTORIALITY_NODES))
        basis = closed_basis(M)
        worst = 0.0
        per = {}
        nr, na = FUNCTORIALITY_RULE
        for form in scn.build_forms():
            betas = basis[M.dim - form.degree]
            r = residual_functoriality(scn.map, scn.map2, form, betas, grid, scn.delta, scn.delta0, nr, na)
            per[form.name] = r.tolist()
            worst = max(worst, float(np.max(np.abs(r))))
        c.value = worst
        c.data = {"pairings": per, "fiber_rule": [nr, na], "pairing_nodes": grid.orders[0]}
        c.passed = worst <= c.tolerance["max_abs_pairing"]
    return [_guard(c, run)]


def _isometry(f, samples):
    J = f.jacobian(samples)
    g = f.source.metric(samples)
    h = f.target.metric(f(samples))
    defect = np.max(np.abs(np.einsum("nji,njk,nkl->nil", J, h, J) - g))
    return defect < 1e-10, float(np.min(np.linalg.det(J)))


def suite_pairing(scn: Scenario):
    M, N, f = scn.manifold, scn.target, scn.map
    iso = Check("pairing", "isometry_pullback", {"max_abs_pairing": TOL["isometry_pairing"] * scn.tol_scale})
    mat = Check("pairing", "pairing_matrix", {"max_abs": TOL["pairing_matrix"] * scn.tol_scale})
    if not (_is_torus(M) and _is_torus(N)):
        return [_skip(iso, "pairing checks run on flat tori"), _skip(mat, "pairing checks run on flat tori")]
    samples = sample_points(M, 16, scn.seed + 17)
    is_iso, det = _isometry(f, samples)
    grid = _pairing_grid(scn, M)
    basis_M, basis_N = closed_basis(M), closed_basis(N)
    out = []
    if not is_iso:
        out.append(_skip(iso, f"{f.name} is not an isometry"))
    else:
        def run_iso():
            alphas = [a for k in range(N.dim + 1) for a in basis_N[k]] + scn.build_forms()
            worst, rows = 0.0, []
            for a in alphas:
                r = pullback_vs_tf(f, a, basis_M[M.dim - a.degree], grid, scn.delta, scn.delta0)
                rows.append(r.tolist())
                worst = max(worst, float(np.max(np.abs(r))))
            iso.value = worst
            iso.data = {"pairings": rows}
            iso.passed = worst <= iso.tolerance["max_abs_pairing"]
        out.append(_guard(iso, run_iso))
    if not is_iso or det <= 0:
        out.append(_skip(mat, f"{f.name} is not an orientation-preserving isometry"))
    else:
        def run_mat():
            forms = [a for k in range(N.dim + 1) for a in basis_N[k]]
            T = make_tf(M, N, f, scn.delta, scn.delta0)
            P = pairing_matrix(forms, grid)
            PT = pairing_matrix(forms, grid, transform=T.apply)
            mat.value = float(np.max(np.abs(PT - P)))
            mat.data = {"reference": P, "transformed": PT}
            mat.passed = mat.value <= mat.tolerance["max_abs"]
        out.append(_guard(mat, run_mat))
    return out


# ----------------------------------------------------------------- homotopy

def suite_homotopy(scn: Scenario):
    N = scn.target
    b = tangent_bundle(N, scn.delta)
    checks = []
    x = sample_points(N, scn.points, scn.seed + 19, margin=0.2)
    rng = np.random.Generator(np.random.Philox(key=scn.seed + 20))
    ang = rng.standard_normal((x.shape[0], N.dim))
    ang /= np.linalg.norm(ang, axis=1, keepdims=True)
    mu = ang * (scn.delta * rng.random((x.shape[0], 1)))
    H = b.bundle_metric(x)
    mu /= np.sqrt(np.einsum("ni,nij,nj->n", mu, H, mu) / np.sum(mu * mu, axis=1))[:, None]
    z = np.concatenate([x, mu], axis=1)
    tol = TOL["k1"] * scn.tol_scale
    for form in scn.build_forms():
        c = Check("homotopy", f"K1:{form.name}", {"max_norm": tol, "ratio_max": TOL["k1_ratio"]})

        def run(form=form, c=c):
            for lv in _levels(scn):
                h = lv.step * _scale(N)
                r = sweep(lambda p: np.atleast_1d(residual_K1(b, form, p, h=h, n_nodes=lv.interval_nodes)[0]), z)
                c.levels.append(Level(lv.name, lv.parameter, float(np.max(r))))
            attach_convergence(c)
            res = np.array([l.residual for l in c.levels])
            ratios = res[1:] / np.maximum(res[:-1], 1e-300)
            floor = res[1:] <= 1e-11
            c.data = {"ratios": ratios}
            c.value = c.levels[DEFAULT].residual
            c.passed = c.value <= tol and bool(np.all((ratios <= TOL["k1_ratio"]) | floor))
        checks.append(_guard(c, run))
    return checks


# ----------------------------------------------------------------- smoothing

def _smoothing_catalog():
    return [
        ("sin", 1, lambda x: np.sin(x[:, 0])),
        ("abs", 1, lambda x: np.abs(x[:, 0])),
        ("cubic", 1, lambda x: x[:, 0] ** 3 - x[:, 0]),
        ("linear2d", 2, lambda x: np.column_stack([2 * x[:, 0] - x[:, 1], x[:, 0] + 0.5 * x[:, 1]])),
        ("shear2d", 2, lambda x: np.column_stack([x[:, 0] + 0.1 * np.sin(2 * np.pi * x[:, 1]), x[:, 1]])),
    ]


def suite_smoothing(scn: Scenario):
    checks = []
    rng = np.random.Generator(np.random.Philox(key=scn.seed + 23))
    eps_list = np.array([0.05, 0.1, 0.2])
    for name, dim, g in _smoothing_catalog():
        c = Check("smoothing", name, {"locality": "exact", "nu_zero": "exact", "sup_error": "<= eps"})

        def run(name=name, dim=dim, g=g, c=c):
            cfg0 = MollifierConfig(0.1, r=0.5, h=0.25, dim=dim)
            far = rng.standard_normal((64, dim))
            far = far / np.linalg.norm(far, axis=1, keepdims=True) * (cfg0.r + cfg0.h + rng.random((64, 1)))
            local = bool(np.array_equal(mollify(g, cfg0, far), g(far)))
            near = (rng.random((64, dim)) - 0.5) * 1.2
            zero = bool(np.array_equal(mollify(g, MollifierConfig(0.0, dim=dim), near), g(near)))
            mod = estimate_moduli(g, [-1.5] * dim, [1.5] * dim, n=400 if dim == 1 else 40, eps=eps_list,
                                  radii=[1.0])
            errs, conds = [], []
            inner = (rng.random((200, dim)) - 0.5) * 2 * (cfg0.r + cfg0.h)
            gsup = float(np.max(np.abs(g(inner))))
            ok = True
            for eps, dh in zip(eps_list, mod.delta_hat):
                cfg = MollifierConfig(float(dh), r=0.5, h=0.25, dim=dim)
                e = sup_error(g, cfg, inner)
                errs.append(e)
                conds.append(epsnu_condition(cfg, eps, gsup, dh)[0])
                ok &= e <= eps * scn.tol_scale
            c.value = float(max(errs))
            c.data = {"eps": eps_list, "nu": mod.delta_hat, "sup_error": errs, "epsnu_condition": conds,
                      "locality": local, "nu_zero_identity": zero}
            c.passed = local and zero and ok
        checks.append(_guard(c, run))
    return checks


# ----------------------------------------------------------------- moduli

MODULI_GRID = {1: 256, 2: 32, 3: 10}


def suite_moduli(scn: Scenario):
    f = scn.map
    M = f.source
    c = Check("moduli", f.name, {"monotone": True, "stability_rel": TOL["moduli_stability"] * scn.tol_scale})

    def run():
        n = MODULI_GRID.get(M.dim, 8)
        lo, hi = M.lower.copy(), M.upper.copy()
        for i, per in enumerate(M.periodic):
            if M.flat and not per and (hi[i] - lo[i]) > 2:
                lo[i], hi[i] = -1.0, 1.0
        # thresholds in units of the window size so they stay several grid spacings wide
        span = float(np.min(hi - lo))
        eps, radii = [0.1 * span, 0.2 * span, 0.4 * span], [0.2 * span, 0.4 * span]
        a = estimate_moduli(f, lo, hi, n=n, eps=eps, radii=radii)
        b = estimate_moduli(f, lo, hi, n=2 * n, eps=eps, radii=radii)
        mono = bool(np.all(np.diff(a.delta_hat) >= 0) and np.all(np.diff(a.S_hat) >= 0))
        da = np.abs(a.delta_hat - b.delta_hat) / np.maximum(b.delta_hat, 1e-300)
        sa = np.abs(a.S_hat - b.S_hat) / np.maximum(b.S_hat, 1e-300)
        c.value = float(max(da.max(), sa.max()))
        c.data = {"coarse": a.as_dict(), "fine": b.as_dict()}
        c.passed = mono and c.value <= c.tolerance["stability_rel"]
    return [_guard(c, run)]


SUITE_FUNCS = {
    "thom": suite_thom,
    "fiber_volume": suite_fiber_volume,
    "t_id": suite_t_id,
    "chain_map": suite_chain_map,
    "functoriality": suite_functoriality,
    "homotopy": suite_homotopy,
    "smoothing": suite_smoothing,
    "moduli": suite_moduli,
    "pairing": suite_pairing,
}


def run_suites(scn: Scenario):
    """Run the selected suites in the canonical order."""
    from .config import SUITES
    checks = []
    for name in SUITES:
        if name in scn.suites:
            checks.extend(SUITE_FUNCS[name](scn))
    return checks
