"""Scenario configuration: TOML parsing, catalogs and validation."""
from __future__ import annotations

import hashlib
import json
import re
import sys
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError, ExpressionError, PullbackLabError
from .forms import DifferentialForm, form_from_expressions
from .geometry import ChartManifold, euclidean, sphere_chart, torus
from .maps import (SmoothMap, circle_degree1, constant_map, identity, linear, rotation90, shear,
                   theta_shear, translation)

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SUITES = ("thom", "fiber_volume", "t_id", "chain_map", "functoriality", "homotopy", "smoothing", "moduli",
          "pairing")


# ----------------------------------------------------------------- catalogs

MANIFOLD_PARAMS = {"R1": {"half_width"}, "R2": {"half_width"}, "R3": {"half_width"}, "T1": {"periods"},
                   "T2": {"periods"}, "T3": {"periods"}, "S2": {"margin"}}
MAP_PARAMS = {"identity": set(), "translation": {"shift"}, "linear": {"A", "offset"}, "rotation90": set(),
              "shear": {"amplitude"}, "circle_degree1": {"amplitude"}, "theta_shear": {"amplitude"},
              "constant": {"point"}}


def _manifold(kind, params):
    if kind in ("R1", "R2", "R3"):
        d = int(kind[1])
        half = float(params.get("half_width", 10.0))
        return euclidean(d, np.full(d, -half), np.full(d, half))
    if kind in ("T1", "T2", "T3"):
        d = int(kind[1])
        return torus(tuple(params.get("periods", [1.0] * d)))
    if kind == "S2":
        return sphere_chart(margin=float(params.get("margin", 0.05)))
    raise KeyError(kind)


MANIFOLDS = {
    "R1": "Euclidean line on a box chart (half_width, default 10)",
    "R2": "Euclidean plane on a box chart",
    "R3": "Euclidean space on a box chart",
    "T1": "flat circle (periods)",
    "T2": "flat square torus (periods)",
    "T3": "flat 3-torus (periods)",
    "S2": "round unit sphere in (theta, phi) with a polar margin (margin)",
}

MAPS = {
    "identity": "identity map",
    "translation": "torus translation by shift",
    "linear": "x -> A x + offset",
    "rotation90": "(x, y) -> (-y, x) on the square torus",
    "shear": "(x, y) -> (x + a sin 2 pi y, y) (amplitude)",
    "circle_degree1": "x -> x + a sin 2 pi x on the circle (amplitude)",
    "theta_shear": "(theta, phi) -> (theta + a sin phi, phi) between sphere charts (amplitude)",
    "constant": "constant map to point",
}


def _map(kind, M, N, params):
    if kind == "identity":
        if M.dim != N.dim:
            raise ValueError("identity needs equal dimensions")
        return identity(M)
    if kind == "translation":
        return translation(M, params["shift"])
    if kind == "linear":
        return linear(M, params["A"], N, params.get("offset"))
    if kind == "rotation90":
        return rotation90(M)
    if kind == "shear":
        return shear(M, params.get("amplitude", 0.1))
    if kind == "circle_degree1":
        return circle_degree1(M, params.get("amplitude", 0.2))
    if kind == "theta_shear":
        return theta_shear(M, N, params.get("amplitude", 0.1))
    if kind == "constant":
        return constant_map(M, N, params["point"])
    raise KeyError(kind)


def catalog_listing():
    return {"manifolds": dict(MANIFOLDS), "maps": dict(MAPS), "suites": list(SUITES)}


def catalog_hash():
    return hashlib.sha256(json.dumps(catalog_listing(), sort_keys=True).encode()).hexdigest()


# ----------------------------------------------------------------- scenario

@dataclass
class FormSpec:
    degree: int
    coeffs: dict
    name: str


@dataclass
class Scenario:
    name: str
    seed: int
    suites: list
    manifold: ChartManifold
    target: ChartManifold
    map: SmoothMap
    map2: Optional[SmoothMap]
    delta: float
    delta0: float
    forms: list
    points: int = 20
    pairing_nodes: int = 16
    levels: int = 3
    tol_scale: float = 1.0
    raw: dict = field(default_factory=dict)

    def build_forms(self, on=None):
        M = self.target if on is None else on
        out = []
        for spec in self.forms:
            out.append(form_from_expressions(M, spec.degree, spec.coeffs, M.coord_names, name=spec.name))
        return out

    @property
    def config_hash(self):
        return hashlib.sha256(json.dumps(self.raw, sort_keys=True, default=str).encode()).hexdigest()


def _line_of(text, key):
    if text is None or key is None:
        return None
    leaf = key.split(".")[-1].split("[")[0]
    for i, line in enumerate(text.splitlines(), 1):
        if re.match(rf"\s*\[*\s*{re.escape(leaf)}\s*[\]=]", line) or re.match(rf"\s*\[+[^\]]*\b{re.escape(leaf)}\]", line):
            return i
    return None


def _err(msg, fld, text):
    return ConfigError(msg, fld, _line_of(text, fld))


def _get(d, key, typ, fld, text, default=None, required=False):
    if key not in d:
        if required:
            raise _err(f"missing required key '{key}'", fld, text)
        return default
    v = d[key]
    if typ is float and isinstance(v, int) and not isinstance(v, bool):
        v = float(v)
    if not isinstance(v, typ) or (typ is int and isinstance(v, bool)):
        raise _err(f"expected {getattr(typ, '__name__', typ)}, got {type(v).__name__}", fld, text)
    return v


def load_scenario(path=None, text=None, seed=None, tol_scale=None) -> Scenario:
    if text is None:
        try:
            with open(path, "rb") as fh:
                raw_bytes = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        text = raw_bytes.decode("utf-8")
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"TOML syntax error: {exc}", None, int(m.group(1)) if m else None) from exc
    return scenario_from_dict(raw, text, seed, tol_scale)


def scenario_from_dict(raw, text=None, seed=None, tol_scale=None) -> Scenario:
    known = {"name", "seed", "suites", "manifold", "target", "map", "map2", "bundle", "grids", "forms"}
    for k in raw:
        if k not in known:
            raise _err(f"unknown key '{k}'", k, text)
    name = _get(raw, "name", str, "name", text, required=True)
    cfg_seed = _get(raw, "seed", int, "seed", text, default=0)
    if seed is not None:
        cfg_seed = int(seed)
    if cfg_seed < 0 or cfg_seed >= 2 ** 64:
        raise _err("seed must be an unsigned 64-bit integer", "seed", text)
    suites = _get(raw, "suites", list, "suites", text, default=[])
    for s in suites:
        if s not in SUITES:
            raise _err(f"unknown suite '{s}' (choose from {', '.join(SUITES)})", "suites", text)

    man = _get(raw, "manifold", dict, "manifold", text, required=True)
    M = _build_manifold(man, "manifold", text)
    tgt = _get(raw, "target", dict, "target", text)
    N = _build_manifold(tgt, "target", text) if tgt is not None else M
    mp = _get(raw, "map", dict, "map", text, default={"id": "identity"})
    f = _build_map(mp, M, N, "map", text)
    mp2 = _get(raw, "map2", dict, "map2", text)
    g = _build_map(mp2, M, M, "map2", text) if mp2 is not None else None

    bundle = _get(raw, "bundle", dict, "bundle", text, default={})
    inj = min(M.injectivity_radius_hint, N.injectivity_radius_hint)
    delta = _get(bundle, "delta", float, "bundle.delta", text, default=0.4 * N.injectivity_radius_hint)
    delta0 = _get(bundle, "delta0", float, "bundle.delta0", text, default=0.75 * delta)
    if not 0 < delta0 <= delta:
        raise _err(f"need 0 < delta0 <= delta, got delta0 = {delta0}, delta = {delta}", "bundle.delta0", text)
    if delta > N.injectivity_radius_hint:
        raise _err(f"delta = {delta} exceeds the injectivity radius hint {inj}", "bundle.delta", text)

    grids = _get(raw, "grids", dict, "grids", text, default={})
    points = _get(grids, "points", int, "grids.points", text, default=20)
    pairing_nodes = _get(grids, "pairing_nodes", int, "grids.pairing_nodes", text, default=16)
    levels = _get(grids, "levels", int, "grids.levels", text, default=3)
    if not 2 <= levels <= 4:
        raise _err("levels must be between 2 and 4", "grids.levels", text)
    if points < 1:
        raise _err("points must be positive", "grids.points", text)

    forms = []
    for i, fs in enumerate(_get(raw, "forms", list, "forms", text, default=[])):
        fld = f"forms[{i}]"
        if not isinstance(fs, dict):
            raise _err("each form must be a table", fld, text)
        deg = _get(fs, "degree", int, f"{fld}.degree", text, required=True)
        coeffs = _get(fs, "coeffs", dict, f"{fld}.coeffs", text, required=True)
        fname = _get(fs, "name", str, f"{fld}.name", text, default=f"form{i}")
        if not 0 <= deg <= N.dim:
            raise _err(f"degree {deg} outside 0..{N.dim}", f"{fld}.degree", text)
        try:
            form_from_expressions(N, deg, coeffs, N.coord_names, name=fname)
        except (ExpressionError, PullbackLabError, ValueError, KeyError) as exc:
            raise _err(f"bad form: {exc}", f"{fld}.coeffs", text) from exc
        forms.append(FormSpec(deg, dict(coeffs), fname))

    return Scenario(name, cfg_seed, list(suites), M, N, f, g, float(delta), float(delta0), forms,
                    points, pairing_nodes, levels, 1.0 if tol_scale is None else float(tol_scale), raw)


def _build_manifold(d, fld, text):
    kind = _get(d, "id", str, f"{fld}.id", text, required=True)
    if kind not in MANIFOLDS:
        raise _err(f"unknown manifold '{kind}'", f"{fld}.id", text)
    params = {k: v for k, v in d.items() if k != "id"}
    for k in params:
        if k not in MANIFOLD_PARAMS[kind]:
            raise _err(f"unknown parameter '{k}' for manifold '{kind}'", f"{fld}.{k}", text)
    try:
        return _manifold(kind, params)
    except (ValueError, TypeError) as exc:
        raise _err(f"bad manifold parameters: {exc}", fld, text) from exc


def _build_map(d, M, N, fld, text):
    kind = _get(d, "id", str, f"{fld}.id", text, required=True)
    if kind not in MAPS:
        raise _err(f"unknown map '{kind}'", f"{fld}.id", text)
    params = {k: v for k, v in d.items() if k != "id"}
    for k in params:
        if k not in MAP_PARAMS[kind]:
            raise _err(f"unknown parameter '{k}' for map '{kind}'", f"{fld}.{k}", text)
    try:
        f = _map(kind, M, N, params)
    except KeyError as exc:
        raise _err(f"map '{kind}' needs parameter {exc}", fld, text) from exc
    except (ValueError, TypeError) as exc:
        raise _err(f"bad map parameters: {exc}", fld, text) from exc
    if f.source.dim != M.dim or f.target.dim != N.dim:
        raise _err(f"map '{kind}' does not go from {M.name} to {N.name}", f"{fld}.id", text)
    return f


def sample_points(M: ChartManifold, n, seed, margin=0.0):
    """Deterministic base points from a Philox stream keyed by the seed."""
    rng = np.random.Generator(np.random.Philox(key=int(seed)))
    lo, hi = M.lower.copy(), M.upper.copy()
    for i, per in enumerate(M.periodic):
        if not per:
            span = hi[i] - lo[i]
            pad = max(margin, 0.1 * span) if np.isfinite(span) else margin
            lo[i], hi[i] = lo[i] + pad, hi[i] - pad
    return lo + rng.random((int(n), M.dim)) * (hi - lo)


def form_from_spec(M, spec: FormSpec) -> DifferentialForm:
    return form_from_expressions(M, spec.degree, spec.coeffs, M.coord_names, name=spec.name)
