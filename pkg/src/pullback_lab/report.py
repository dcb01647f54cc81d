"""Verification reports: check records, convergence fits, JSON/CSV output."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional

import jsonschema
import numpy as np

SCHEMA_VERSION = "1.0"
# residuals below this are at the quadrature / rounding floor; no order is fitted
FLOOR = 1e-11


@dataclass
class Level:
    name: str
    parameter: float
    residual: float


@dataclass
class Check:
    suite: str
    name: str
    tolerance: dict
    levels: list = field(default_factory=list)
    value: Optional[float] = None
    passed: Optional[bool] = None
    error: Optional[str] = None
    skipped: Optional[str] = None
    order: Optional[float] = None
    order_status: str = "n/a"
    monotone: Optional[bool] = None
    diagnostics: list = field(default_factory=list)
    data: dict = field(default_factory=dict)

    @property
    def status(self):
        if self.error is not None:
            return "error"
        if self.skipped is not None:
            return "skipped"
        return "pass" if self.passed else "fail"

    def as_dict(self):
        return {
            "suite": self.suite,
            "name": self.name,
            "status": self.status,
            "tolerance": self.tolerance,
            "value": _num(self.value),
            "levels": [{"level": l.name, "parameter": _num(l.parameter), "residual": _num(l.residual)}
                       for l in self.levels],
            "order": _num(self.order),
            "order_status": self.order_status,
            "monotone": self.monotone,
            "diagnostics": list(self.diagnostics),
            "error": self.error,
            "data": _clean(self.data),
        }


def _num(v):
    if v is None:
        return None
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _num(obj)
    return obj


def convergence_order(params, residuals, floor=FLOOR):
    """Least-squares slope of log residual against log parameter.

    Returns (order, status, monotone) with status "fitted", "floor-limited" or
    "n/a". Levels whose residual sits at the floor are dropped from the fit.
    """
    params = np.asarray(params, dtype=float)
    res = np.asarray(residuals, dtype=float)
    monotone = bool(np.all(np.diff(res) <= 0) or np.all(res <= floor))
    use = res > floor
    if res.size < 2:
        return None, "n/a", monotone
    if use.sum() < 2:
        return None, "floor-limited", monotone
    slope = np.polyfit(np.log(params[use]), np.log(res[use]), 1)[0]
    status = "fitted" if use.all() else "floor-limited"
    return float(slope), status, monotone


def attach_convergence(check: Check, floor=FLOOR):
    params = [l.parameter for l in check.levels]
    res = [l.residual for l in check.levels]
    check.order, check.order_status, check.monotone = convergence_order(params, res, floor)
    if check.monotone is False:
        check.diagnostics.append("non-monotone residuals across refinement levels")


def schema():
    return json.loads(resources.files("pullback_lab").joinpath("report_schema.json").read_text())


def build_report(scenario, checks, tol_scale, catalog_hash):
    n_pass = sum(c.status == "pass" for c in checks)
    n_fail = sum(c.status == "fail" for c in checks)
    n_err = sum(c.status == "error" for c in checks)
    n_skip = sum(c.status == "skipped" for c in checks)
    return {
        "schema_version": SCHEMA_VERSION,
        "scenario": scenario.name,
        "seed": scenario.seed,
        "tol_scale": tol_scale,
        "config_hash": scenario.config_hash,
        "catalog_hash": catalog_hash,
        "suites": list(scenario.suites),
        "levels": scenario.levels,
        "checks": [c.as_dict() for c in checks],
        "summary": {"checks": len(checks), "passed": n_pass, "failed": n_fail, "errors": n_err, "skipped": n_skip,
                    "all_passed": n_fail == 0 and n_err == 0},
    }


def validate(report):
    jsonschema.validate(report, schema())


def dumps(report):
    """Canonical JSON text: sorted keys, fixed separators, trailing newline."""
    return json.dumps(report, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def convergence_csv(report):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["suite", "check", "level", "parameter", "residual", "order", "order_status"])
    for c in report["checks"]:
        for lv in c["levels"]:
            w.writerow([c["suite"], c["name"], lv["level"], repr(lv["parameter"]), repr(lv["residual"]),
                        "" if c["order"] is None else repr(c["order"]), c["order_status"]])
    return buf.getvalue()
